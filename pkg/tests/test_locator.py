"""Tests for location prediction, the accuracy metrics and the evaluation report"""

import math
from datetime import datetime, timedelta

import pandas as pd
import pytest

from errors import DomainError
from etc_ingest import ContextCalendar, VehicleType
from highway_graph import Edge, HighwayGraph, LocationEstimate, Route, TollStation
from locator import (OraclePredictor, destination_route_accuracy, evaluate_components, evaluate_locations,
                     location_accuracy, predict_locations, speed_accuracy, write_evaluation_report,
                     write_prediction_trace)
from synth_sim import GroundTruthTrace

ENTRY = datetime(2024, 3, 4, 8, 0)
CHAIN_ROUTE = Route(("AB", "BC"))


class FixedPredictor:
    """Same destination, route and speed for every question"""

    def __init__(self, destination, route, speed_kmh):
        self.destination, self.route, self.speed_kmh = destination, route, speed_kmh

    def predict_destination(self, vehicle_id, vehicle_type, origin, entry_time):
        return self.destination

    def predict_route(self, vehicle_id, vehicle_type, origin, destination, entry_time):
        return self.route

    def predict_speed(self, vehicle_id, vehicle_type, edge_id, when):
        return self.speed_kmh


@pytest.fixture
def chain_trace():
    """A -> C at a steady 60 km/h: 1000 m in 60 s, then 2000 m in 120 s"""
    return GroundTruthTrace("V1@20240304T080000", "V1", VehicleType.CAR, CHAIN_ROUTE, ENTRY,
                            ENTRY + timedelta(seconds=180), 0.0, 0.0, (("AB", 60.0), ("BC", 60.0)),
                            ((0.0, 0.0), (60.0, 1000.0), (180.0, 3000.0)))


def shifted_estimates(shifts):
    """One estimate every 15 s at the true 60 km/h position plus a shift"""
    estimates = []
    for k, shift in enumerate(shifts, start=1):
        distance = min(250.0 * k + shift, 3000.0)
        edge, offset = ("AB", distance) if distance < 1000 else ("BC", distance - 1000)
        estimates.append(LocationEstimate(edge, offset, distance, distance >= 3000, CHAIN_ROUTE,
                                          ENTRY + timedelta(seconds=15 * k)))
    return estimates


class TestPredictLocations:

    def test_oracle_follows_truth(self, chain_graph, chain_trace):
        estimates = predict_locations(OraclePredictor([chain_trace], chain_graph), chain_graph, "V1",
                                      VehicleType.CAR, "A", ENTRY)
        assert estimates[0].timestamp == ENTRY + timedelta(seconds=15)
        assert estimates[0].distance_m == pytest.approx(250.0)
        assert estimates[-1].arrived
        assert [e.edge_id for e in estimates[:3]] == ["AB", "AB", "AB"]
        assert (estimates[5].edge_id, estimates[5].offset_m) == ("BC", pytest.approx(500.0))
        assert location_accuracy(estimates, chain_trace, threshold_m=1.0) == 1.0

    def test_ramp_reported_at_edge_start(self):
        graph = HighwayGraph([TollStation("A", "A", 500), TollStation("B", "B")], [Edge("AB", "A", "B", 4000, 100)])
        estimates = predict_locations(FixedPredictor("B", Route(("AB",)), 72.0), graph, "V1",
                                      VehicleType.CAR, "A", ENTRY)
        assert (estimates[0].edge_id, estimates[0].offset_m) == ("AB", 0.0)
        assert estimates[1].offset_m == pytest.approx(100.0)
        assert len(estimates) == 15
        assert estimates[-1].arrived

    def test_speed_floor(self, chain_graph):
        estimates = predict_locations(FixedPredictor("C", CHAIN_ROUTE, 0.0), chain_graph, "V1",
                                      VehicleType.CAR, "A", ENTRY, speed_floor_kmh=36.0)
        assert estimates[0].distance_m == pytest.approx(150.0)

    def test_bad_arguments(self, chain_graph, chain_trace):
        oracle = OraclePredictor([chain_trace], chain_graph)
        with pytest.raises(DomainError):
            predict_locations(oracle, chain_graph, "V1", VehicleType.CAR, "A", ENTRY, interval_s=0)
        with pytest.raises(DomainError):
            predict_locations(oracle, chain_graph, "V1", VehicleType.CAR, "A", ENTRY - timedelta(hours=1))

    def test_oracle_exact_on_simulated_trips(self, small_world, small_simulation):
        traces = [t for t in small_simulation.traces if t.dwell_s == 0][:40]
        oracle = OraclePredictor(small_simulation.traces, small_world.graph)
        for trace in traces:
            origin = small_world.graph.route_endpoints(trace.route)[0]
            estimates = predict_locations(oracle, small_world.graph, trace.vehicle_id, trace.vehicle_type,
                                          origin, trace.entry_time)
            assert location_accuracy(estimates, trace, threshold_m=1.0) == 1.0


class TestMetrics:

    def test_location_accuracy_threshold(self, chain_trace):
        # instants 0..180 s every 15 s; at 0 s nothing is estimated yet and at 180 s both sit at the exit
        estimates = shifted_estimates([50.0] * 6 + [150.0] * 6)
        assert location_accuracy(estimates, chain_trace) == pytest.approx(8 / 13)
        assert location_accuracy(estimates, chain_trace, threshold_m=200.0) == 1.0

    def test_wrong_route_scores_zero(self, chain_trace):
        wrong = [LocationEstimate("AB", 250.0 * k, 250.0 * k, False, Route(("AB",)), ENTRY + timedelta(seconds=15 * k))
                 for k in range(1, 4)]
        assert location_accuracy(wrong, chain_trace) == 0.0

    def test_speed_accuracy(self):
        assert speed_accuracy(90, 100) == pytest.approx(0.9)
        assert speed_accuracy(110, 100) == pytest.approx(0.9)
        assert speed_accuracy(250, 100) == pytest.approx(-0.5)
        with pytest.raises(DomainError):
            speed_accuracy(90, 0)

    def test_destination_route_accuracy(self):
        assert destination_route_accuracy(["B", "C"], ["B", "B"]) == 0.5
        assert destination_route_accuracy([CHAIN_ROUTE], [Route(("AB", "BC"))]) == 1.0
        with pytest.raises(DomainError):
            destination_route_accuracy(["B"], ["B", "C"])
        with pytest.raises(DomainError):
            destination_route_accuracy([], [])


class TestEvaluation:

    def test_components_for_oracle(self, chain_graph, chain_trace):
        scores = evaluate_components(OraclePredictor([chain_trace], chain_graph), [chain_trace], chain_graph)
        assert (scores.destination_accuracy, scores.route_accuracy, scores.speed_accuracy) == (1.0, 1.0, 1.0)
        assert scores.speed_samples == 2

    def test_speed_clamped_only_in_aggregate(self, chain_graph, chain_trace):
        scores = evaluate_components(FixedPredictor("C", CHAIN_ROUTE, 150.0), [chain_trace], chain_graph)
        assert scores.speed_accuracy == 0.0
        assert scores.speed_accuracy_raw == pytest.approx(-0.5)

    def test_accounting_modes(self, chain_graph, chain_trace):
        wrong = FixedPredictor("B", Route(("AB",)), 60.0)
        report = evaluate_locations(wrong, [chain_trace], chain_graph, ContextCalendar(), mode="vemo-r")
        assert report.destination_accuracy == 0.0
        assert report.location_accuracy == 0.0
        assert report.location_accuracy_correct_route == 0.0
        assert report.headline == 0.0

    def test_oracle_report(self, chain_graph, chain_trace):
        report = evaluate_locations(OraclePredictor([chain_trace], chain_graph), [chain_trace], chain_graph,
                                    ContextCalendar(), threshold_m=50.0)
        assert report.location_accuracy == 1.0
        assert report.instants == 13
        assert list(report.threshold_sweep["vemo_a"]) == [1.0, 1.0, 1.0]
        metrics = dict(report.summary_frame().itertuples(index=False))
        assert metrics["location_accuracy_vemo_r"] == 1.0
        assert metrics["vemo_a_type_Car"] == 1.0

    def test_unknown_mode(self, chain_graph, chain_trace):
        with pytest.raises(DomainError):
            evaluate_locations(OraclePredictor([chain_trace], chain_graph), [chain_trace], chain_graph,
                               ContextCalendar(), mode="vemo-x")


class TestFiles:

    def test_prediction_trace(self, tmp_path, chain_graph, chain_trace):
        estimates = predict_locations(OraclePredictor([chain_trace], chain_graph), chain_graph, "V1",
                                      VehicleType.CAR, "A", ENTRY)
        path = tmp_path / "trace.csv"
        write_prediction_trace({"V1": estimates}, path, ["config_hash=abc seed=0"])
        lines = path.read_text().splitlines()
        assert lines[0] == "# config_hash=abc seed=0"
        assert lines[1] == "vehicle_id,timestamp,edge,offset_m,arrived"
        assert lines[-1].endswith(",1")
        assert len(lines) == 2 + len(estimates)

    def test_report_with_baseline(self, tmp_path, chain_graph, chain_trace):
        oracle = evaluate_locations(OraclePredictor([chain_trace], chain_graph), [chain_trace], chain_graph,
                                    ContextCalendar())
        fixed = evaluate_locations(FixedPredictor("C", CHAIN_ROUTE, 30.0), [chain_trace], chain_graph,
                                   ContextCalendar())
        summary, slots = tmp_path / "summary.csv", tmp_path / "slots.csv"
        write_evaluation_report(oracle, summary, slots, ["config_hash=abc seed=0"], baseline=fixed)
        frame = pd.read_csv(summary, comment="#")
        assert list(frame.columns) == ["metric", "value", "baseline"]
        row = frame[frame["metric"] == "location_accuracy_vemo_a"].iloc[0]
        assert row["value"] == 1.0 and row["baseline"] < 1.0
        per_slot = pd.read_csv(slots, comment="#")
        assert "vemo_a_baseline" in per_slot.columns
        assert not math.isnan(per_slot["vemo_a"].iloc[0])
