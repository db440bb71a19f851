"""Tests for crowd tables, feature extraction, the predictor bundle and the Emp baseline"""

import json
import math
from datetime import datetime, timedelta

import pytest

from crowd_speed import SpeedMap
from errors import DomainError, FeedbackRejected
from etc_ingest import ContextCalendar, Transaction, Trip, VehicleType
from highway_graph import Edge, HighwayGraph, Route, TollStation
from predictors import (CrowdTables, EmpPredictor, HistoryEntry, PredictorBundle, PredictorConfig,
                        destination_schema, emp_baseline, extract_destination_features, extract_route_features,
                        extract_speed_features, load_bundle, read_history, route_schema, save_bundle,
                        speed_schema, train_bundle, write_history)
from route_recovery import StateSequence

LONG = Route(("AC", "CD"))
LONG_BACK = Route(("CDr", "ACr"))
SHORT_AB = Route(("AB",))


def build_two_way_diamond():
    """A -> D by AB, BD (2000 m) or AC, CD (3000 m), every edge in both directions"""
    stations = [TollStation(s, f"Station {s}") for s in "ABCD"]
    edges = []
    for edge_id, a, b, length in (("AB", "A", "B", 1000), ("BD", "B", "D", 1000),
                                  ("AC", "A", "C", 1500), ("CD", "C", "D", 1500)):
        edges += [Edge(edge_id, a, b, length, 100), Edge(f"{edge_id}r", b, a, length, 100)]
    return HighwayGraph(stations, edges)


@pytest.fixture
def two_way_diamond():
    return build_two_way_diamond()


def drive(graph, vehicle, route, entry, speed_kmh=90.0):
    origin, destination = graph.route_endpoints(route)
    seconds = graph.route_length(route) / (speed_kmh / 3.6)
    tx = Transaction(vehicle, VehicleType.CAR, origin, destination, entry, entry + timedelta(seconds=round(seconds)))
    trip = Trip.from_transaction(tx)
    states = tuple((0, f"{e}#0", speed_kmh) for e in route.edges)
    return trip, StateSequence(trip.trip_id, vehicle, route, states, tx.duration_s)


def commuter_window(graph, days=10):
    """V1 commutes A <-> D on the long route, V2 commutes A <-> B"""
    trips, sequences = [], {}
    for day in range(days):
        base = datetime(2024, 3, 4) + timedelta(days=day)
        for vehicle, out, back in (("V1", LONG, LONG_BACK), ("V2", SHORT_AB, Route(("ABr",)))):
            for route, hour in ((out, 8), (back, 17)):
                trip, seq = drive(graph, vehicle, route, base + timedelta(hours=hour))
                trips.append(trip)
                sequences[trip.trip_id] = seq
    return trips, sequences


def entry(vehicle, origin, destination, entered, exited, route=None, speed=None):
    return HistoryEntry(f"{vehicle}@{entered:%Y%m%dT%H%M%S}", vehicle, VehicleType.CAR, origin, destination,
                        entered, exited, route, speed)


@pytest.fixture(scope="module")
def trained():
    graph = build_two_way_diamond()
    trips, sequences = commuter_window(graph)
    bundle = train_bundle(trips, sequences, graph, ContextCalendar(), SpeedMap(graph),
                          PredictorConfig(n_trees=8, seed=4))
    return graph, bundle


class TestCrowdTables:

    def test_station_codes(self, chain_graph):
        tables = CrowdTables(chain_graph, SpeedMap(chain_graph))
        assert [tables.station_code(s) for s in ("A", "B", "C", None)] == [pytest.approx(1 / 3),
                                                                           pytest.approx(2 / 3), 1.0, 0.0]

    def test_slot_backoff(self, chain_graph):
        tables = CrowdTables(chain_graph, SpeedMap(chain_graph))
        tables.add("A", "C", 16, 0, 300)
        tables.add("A", "C", 16, 0, 340)
        tables.add("A", "B", 20, 0, 100)
        assert tables.destination_distribution("A", 16).probabilities == {"C": 1.0}
        assert tables.destination_distribution("A", 5).probabilities == {"B": pytest.approx(1 / 3),
                                                                         "C": pytest.approx(2 / 3)}
        assert tables.destination_distribution("C", 16) is None
        assert tables.mean_duration("A", "C", 16) == 320
        assert tables.mean_duration("A", "C", 30) == 320
        assert tables.mean_duration("B", "C", 16) is None
        assert tables.route_distribution("A", "C", 3) == {0: 1.0}

    def test_route_index(self, two_way_diamond):
        tables = CrowdTables(two_way_diamond, SpeedMap(two_way_diamond))
        assert tables.route_index("A", "D", LONG) == 1
        assert tables.route_index("A", "D", Route(("AB",))) is None

    def test_file_round_trip(self, tmp_path, chain_graph):
        tables = CrowdTables(chain_graph, SpeedMap(chain_graph))
        tables.add("A", "C", 16, 0, 300)
        tables.add("C", "A", 34, None, 280.5)
        tables.write(tmp_path, ["config_hash=abc seed=0"])
        loaded = CrowdTables.read(tmp_path, chain_graph, tables.speed_map)
        assert loaded.destinations == tables.destinations
        assert loaded.routes == tables.routes
        assert loaded.mean_duration("C", "A", 34) == 280.5


class TestFeatures:

    def test_schema_widths(self):
        assert len(destination_schema(5).numeric) == 5 + 4 * 5
        assert len(route_schema(3).numeric) == 5 + 4 * 3
        assert len(speed_schema().numeric) == 11

    def test_destination_features_without_history(self, chain_graph):
        tables = CrowdTables(chain_graph, SpeedMap(chain_graph))
        x = extract_destination_features([], VehicleType.BUS, "A", datetime(2024, 3, 4, 13, 0), tables,
                                         ContextCalendar(), top_k=2)
        assert x.numeric[:3] == (pytest.approx(1 / 3), 26.0, 0.0)
        assert x.numeric[5:9] == (0.0, 0.0, 0.0, 0.0)
        assert x.categorical == (1, 0)

    def test_destination_features_ignore_unfinished_trips(self, chain_graph):
        tables = CrowdTables(chain_graph, SpeedMap(chain_graph))
        query = datetime(2024, 3, 5, 8, 0)
        history = [entry("V1", "A", "C", datetime(2024, 3, 4, 8), datetime(2024, 3, 4, 8, 5)),
                   entry("V1", "A", "B", datetime(2024, 3, 5, 7, 58), datetime(2024, 3, 5, 8, 3))]
        x = extract_destination_features(history, VehicleType.CAR, "A", query, tables, ContextCalendar(), top_k=2)
        assert x.numeric[2] == pytest.approx(math.log1p(1))
        assert x.numeric[5:7] == (1.0, 1.0)

    def test_route_features_saved_time(self, two_way_diamond):
        tables = CrowdTables(two_way_diamond, SpeedMap(two_way_diamond))
        tables.add("A", "D", 16, 1, 200)
        when = datetime(2024, 3, 6, 8, 0)
        history = [entry("V1", "A", "D", datetime(2024, 3, 4, 8), datetime(2024, 3, 4, 8, 2), LONG)]
        x = extract_route_features(history, VehicleType.CAR, "A", "D", when, tables, ContextCalendar(), 3)
        slot, frequency, saved, missing, candidates = x.numeric[:5]
        assert (slot, missing, candidates) == (16.0, 0.0, 2.0)
        assert saved == pytest.approx((200 - 120) / 60)
        assert frequency == 1.0
        first, second, padding = x.numeric[5:9], x.numeric[9:13], x.numeric[13:17]
        assert first == (0.0, 0.0, 1.0, 1.0)
        assert second == (1.0, 1.0, 1.0, 1.5)
        assert padding == (0.0, 0.0, 0.0, 0.0)

    def test_route_features_without_history(self, two_way_diamond):
        tables = CrowdTables(two_way_diamond, SpeedMap(two_way_diamond))
        x = extract_route_features([], VehicleType.CAR, "A", "D", datetime(2024, 3, 6, 8), tables,
                                   ContextCalendar(), 2)
        assert x.numeric[2:4] == (0.0, 1.0)

    def test_speed_features(self, chain_graph):
        tables = CrowdTables(chain_graph, SpeedMap(chain_graph))
        when = datetime(2024, 3, 9, 9, 0)
        empty = extract_speed_features([], VehicleType.TRUCK, "AB", when, tables, ContextCalendar())
        assert empty.numeric[:3] == (0.0, 0.0, 18.0)
        assert empty.numeric[3:8] == (100.0,) * 5
        assert empty.numeric[8:] == (100.0, 1.0, 1.0)
        history = [entry("V1", "A", "C", datetime(2024, 3, 4, 8), datetime(2024, 3, 4, 8, 5), speed=100.0),
                   entry("V1", "C", "A", datetime(2024, 3, 4, 17), datetime(2024, 3, 4, 17, 5), speed=110.0)]
        x = extract_speed_features(history, VehicleType.TRUCK, "AB", when, tables, ContextCalendar())
        assert x.numeric[:2] == (105.0, 1.0)


class TestEmpBaseline:

    def test_most_frequent_destination(self, chain_graph):
        tables = CrowdTables(chain_graph, SpeedMap(chain_graph))
        day = datetime(2024, 3, 4)
        history = [entry("V1", "A", d, day + timedelta(hours=h), day + timedelta(hours=h, minutes=5), speed=s)
                   for d, h, s in (("B", 7, 100.0), ("B", 9, 110.0), ("C", 11, None), ("B", 13, None))]
        prediction = emp_baseline(history, tables, "A", datetime(2024, 3, 5, 8))
        assert prediction.destination == "B"
        assert prediction.route == SHORT_AB
        assert prediction.speed_kmh == pytest.approx(105.0)

    def test_empty_history_uses_crowd(self, chain_graph):
        tables = CrowdTables(chain_graph, SpeedMap(chain_graph))
        tables.add("A", "C", 16, 0, 300)
        prediction = emp_baseline([], tables, "A", datetime(2024, 3, 5, 8))
        assert prediction.destination == "C"
        assert prediction.route == Route(("AB", "BC"))
        assert prediction.speed_kmh == 100.0

    def test_predictor_interface(self, two_way_diamond):
        tables = CrowdTables(two_way_diamond, SpeedMap(two_way_diamond))
        history = {"V1": [entry("V1", "A", "D", datetime(2024, 3, 4, 8), datetime(2024, 3, 4, 8, 2), LONG, 90.0)]}
        emp = EmpPredictor(history, tables)
        when = datetime(2024, 3, 5, 8)
        assert emp.predict_destination("V1", VehicleType.CAR, "A", when) == "D"
        assert emp.predict_route("V1", VehicleType.CAR, "A", "D", when) == LONG
        assert emp.predict_speed("V1", VehicleType.CAR, "AC", when) == 90.0
        assert emp.predict_route("V9", VehicleType.CAR, "A", "D", when) == Route(("AB", "BD"))


class TestPredictorBundle:

    def test_training_counts(self, trained):
        _, bundle = trained
        assert bundle.d_forest.n_updates == 40
        assert bundle.r_forest.n_updates == 40
        assert bundle.s_forest.n_updates == 60
        assert bundle.window[0] == datetime(2024, 3, 4, 8)

    def test_destination_excludes_origin(self, trained):
        _, bundle = trained
        probs = bundle.destination_distribution("V1", VehicleType.CAR, "A", datetime(2024, 3, 14, 8))
        assert "A" not in probs
        assert sum(probs.values()) == pytest.approx(1.0)

    def test_learns_commuters(self, trained):
        _, bundle = trained
        when = datetime(2024, 3, 14, 8)
        assert bundle.predict_destination("V1", VehicleType.CAR, "A", when) == "D"
        assert bundle.predict_destination("V2", VehicleType.CAR, "A", when) == "B"
        assert bundle.predict_route("V1", VehicleType.CAR, "A", "D", when) == LONG
        assert bundle.predict_speed("V1", VehicleType.CAR, "AC", when) == pytest.approx(90.0)

    def test_single_candidate_route(self, chain_graph):
        bundle = PredictorBundle(chain_graph, ContextCalendar(), CrowdTables(chain_graph, SpeedMap(chain_graph)),
                                 PredictorConfig(n_trees=2))
        ranked = bundle.route_distribution("V1", VehicleType.CAR, "A", "C", datetime(2024, 3, 14, 8))
        assert ranked == [(Route(("AB", "BC")), 1.0)]

    def test_short_commute_route(self, trained):
        _, bundle = trained
        assert bundle.predict_route("V2", VehicleType.CAR, "A", "B", datetime(2024, 3, 14, 8)) == SHORT_AB

    def test_empty_window(self, two_way_diamond):
        with pytest.raises(DomainError):
            train_bundle([], {}, two_way_diamond, ContextCalendar(), SpeedMap(two_way_diamond))
        trips, _ = commuter_window(two_way_diamond, days=1)
        with pytest.raises(DomainError):
            train_bundle(trips, {}, two_way_diamond, ContextCalendar(), SpeedMap(two_way_diamond))


class TestFeedback:

    @pytest.fixture
    def bundle(self, two_way_diamond):
        trips, sequences = commuter_window(two_way_diamond, days=3)
        return train_bundle(trips, sequences, two_way_diamond, ContextCalendar(), SpeedMap(two_way_diamond),
                            PredictorConfig(n_trees=3))

    def test_one_update_per_forest(self, bundle):
        start = datetime(2024, 3, 8, 8)
        tx = Transaction("V1", VehicleType.CAR, "A", "D", start, start + timedelta(seconds=120))
        before = (bundle.d_forest.n_updates, bundle.r_forest.n_updates, bundle.s_forest.n_updates)
        history_before = len(bundle.vehicle_history("V1"))
        assert bundle.register_entry("V1", VehicleType.CAR, "A", start) == tx.trip_id
        bundle.feedback_update(tx)
        after = (bundle.d_forest.n_updates, bundle.r_forest.n_updates, bundle.s_forest.n_updates)
        assert after == tuple(n + 1 for n in before)
        latest = bundle.vehicle_history("V1")[-1]
        assert len(bundle.vehicle_history("V1")) == history_before + 1
        assert latest.route == LONG

    def test_duplicate_rejected(self, bundle):
        start = datetime(2024, 3, 8, 8)
        tx = Transaction("V1", VehicleType.CAR, "A", "D", start, start + timedelta(seconds=120))
        bundle.register_entry("V1", VehicleType.CAR, "A", start)
        bundle.feedback_update(tx)
        with pytest.raises(FeedbackRejected):
            bundle.feedback_update(tx)

    def test_unobserved_entry_rejected(self, bundle):
        start = datetime(2024, 3, 8, 8)
        tx = Transaction("V3", VehicleType.CAR, "A", "D", start, start + timedelta(seconds=120))
        with pytest.raises(FeedbackRejected):
            bundle.feedback_update(tx)

    def test_unrecoverable_trip_uses_shortest_route(self, bundle):
        start = datetime(2024, 3, 8, 8)
        tx = Transaction("V2", VehicleType.CAR, "A", "D", start, start + timedelta(seconds=30))
        bundle.register_entry("V2", VehicleType.CAR, "A", start)
        bundle.feedback_update(tx)
        assert bundle.vehicle_history("V2")[-1].route == Route(("AB", "BD"))

    def test_destination_beyond_route_limit_rejected_before_any_update(self):
        diamond = build_two_way_diamond()
        graph = HighwayGraph(list(diamond.stations.values()) + [TollStation("E", "Station E")],
                             list(diamond.edges.values()) + [Edge("DE", "D", "E", 1000, 100)])
        trips, sequences = commuter_window(graph, days=3)
        bundle = train_bundle(trips, sequences, graph, ContextCalendar(), SpeedMap(graph),
                              PredictorConfig(n_trees=3, max_route_edges=2))
        start = datetime(2024, 3, 8, 8)
        tx = Transaction("V1", VehicleType.CAR, "A", "E", start, start + timedelta(seconds=150))
        bundle.register_entry("V1", VehicleType.CAR, "A", start)
        before = (bundle.d_forest.n_updates, bundle.r_forest.n_updates, bundle.s_forest.n_updates)
        with pytest.raises(FeedbackRejected):
            bundle.feedback_update(tx)
        assert (bundle.d_forest.n_updates, bundle.r_forest.n_updates, bundle.s_forest.n_updates) == before

    def test_stale_entries_evicted(self, bundle):
        morning = datetime(2024, 3, 8, 8)
        bundle.register_entry("V1", VehicleType.CAR, "A", morning)
        bundle.register_entry("V3", VehicleType.CAR, "A", morning)
        evening = datetime(2024, 3, 8, 17)
        bundle.register_entry("V1", VehicleType.CAR, "A", evening)
        bundle.feedback_update(Transaction("V1", VehicleType.CAR, "A", "D", evening, evening + timedelta(seconds=120)))
        with pytest.raises(FeedbackRejected):
            bundle.feedback_update(Transaction("V1", VehicleType.CAR, "A", "D", morning,
                                               morning + timedelta(seconds=120)))

        next_day = datetime(2024, 3, 9, 12)
        bundle.register_entry("V2", VehicleType.CAR, "A", next_day)
        bundle.feedback_update(Transaction("V2", VehicleType.CAR, "A", "B", next_day,
                                           next_day + timedelta(seconds=40)))
        with pytest.raises(FeedbackRejected):
            bundle.feedback_update(Transaction("V3", VehicleType.CAR, "A", "D", morning,
                                               morning + timedelta(seconds=120)))


class TestPersistence:

    def test_history_round_trip(self, tmp_path):
        history = {"V1": [entry("V1", "A", "D", datetime(2024, 3, 4, 8), datetime(2024, 3, 4, 8, 2), LONG, 90.0),
                          entry("V1", "D", "A", datetime(2024, 3, 4, 17), datetime(2024, 3, 4, 17, 2))]}
        path = tmp_path / "history.csv"
        write_history(history, path, ["config_hash=abc seed=0"])
        assert read_history(path) == history

    def test_bundle_round_trip(self, tmp_path, trained):
        graph, bundle = trained
        save_bundle(bundle, tmp_path / "bundle", "0123456789ab", 4)
        manifest = json.loads((tmp_path / "bundle" / "manifest.json").read_text())
        assert (manifest["config_hash"], manifest["seed"]) == ("0123456789ab", 4)
        loaded = load_bundle(tmp_path / "bundle", graph, ContextCalendar())
        when = datetime(2024, 3, 14, 8)
        assert loaded.destination_distribution("V2", VehicleType.CAR, "A", when) == \
            pytest.approx(bundle.destination_distribution("V2", VehicleType.CAR, "A", when))
        assert loaded.predict_route("V1", VehicleType.CAR, "A", "D", when) == LONG
        assert loaded.window == bundle.window
