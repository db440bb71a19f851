#!/usr/bin/env python3
"""
Locator - real-time location prediction and its evaluation

At entry the destination is predicted, then the route to it; from there the
vehicle is advanced interval by interval at the predicted speed of the edge it
is on, and every step is matched back onto the route. The metrics score the
predictors separately (destination, route, speed) and together (location),
against simulator ground truth.
"""

import logging
from bisect import bisect_right
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from itertools import accumulate
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from errors import DomainError
from etc_ingest import ContextCalendar, VehicleType, absolute_slot, format_number, format_time, slot_of
from highway_graph import HighwayGraph, LocationEstimate, Route
from synth_sim import GroundTruthTrace

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD_M = 100.0
DEFAULT_INTERVAL_S = 15.0
DEFAULT_SPEED_FLOOR_KMH = 5.0
DEFAULT_SWEEP_M = (50.0, 100.0, 200.0)
SPEED_SLOT_MIN = 30


class Predictor(Protocol):
    def predict_destination(self, vehicle_id: str, vehicle_type: VehicleType, origin: str,
                            entry_time: datetime) -> str: ...

    def predict_route(self, vehicle_id: str, vehicle_type: VehicleType, origin: str, destination: str,
                      entry_time: datetime) -> Route: ...

    def predict_speed(self, vehicle_id: str, vehicle_type: VehicleType, edge_id: str, when: datetime) -> float: ...


class OraclePredictor:
    """Replays the ground truth: actual destination, actual route, actual per-edge speeds"""

    def __init__(self, traces: Iterable[GroundTruthTrace], graph: HighwayGraph):
        self.graph = graph
        self._by_vehicle: Dict[str, List[GroundTruthTrace]] = {}
        for trace in sorted(traces, key=lambda tr: tr.entry_time):
            self._by_vehicle.setdefault(trace.vehicle_id, []).append(trace)

    def _active(self, vehicle_id: str, when: datetime) -> GroundTruthTrace:
        traces = self._by_vehicle.get(vehicle_id, [])
        index = bisect_right([tr.entry_time for tr in traces], when) - 1
        if index < 0:
            raise DomainError(f"no ground truth for {vehicle_id} at {when}")
        return traces[index]

    def predict_destination(self, vehicle_id, vehicle_type, origin, entry_time) -> str:
        return self.graph.route_endpoints(self._active(vehicle_id, entry_time).route)[1]

    def predict_route(self, vehicle_id, vehicle_type, origin, destination, entry_time) -> Route:
        return self._active(vehicle_id, entry_time).route

    def predict_speed(self, vehicle_id, vehicle_type, edge_id, when) -> float:
        trace = self._active(vehicle_id, when)
        speeds = dict(trace.edge_speeds)
        return speeds.get(edge_id, self.graph.edge(edge_id).speed_limit_kmh)


# ---------------------------------------------------------------- prediction

def predict_locations(predictor: Predictor, graph: HighwayGraph, vehicle_id: str, vehicle_type: VehicleType,
                      entrance: str, t0: datetime, interval_s: float = DEFAULT_INTERVAL_S,
                      speed_floor_kmh: float = DEFAULT_SPEED_FLOOR_KMH) -> List[LocationEstimate]:
    """
    One estimate per interval after t0 until the predicted route is finished.

    Distance starts at minus the entrance ramp length; the ramp is driven at
    the route's predicted mean speed and reported as offset 0 of the first
    edge. Crossing an edge boundary mid-interval switches to the next edge's
    speed for the rest of the interval.
    """
    graph.station(entrance)
    if not interval_s > 0:
        raise DomainError(f"interval must be > 0, got {interval_s}")
    if not speed_floor_kmh > 0:
        raise DomainError(f"speed floor must be > 0, got {speed_floor_kmh}")

    destination = predictor.predict_destination(vehicle_id, vehicle_type, entrance, t0)
    route = predictor.predict_route(vehicle_id, vehicle_type, entrance, destination, t0)
    lengths = [graph.edge(e).length_m for e in route.edges]
    ends = list(accumulate(lengths))
    total = ends[-1]
    memo: Dict[Tuple[str, int], float] = {}

    def speed_ms(edge_id: str, when: datetime) -> float:
        key = (edge_id, absolute_slot(when, SPEED_SLOT_MIN))
        if key not in memo:
            memo[key] = predictor.predict_speed(vehicle_id, vehicle_type, edge_id, when)
        return max(memo[key], speed_floor_kmh) / 3.6

    ramp_speed = total / sum(length / speed_ms(e, t0) for e, length in zip(route.edges, lengths))
    distance = -graph.station(entrance).ramp_length_m
    t = t0
    estimates: List[LocationEstimate] = []
    while distance < total:
        remaining, now = interval_s, t
        while remaining > 0 and distance < total:
            if distance < 0:
                v, boundary = ramp_speed, 0.0
            else:
                k = min(bisect_right(ends, distance), len(ends) - 1)
                v, boundary = speed_ms(route.edges[k], now), ends[k]
            needed = (boundary - distance) / v
            if needed >= remaining:
                distance += v * remaining
                remaining = 0.0
            else:
                distance = boundary
                remaining -= needed
                now += timedelta(seconds=needed)
        t += timedelta(seconds=interval_s)
        estimates.append(replace(graph.locate_on_route(route, min(max(distance, 0.0), total)), timestamp=t))
    logger.debug("%s from %s: %d estimates along %s", vehicle_id, entrance, len(estimates), route.key)
    return estimates


# ---------------------------------------------------------------- metrics

def destination_route_accuracy(predictions: Sequence, truths: Sequence) -> float:
    """Exact-match fraction; routes match when their edge sequences are identical"""
    if len(predictions) != len(truths):
        raise DomainError(f"{len(predictions)} predictions for {len(truths)} truths")
    if not truths:
        raise DomainError("nothing to score")
    return sum(p == t for p, t in zip(predictions, truths)) / len(truths)


def speed_accuracy(predicted: float, actual: float) -> float:
    """1 - |predicted - actual| / actual, negative when the error exceeds the actual speed"""
    if not actual > 0:
        raise DomainError(f"actual speed must be > 0, got {actual}")
    return 1.0 - abs(predicted - actual) / actual


def _position_at(estimates: Sequence[LocationEstimate], when: datetime) -> float:
    times = [e.timestamp for e in estimates]
    index = bisect_right(times, when) - 1
    return estimates[index].distance_m if index >= 0 else 0.0


def _instant_errors(estimates: Sequence[LocationEstimate], trace: GroundTruthTrace,
                    interval_s: float) -> List[Tuple[datetime, float]]:
    """(instant, along-route error) every interval while truly on the highway; wrong routes err infinitely"""
    same_route = bool(estimates) and estimates[0].route == trace.route
    out = []
    for step in np.arange(0.0, (trace.exit_time - trace.entry_time).total_seconds() + 1e-9, interval_s):
        if not trace.on_highway(float(step)):
            continue
        when = trace.entry_time + timedelta(seconds=float(step))
        error = abs(_position_at(estimates, when) - trace.position_at(float(step))) if same_route else np.inf
        out.append((when, error))
    return out


def location_accuracy(estimates: Sequence[LocationEstimate], trace: GroundTruthTrace,
                      threshold_m: float = DEFAULT_THRESHOLD_M, interval_s: float = DEFAULT_INTERVAL_S) -> float:
    """Share of sampled on-highway instants whose predicted position lies within the threshold of the truth"""
    errors = _instant_errors(estimates, trace, interval_s)
    if not errors:
        raise DomainError(f"{trace.trip_id}: no sampled instant on the highway")
    return sum(error <= threshold_m for _, error in errors) / len(errors)


# ---------------------------------------------------------------- evaluation

@dataclass
class ComponentScores:
    destination_accuracy: float
    route_accuracy: float
    speed_accuracy: float
    speed_accuracy_raw: float
    trips: int
    speed_samples: int


def _edge_entry_times(trace: GroundTruthTrace, graph: HighwayGraph) -> List[Tuple[str, datetime]]:
    times, offsets = zip(*trace.knots)
    starts = [0.0] + list(accumulate(graph.edge(e).length_m for e in trace.route.edges))[:-1]
    return [(edge_id, trace.entry_time + timedelta(seconds=float(np.interp(start, offsets, times))))
            for edge_id, start in zip(trace.route.edges, starts)]


def evaluate_components(predictor: Predictor, traces: Sequence[GroundTruthTrace], graph: HighwayGraph) -> ComponentScores:
    """Destination given the entry, route given the true OD, speed on every true edge at its entry time"""
    if not traces:
        raise DomainError("no trips to evaluate")
    destinations, true_destinations, routes, speed_scores = [], [], [], []
    for trace in traces:
        origin, destination = graph.route_endpoints(trace.route)
        destinations.append(predictor.predict_destination(trace.vehicle_id, trace.vehicle_type, origin,
                                                          trace.entry_time))
        true_destinations.append(destination)
        routes.append(predictor.predict_route(trace.vehicle_id, trace.vehicle_type, origin, destination,
                                              trace.entry_time))
        for edge_id, when in _edge_entry_times(trace, graph):
            predicted = predictor.predict_speed(trace.vehicle_id, trace.vehicle_type, edge_id, when)
            speed_scores.append(speed_accuracy(predicted, trace.speed_of(edge_id)))
    scores = np.array(speed_scores)
    return ComponentScores(
        destination_accuracy=destination_route_accuracy(destinations, true_destinations),
        route_accuracy=destination_route_accuracy(routes, [tr.route for tr in traces]),
        speed_accuracy=float(np.clip(scores, 0.0, 1.0).mean()),
        speed_accuracy_raw=float(scores.mean()),
        trips=len(traces),
        speed_samples=len(scores),
    )


@dataclass
class EvaluationReport:
    """Component and location accuracies; location accuracies in both accounting modes"""
    destination_accuracy: float
    route_accuracy: float
    speed_accuracy: float
    location_accuracy: float
    location_accuracy_correct_route: float
    threshold_m: float
    interval_s: float
    mode: str
    trips: int
    instants: int
    per_slot: pd.DataFrame = field(default_factory=pd.DataFrame)
    by_vehicle_type: pd.DataFrame = field(default_factory=pd.DataFrame)
    by_weather: pd.DataFrame = field(default_factory=pd.DataFrame)
    threshold_sweep: pd.DataFrame = field(default_factory=pd.DataFrame)

    @property
    def headline(self) -> float:
        """Location accuracy in the configured accounting mode"""
        return self.location_accuracy_correct_route if self.mode == "vemo-r" else self.location_accuracy

    def summary_frame(self) -> pd.DataFrame:
        rows = [
            ("destination_accuracy", self.destination_accuracy),
            ("route_accuracy", self.route_accuracy),
            ("speed_accuracy", self.speed_accuracy),
            ("location_accuracy_vemo_a", self.location_accuracy),
            ("location_accuracy_vemo_r", self.location_accuracy_correct_route),
            ("threshold_m", self.threshold_m),
            ("interval_s", self.interval_s),
            ("trips", self.trips),
            ("instants", self.instants),
        ]
        for row in self.threshold_sweep.itertuples(index=False):
            rows.append((f"vemo_a_at_{format_number(row.threshold_m)}m", row.vemo_a))
            rows.append((f"vemo_r_at_{format_number(row.threshold_m)}m", row.vemo_r))
        for name, frame in (("type", self.by_vehicle_type), ("weather", self.by_weather)):
            for row in frame.itertuples(index=False):
                rows.append((f"vemo_a_{name}_{row.group}", row.vemo_a))
        return pd.DataFrame(rows, columns=["metric", "value"])


def _accuracy(frame: pd.DataFrame, threshold_m: float) -> float:
    return float((frame["error_m"] <= threshold_m).mean()) if len(frame) else float("nan")


def _breakdown(frame: pd.DataFrame, column: str, threshold_m: float) -> pd.DataFrame:
    rows = []
    for group, part in frame.groupby(column, sort=True):
        correct = part[part["route_correct"]]
        rows.append((group, len(part), _accuracy(part, threshold_m), _accuracy(correct, threshold_m)))
    return pd.DataFrame(rows, columns=["group", "instants", "vemo_a", "vemo_r"])


def evaluate_locations(predictor: Predictor, traces: Sequence[GroundTruthTrace], graph: HighwayGraph,
                       calendar: ContextCalendar, threshold_m: float = DEFAULT_THRESHOLD_M,
                       interval_s: float = DEFAULT_INTERVAL_S, speed_floor_kmh: float = DEFAULT_SPEED_FLOOR_KMH,
                       mode: str = "vemo-a", sweep: Sequence[float] = DEFAULT_SWEEP_M) -> EvaluationReport:
    """
    Predict every trace's trip from its entry and score it.

    VeMo-a counts every vehicle, wrong routes scoring 0 at every instant;
    VeMo-r counts only vehicles whose route was predicted correctly.
    """
    if mode not in ("vemo-a", "vemo-r"):
        raise DomainError(f"unknown evaluation mode {mode!r}")
    components = evaluate_components(predictor, traces, graph)
    records = []
    for trace in traces:
        origin = graph.route_endpoints(trace.route)[0]
        estimates = predict_locations(predictor, graph, trace.vehicle_id, trace.vehicle_type, origin,
                                      trace.entry_time, interval_s, speed_floor_kmh)
        correct = estimates[0].route == trace.route
        weather = calendar.get(trace.entry_time).weather.value
        for when, error in _instant_errors(estimates, trace, interval_s):
            records.append((trace.trip_id, trace.vehicle_type.value, weather,
                            slot_of(when, SPEED_SLOT_MIN).index, correct, error))
    frame = pd.DataFrame(records, columns=["trip_id", "vehicle_type", "weather", "slot", "route_correct", "error_m"])
    if frame.empty:
        raise DomainError("no sampled instant on the highway")
    on_route = frame[frame["route_correct"]]

    per_slot = _breakdown(frame, "slot", threshold_m).rename(columns={"group": "slot"})
    sweep_rows = [(float(m), _accuracy(frame, m), _accuracy(on_route, m)) for m in sweep]
    report = EvaluationReport(
        destination_accuracy=components.destination_accuracy,
        route_accuracy=components.route_accuracy,
        speed_accuracy=components.speed_accuracy,
        location_accuracy=_accuracy(frame, threshold_m),
        location_accuracy_correct_route=_accuracy(on_route, threshold_m) if len(on_route) else 0.0,
        threshold_m=threshold_m,
        interval_s=interval_s,
        mode=mode,
        trips=len(traces),
        instants=len(frame),
        per_slot=per_slot,
        by_vehicle_type=_breakdown(frame, "vehicle_type", threshold_m),
        by_weather=_breakdown(frame, "weather", threshold_m),
        threshold_sweep=pd.DataFrame(sweep_rows, columns=["threshold_m", "vemo_a", "vemo_r"]),
    )
    logger.info("Evaluated %d trips over %d instants: VeMo-a %.3f, VeMo-r %.3f at %.0f m",
                report.trips, report.instants, report.location_accuracy, report.location_accuracy_correct_route,
                threshold_m)
    return report


# ---------------------------------------------------------------- files

def write_prediction_trace(predictions: Mapping[str, Sequence[LocationEstimate]], path: Union[str, Path],
                           header: Sequence[str] = ()) -> None:
    """`vehicle_id,timestamp,edge,offset_m,arrived` for every estimate, vehicles in sorted order"""
    with open(path, "w", encoding="utf-8", newline="") as f:
        for line in header:
            f.write(f"# {line}\n")
        f.write("vehicle_id,timestamp,edge,offset_m,arrived\n")
        for vehicle_id in sorted(predictions):
            for estimate in predictions[vehicle_id]:
                f.write(f"{vehicle_id},{format_time(estimate.timestamp)},{estimate.edge_id},"
                        f"{format_number(estimate.offset_m)},{int(estimate.arrived)}\n")


def write_evaluation_report(report: EvaluationReport, summary_path: Union[str, Path],
                            slots_path: Optional[Union[str, Path]] = None, header: Sequence[str] = (),
                            baseline: Optional[EvaluationReport] = None) -> None:
    """Summary table (with a baseline column when given) and the per-slot table"""
    summary = report.summary_frame()
    slots = report.per_slot
    if baseline is not None:
        summary = summary.merge(baseline.summary_frame().rename(columns={"value": "baseline"}),
                                on="metric", how="left")
        slots = slots.merge(baseline.per_slot[["slot", "vemo_a", "vemo_r"]], on="slot", how="left",
                            suffixes=("", "_baseline"))
    for path, frame in ((summary_path, summary), (slots_path, slots)):
        if path is None:
            continue
        with open(path, "w", encoding="utf-8", newline="") as f:
            for line in header:
                f.write(f"# {line}\n")
            frame.to_csv(f, index=False, lineterminator="\n", float_format="%.6g")
