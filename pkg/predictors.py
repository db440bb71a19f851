#!/usr/bin/env python3
"""
Predictors - destination, route and speed predictors over Mondrian forests

Three forests are trained in one chronological pass over a window of trips
with recovered routes and speeds:

    d-predictor  classification over exit stations, given the entry
    r-predictor  classification over candidate-route indices of an OD pair
    s-predictor  regression of km/h on one edge in one slot

Features mix the vehicle's own history (only trips finished before the query
time), crowd tables frozen from the training window, and calendar context.
The Emp baseline answers the same questions from frequencies and averages.
"""

import csv
import json
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, asdict
from datetime import datetime, timedelta
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from crowd_speed import SpeedMap, ramp_corrected_duration, read_speed_map, write_speed_map
from errors import DomainError, FeedbackRejected, SchemaError
from etc_ingest import (ContextCalendar, Transaction, Trip, VehicleType, Weather, format_number,
                        format_time, parse_time, slot_of)
from highway_graph import HighwayGraph, Route
from mobility_stats import DistributionOverDestinations
from mondrian_forest import FeatureSchema, FeatureVector, MondrianForest, Task, load_forest, save_forest
from route_recovery import DiscretizationConfig, StateSequence, recover_single_trip

logger = logging.getLogger(__name__)

BUNDLE_FORMAT = "predictor-bundle"
BUNDLE_VERSION = 1
# a trip still open this long after its entry is never fed back
PENDING_HORIZON_H = 24
VEHICLE_TYPES = list(VehicleType)
WEATHERS = list(Weather)
HISTORY_FIELDS = ["trip_id", "vehicle_id", "vehicle_type", "origin", "destination", "entry_time",
                  "exit_time", "route", "mean_speed_kmh"]


@dataclass(frozen=True)
class PredictorConfig:
    n_trees: int = 25
    seed: int = 0
    top_k: int = 5
    route_slots: int = 5
    max_route_edges: int = 8
    discount_factor: float = 10.0
    speed_min_samples_split: int = 8
    slot_width_min: int = 30

    def __post_init__(self):
        if min(self.n_trees, self.top_k, self.route_slots, self.max_route_edges) < 1:
            raise DomainError("predictor sizes must be positive")


@dataclass(frozen=True)
class HistoryEntry:
    """A finished trip as the predictors remember it"""
    trip_id: str
    vehicle_id: str
    vehicle_type: VehicleType
    origin: str
    destination: str
    entry_time: datetime
    exit_time: datetime
    route: Optional[Route] = None
    mean_speed_kmh: Optional[float] = None

    @property
    def duration_s(self) -> float:
        return (self.exit_time - self.entry_time).total_seconds()

    @classmethod
    def from_trip(cls, trip: Trip, sequence: Optional[StateSequence], graph: HighwayGraph) -> 'HistoryEntry':
        route = sequence.route if sequence is not None else trip.route
        speed = sequence.mean_speed_kmh(graph) if sequence is not None and sequence.states else None
        return cls(trip.trip_id, trip.vehicle_id, trip.vehicle_type, trip.origin, trip.destination,
                   trip.entry_time, trip.exit_time, route, speed)

    def to_record(self) -> List[str]:
        return [self.trip_id, self.vehicle_id, self.vehicle_type.value, self.origin, self.destination,
                format_time(self.entry_time), format_time(self.exit_time),
                self.route.key if self.route else "",
                "" if self.mean_speed_kmh is None else format_number(self.mean_speed_kmh)]

    @classmethod
    def from_record(cls, row: Sequence[str]) -> 'HistoryEntry':
        return cls(row[0], row[1], VehicleType(row[2]), row[3], row[4], parse_time(row[5]), parse_time(row[6]),
                   Route.from_key(row[7]) if row[7] else None, float(row[8]) if row[8] else None)


def _finished_before(history: Iterable[HistoryEntry], when: datetime) -> List[HistoryEntry]:
    return [h for h in history if h.exit_time <= when]


# ---------------------------------------------------------------- crowd tables

class CrowdTables:
    """
    Window-level crowd statistics: destinations per (origin, slot), route
    indices and durations per (origin, destination, slot), and the frozen
    speed map. Slot-level lookups back off to the origin or OD level.
    """

    def __init__(self, graph: HighwayGraph, speed_map: SpeedMap, max_route_edges: int = 8):
        self.graph = graph
        self.speed_map = speed_map
        self.width_min = speed_map.width_min
        self.max_route_edges = max_route_edges
        self.destinations: Dict[Tuple[str, int], Counter] = defaultdict(Counter)
        self.routes: Dict[Tuple[str, str, int], Counter] = defaultdict(Counter)
        self.duration_total: Dict[Tuple[str, str, int], float] = defaultdict(float)
        self.duration_count: Dict[Tuple[str, str, int], int] = defaultdict(int)
        self._codes = {sid: (i + 1) / len(graph.station_ids) for i, sid in enumerate(graph.station_ids)}

    @classmethod
    def from_trips(cls, trips: Iterable[Trip], sequences: Mapping[str, StateSequence], graph: HighwayGraph,
                   speed_map: SpeedMap, max_route_edges: int = 8) -> 'CrowdTables':
        tables = cls(graph, speed_map, max_route_edges)
        for trip in trips:
            seq = sequences.get(trip.trip_id)
            route = seq.route if seq is not None else trip.route
            tables.add(trip.origin, trip.destination, slot_of(trip.entry_time, tables.width_min).index,
                       tables.route_index(trip.origin, trip.destination, route) if route else None,
                       trip.duration_s)
        return tables

    def add(self, origin: str, destination: str, slot: int, route_index: Optional[int], duration_s: float) -> None:
        self.destinations[(origin, slot)][destination] += 1
        if route_index is not None:
            self.routes[(origin, destination, slot)][route_index] += 1
        self.duration_total[(origin, destination, slot)] += duration_s
        self.duration_count[(origin, destination, slot)] += 1

    def station_code(self, station: Optional[str]) -> float:
        """(index + 1) / n over sorted station ids; 0 stands for no station"""
        if station is None:
            return 0.0
        self.graph.station(station)
        return self._codes[station]

    def candidates(self, origin: str, destination: str) -> List[Route]:
        return self.graph.enumerate_routes(origin, destination, self.max_route_edges)

    def route_index(self, origin: str, destination: str, route: Route) -> Optional[int]:
        try:
            return self.candidates(origin, destination).index(route)
        except ValueError:
            return None

    def _backoff(self, table: Mapping, key: Tuple, prefix: Tuple) -> Counter:
        found = table.get(key)
        if found:
            return found
        merged: Counter = Counter()
        for k, counter in table.items():
            if k[:len(prefix)] == prefix:
                merged.update(counter)
        return merged

    def destination_distribution(self, origin: str, slot: int) -> Optional[DistributionOverDestinations]:
        counts = self._backoff(self.destinations, (origin, slot), (origin,))
        if not counts:
            return None
        return DistributionOverDestinations.from_counts(origin, counts, slot)

    def destination_mode(self, origin: str, slot: int) -> Optional[str]:
        dist = self.destination_distribution(origin, slot)
        return dist.ranking(1)[0][0] if dist else None

    def route_distribution(self, origin: str, destination: str, slot: int) -> Dict[int, float]:
        counts = self._backoff(self.routes, (origin, destination, slot), (origin, destination))
        total = sum(counts.values())
        return {k: v / total for k, v in sorted(counts.items())} if total else {}

    def mean_duration(self, origin: str, destination: str, slot: int) -> Optional[float]:
        key = (origin, destination, slot)
        if self.duration_count.get(key):
            return self.duration_total[key] / self.duration_count[key]
        totals = [(self.duration_total[k], n) for k, n in self.duration_count.items() if k[:2] == (origin, destination)]
        count = sum(n for _, n in totals)
        return sum(t for t, _ in totals) / count if count else None

    def write(self, directory: Union[str, Path], header: Sequence[str] = ()) -> None:
        directory = Path(directory)
        comment = "".join(f"# {line}\n" for line in header)
        rows = {
            "crowd_destinations.csv": (["origin", "slot", "destination", "count"],
                                       [[o, s, d, n] for (o, s), c in sorted(self.destinations.items())
                                        for d, n in sorted(c.items())]),
            "crowd_routes.csv": (["origin", "destination", "slot", "route_index", "count"],
                                 [[o, d, s, r, n] for (o, d, s), c in sorted(self.routes.items())
                                  for r, n in sorted(c.items())]),
            "crowd_durations.csv": (["origin", "destination", "slot", "count", "total_s"],
                                    [[o, d, s, self.duration_count[(o, d, s)], format_number(t)]
                                     for (o, d, s), t in sorted(self.duration_total.items())]),
        }
        for name, (columns, records) in rows.items():
            with open(directory / name, "w", encoding="utf-8", newline="") as f:
                f.write(comment)
                writer = csv.writer(f, lineterminator="\n")
                writer.writerow(columns)
                writer.writerows(records)

    @classmethod
    def read(cls, directory: Union[str, Path], graph: HighwayGraph, speed_map: SpeedMap,
             max_route_edges: int = 8) -> 'CrowdTables':
        directory = Path(directory)
        tables = cls(graph, speed_map, max_route_edges)

        def rows(name):
            with open(directory / name, "r", encoding="utf-8") as f:
                return list(csv.DictReader(line for line in f if not line.startswith("#")))

        for row in rows("crowd_destinations.csv"):
            tables.destinations[(row["origin"], int(row["slot"]))][row["destination"]] = int(row["count"])
        for row in rows("crowd_routes.csv"):
            key = (row["origin"], row["destination"], int(row["slot"]))
            tables.routes[key][int(row["route_index"])] = int(row["count"])
        for row in rows("crowd_durations.csv"):
            key = (row["origin"], row["destination"], int(row["slot"]))
            tables.duration_count[key] = int(row["count"])
            tables.duration_total[key] = float(row["total_s"])
        return tables


# ---------------------------------------------------------------- features

def destination_schema(top_k: int = 5) -> FeatureSchema:
    numeric = ["origin_code", "slot", "log_trips", "is_weekend", "is_holiday"]
    scales = [1.0, 47.0, 5.0, 1.0, 1.0]
    for block in ("hist", "crowd"):
        for j in range(1, top_k + 1):
            numeric += [f"{block}_code_{j}", f"{block}_share_{j}"]
            scales += [1.0, 1.0]
    return FeatureSchema(tuple(numeric), (("vehicle_type", len(VEHICLE_TYPES)), ("day_of_week", 7)), tuple(scales))


def route_schema(route_slots: int = 5) -> FeatureSchema:
    numeric = ["slot", "trip_frequency", "saved_time_min", "saved_time_missing", "candidates"]
    scales = [47.0, 2.0, 10.0, 1.0, 5.0]
    for j in range(1, route_slots + 1):
        numeric += [f"hist_share_{j}", f"crowd_share_{j}", f"recent_speed_ratio_{j}", f"length_ratio_{j}"]
        scales += [1.0, 1.0, 1.0, 1.0]
    return FeatureSchema(tuple(numeric), (("vehicle_type", len(VEHICLE_TYPES)), ("day_of_week", 7)), tuple(scales))


def speed_schema() -> FeatureSchema:
    numeric = ("hist_speed", "has_history", "slot", "crowd_min", "crowd_lower_fourth", "crowd_median",
               "crowd_upper_fourth", "crowd_max", "speed_limit", "crowd_fallback", "is_weekend")
    scales = (100.0, 1.0, 47.0, 100.0, 100.0, 100.0, 100.0, 100.0, 100.0, 1.0, 1.0)
    return FeatureSchema(numeric, (("vehicle_type", len(VEHICLE_TYPES)), ("weather", len(WEATHERS))), scales)


def _ranked_pairs(pairs: Sequence[Tuple[str, float]], tables: CrowdTables, top_k: int) -> List[float]:
    values: List[float] = []
    for station, share in list(pairs)[:top_k]:
        values += [tables.station_code(station), float(share)]
    return values + [0.0] * (2 * top_k - len(values))


def extract_destination_features(history: Sequence[HistoryEntry], vehicle_type: VehicleType, origin: str,
                                 entry_time: datetime, tables: CrowdTables, calendar: ContextCalendar,
                                 top_k: int = 5) -> FeatureVector:
    """
    The vehicle's top-k destinations from this origin (all origins when it
    never entered here), the crowd's top-k at (origin, slot), and context.
    A vehicle without history gets an all-zero history block.
    """
    tables.graph.station(origin)
    slot = slot_of(entry_time, 30).index
    past = _finished_before(history, entry_time)
    same_origin = [h for h in past if h.origin == origin] or past
    counts = Counter(h.destination for h in same_origin)
    total = sum(counts.values())
    own = [(d, n / total) for d, n in sorted(counts.items(), key=lambda item: (-item[1], item[0]))]
    crowd_dist = tables.destination_distribution(origin, slot_of(entry_time, tables.width_min).index)
    crowd = crowd_dist.ranking(top_k) if crowd_dist else []
    context = calendar.get(entry_time)
    numeric = [tables.station_code(origin), float(slot), math.log1p(len(past)),
               float(context.is_weekend), float(context.is_holiday)]
    numeric += _ranked_pairs(own, tables, top_k) + _ranked_pairs(crowd, tables, top_k)
    return FeatureVector(tuple(numeric), (VEHICLE_TYPES.index(VehicleType(vehicle_type)), context.day_of_week - 1))


def _recent_speed_ratio(route: Route, when: datetime, tables: CrowdTables) -> float:
    """Crowd medians of the previous slot over the route's free-flow speeds"""
    previous = slot_of(when - timedelta(minutes=tables.width_min), tables.width_min).index
    ratios = [tables.speed_map.median(e, previous) / tables.graph.edge(e).speed_limit_kmh for e in route.edges]
    return float(np.mean(ratios))


def extract_route_features(history: Sequence[HistoryEntry], vehicle_type: VehicleType, origin: str,
                           destination: str, entry_time: datetime, tables: CrowdTables,
                           calendar: ContextCalendar, route_slots: int = 5) -> FeatureVector:
    candidates = tables.candidates(origin, destination)
    if not candidates:
        raise DomainError(f"no route from {origin} to {destination}")
    slot = slot_of(entry_time, tables.width_min).index
    past = _finished_before(history, entry_time)
    on_od = [h for h in past if (h.origin, h.destination) == (origin, destination)]
    used = Counter(h.route for h in on_od if h.route is not None)
    used_total = sum(used.values())

    if past:
        span_days = (past[-1].entry_time.date() - past[0].entry_time.date()).days + 1
        frequency = len(past) / span_days
    else:
        frequency = 0.0
    population = tables.mean_duration(origin, destination, slot)
    if on_od and population is not None:
        saved, missing = (population - float(np.mean([h.duration_s for h in on_od]))) / 60.0, 0.0
    else:
        saved, missing = 0.0, 1.0

    crowd = tables.route_distribution(origin, destination, slot)
    shortest = tables.graph.route_length(candidates[0])
    numeric = [float(slot), frequency, saved, missing, float(len(candidates))]
    for j in range(route_slots):
        if j < len(candidates):
            route = candidates[j]
            numeric += [used[route] / used_total if used_total else 0.0, crowd.get(j, 0.0),
                        _recent_speed_ratio(route, entry_time, tables), tables.graph.route_length(route) / shortest]
        else:
            numeric += [0.0, 0.0, 0.0, 0.0]
    context = calendar.get(entry_time)
    return FeatureVector(tuple(numeric), (VEHICLE_TYPES.index(VehicleType(vehicle_type)), context.day_of_week - 1))


def extract_speed_features(history: Sequence[HistoryEntry], vehicle_type: VehicleType, edge_id: str,
                           when: datetime, tables: CrowdTables, calendar: ContextCalendar) -> FeatureVector:
    speeds = [h.mean_speed_kmh for h in _finished_before(history, when) if h.mean_speed_kmh is not None]
    slot = slot_of(when, tables.width_min).index
    cell = tables.speed_map.lookup(edge_id, slot)
    context = calendar.get(when)
    numeric = (float(np.mean(speeds)) if speeds else 0.0, float(bool(speeds)), float(slot),
               *cell.letter_values.as_tuple(), tables.graph.edge(edge_id).speed_limit_kmh,
               float(cell.fallback), float(context.is_weekend))
    return FeatureVector(tuple(float(v) for v in numeric),
                         (VEHICLE_TYPES.index(VehicleType(vehicle_type)), WEATHERS.index(context.weather)))


def _edge_entry_times(trip: Trip, sequence: StateSequence, graph: HighwayGraph) -> List[Tuple[str, datetime, float]]:
    """(edge, approximate entry time, recovered speed) along a recovered trip"""
    speeds = sequence.edge_speeds()
    mean = sequence.mean_speed_kmh(graph)
    t = trip.entry_time + timedelta(seconds=graph.station(trip.origin).ramp_length_m / (mean / 3.6))
    out = []
    for edge_id in sequence.route.edges:
        out.append((edge_id, t, speeds[edge_id]))
        t += timedelta(seconds=graph.edge(edge_id).length_m / (speeds[edge_id] / 3.6))
    return out


# ---------------------------------------------------------------- bundle

@dataclass
class _PendingEntry:
    vehicle_id: str
    vehicle_type: VehicleType
    origin: str
    entry_time: datetime
    features: FeatureVector


class PredictorBundle:
    """d-, r- and s-predictors with their crowd tables and the vehicles' histories"""

    def __init__(self, graph: HighwayGraph, calendar: ContextCalendar, tables: CrowdTables,
                 config: PredictorConfig = PredictorConfig()):
        self.graph = graph
        self.calendar = calendar
        self.tables = tables
        self.config = config
        self.d_forest = MondrianForest(destination_schema(config.top_k), Task.CLASSIFICATION, config.n_trees,
                                       config.seed, discount_factor=config.discount_factor)
        self.r_forest = MondrianForest(route_schema(config.route_slots), Task.CLASSIFICATION, config.n_trees,
                                       config.seed + 1, discount_factor=config.discount_factor)
        self.s_forest = MondrianForest(speed_schema(), Task.REGRESSION, config.n_trees, config.seed + 2,
                                       min_samples_split=config.speed_min_samples_split)
        self.history: Dict[str, List[HistoryEntry]] = defaultdict(list)
        self.window: Tuple[Optional[datetime], Optional[datetime]] = (None, None)
        self._pending: Dict[str, _PendingEntry] = {}
        self._feedback_done: set = set()

    def vehicle_history(self, vehicle_id: str) -> List[HistoryEntry]:
        return self.history.get(vehicle_id, [])

    def _remember(self, entry: HistoryEntry) -> None:
        entries = self.history[entry.vehicle_id]
        entries.append(entry)
        entries.sort(key=lambda h: (h.entry_time, h.trip_id))

    # ------------------------------------------------------------ training

    def learn_trip(self, trip: Trip, sequence: Optional[StateSequence]) -> None:
        """One online update of every forest the trip has labels for"""
        history = self.vehicle_history(trip.vehicle_id)
        x = extract_destination_features(history, trip.vehicle_type, trip.origin, trip.entry_time,
                                         self.tables, self.calendar, self.config.top_k)
        self.d_forest.update(x, trip.destination)
        if sequence is not None and sequence.states:
            index = self.tables.route_index(trip.origin, trip.destination, sequence.route)
            if index is not None:
                xr = extract_route_features(history, trip.vehicle_type, trip.origin, trip.destination,
                                            trip.entry_time, self.tables, self.calendar, self.config.route_slots)
                self.r_forest.update(xr, str(index))
            for edge_id, when, speed in _edge_entry_times(trip, sequence, self.graph):
                xs = extract_speed_features(history, trip.vehicle_type, edge_id, when, self.tables, self.calendar)
                self.s_forest.update(xs, speed)
        self._remember(HistoryEntry.from_trip(trip, sequence, self.graph))

    # ------------------------------------------------------------ prediction

    def destination_distribution(self, vehicle_id: str, vehicle_type: VehicleType, origin: str,
                                 entry_time: datetime) -> Dict[str, float]:
        """Exit-station probabilities, the origin itself excluded"""
        x = extract_destination_features(self.vehicle_history(vehicle_id), vehicle_type, origin, entry_time,
                                         self.tables, self.calendar, self.config.top_k)
        probs = {d: p for d, p in self.d_forest.predict_proba(x).items() if d != origin}
        total = sum(probs.values())
        if total <= 0:
            fallback = self.tables.destination_mode(origin, slot_of(entry_time, self.tables.width_min).index)
            fallback = fallback or next(s for s in self.graph.station_ids if s != origin)
            return {fallback: 1.0}
        return {d: p / total for d, p in probs.items()}

    def predict_destination(self, vehicle_id: str, vehicle_type: VehicleType, origin: str,
                            entry_time: datetime) -> str:
        probs = self.destination_distribution(vehicle_id, vehicle_type, origin, entry_time)
        return min(probs, key=lambda d: (-probs[d], d))

    def route_distribution(self, vehicle_id: str, vehicle_type: VehicleType, origin: str, destination: str,
                           entry_time: datetime) -> List[Tuple[Route, float]]:
        """Probabilities over the OD pair's candidate routes"""
        candidates = self.tables.candidates(origin, destination)
        if len(candidates) == 1 or not self.r_forest.trained:
            return [(route, 1.0 if j == 0 else 0.0) for j, route in enumerate(candidates)]
        x = extract_route_features(self.vehicle_history(vehicle_id), vehicle_type, origin, destination,
                                   entry_time, self.tables, self.calendar, self.config.route_slots)
        raw = self.r_forest.predict_proba(x)
        scores = [raw.get(str(j), 0.0) for j in range(len(candidates))]
        total = sum(scores)
        if total <= 0:
            scores, total = [1.0] + [0.0] * (len(candidates) - 1), 1.0
        return [(route, s / total) for route, s in zip(candidates, scores)]

    def predict_route(self, vehicle_id: str, vehicle_type: VehicleType, origin: str, destination: str,
                      entry_time: datetime) -> Route:
        ranked = self.route_distribution(vehicle_id, vehicle_type, origin, destination, entry_time)
        return max(enumerate(ranked), key=lambda item: (item[1][1], -item[0]))[1][0]

    def predict_speed(self, vehicle_id: str, vehicle_type: VehicleType, edge_id: str, when: datetime) -> float:
        x = extract_speed_features(self.vehicle_history(vehicle_id), vehicle_type, edge_id, when,
                                   self.tables, self.calendar)
        return self.s_forest.predict_regression(x)[0]

    # ------------------------------------------------------------ feedback

    def register_entry(self, vehicle_id: str, vehicle_type: VehicleType, origin: str, entry_time: datetime) -> str:
        """Remember an observed entry so the completed trip can be fed back later"""
        key = f"{vehicle_id}@{entry_time:%Y%m%dT%H%M%S}"
        if key not in self._pending:
            x = extract_destination_features(self.vehicle_history(vehicle_id), vehicle_type, origin, entry_time,
                                             self.tables, self.calendar, self.config.top_k)
            self._pending[key] = _PendingEntry(vehicle_id, VehicleType(vehicle_type), origin, entry_time, x)
        return key

    def feedback_update(self, transaction: Transaction) -> None:
        """
        Online update from a completed trip. The d-predictor learns the actual
        exit; route and speed labels come from recovering the single trip
        against the crowd speed map. Each forest takes exactly one update, and
        none does when the feedback is rejected.
        """
        key = transaction.trip_id
        if key in self._feedback_done:
            raise FeedbackRejected(f"duplicate feedback for {key}")
        pending = self._pending.get(key)
        if pending is None or pending.origin != transaction.entry_station:
            raise FeedbackRejected(f"entry never observed for {key}")

        trip = Trip.from_transaction(transaction, self.tables.width_min)
        history = self.vehicle_history(trip.vehicle_id)
        candidates = self.tables.candidates(trip.origin, trip.destination)
        if not candidates:
            raise FeedbackRejected(f"no route of at most {self.config.max_route_edges} edges "
                                   f"from {trip.origin} to {trip.destination}")

        discretization = DiscretizationConfig(max_route_edges=self.config.max_route_edges)
        sequence = recover_single_trip(trip, self.graph, self.tables.speed_map, discretization)
        if sequence is not None and sequence.route in candidates:
            route = sequence.route
            speed = sequence.edge_speeds()[route.edges[0]]
        else:
            sequence = None
            route = candidates[0]
            try:
                highway = ramp_corrected_duration(trip, route, self.graph)
            except DomainError:
                highway = trip.duration_s
            speed = self.graph.route_length(route) / highway * 3.6
        xr = extract_route_features(history, trip.vehicle_type, trip.origin, trip.destination, trip.entry_time,
                                    self.tables, self.calendar, self.config.route_slots)
        xs = extract_speed_features(history, trip.vehicle_type, route.edges[0], trip.entry_time,
                                    self.tables, self.calendar)

        self.d_forest.update(pending.features, trip.destination)
        self.r_forest.update(xr, str(candidates.index(route)))
        self.s_forest.update(xs, speed)

        self._remember(HistoryEntry.from_trip(trip.with_route(route), sequence, self.graph))
        self._feedback_done.add(key)
        del self._pending[key]
        self._evict_stale_entries(trip)
        logger.debug("Feedback applied for %s (%s)", key, "recovered" if sequence else "shortest route")

    def _evict_stale_entries(self, trip: Trip) -> None:
        """Drop entries that can no longer complete: the vehicle's earlier ones, and any past the horizon"""
        horizon = trip.exit_time - timedelta(hours=PENDING_HORIZON_H)
        stale = [key for key, entry in self._pending.items()
                 if entry.entry_time < horizon
                 or (entry.vehicle_id == trip.vehicle_id and entry.entry_time < trip.entry_time)]
        for key in stale:
            del self._pending[key]
        if stale:
            logger.debug("Evicted %d pending entries without feedback", len(stale))


def train_bundle(trips: Sequence[Trip], sequences: Mapping[str, StateSequence], graph: HighwayGraph,
                 calendar: ContextCalendar, speed_map: SpeedMap,
                 config: PredictorConfig = PredictorConfig()) -> PredictorBundle:
    """Freeze crowd tables from the window, then train all forests in one chronological pass"""
    if not trips:
        raise DomainError("training window is empty")
    if not any(t.trip_id in sequences for t in trips):
        raise DomainError("training window has no recovered trips")
    ordered = sorted(trips, key=lambda t: (t.entry_time, t.trip_id))
    tables = CrowdTables.from_trips(ordered, sequences, graph, speed_map, config.max_route_edges)
    bundle = PredictorBundle(graph, calendar, tables, config)
    for trip in ordered:
        bundle.learn_trip(trip, sequences.get(trip.trip_id))
    bundle.window = (ordered[0].entry_time, max(t.exit_time for t in ordered))
    logger.info("Trained predictors on %d trips: %d destination, %d route, %d speed updates",
                len(ordered), bundle.d_forest.n_updates, bundle.r_forest.n_updates, bundle.s_forest.n_updates)
    return bundle


# ---------------------------------------------------------------- baseline

@dataclass(frozen=True)
class EmpPrediction:
    destination: str
    route: Route
    speed_kmh: float


def _emp_destination(history: Sequence[HistoryEntry], origin: str, slot: int, tables: CrowdTables) -> str:
    same = [h.destination for h in history if h.origin == origin and h.destination != origin]
    counts = Counter(same or [h.destination for h in history if h.destination != origin])
    if counts:
        return min(counts, key=lambda d: (-counts[d], d))
    mode = tables.destination_mode(origin, slot)
    if mode and mode != origin:
        return mode
    return next(s for s in tables.graph.station_ids if s != origin)


def _emp_route(history: Sequence[HistoryEntry], origin: str, destination: str, slot: int,
               tables: CrowdTables) -> Route:
    candidates = tables.candidates(origin, destination)
    used = Counter(h.route for h in history if (h.origin, h.destination) == (origin, destination) and h.route)
    ranked = [(used[r], -j, r) for j, r in enumerate(candidates) if used[r]]
    if ranked:
        return max(ranked)[2]
    crowd = tables.route_distribution(origin, destination, slot)
    if crowd:
        best = max(crowd.items(), key=lambda item: (item[1], -item[0]))[0]
        if best < len(candidates):
            return candidates[best]
    return candidates[0]


def _emp_speed(history: Sequence[HistoryEntry], edge_id: str, slot: int, tables: CrowdTables) -> float:
    speeds = [h.mean_speed_kmh for h in history if h.mean_speed_kmh is not None]
    if speeds:
        return float(np.mean(speeds))
    return tables.speed_map.median(edge_id, slot)


def emp_baseline(history: Sequence[HistoryEntry], tables: CrowdTables, origin: str,
                 entry_time: datetime) -> EmpPrediction:
    """Most frequent destination and route, historical mean speed; crowd modes when history is empty"""
    past = _finished_before(history, entry_time)
    slot = slot_of(entry_time, tables.width_min).index
    destination = _emp_destination(past, origin, slot, tables)
    route = _emp_route(past, origin, destination, slot, tables)
    return EmpPrediction(destination, route, _emp_speed(past, route.edges[0], slot, tables))


class EmpPredictor:
    """The Emp baseline behind the predictor interface"""

    def __init__(self, history: Mapping[str, Sequence[HistoryEntry]], tables: CrowdTables):
        self.history = history
        self.tables = tables

    def _past(self, vehicle_id: str, when: datetime) -> List[HistoryEntry]:
        return _finished_before(self.history.get(vehicle_id, []), when)

    def predict_destination(self, vehicle_id: str, vehicle_type: VehicleType, origin: str,
                            entry_time: datetime) -> str:
        slot = slot_of(entry_time, self.tables.width_min).index
        return _emp_destination(self._past(vehicle_id, entry_time), origin, slot, self.tables)

    def predict_route(self, vehicle_id: str, vehicle_type: VehicleType, origin: str, destination: str,
                      entry_time: datetime) -> Route:
        slot = slot_of(entry_time, self.tables.width_min).index
        return _emp_route(self._past(vehicle_id, entry_time), origin, destination, slot, self.tables)

    def predict_speed(self, vehicle_id: str, vehicle_type: VehicleType, edge_id: str, when: datetime) -> float:
        slot = slot_of(when, self.tables.width_min).index
        return _emp_speed(self._past(vehicle_id, when), edge_id, slot, self.tables)


# ---------------------------------------------------------------- persistence

def write_history(history: Mapping[str, Sequence[HistoryEntry]], path: Union[str, Path],
                  header: Sequence[str] = ()) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        for line in header:
            f.write(f"# {line}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(HISTORY_FIELDS)
        for vehicle_id in sorted(history):
            for entry in history[vehicle_id]:
                writer.writerow(entry.to_record())


def read_history(path: Union[str, Path]) -> Dict[str, List[HistoryEntry]]:
    history: Dict[str, List[HistoryEntry]] = defaultdict(list)
    with open(path, "r", encoding="utf-8") as f:
        rows = csv.reader(line for line in f if not line.startswith("#"))
        if next(rows, None) != HISTORY_FIELDS:
            raise SchemaError(f"{path}: unexpected history header")
        for row in rows:
            entry = HistoryEntry.from_record(row)
            history[entry.vehicle_id].append(entry)
    return history


def save_bundle(bundle: PredictorBundle, directory: Union[str, Path], config_hash: str = "", seed: int = 0) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stamp = {"config_hash": config_hash, "seed": seed}
    header = [f"config_hash={config_hash} seed={seed}"]
    start, end = bundle.window
    manifest = dict(stamp)
    manifest.update({
        "format": BUNDLE_FORMAT,
        "version": BUNDLE_VERSION,
        "window_start": format_time(start) if start else None,
        "window_end": format_time(end) if end else None,
        "config": asdict(bundle.config),
        "updates": {"d": bundle.d_forest.n_updates, "r": bundle.r_forest.n_updates, "s": bundle.s_forest.n_updates},
        "feedback_done": sorted(bundle._feedback_done),
    })
    with open(directory / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, sort_keys=True, indent=1)
    save_forest(bundle.d_forest, directory / "d_forest.json", stamp)
    save_forest(bundle.r_forest, directory / "r_forest.json", stamp)
    save_forest(bundle.s_forest, directory / "s_forest.json", stamp)
    bundle.tables.write(directory, header)
    write_speed_map(bundle.tables.speed_map, directory / "speed_map.csv", header)
    write_history(bundle.history, directory / "history.csv", header)


def load_bundle(directory: Union[str, Path], graph: HighwayGraph, calendar: ContextCalendar) -> PredictorBundle:
    directory = Path(directory)
    with open(directory / "manifest.json", "r", encoding="utf-8") as f:
        manifest = json.load(f)
    if manifest.get("format") != BUNDLE_FORMAT or manifest.get("version") != BUNDLE_VERSION:
        raise SchemaError(f"{directory}: not a version {BUNDLE_VERSION} predictor bundle")
    config = PredictorConfig(**manifest["config"])
    speed_map = read_speed_map(directory / "speed_map.csv", graph)
    tables = CrowdTables.read(directory, graph, speed_map, config.max_route_edges)
    bundle = PredictorBundle(graph, calendar, tables, config)
    bundle.d_forest = load_forest(directory / "d_forest.json")
    bundle.r_forest = load_forest(directory / "r_forest.json")
    bundle.s_forest = load_forest(directory / "s_forest.json")
    bundle.history = read_history(directory / "history.csv")
    start, end = manifest["window_start"], manifest["window_end"]
    bundle.window = (parse_time(start) if start else None, parse_time(end) if end else None)
    bundle._feedback_done = set(manifest["feedback_done"])
    return bundle
