#!/usr/bin/env python3
"""
Route Recovery - joint recovery of historical routes and speed profiles

Every trip is rendered as candidate state sequences <slot, segment, speed>
over its feasible routes. A depth-first search picks one sequence per trip
so that as many normality tests as possible accept: one test per
(slot, segment) speed group, plus one test over the per-vehicle speed
standard deviations.
"""

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from itertools import product
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import ndtr

from crowd_speed import SpeedMap, ramp_corrected_duration
from errors import DomainError, SchemaError
from etc_ingest import Trip, absolute_slot, absolute_slot_start, check_slot_width, slot_of
from highway_graph import HighwayGraph, Route

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.05
DEFAULT_NODE_BUDGET = 1_000_000
MIN_KS_SAMPLES = 8
# above this many grid profiles per route, only single-change profiles are enumerated
MAX_FULL_ENUMERATION = 4096

State = Tuple[int, str, float]


@dataclass(frozen=True)
class DiscretizationConfig:
    slot_width_min: int = 10
    segment_length_m: float = 1000.0
    speed_unit_kmh: float = 1.0
    search_grid_kmh: float = 5.0
    speed_window_kmh: float = 10.0
    max_candidates_per_route: int = 25
    duration_slack: float = 3.0
    overspeed_ratio: float = 1.3
    min_speed_kmh: float = 5.0
    max_route_edges: int = 8
    min_group_size: int = MIN_KS_SAMPLES

    def __post_init__(self):
        check_slot_width(self.slot_width_min)
        positive = (self.segment_length_m, self.speed_unit_kmh, self.search_grid_kmh, self.duration_slack,
                    self.overspeed_ratio, self.min_speed_kmh, self.max_candidates_per_route,
                    self.max_route_edges, self.min_group_size)
        if any(v <= 0 for v in positive) or self.speed_window_kmh < 0:
            raise DomainError("discretization parameters must be positive")
        if self.duration_slack < 1:
            raise DomainError("duration slack must be at least 1")

    @property
    def half_slot_s(self) -> float:
        return self.slot_width_min * 30.0


@dataclass(frozen=True)
class NormalityReport:
    group: str
    sample_count: int
    statistic: float
    p_value: float
    accepted: bool
    insufficient: bool = False

    def __post_init__(self):
        if not 0 <= self.p_value <= 1:
            raise DomainError(f"p-value {self.p_value} outside [0, 1]")


@dataclass(frozen=True)
class StateSequence:
    """One candidate rendering of a trip as <slot, segment, speed> states"""
    trip_id: str
    vehicle_id: str
    route: Route
    states: Tuple[State, ...]
    duration_s: float = float("nan")
    arrival_error_s: float = 0.0

    @property
    def speeds(self) -> Tuple[float, ...]:
        return tuple(speed for _, _, speed in self.states)

    def edge_speeds(self) -> Dict[str, float]:
        """Mean state speed per edge of the route, in km/h"""
        sums: Dict[str, List[float]] = defaultdict(list)
        for _, segment, speed in self.states:
            sums[segment_edge(segment)].append(speed)
        return {edge: float(np.mean(sums[edge])) for edge in self.route.edges if edge in sums}

    def mean_speed_kmh(self, graph: HighwayGraph) -> float:
        """Length over time implied by the per-edge speeds"""
        speeds = self.edge_speeds()
        length = graph.route_length(self.route)
        hours = sum(graph.edge(e).length_m / 1000 / speeds[e] for e in self.route.edges)
        return length / 1000 / hours

    def to_line(self) -> str:
        states = ";".join(f"{slot}:{segment}:{speed:g}" for slot, segment, speed in self.states)
        return f"{self.trip_id},{self.route.key},{states}"

    @classmethod
    def from_line(cls, line: str) -> 'StateSequence':
        parts = line.rstrip("\r\n").split(",")
        if len(parts) != 3:
            raise SchemaError(f"recovered trip line needs 3 fields: {line!r}")
        trip_id, route_key, state_text = parts
        states = []
        for token in filter(None, state_text.split(";")):
            slot, segment, speed = token.split(":")
            states.append((int(slot), segment, float(speed)))
        return cls(trip_id, trip_id.split("@")[0], Route.from_key(route_key), tuple(states))


def segment_id(edge_id: str, index: int) -> str:
    return f"{edge_id}#{index}"


def segment_edge(segment: str) -> str:
    return segment.rsplit("#", 1)[0]


# ---------------------------------------------------------------- normality

def _lilliefors_pvalue(statistic: float, n: int) -> float:
    """Dallal-Wilkinson approximation, accurate in the rejection region (p < 0.1)"""
    d = statistic
    if n > 100:
        d *= (n / 100.0) ** 0.49
        n = 100
    p = math.exp(-7.01256 * d * d * (n + 2.78019) + 2.99587 * d * math.sqrt(n + 2.78019)
                 - 0.122119 + 0.974598 / math.sqrt(n) + 1.67997 / n)
    return min(1.0, max(0.0, p))


def ks_normality_test(samples: Sequence[float], alpha: float = DEFAULT_ALPHA, group: str = "",
                      min_samples: int = MIN_KS_SAMPLES) -> NormalityReport:
    """
    KS distance to a normal with the sample's own mean and standard deviation,
    with a p-value for estimated parameters. Groups smaller than min_samples
    are accepted and flagged insufficient; zero-variance groups are rejected.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = len(x)
    if n < min_samples:
        return NormalityReport(group, n, 0.0, 1.0, True, insufficient=True)
    sd = x.std(ddof=1)
    if sd <= 1e-12 * max(1.0, abs(x.mean())):
        return NormalityReport(group, n, 1.0, 0.0, False)
    cdf = ndtr((x - x.mean()) / sd)
    i = np.arange(1, n + 1)
    statistic = float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))
    p_value = _lilliefors_pvalue(statistic, n)
    return NormalityReport(group, n, statistic, p_value, p_value > alpha)


# ---------------------------------------------------------------- candidates

@dataclass(frozen=True)
class _Segment:
    id: str
    edge: str
    start: float
    end: float


def _route_segments(graph: HighwayGraph, route: Route, segment_length: float) -> List[_Segment]:
    segments, offset = [], 0.0
    for edge_id in route.edges:
        length = graph.edge(edge_id).length_m
        count = max(1, math.ceil(length / segment_length - 1e-9))
        for k in range(count):
            start = k * segment_length
            end = min(length, (k + 1) * segment_length)
            segments.append(_Segment(segment_id(edge_id, k), edge_id, offset + start, offset + end))
        offset += length
    return segments


@dataclass(frozen=True)
class _Window:
    """Highway part of a trip on one route"""
    start: datetime
    duration_s: float
    first_slot: int
    slot_count: int
    first_slot_seconds: float


def _highway_window(trip: Trip, graph: HighwayGraph, route: Route, highway_s: float, width_min: int) -> _Window:
    ramp_in = graph.station(trip.origin).ramp_length_m
    ramps = ramp_in + graph.station(trip.destination).ramp_length_m
    length = graph.route_length(route)
    start = trip.entry_time + timedelta(seconds=trip.duration_s * ramp_in / (length + ramps))
    first = absolute_slot(start, width_min)
    last = absolute_slot(start + timedelta(seconds=max(highway_s - 1e-6, 0.0)), width_min)
    first_end = absolute_slot_start(first + 1, width_min)
    return _Window(start, highway_s, first, last - first + 1, (first_end - start).total_seconds())


def _trace_profile(segments: Sequence[_Segment], length: float, window: _Window, width_min: int,
                   speeds: Sequence[float]) -> Tuple[List[State], float, int]:
    """
    Drive the route at one speed per slot. Returns the states, the arrival
    time relative to the highway start and how many profile speeds were used.
    Past the window the last speed continues.
    """
    states: List[State] = []
    position, elapsed, k = 0.0, 0.0, 0
    seg_index = 0
    while position < length - 1e-9:
        speed = speeds[min(k, len(speeds) - 1)]
        v = speed / 3.6
        available = window.first_slot_seconds if k == 0 else width_min * 60.0
        end = min(length, position + v * available)
        slot = window.first_slot + k
        while seg_index < len(segments) and segments[seg_index].end <= position + 1e-9:
            seg_index += 1
        j = seg_index
        while j < len(segments) and segments[j].start < end - 1e-9:
            states.append((slot, segments[j].id, speed))
            j += 1
        elapsed += (end - position) / v
        position = end
        k += 1
    return states, elapsed, min(k, len(speeds))


def _profile_grid(mean_kmh: float, config: DiscretizationConfig, top_speed: float) -> List[float]:
    steps = int(math.floor(config.speed_window_kmh / config.search_grid_kmh + 1e-9))
    grid = [mean_kmh + j * config.search_grid_kmh for j in sorted(range(-steps, steps + 1), key=lambda j: (abs(j), j))]
    return [v for v in grid if config.min_speed_kmh <= v <= top_speed]


def route_feasible(trip: Trip, graph: HighwayGraph, route: Route, config: DiscretizationConfig) -> Optional[float]:
    """Ramp-corrected duration when the route can explain the trip, else None"""
    try:
        highway = ramp_corrected_duration(trip, route, graph)
    except DomainError:
        return None
    free_flow = graph.route_free_flow_time(route)
    if free_flow / config.overspeed_ratio <= highway <= config.duration_slack * free_flow:
        return highway
    return None


def _route_candidates(trip: Trip, graph: HighwayGraph, route: Route, highway_s: float,
                      config: DiscretizationConfig) -> List[StateSequence]:
    length = graph.route_length(route)
    segments = _route_segments(graph, route, config.segment_length_m)
    window = _highway_window(trip, graph, route, highway_s, config.slot_width_min)
    mean_kmh = length / highway_s * 3.6
    top_speed = max(graph.edge(e).speed_limit_kmh for e in route.edges) * config.overspeed_ratio
    grid = _profile_grid(mean_kmh, config, top_speed)
    if not grid:
        return []

    K = window.slot_count
    if len(grid) ** K <= MAX_FULL_ENUMERATION:
        profiles: Iterable[Tuple[float, ...]] = product(grid, repeat=K)
    else:
        profiles = sorted({tuple([a] * c + [b] * (K - c)) for c in range(K + 1) for a in grid for b in grid})

    scored = {}
    for profile in profiles:
        states, arrival, used = _trace_profile(segments, length, window, config.slot_width_min, profile)
        error = abs(arrival - highway_s)
        if error > config.half_slot_s:
            continue
        key = profile[:used]
        if key in scored:
            continue
        deviation = sum(abs(v - mean_kmh) for v in key)
        scored[key] = (error, deviation, key, states)

    ranked = sorted(scored.values(), key=lambda item: (round(item[0], 9), round(item[1], 9), item[2]))
    return [StateSequence(trip.trip_id, trip.vehicle_id, route, tuple(states), highway_s, error)
            for error, _, _, states in ranked[:config.max_candidates_per_route]]


def candidate_state_sequences(trip: Trip, graph: HighwayGraph, routes: Optional[Sequence[Route]] = None,
                              config: DiscretizationConfig = DiscretizationConfig()) -> List[StateSequence]:
    """
    Piecewise-constant speed profiles (one speed per slot) over every feasible
    route, on a grid anchored at the trip's mean speed, whose arrival matches
    the observed highway duration within half a slot. Closest matches first;
    an empty list means the trip cannot be recovered.
    """
    if routes is None:
        routes = graph.enumerate_routes(trip.origin, trip.destination, config.max_route_edges)
    candidates: List[StateSequence] = []
    for route in routes:
        highway = route_feasible(trip, graph, route, config)
        if highway is not None:
            candidates.extend(_route_candidates(trip, graph, route, highway, config))
    return candidates


def _refine(sequence: StateSequence, trip: Trip, graph: HighwayGraph, config: DiscretizationConfig) -> StateSequence:
    """Rescale the chosen profile to the observed duration and round to the speed unit"""
    length = graph.route_length(sequence.route)
    segments = _route_segments(graph, sequence.route, config.segment_length_m)
    window = _highway_window(trip, graph, sequence.route, sequence.duration_s, config.slot_width_min)
    slot_speeds: Dict[int, float] = {}
    for slot, _, speed in sequence.states:
        slot_speeds.setdefault(slot, speed)
    profile = [slot_speeds[s] for s in sorted(slot_speeds)]
    _, arrival, _ = _trace_profile(segments, length, window, config.slot_width_min, profile)
    scale = arrival / sequence.duration_s
    unit = config.speed_unit_kmh
    refined = [max(config.min_speed_kmh, round(v * scale / unit) * unit) for v in profile]
    states, arrival, _ = _trace_profile(segments, length, window, config.slot_width_min, refined)
    error = abs(arrival - sequence.duration_s)
    if error > config.half_slot_s:
        return sequence
    return StateSequence(sequence.trip_id, sequence.vehicle_id, sequence.route, tuple(states),
                         sequence.duration_s, error)


# ---------------------------------------------------------------- objective

def _group_key(slot: int, segment: str) -> str:
    return f"{segment}@{slot}"


def _trip_speed(sequence: StateSequence, graph: HighwayGraph) -> float:
    return graph.route_length(sequence.route) / sequence.duration_s * 3.6


def _vehicle_stds(trip_speeds: Dict[str, List[float]]) -> List[float]:
    return [float(np.sqrt(np.mean((np.array(v) - np.mean(v)) ** 2))) for _, v in sorted(trip_speeds.items()) if len(v) >= 2]


def normality_reports(sequences: Iterable[StateSequence], graph: HighwayGraph, alpha: float = DEFAULT_ALPHA,
                      min_samples: int = MIN_KS_SAMPLES) -> List[NormalityReport]:
    """Rnorm reports per (segment, slot) group followed by the Snorm report"""
    groups: Dict[str, List[float]] = defaultdict(list)
    trip_speeds: Dict[str, List[float]] = defaultdict(list)
    for seq in sequences:
        for slot, segment, speed in seq.states:
            groups[_group_key(slot, segment)].append(speed)
        trip_speeds[seq.vehicle_id].append(_trip_speed(seq, graph))
    reports = [ks_normality_test(values, alpha, key, min_samples) for key, values in sorted(groups.items())]
    reports.append(ks_normality_test(_vehicle_stds(trip_speeds), alpha, "snorm", min_samples))
    return reports


def recovery_objective(sequences: Iterable[StateSequence], graph: HighwayGraph, alpha: float = DEFAULT_ALPHA,
                       min_samples: int = MIN_KS_SAMPLES) -> int:
    """Accepted normality tests that had enough samples to be informative"""
    return sum(1 for r in normality_reports(sequences, graph, alpha, min_samples) if r.accepted and not r.insufficient)


class _SearchState:
    """Speed groups and per-vehicle trip speeds of a partial assignment"""

    def __init__(self, graph: HighwayGraph, alpha: float, min_samples: int):
        self.graph = graph
        self.alpha = alpha
        self.min_samples = min_samples
        self.groups: Dict[str, List[float]] = defaultdict(list)
        self.status: Dict[str, int] = defaultdict(int)
        self.rnorm = 0
        self.trip_speeds: Dict[str, List[float]] = defaultdict(list)

    def _group_status(self, values: List[float]) -> int:
        if len(values) < self.min_samples:
            return 0
        return int(ks_normality_test(values, self.alpha, min_samples=self.min_samples).accepted)

    def _refresh(self, key: str) -> None:
        new = self._group_status(self.groups[key])
        self.rnorm += new - self.status[key]
        self.status[key] = new

    def apply(self, seq: StateSequence) -> None:
        for slot, segment, speed in seq.states:
            key = _group_key(slot, segment)
            self.groups[key].append(speed)
            self._refresh(key)
        self.trip_speeds[seq.vehicle_id].append(_trip_speed(seq, self.graph))

    def undo(self, seq: StateSequence) -> None:
        for slot, segment, _ in reversed(seq.states):
            key = _group_key(slot, segment)
            self.groups[key].pop()
            self._refresh(key)
        self.trip_speeds[seq.vehicle_id].pop()

    def snorm(self) -> int:
        stds = _vehicle_stds(self.trip_speeds)
        if len(stds) < self.min_samples:
            return 0
        return int(ks_normality_test(stds, self.alpha, min_samples=self.min_samples).accepted)

    def objective(self) -> int:
        return self.rnorm + self.snorm()

    def settled_accepted(self, open_keys: set) -> int:
        return self.rnorm - sum(self.status[k] for k in open_keys if k in self.status)


@dataclass
class RecoveryResult:
    sequences: Dict[str, StateSequence]
    reports: List[NormalityReport]
    objective: int
    bounded: bool
    expansions: int
    unrecoverable: List[str] = field(default_factory=list)
    incumbent_trace: List[int] = field(default_factory=list)


def search_state_sequences(candidates: Dict[str, List[StateSequence]], graph: HighwayGraph,
                           alpha: float = DEFAULT_ALPHA, node_budget: int = DEFAULT_NODE_BUDGET,
                           min_samples: int = MIN_KS_SAMPLES) -> RecoveryResult:
    """
    Depth-first search over one candidate per trip, maximising the number of
    accepted normality tests.

    Trips with fewer candidates are decided first; children are tried best
    immediate objective first, then shorter route, then candidate order, so
    the first leaf is the greedy solution. Subtrees whose optimistic bound
    cannot beat the incumbent are skipped. Each child evaluation costs one
    expansion; when the budget runs out the incumbent is returned flagged
    as bounded. Ties go to shorter total route length, then to the
    lexicographically smallest candidate choice.
    """
    order = sorted((tid for tid in candidates if candidates[tid]), key=lambda tid: (len(candidates[tid]), tid))
    n = len(order)
    if n == 0:
        raise DomainError("no trip has a candidate state sequence")
    lengths = {tid: [graph.route_length(c.route) for c in candidates[tid]] for tid in order}

    touch = [set() for _ in range(n + 1)]
    for depth in range(n - 1, -1, -1):
        keys = {_group_key(slot, seg) for c in candidates[order[depth]] for slot, seg, _ in c.states}
        touch[depth] = touch[depth + 1] | keys

    state = _SearchState(graph, alpha, min_samples)
    choice = [0] * n
    expansions = 0
    bounded = False
    best: Optional[Tuple[int, float, Tuple[int, ...]]] = None
    trace: List[int] = []
    ranked_trips = sorted(range(n), key=lambda d: order[d])

    def better(objective: int, total_length: float, picks: Tuple[int, ...]) -> bool:
        if best is None:
            return True
        if objective != best[0]:
            return objective > best[0]
        if abs(total_length - best[1]) > 1e-6:
            return total_length < best[1]
        return picks < best[2]

    def children(depth: int) -> List[Tuple[int, float, int]]:
        nonlocal expansions
        tid = order[depth]
        scored = []
        for index, cand in enumerate(candidates[tid]):
            state.apply(cand)
            scored.append((state.objective(), lengths[tid][index], index))
            state.undo(cand)
            expansions += 1
        scored.sort(key=lambda item: (-item[0], item[1], item[2]))
        return scored

    # iterative DFS; each frame holds the ordered children and the next one to try
    stack: List[Tuple[List[Tuple[int, float, int]], int]] = [(children(0), 0)]
    path_length = 0.0
    while stack:
        kids, position = stack[-1]
        depth = len(stack) - 1
        if position > 0:
            prev = candidates[order[depth]][choice[depth]]
            state.undo(prev)
            path_length -= lengths[order[depth]][choice[depth]]
        if position >= len(kids) or (best is not None and expansions >= node_budget):
            if position < len(kids):
                bounded = True
            stack.pop()
            continue
        _, _, index = kids[position]
        stack[-1] = (kids, position + 1)
        choice[depth] = index
        cand = candidates[order[depth]][index]
        state.apply(cand)
        path_length += lengths[order[depth]][index]

        if depth + 1 == n:
            objective = state.objective()
            picks = tuple(choice[d] for d in ranked_trips)
            if better(objective, path_length, picks):
                best = (objective, path_length, picks)
                trace.append(objective)
            continue
        if best is not None:
            open_keys = touch[depth + 1]
            bound = state.settled_accepted(open_keys) + len(open_keys) + 1
            if bound < best[0]:
                continue
        stack.append((children(depth + 1), 0))

    picks_by_trip = dict(zip(sorted(order), best[2]))
    chosen = {tid: candidates[tid][picks_by_trip[tid]] for tid in order}
    reports = normality_reports(chosen.values(), graph, alpha, min_samples)
    objective = sum(1 for r in reports if r.accepted and not r.insufficient)
    return RecoveryResult(chosen, reports, objective, bounded, expansions, [], trace)


def recover_routes_and_speeds(trips: Sequence[Trip], graph: HighwayGraph,
                              config: DiscretizationConfig = DiscretizationConfig(),
                              alpha: float = DEFAULT_ALPHA, node_budget: int = DEFAULT_NODE_BUDGET,
                              split_by_day: bool = True) -> RecoveryResult:
    """
    Recover one state sequence per trip. Trips are searched per calendar day
    of entry (speed groups never span days), each day with its own budget.
    The winning profiles are refined to the speed unit.
    """
    by_trip = {trip.trip_id: trip for trip in trips}
    candidates = {trip.trip_id: candidate_state_sequences(trip, graph, None, config) for trip in trips}
    unrecoverable = sorted(tid for tid, cands in candidates.items() if not cands)
    if len(unrecoverable) == len(candidates):
        raise DomainError("no trip has a feasible state sequence")

    partitions: Dict[object, Dict[str, List[StateSequence]]] = defaultdict(dict)
    for tid, cands in candidates.items():
        if cands:
            key = by_trip[tid].entry_time.date() if split_by_day else None
            partitions[key][tid] = cands

    result = RecoveryResult({}, [], 0, False, 0, unrecoverable, [])
    for key in sorted(partitions, key=lambda k: (k is None, k)):
        part = search_state_sequences(partitions[key], graph, alpha, node_budget, config.min_group_size)
        for tid, seq in part.sequences.items():
            result.sequences[tid] = _refine(seq, by_trip[tid], graph, config)
        result.reports.extend(part.reports)
        result.objective += part.objective
        result.bounded |= part.bounded
        result.expansions += part.expansions
        result.incumbent_trace.extend(part.incumbent_trace)
    logger.info("Recovered %d trips (%d unrecoverable), objective %d, %d expansions%s",
                len(result.sequences), len(unrecoverable), result.objective, result.expansions,
                ", budget exhausted" if result.bounded else "")
    return result


def recover_single_trip(trip: Trip, graph: HighwayGraph, speed_map: SpeedMap,
                        config: DiscretizationConfig = DiscretizationConfig()) -> Optional[StateSequence]:
    """
    Recover one completed trip against the crowd speed map: the candidate
    whose crowd-median travel time is closest to the observed duration.
    """
    best: Optional[Tuple[float, float, int, StateSequence]] = None
    slot = slot_of(trip.entry_time, speed_map.width_min).index
    for rank, cand in enumerate(candidate_state_sequences(trip, graph, None, config)):
        expected = sum(graph.edge(e).length_m / (speed_map.median(e, slot) / 3.6) for e in cand.route.edges)
        key = (abs(expected - cand.duration_s), graph.route_length(cand.route), rank, cand)
        if best is None or key[:3] < best[:3]:
            best = key
    if best is None:
        return None
    return _refine(best[3], trip, graph, config)


def write_recovered_trips(sequences: Iterable[StateSequence], path: Union[str, Path], header: Sequence[str] = ()) -> None:
    lines = [f"# {line}" for line in header] + ["trip_id,route,states"]
    lines.extend(seq.to_line() for seq in sorted(sequences, key=lambda s: s.trip_id))
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def read_recovered_trips(path: Union[str, Path]) -> Dict[str, StateSequence]:
    sequences = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.strip() or line.startswith("#") or line.startswith("trip_id,"):
                continue
            seq = StateSequence.from_line(line)
            sequences[seq.trip_id] = seq
    return sequences


def write_normality_reports(reports: Iterable[NormalityReport], path: Union[str, Path], header: Sequence[str] = ()) -> None:
    lines = [f"# {line}" for line in header] + ["group,samples,statistic,p_value,accepted,insufficient"]
    lines.extend(f"{r.group},{r.sample_count},{r.statistic:.10g},{r.p_value:.10g},{int(r.accepted)},{int(r.insufficient)}"
                 for r in reports)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
