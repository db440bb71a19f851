#!/usr/bin/env python3
"""
Crowd Speed - per edge and time slot traffic speed distributions estimated
from ETC trip durations.

Single-edge trips observe an edge directly. A trip whose route extends a
shorter trip's route by one edge observes that extension edge through the
difference of the two durations. Samples are weighted by how similar the
two drivers are, summarised as letter values and fitted with a weighted
Gaussian mixture. Cells without enough samples fall back to free flow.
"""

import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field, asdict
from datetime import timedelta
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from errors import DomainError, InsufficientSamplesError, SchemaError
from etc_ingest import TimeSlot, Trip, slot_of
from highway_graph import HighwayGraph, Route

logger = logging.getLogger(__name__)

# a 10 km/h speed difference between two drivers halves the sample weight
DEFAULT_LAMBDA = (10 / 3.6) ** 2 / math.log(2)
DEFAULT_COMPONENTS = 2
DEFAULT_MIN_SAMPLES = 5
DEFAULT_SLOT_WIDTH_MIN = 30
MAX_DIFFERENCING_EDGES = 3
PLAUSIBLE_SPEED_RATIO = 1.5
VARIANCE_FLOOR = 1e-4
EM_TOLERANCE = 1e-6
EM_MAX_ITER = 200
MIN_HIGHWAY_SECONDS = 1.0
# exp(-s^2 / lambda) underflows past s ~ 90 m/s; weights stay strictly positive
MIN_SAMPLE_WEIGHT = float(np.finfo(float).tiny)


class SampleSource(str, Enum):
    DIRECT = "DirectSingleEdge"
    DIFFERENCED = "Differenced"


@dataclass(frozen=True)
class DerivedDurationSample:
    """Traversal time of one edge observed directly or by differencing two trips"""
    edge: str
    slot: TimeSlot
    duration_s: float
    speed_kmh: float
    confidence: float
    source: SampleSource
    pair: Optional[Tuple[str, str]] = None

    def __post_init__(self):
        if not self.duration_s > 0:
            raise DomainError("sample duration must be positive")
        if not 0 <= self.confidence <= 1:
            raise DomainError(f"confidence {self.confidence} outside [0, 1]")
        if self.source is SampleSource.DIRECT and self.confidence != 1.0:
            raise DomainError("direct samples carry confidence 1")


@dataclass
class EdgeSampleSet:
    samples: List[DerivedDurationSample]
    diagnostics: Counter = field(default_factory=Counter)


# ---------------------------------------------------------------- durations

def ramp_corrected_duration(trip: Trip, route: Route, graph: HighwayGraph) -> float:
    """
    Highway part of a trip's duration. Ramp time is the duration share of the
    entry and exit ramps, apportioned by length against the route.
    """
    origin, destination = graph.route_endpoints(route)
    if (origin, destination) != (trip.origin, trip.destination):
        raise DomainError(f"route {route.key} does not join {trip.origin} and {trip.destination}")
    ramps = graph.station(origin).ramp_length_m + graph.station(destination).ramp_length_m
    length = graph.route_length(route)
    highway = trip.duration_s * length / (length + ramps)
    if highway < MIN_HIGHWAY_SECONDS:
        raise DomainError(f"ramp correction leaves {highway:.3f} s of highway time")
    return highway


def _speed_gap(d_i: float, d_j: float, edge_length_m: float) -> float:
    if d_i <= 0 or d_j <= 0:
        raise DomainError("durations must be positive")
    return edge_length_m / d_i - edge_length_m / d_j


def confidence(d_i: float, d_j: float, edge_length_m: float, lam: float = DEFAULT_LAMBDA) -> float:
    """u = 1 - exp(-s^2 / lambda) with s = l/d_i - l/d_j in m/s"""
    if lam <= 0:
        raise DomainError(f"lambda must be positive, got {lam}")
    s = _speed_gap(d_i, d_j, edge_length_m)
    return 1.0 - math.exp(-s * s / lam)


def sample_weight(d_i: float, d_j: float, edge_length_m: float, lam: float = DEFAULT_LAMBDA) -> float:
    """Weight of a differenced sample: 1 - u, so similar drivers count more"""
    if lam <= 0:
        raise DomainError(f"lambda must be positive, got {lam}")
    s = _speed_gap(d_i, d_j, edge_length_m)
    return max(math.exp(-s * s / lam), MIN_SAMPLE_WEIGHT)


def assign_short_routes(trips: Iterable[Trip], graph: HighwayGraph,
                        max_edges: int = MAX_DIFFERENCING_EDGES) -> List[Trip]:
    """Attach the shortest route of at most max_edges edges; trips without one are dropped"""
    routed = []
    for trip in trips:
        routes = graph.enumerate_routes(trip.origin, trip.destination, max_edges)
        if routes:
            routed.append(trip.with_route(routes[0]))
    return routed


def _midpoint_slot(trip: Trip, elapsed_s: float, width_min: int) -> TimeSlot:
    return slot_of(trip.entry_time + timedelta(seconds=elapsed_s), width_min)


def derive_edge_samples(trips: Sequence[Trip], graph: HighwayGraph, lam: float = DEFAULT_LAMBDA,
                        width_min: int = DEFAULT_SLOT_WIDTH_MIN,
                        max_edges: int = MAX_DIFFERENCING_EDGES) -> EdgeSampleSet:
    """
    Direct samples from single-edge trips plus differenced samples from every
    (shorter, longer) pair of same-day, same-origin-slot trips where the
    shorter route is the longer one minus its last edge.
    """
    diagnostics: Counter = Counter()
    eligible: List[Tuple[Trip, float]] = []
    for trip in sorted(trips, key=lambda t: (t.entry_time, t.trip_id)):
        if trip.route is None:
            raise DomainError(f"trip {trip.trip_id} has no route")
        if len(trip.route) > max_edges:
            diagnostics["route too long"] += 1
            continue
        try:
            eligible.append((trip, ramp_corrected_duration(trip, trip.route, graph)))
        except DomainError:
            diagnostics["ramp correction"] += 1

    samples: List[DerivedDurationSample] = []

    def emit(edge_id: str, slot: TimeSlot, duration: float, weight: float,
             source: SampleSource, pair: Optional[Tuple[str, str]] = None) -> None:
        edge = graph.edge(edge_id)
        speed = edge.length_m / duration * 3.6
        if speed > PLAUSIBLE_SPEED_RATIO * edge.speed_limit_kmh:
            diagnostics["implausible speed"] += 1
            return
        samples.append(DerivedDurationSample(edge_id, slot, duration, speed, weight, source, pair))

    groups: Dict[Tuple[object, int, Tuple[str, ...]], List[Tuple[Trip, float]]] = defaultdict(list)
    for trip, highway in eligible:
        groups[(trip.entry_time.date(), trip.origin_slot.index, trip.route.edges)].append((trip, highway))
        if len(trip.route) == 1:
            emit(trip.route.edges[0], _midpoint_slot(trip, highway / 2, width_min), highway, 1.0, SampleSource.DIRECT)

    for longer, long_highway in eligible:
        if len(longer.route) < 2:
            continue
        prefix = longer.route.edges[:-1]
        extension = longer.route.edges[-1]
        extension_length = graph.edge(extension).length_m
        for shorter, short_highway in groups.get((longer.entry_time.date(), longer.origin_slot.index, prefix), ()):
            difference = long_highway - short_highway
            if difference <= 0:
                diagnostics["non-positive differenced duration"] += 1
                continue
            weight = sample_weight(short_highway, long_highway, extension_length, lam)
            slot = _midpoint_slot(longer, short_highway + difference / 2, width_min)
            emit(extension, slot, difference, weight, SampleSource.DIFFERENCED, (shorter.trip_id, longer.trip_id))

    logger.info("Derived %d edge samples from %d trips (discarded: %s)",
                len(samples), len(eligible), dict(sorted(diagnostics.items())) or "none")
    return EdgeSampleSet(samples, diagnostics)


# ---------------------------------------------------------------- mixtures

@dataclass(frozen=True)
class GmmComponent:
    weight: float
    mean_kmh: float
    variance: float


@dataclass(frozen=True)
class GmmParams:
    """Gaussian mixture over speeds in km/h"""
    components: Tuple[GmmComponent, ...]

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if not self.components:
            raise DomainError("a mixture needs at least one component")
        if abs(sum(c.weight for c in self.components) - 1.0) > 1e-9:
            raise DomainError("mixture weights must sum to 1")
        if any(c.variance <= 0 for c in self.components):
            raise DomainError("mixture variances must be positive")

    @property
    def mean(self) -> float:
        return float(sum(c.weight * c.mean_kmh for c in self.components))

    def log_likelihood(self, speeds: Sequence[float], weights: Optional[Sequence[float]] = None) -> float:
        x = np.asarray(speeds, dtype=float)
        w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
        pi, mu, var = (np.array([getattr(c, f) for c in self.components]) for f in ("weight", "mean_kmh", "variance"))
        return float(np.dot(w, logsumexp(_component_log_density(x, pi, mu, var), axis=1)))

    def to_dict(self) -> Dict:
        return {"components": [asdict(c) for c in self.components]}

    @classmethod
    def from_dict(cls, data: Dict) -> 'GmmParams':
        return cls(tuple(GmmComponent(**c) for c in data["components"]))


@dataclass
class GmmFit:
    params: GmmParams
    log_likelihood: List[float]
    iterations: int
    converged: bool
    floored: bool


def _component_log_density(x: np.ndarray, pi: np.ndarray, mu: np.ndarray, var: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        log_pi = np.log(pi)
    return log_pi[None, :] - 0.5 * np.log(2 * np.pi * var)[None, :] - (x[:, None] - mu[None, :]) ** 2 / (2 * var[None, :])


def _seed_centers(x: np.ndarray, w: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding with weights"""
    centers = [x[rng.choice(len(x), p=w / w.sum())]]
    for _ in range(1, k):
        d2 = np.min((x[:, None] - np.array(centers)[None, :]) ** 2, axis=1)
        mass = w * d2
        if mass.sum() <= 0:
            remaining = np.setdiff1d(np.unique(x), centers)
            centers.append(remaining[0])
        else:
            centers.append(x[rng.choice(len(x), p=mass / mass.sum())])
    return np.sort(np.array(centers, dtype=float))


def fit_weighted_gmm(speeds: Sequence[float], weights: Optional[Sequence[float]] = None,
                     components: int = DEFAULT_COMPONENTS, seed: Union[int, Sequence[int]] = 0,
                     max_iter: int = EM_MAX_ITER, tol: float = EM_TOLERANCE,
                     variance_floor: float = VARIANCE_FLOOR) -> GmmFit:
    """
    Weighted EM for a one-dimensional Gaussian mixture.

    Sample weights scale the responsibilities in both steps, so the weighted
    log-likelihood never decreases. Iteration stops when an iteration gains
    less than `tol` or after `max_iter` iterations.
    """
    x = np.asarray(speeds, dtype=float)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    if x.ndim != 1 or w.shape != x.shape:
        raise DomainError("speeds and weights must be one-dimensional and aligned")
    if components < 1:
        raise DomainError(f"components must be >= 1, got {components}")
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise DomainError("sample weights must be positive")
    if len(np.unique(x)) < components:
        raise InsufficientSamplesError(f"{len(np.unique(x))} distinct values for {components} components")
    w = w * (len(w) / w.sum())

    rng = np.random.default_rng(seed)
    centers = _seed_centers(x, w, components, rng)
    nearest = np.argmin((x[:, None] - centers[None, :]) ** 2, axis=1)
    total_var = float(np.average((x - np.average(x, weights=w)) ** 2, weights=w))
    pi, mu, var = np.empty(components), np.empty(components), np.empty(components)
    for k in range(components):
        member = nearest == k
        wk = w[member]
        pi[k] = wk.sum() / w.sum()
        mu[k] = np.average(x[member], weights=wk) if wk.sum() > 0 else centers[k]
        vk = float(np.average((x[member] - mu[k]) ** 2, weights=wk)) if wk.sum() > 0 else 0.0
        var[k] = vk if vk > 0 else total_var
    floored = bool(np.any(var < variance_floor))
    var = np.maximum(var, variance_floor)
    if pi.min() <= 0:
        pi = np.maximum(pi, 1e-12)
        pi /= pi.sum()

    def log_likelihood() -> Tuple[float, np.ndarray]:
        log_dens = _component_log_density(x, pi, mu, var)
        lse = logsumexp(log_dens, axis=1)
        return float(np.dot(w, lse)), np.exp(log_dens - lse[:, None])

    ll, resp = log_likelihood()
    trace = [ll]
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        wr = resp * w[:, None]
        nk = wr.sum(axis=0)
        for k in range(components):
            if nk[k] <= 1e-12:
                continue
            mu[k] = float(np.dot(wr[:, k], x) / nk[k])
            vk = float(np.dot(wr[:, k], (x - mu[k]) ** 2) / nk[k])
            if vk < variance_floor:
                floored = True
                vk = variance_floor
            var[k] = vk
        pi = nk / nk.sum()
        new_ll, resp = log_likelihood()
        trace.append(new_ll)
        gain = new_ll - ll
        ll = new_ll
        if gain < tol:
            converged = True
            break

    order = np.argsort(mu, kind="stable")
    params = GmmParams(tuple(GmmComponent(float(pi[k]), float(mu[k]), float(var[k])) for k in order))
    if floored:
        logger.debug("Variance floor applied while fitting %d samples", len(x))
    return GmmFit(params, trace, iterations, converged, floored)


# ---------------------------------------------------------------- letter values

@dataclass(frozen=True)
class LetterValues:
    """Five-number summary of a speed sample in km/h"""
    min: float
    lower_fourth: float
    median: float
    upper_fourth: float
    max: float

    def __post_init__(self):
        values = self.as_tuple()
        if any(a > b for a, b in zip(values, values[1:])):
            raise DomainError(f"letter values out of order: {values}")

    @classmethod
    def constant(cls, value: float) -> 'LetterValues':
        return cls(value, value, value, value, value)

    def as_tuple(self) -> Tuple[float, float, float, float, float]:
        return (self.min, self.lower_fourth, self.median, self.upper_fourth, self.max)


def weighted_quantile(values: Sequence[float], weights: Sequence[float], q: float) -> float:
    """Averaged inverted CDF of a weighted sample"""
    x = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    if len(x) == 0:
        raise InsufficientSamplesError("quantile of an empty sample")
    if w.shape != x.shape or np.any(w <= 0):
        raise DomainError("quantile weights must be positive and aligned with the values")
    order = np.argsort(x, kind="stable")
    x, w = x[order], w[order] / w.max()
    if q <= 0:
        return float(x[0])
    if q >= 1:
        return float(x[-1])
    cumulative = np.cumsum(w)
    total = cumulative[-1]
    target = q * total
    eps = 1e-9 * total
    i = int(np.searchsorted(cumulative, target - eps, side="left"))
    i = min(i, len(x) - 1)
    if abs(cumulative[i] - target) <= eps and i < len(x) - 1 and q > 0:
        return float((x[i] + x[i + 1]) / 2)
    return float(x[i])


def weighted_letter_values(speeds: Sequence[float], weights: Optional[Sequence[float]] = None) -> LetterValues:
    w = np.ones(len(speeds)) if weights is None else weights
    return LetterValues(*(weighted_quantile(speeds, w, q) for q in (0.0, 0.25, 0.5, 0.75, 1.0)))


# ---------------------------------------------------------------- speed map

@dataclass
class EdgeSpeedDistribution:
    edge: str
    slot: TimeSlot
    samples: List[DerivedDurationSample]
    gmm: Optional[GmmParams]
    letter_values: LetterValues
    fallback: bool

    @classmethod
    def free_flow(cls, edge: str, slot: TimeSlot, speed_limit_kmh: float,
                  samples: Optional[List[DerivedDurationSample]] = None) -> 'EdgeSpeedDistribution':
        return cls(edge, slot, list(samples or []), None, LetterValues.constant(speed_limit_kmh), True)

    @property
    def median(self) -> float:
        return self.letter_values.median


@dataclass(frozen=True)
class CrowdSpeedConfig:
    lam: float = DEFAULT_LAMBDA
    components: int = DEFAULT_COMPONENTS
    min_samples: int = DEFAULT_MIN_SAMPLES
    width_min: int = DEFAULT_SLOT_WIDTH_MIN
    max_edges: int = MAX_DIFFERENCING_EDGES
    seed: int = 0

    def __post_init__(self):
        if self.lam <= 0 or self.components < 1 or self.min_samples < 1 or self.max_edges < 1:
            raise DomainError("crowd speed parameters must be positive")
        if 1440 % self.width_min:
            raise DomainError(f"slot width {self.width_min} does not divide a day")


class SpeedMap:
    """EdgeSpeedDistribution for every (edge, slot of day); missing cells are free flow"""

    def __init__(self, graph: HighwayGraph, width_min: int = DEFAULT_SLOT_WIDTH_MIN,
                 cells: Optional[Dict[Tuple[str, int], EdgeSpeedDistribution]] = None):
        self.graph = graph
        self.width_min = width_min
        self.cells: Dict[Tuple[str, int], EdgeSpeedDistribution] = dict(cells or {})

    @property
    def slots_per_day(self) -> int:
        return 1440 // self.width_min

    def lookup(self, edge_id: str, slot_index: int) -> EdgeSpeedDistribution:
        cell = self.cells.get((edge_id, slot_index))
        if cell is None:
            cell = EdgeSpeedDistribution.free_flow(edge_id, TimeSlot(slot_index, self.width_min),
                                                   self.graph.edge(edge_id).speed_limit_kmh)
        return cell

    def median(self, edge_id: str, slot_index: int) -> float:
        return self.lookup(edge_id, slot_index).median

    def __iter__(self) -> Iterator[EdgeSpeedDistribution]:
        for edge_id in self.graph.edge_ids:
            for slot in range(self.slots_per_day):
                yield self.lookup(edge_id, slot)

    def fallback_share(self) -> float:
        cells = list(self)
        return sum(c.fallback for c in cells) / len(cells)

    def to_frame(self) -> pd.DataFrame:
        max_components = max((len(c.gmm.components) for c in self.cells.values() if c.gmm), default=0)
        columns = ["edge", "slot", "fallback", "min", "lf", "median", "uf", "max"]
        for k in range(1, max_components + 1):
            columns += [f"gmm_w{k}", f"gmm_mu{k}", f"gmm_var{k}"]
        rows = []
        for cell in self:
            row = [cell.edge, cell.slot.index, int(cell.fallback), *cell.letter_values.as_tuple()]
            comps = cell.gmm.components if cell.gmm else ()
            for k in range(max_components):
                row += [comps[k].weight, comps[k].mean_kmh, comps[k].variance] if k < len(comps) else [None] * 3
            rows.append(row)
        return pd.DataFrame(rows, columns=columns)


def estimate_slot_distributions(trips: Sequence[Trip], graph: HighwayGraph,
                                config: CrowdSpeedConfig = CrowdSpeedConfig()) -> SpeedMap:
    """
    Fit every (edge, slot) cell of a window. Cells with at least
    `min_samples` samples get a weighted mixture and letter values; the rest
    fall back to the edge's free-flow speed.
    """
    derived = derive_edge_samples(trips, graph, config.lam, config.width_min, config.max_edges)
    by_cell: Dict[Tuple[str, int], List[DerivedDurationSample]] = defaultdict(list)
    for sample in derived.samples:
        by_cell[(sample.edge, sample.slot.index)].append(sample)

    edge_index = {eid: i for i, eid in enumerate(graph.edge_ids)}
    cells: Dict[Tuple[str, int], EdgeSpeedDistribution] = {}
    for (edge_id, slot_index), samples in sorted(by_cell.items()):
        slot = TimeSlot(slot_index, config.width_min)
        limit = graph.edge(edge_id).speed_limit_kmh
        if len(samples) < config.min_samples:
            cells[(edge_id, slot_index)] = EdgeSpeedDistribution.free_flow(edge_id, slot, limit, samples)
            continue
        speeds = [s.speed_kmh for s in samples]
        weights = [s.confidence for s in samples]
        distinct = len(set(speeds))
        try:
            fit = fit_weighted_gmm(speeds, weights, min(config.components, distinct),
                                   seed=[config.seed, edge_index[edge_id], slot_index])
        except DomainError as e:
            logger.warning("Mixture fit failed for %s slot %d, using free flow: %s", edge_id, slot_index, e)
            cells[(edge_id, slot_index)] = EdgeSpeedDistribution.free_flow(edge_id, slot, limit, samples)
            continue
        cells[(edge_id, slot_index)] = EdgeSpeedDistribution(
            edge_id, slot, samples, fit.params, weighted_letter_values(speeds, weights), False)

    speed_map = SpeedMap(graph, config.width_min, cells)
    fitted = sum(1 for c in cells.values() if not c.fallback)
    logger.info("Speed map: %d fitted cells, %d sparse cells, %.1f%% of all cells at free flow",
                fitted, len(cells) - fitted, 100 * speed_map.fallback_share())
    return speed_map


def write_speed_map(speed_map: SpeedMap, path: Union[str, Path], header: Sequence[str] = ()) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        for line in header:
            f.write(f"# {line}\n")
        speed_map.to_frame().to_csv(f, index=False, lineterminator="\n")


def read_speed_map(path: Union[str, Path], graph: HighwayGraph) -> SpeedMap:
    frame = pd.read_csv(path, comment="#")
    required = ["edge", "slot", "fallback", "min", "lf", "median", "uf", "max"]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise SchemaError(f"speed map {path} lacks columns {missing}")
    slots = {int(s) for s in frame["slot"]}
    width = 1440 // (max(slots) + 1) if slots else DEFAULT_SLOT_WIDTH_MIN
    components = sum(1 for c in frame.columns if c.startswith("gmm_w"))
    cells = {}
    for row in frame.itertuples(index=False):
        data = row._asdict()
        graph.edge(str(data["edge"]))
        gmm = None
        comps = []
        for k in range(1, components + 1):
            weight = data.get(f"gmm_w{k}")
            if weight is not None and not pd.isna(weight):
                comps.append(GmmComponent(float(weight), float(data[f"gmm_mu{k}"]), float(data[f"gmm_var{k}"])))
        if comps:
            gmm = GmmParams(tuple(comps))
        letters = LetterValues(*(float(data[c]) for c in ("min", "lf", "median", "uf", "max")))
        slot = TimeSlot(int(data["slot"]), width)
        cells[(str(data["edge"]), slot.index)] = EdgeSpeedDistribution(
            str(data["edge"]), slot, [], gmm, letters, bool(int(data["fallback"])))
    return SpeedMap(graph, width, cells)
