#!/usr/bin/env python3
"""
Mobility Stats - destination entropy, rank similarity, speed dispersion,
correlation and coverage diagnostics over trips
"""

import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, asdict
from typing import Dict, Hashable, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import stats

from errors import DomainError, InsufficientSamplesError, UndefinedCorrelationError
from etc_ingest import ContextCalendar, Trip, slot_of
from highway_graph import HighwayGraph

logger = logging.getLogger(__name__)

DEFAULT_NDCG_TOP_K = 10


@dataclass(frozen=True)
class DistributionOverDestinations:
    """Normalized destination frequencies from one origin, optionally per slot"""
    origin: str
    probabilities: Mapping[str, float]
    slot: Optional[int] = None

    def __post_init__(self):
        if any(p < 0 for p in self.probabilities.values()):
            raise DomainError("probabilities must be non-negative")
        total = sum(self.probabilities.values())
        if abs(total - 1.0) > 1e-9:
            raise DomainError(f"probabilities sum to {total}, not 1")

    @classmethod
    def from_counts(cls, origin: str, counts: Mapping[str, float], slot: Optional[int] = None) -> 'DistributionOverDestinations':
        total = float(sum(counts.values()))
        if total <= 0:
            raise DomainError(f"no destinations observed from {origin}")
        return cls(origin, {d: c / total for d, c in sorted(counts.items())}, slot)

    def ranking(self, top_k: Optional[int] = None) -> List[Tuple[str, float]]:
        ranked = sorted(self.probabilities.items(), key=lambda item: (-item[1], item[0]))
        return ranked[:top_k] if top_k else ranked


def destination_entropy(history: Sequence[Trip]) -> float:
    """Shannon entropy in bits of a vehicle's empirical destination distribution"""
    if not history:
        raise DomainError("destination entropy needs at least one trip")
    counts = np.array(list(Counter(trip.destination for trip in history).values()), dtype=float)
    p = counts / counts.sum()
    return float(-(p * np.log2(p)).sum()) + 0.0


def _dcg(gains: Sequence[float]) -> float:
    return float(sum(g / math.log2(i + 2) for i, g in enumerate(gains)))


def ndcg_rank_similarity(reference_ranking: Sequence[Tuple[Hashable, float]],
                         other_ranking: Sequence[Union[Hashable, Tuple[Hashable, float]]]) -> float:
    """
    DCG of `other_ranking` scored with the reference gains, over the DCG of the
    reference items in descending gain order. Items absent from the reference
    gain nothing; an item may appear only once in each ranking.
    """
    if not reference_ranking or not other_ranking:
        raise DomainError("rankings must be non-empty")
    gains = {}
    for item, gain in reference_ranking:
        if gain < 0:
            raise DomainError(f"gain for {item!r} is negative")
        if item in gains:
            raise DomainError(f"{item!r} appears twice in the reference ranking")
        gains[item] = float(gain)
    items = [entry[0] if isinstance(entry, tuple) else entry for entry in other_ranking]
    if len(set(items)) != len(items):
        raise DomainError("ranking lists an item more than once")
    ideal = _dcg(sorted(gains.values(), reverse=True))
    if ideal == 0:
        raise DomainError("reference ranking carries no gain")
    return _dcg([gains.get(item, 0.0) for item in items]) / ideal


@dataclass(frozen=True)
class SpeedStdVariants:
    s_limit: float
    s_historical: float
    s_trip: float

    def to_dict(self) -> Dict:
        return asdict(self)


def speed_dispersion(speeds: Sequence[float], reference: float) -> float:
    """sqrt(mean((v - reference)^2))"""
    v = np.asarray(speeds, dtype=float)
    return float(np.sqrt(np.mean((v - reference) ** 2)))


def speed_std_variants(trip_speeds: Sequence[float], speed_limit: float) -> SpeedStdVariants:
    """
    Dispersion of a vehicle's per-trip mean speeds around three references:
    the speed limit, the vehicle's historical average, and the current
    (most recent) trip's speed.
    """
    if speed_limit <= 0:
        raise DomainError(f"speed limit must be positive, got {speed_limit}")
    if len(trip_speeds) < 2:
        raise InsufficientSamplesError("speed STD variants need at least two trips")
    speeds = np.asarray(trip_speeds, dtype=float)
    return SpeedStdVariants(
        s_limit=speed_dispersion(speeds, speed_limit),
        s_historical=speed_dispersion(speeds, float(speeds.mean())),
        s_trip=speed_dispersion(speeds, float(speeds[-1])),
    )


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation; zero variance in either sample is an error"""
    xa, ya = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise DomainError("pearson needs two samples of equal length")
    if len(xa) < 2:
        raise InsufficientSamplesError("pearson needs at least two pairs")
    if np.ptp(xa) == 0 or np.ptp(ya) == 0:
        raise UndefinedCorrelationError("correlation undefined for zero-variance input")
    r = stats.pearsonr(xa, ya)[0]
    return float(min(1.0, max(-1.0, r)))


def edge_coverage(trips: Iterable[Trip], graph: HighwayGraph, max_k: Optional[int] = None,
                  width_min: int = 30) -> Dict[int, float]:
    """
    Per slot of the day, the share of graph edges used by trips whose routes
    have at most max_k edges (None means no bound). Trips without a route
    are an error.
    """
    covered: Dict[int, set] = defaultdict(set)
    for trip in trips:
        if trip.route is None:
            raise DomainError(f"trip {trip.trip_id} has no route")
        if max_k is not None and len(trip.route) > max_k:
            continue
        covered[slot_of(trip.entry_time, width_min).index].update(trip.route.edges)
    total = len(graph.edge_ids)
    slots = 1440 // width_min
    return {slot: len(covered.get(slot, ())) / total for slot in range(slots)}


# ---------------------------------------------------------------- tables

def trip_length_histogram(trips: Iterable[Trip]) -> pd.DataFrame:
    """Trips per route length K"""
    counts = Counter(len(trip.route) for trip in trips if trip.route is not None)
    total = sum(counts.values())
    rows = [{"edges": k, "trips": n, "share": n / total if total else 0.0} for k, n in sorted(counts.items())]
    return pd.DataFrame(rows, columns=["edges", "trips", "share"])


def route_count_histogram(graph: HighwayGraph, od_pairs: Iterable[Tuple[str, str]],
                          max_edges: int = 8) -> pd.DataFrame:
    """How many candidate routes the given OD pairs have"""
    counts = Counter(len(graph.enumerate_routes(o, d, max_edges)) for o, d in sorted(set(od_pairs)))
    total = sum(counts.values())
    rows = [{"routes": k, "od_pairs": n, "share": n / total if total else 0.0} for k, n in sorted(counts.items())]
    return pd.DataFrame(rows, columns=["routes", "od_pairs", "share"])


def entropy_histogram(histories: Mapping[str, Sequence[Trip]], bin_width: float = 0.5) -> pd.DataFrame:
    """Vehicles per destination-entropy bin"""
    entropies = [destination_entropy(trips) for _, trips in sorted(histories.items()) if trips]
    bins = Counter(math.floor(e / bin_width + 1e-9) * bin_width for e in entropies)
    total = len(entropies)
    rows = [{"entropy_bits": b, "vehicles": n, "share": n / total} for b, n in sorted(bins.items())]
    return pd.DataFrame(rows, columns=["entropy_bits", "vehicles", "share"])


def _popularity(trips: Iterable[Trip], width_min: int) -> Dict[Tuple[str, int], Counter]:
    table: Dict[Tuple[str, int], Counter] = defaultdict(Counter)
    for trip in trips:
        table[(trip.origin, slot_of(trip.entry_time, width_min).index)][trip.destination] += 1
    return table


def _ranked(counter: Counter, top_k: int) -> List[Tuple[str, float]]:
    return sorted(counter.items(), key=lambda item: (-item[1], item[0]))[:top_k]


def context_ndcg_table(trips: Sequence[Trip], calendar: ContextCalendar, top_k: int = DEFAULT_NDCG_TOP_K,
                       width_min: int = 30) -> pd.DataFrame:
    """
    Mean NDCG per slot and day class. Each day's per-origin destination
    ranking is compared with the regular-day reference: the popularity
    ranking aggregated over all non-holiday weekdays.
    """
    regular = [t for t in trips if calendar.get(t.entry_time).is_regular_day]
    reference = _popularity(regular, width_min)

    by_day: Dict[object, List[Trip]] = defaultdict(list)
    for trip in trips:
        by_day[trip.entry_time.date()].append(trip)

    scores: Dict[Tuple[int, str], List[float]] = defaultdict(list)
    for day in sorted(by_day):
        record = calendar.get(day)
        day_class = "holiday" if record.is_holiday else ("weekend" if record.is_weekend else "weekday")
        for (origin, slot), counter in sorted(_popularity(by_day[day], width_min).items()):
            ref = reference.get((origin, slot))
            if not ref:
                continue
            scores[(slot, day_class)].append(ndcg_rank_similarity(_ranked(ref, top_k), _ranked(counter, top_k)))

    rows = [{"slot": slot, "day_class": cls, "ndcg": float(np.mean(values)), "samples": len(values)}
            for (slot, cls), values in sorted(scores.items())]
    return pd.DataFrame(rows, columns=["slot", "day_class", "ndcg", "samples"])


def speed_std_table(trip_speeds: Mapping[str, Sequence[float]], speed_limit: float) -> pd.DataFrame:
    """S_limit / S_historical / S_trip per vehicle with at least two trips"""
    rows = []
    for vehicle_id, speeds in sorted(trip_speeds.items()):
        if len(speeds) < 2:
            continue
        rows.append({"vehicle_id": vehicle_id, **speed_std_variants(speeds, speed_limit).to_dict()})
    return pd.DataFrame(rows, columns=["vehicle_id", "s_limit", "s_historical", "s_trip"])


def speed_correlation_table(pairs: Iterable[Tuple[str, float, float]]) -> pd.DataFrame:
    """Pearson r between individual and crowd speeds per vehicle type; pairs are (type, individual, crowd)"""
    grouped: Dict[str, Tuple[List[float], List[float]]] = defaultdict(lambda: ([], []))
    for vehicle_type, individual, crowd in pairs:
        grouped[vehicle_type][0].append(individual)
        grouped[vehicle_type][1].append(crowd)
    rows = []
    for vehicle_type, (xs, ys) in sorted(grouped.items()):
        try:
            r = pearson(xs, ys)
        except DomainError as exc:
            logger.info("No correlation for %s: %s", vehicle_type, exc)
            r = float("nan")
        rows.append({"vehicle_type": vehicle_type, "pearson_r": r, "pairs": len(xs)})
    return pd.DataFrame(rows, columns=["vehicle_type", "pearson_r", "pairs"])


def coverage_table(trips: Sequence[Trip], graph: HighwayGraph, max_ks: Sequence[Optional[int]] = (1, 2, 3, None),
                   width_min: int = 30) -> pd.DataFrame:
    columns = {}
    for k in max_ks:
        columns["all" if k is None else f"k<={k}"] = edge_coverage(trips, graph, k, width_min)
    frame = pd.DataFrame(columns)
    frame.index.name = "slot"
    return frame.reset_index()
