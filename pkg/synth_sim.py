#!/usr/bin/env python3
"""
Synthetic Simulator - ground-truth highway worlds, vehicle behaviour and ETC records

Builds a connected toll network, a population of vehicles with behaviour
profiles and a context calendar, then drives the vehicles day by day. Every
trip yields a ground-truth trace and the ETC transaction the trace induces.

Speed model: each edge has a latent speed per 30-minute slot with morning and
evening congestion peaks, scaled by weather and day type. A vehicle fixes its
speed on an edge when it enters the edge: latent speed plus its personal
offset plus Gaussian noise, clipped to (5 km/h, 1.3 x limit]. Ramps are driven
at the trip's mean highway speed.
"""

import csv
import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, asdict, field
from datetime import date, datetime, timedelta
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from errors import DomainError, SchemaError
from etc_ingest import (ContextCalendar, ContextRecord, Transaction, VehicleType, Weather,
                        format_number, format_time, parse_time, slot_of)
from highway_graph import Edge, HighwayGraph, Route, TollStation

logger = logging.getLogger(__name__)

TYPE_MIX = {VehicleType.CAR: 0.75, VehicleType.BUS: 0.13, VehicleType.TRUCK: 0.12}
TYPE_SPEED_OFFSET = {VehicleType.CAR: 0.0, VehicleType.BUS: -4.0, VehicleType.TRUCK: -6.0}
SPEED_LIMITS = (100.0, 110.0, 120.0)
WEATHER_FACTOR = {Weather.CLEAR: 1.0, Weather.RAIN: 0.9, Weather.HEAVY_RAIN: 0.8}
OFF_DAY_FACTOR = 1.05
PEAK_HOURS = (10.0, 18.0)
PEAK_WIDTH_H = 1.0
PERSONAL_SD_KMH = 6.0
NOISE_SD_KMH = 4.0
MIN_SPEED_KMH = 5.0
SPEED_CEILING_RATIO = 1.3
MIN_EDGE_LENGTH_M = 2000.0
TRUTH_SLOT_MIN = 30
ROUTE_CHOICES = 5


class Regime(str, Enum):
    SINGLE_TRIP = "single-trip"
    COMMUTER = "commuter"
    MULTI_DESTINATION = "multi-destination"


@dataclass(frozen=True)
class WorldConfig:
    stations: int = 12
    density: float = 1.5
    vehicles: int = 300
    days: int = 30
    start_date: date = date(2024, 3, 4)
    single_trip_share: float = 0.3
    commuter_share: float = 0.4
    rain_rate: float = 0.15
    heavy_rain_rate: float = 0.05
    holiday_rate: float = 0.03
    free_flow_ratio: float = 0.97
    congestion: bool = True
    personal_variation: bool = True
    noise: bool = True
    dwell_probability: float = 0.0
    route_beta: float = 10.0
    stickiness: float = 0.7
    max_route_edges: int = 8

    def __post_init__(self):
        if self.stations < 2:
            raise DomainError("a world needs at least two stations")
        if self.vehicles < 1 or self.days < 1:
            raise DomainError("a world needs vehicles and days")
        if self.density > (self.stations - 1) / 2:
            raise DomainError(f"density {self.density} exceeds the complete graph on {self.stations} stations")
        shares = (self.single_trip_share, self.commuter_share)
        if any(s < 0 for s in shares) or sum(shares) > 1:
            raise DomainError("regime shares must be non-negative and sum to at most 1")
        rates = (self.rain_rate, self.heavy_rain_rate, self.holiday_rate, self.dwell_probability, self.stickiness)
        if any(not 0 <= r <= 1 for r in rates) or self.rain_rate + self.heavy_rain_rate > 1:
            raise DomainError("rates and probabilities must lie in [0, 1]")
        if not 0 < self.free_flow_ratio <= SPEED_CEILING_RATIO:
            raise DomainError("free-flow ratio must be in (0, 1.3]")


@dataclass(frozen=True)
class BehaviorProfile:
    vehicle_id: str
    vehicle_type: VehicleType
    regime: Regime
    home: str
    destinations: Tuple[Tuple[str, float], ...]
    speed_offset_kmh: float = 0.0
    stickiness: float = 0.7
    active_days: Tuple[int, ...] = (1, 2, 3, 4, 5)
    departure_h: float = 8.5
    return_h: float = 17.5
    single_trip_date: Optional[date] = None
    axle_count: int = 2
    weight_kg: float = 1500.0

    def __post_init__(self):
        total = sum(p for _, p in self.destinations)
        if not self.destinations or abs(total - 1.0) > 1e-9 or any(p < 0 for _, p in self.destinations):
            raise DomainError(f"{self.vehicle_id}: destination preferences must be a distribution")
        if abs(self.speed_offset_kmh) > 30:
            raise DomainError(f"{self.vehicle_id}: speed offset outside +-30 km/h")

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["vehicle_type"] = self.vehicle_type.value
        data["regime"] = self.regime.value
        data["destinations"] = [list(d) for d in self.destinations]
        data["active_days"] = list(self.active_days)
        data["single_trip_date"] = self.single_trip_date.isoformat() if self.single_trip_date else None
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> 'BehaviorProfile':
        fields = dict(data)
        fields["vehicle_type"] = VehicleType(fields["vehicle_type"])
        fields["regime"] = Regime(fields["regime"])
        fields["destinations"] = tuple((d, float(p)) for d, p in fields["destinations"])
        fields["active_days"] = tuple(fields["active_days"])
        if fields.get("single_trip_date"):
            fields["single_trip_date"] = date.fromisoformat(fields["single_trip_date"])
        return cls(**fields)


@dataclass
class World:
    graph: HighwayGraph
    profiles: List[BehaviorProfile]
    calendar: ContextCalendar
    config: WorldConfig = field(default_factory=WorldConfig)
    congestion_depth: Dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class GroundTruthTrace:
    """One trip: route, per-edge speeds and piecewise-linear along-route positions"""
    trip_id: str
    vehicle_id: str
    vehicle_type: VehicleType
    route: Route
    entry_time: datetime
    exit_time: datetime
    ramp_in_m: float
    ramp_out_m: float
    edge_speeds: Tuple[Tuple[str, float], ...]
    knots: Tuple[Tuple[float, float], ...]
    dwell_s: float = 0.0

    @property
    def route_length_m(self) -> float:
        return self.knots[-1][1] - self.ramp_out_m

    @property
    def highway_start_s(self) -> float:
        return next(t for t, pos in self.knots if pos >= 0)

    @property
    def highway_end_s(self) -> float:
        length = self.route_length_m
        return next(t for t, pos in self.knots if pos >= length - 1e-9)

    def position_at(self, when: Union[datetime, float]) -> float:
        """Along-route offset; negative on the entry ramp, beyond the route length on the exit ramp"""
        t = (when - self.entry_time).total_seconds() if isinstance(when, datetime) else float(when)
        times, offsets = zip(*self.knots)
        return float(np.interp(t, times, offsets))

    def on_highway(self, when: Union[datetime, float]) -> bool:
        t = (when - self.entry_time).total_seconds() if isinstance(when, datetime) else float(when)
        return self.highway_start_s <= t <= self.highway_end_s

    def speed_of(self, edge_id: str) -> float:
        return dict(self.edge_speeds)[edge_id]

    def per_second(self) -> List[Tuple[datetime, float]]:
        steps = int((self.exit_time - self.entry_time).total_seconds())
        return [(self.entry_time + timedelta(seconds=s), self.position_at(float(s))) for s in range(steps + 1)]

    def to_record(self) -> List[str]:
        return [self.trip_id, self.vehicle_id, self.vehicle_type.value, self.route.key,
                format_time(self.entry_time), format_time(self.exit_time),
                format_number(self.ramp_in_m), format_number(self.ramp_out_m),
                ";".join(f"{e}:{format_number(v)}" for e, v in self.edge_speeds),
                ";".join(f"{format_number(t)}:{format_number(p)}" for t, p in self.knots),
                format_number(self.dwell_s)]

    @classmethod
    def from_record(cls, row: Sequence[str]) -> 'GroundTruthTrace':
        if len(row) != len(TRUTH_FIELDS):
            raise SchemaError(f"truth record needs {len(TRUTH_FIELDS)} fields, got {len(row)}")
        speeds = tuple((e, float(v)) for e, v in (item.split(":") for item in row[8].split(";")))
        knots = tuple((float(t), float(p)) for t, p in (item.split(":") for item in row[9].split(";")))
        return cls(row[0], row[1], VehicleType(row[2]), Route.from_key(row[3]), parse_time(row[4]),
                   parse_time(row[5]), float(row[6]), float(row[7]), speeds, knots, float(row[10]))


TRUTH_FIELDS = ["trip_id", "vehicle_id", "vehicle_type", "route", "entry_time", "exit_time",
                "ramp_in_m", "ramp_out_m", "edge_speeds", "knots", "dwell_s"]


@dataclass
class SimulationResult:
    transactions: List[Transaction]
    traces: List[GroundTruthTrace]
    emission_log: List[Dict] = field(default_factory=list)
    coverage: Counter = field(default_factory=Counter)

    def trace_for(self, trip_id: str) -> GroundTruthTrace:
        for trace in self.traces:
            if trace.trip_id == trip_id:
                return trace
        raise DomainError(f"no trace for {trip_id}")


# ---------------------------------------------------------------- world

def _generate_graph(config: WorldConfig, rng: np.random.Generator) -> HighwayGraph:
    n = config.stations
    coords = rng.uniform(0, 100.0, size=(n, 2))
    ids = [f"S{i:02d}" for i in range(n)]
    complete = nx.Graph()
    for i in range(n):
        for j in range(i + 1, n):
            complete.add_edge(i, j, weight=float(np.hypot(*(coords[i] - coords[j]))))
    backbone = nx.minimum_spanning_tree(complete)
    links = sorted(backbone.edges())
    target = max(n - 1, int(round(config.density * n)))
    extra = sorted((d["weight"], u, v) for u, v, d in complete.edges(data=True) if not backbone.has_edge(u, v))
    links.extend((u, v) for _, u, v in extra[:target - len(links)])

    stations = [TollStation(ids[i], f"Station {i}", float(rng.integers(200, 801))) for i in range(n)]
    edges = []
    for k, (u, v) in enumerate(links):
        length = max(MIN_EDGE_LENGTH_M, round(complete[u][v]["weight"] * 1000 * 1.2))
        limit = float(rng.choice(SPEED_LIMITS))
        edges.append(Edge(f"E{k:03d}", ids[u], ids[v], float(length), limit))
        edges.append(Edge(f"E{k:03d}r", ids[v], ids[u], float(length), limit))
    return HighwayGraph(stations, edges)


def _generate_calendar(config: WorldConfig, rng: np.random.Generator) -> ContextCalendar:
    records = []
    for offset in range(config.days):
        day = config.start_date + timedelta(days=offset)
        draw = rng.random()
        if draw < config.heavy_rain_rate:
            weather = Weather.HEAVY_RAIN
        elif draw < config.heavy_rain_rate + config.rain_rate:
            weather = Weather.RAIN
        else:
            weather = Weather.CLEAR
        holiday = day.isoweekday() <= 5 and rng.random() < config.holiday_rate
        records.append(ContextRecord.for_date(day, holiday, weather))
    return ContextCalendar(records)


def _generate_profile(index: int, config: WorldConfig, graph: HighwayGraph, calendar: ContextCalendar,
                      rng: np.random.Generator) -> BehaviorProfile:
    types = list(TYPE_MIX)
    vehicle_type = types[int(rng.choice(len(types), p=list(TYPE_MIX.values())))]
    draw = rng.random()
    if draw < config.single_trip_share:
        regime = Regime.SINGLE_TRIP
    elif draw < config.single_trip_share + config.commuter_share:
        regime = Regime.COMMUTER
    else:
        regime = Regime.MULTI_DESTINATION

    stations = graph.station_ids
    home = stations[int(rng.integers(len(stations)))]
    others = [s for s in stations if s != home]
    if regime is Regime.MULTI_DESTINATION:
        count = int(min(len(others), rng.integers(2, 5)))
        picks = [others[i] for i in sorted(rng.choice(len(others), size=count, replace=False))]
        weights = rng.dirichlet(np.ones(count))
        weights = weights / weights.sum()
        destinations = tuple(zip(picks, (float(w) for w in weights[:-1])))
        destinations += ((picks[-1], 1.0 - sum(p for _, p in destinations)),)
    else:
        destinations = ((others[int(rng.integers(len(others)))], 1.0),)

    offset = TYPE_SPEED_OFFSET[vehicle_type]
    if config.personal_variation:
        offset = float(np.clip(rng.normal(offset, PERSONAL_SD_KMH), -30, 30))
    else:
        offset = 0.0

    if vehicle_type is VehicleType.TRUCK:
        axles, weight = int(rng.integers(3, 7)), float(round(rng.uniform(8000, 30000)))
    elif vehicle_type is VehicleType.BUS:
        axles, weight = 2, 12000.0
    else:
        axles, weight = 2, 1500.0

    weekend = tuple(d for d in (6, 7) if rng.random() < 0.2)
    return BehaviorProfile(
        vehicle_id=f"V{index:05d}",
        vehicle_type=vehicle_type,
        regime=regime,
        home=home,
        destinations=destinations,
        speed_offset_kmh=offset,
        stickiness=config.stickiness,
        active_days=(1, 2, 3, 4, 5) + weekend,
        departure_h=float(np.clip(rng.normal(8.5, 0.5), 6.0, 11.0)),
        return_h=float(np.clip(rng.normal(17.5, 0.5), 15.0, 20.0)),
        single_trip_date=calendar.dates[int(rng.integers(len(calendar.dates)))] if regime is Regime.SINGLE_TRIP else None,
        axle_count=axles,
        weight_kg=weight,
    )


def generate_world(config: WorldConfig = WorldConfig(), seed: int = 0) -> World:
    """Graph, population and calendar, all determined by the seed"""
    graph_ss, calendar_ss, population_ss, depth_ss = np.random.SeedSequence(seed).spawn(4)
    graph = _generate_graph(config, np.random.default_rng(graph_ss))
    calendar = _generate_calendar(config, np.random.default_rng(calendar_ss))
    rng = np.random.default_rng(population_ss)
    profiles = [_generate_profile(i, config, graph, calendar, rng) for i in range(config.vehicles)]
    depth_rng = np.random.default_rng(depth_ss)
    depth = {e: float(depth_rng.uniform(0.1, 0.35)) if config.congestion else 0.0 for e in graph.edge_ids}
    logger.info("Generated world: %d stations, %d edges, %d vehicles, %d days",
                len(graph.station_ids), len(graph.edge_ids), len(profiles), len(calendar))
    return World(graph, profiles, calendar, config, depth)


# ---------------------------------------------------------------- driving

def peak_shape(hour: float) -> float:
    return max(math.exp(-0.5 * ((hour - peak) / PEAK_WIDTH_H) ** 2) for peak in PEAK_HOURS)


def latent_speed(world: World, edge_id: str, when: datetime) -> float:
    """Crowd mean speed of an edge in the 30-minute slot containing `when`"""
    edge = world.graph.edge(edge_id)
    slot = slot_of(when, TRUTH_SLOT_MIN)
    hour = (slot.start_minute + TRUTH_SLOT_MIN / 2) / 60
    speed = edge.speed_limit_kmh * (world.config.free_flow_ratio - world.congestion_depth.get(edge_id, 0.0) * peak_shape(hour))
    context = world.calendar.get(when)
    speed *= WEATHER_FACTOR[context.weather]
    if not context.is_regular_day:
        speed *= OFF_DAY_FACTOR
    return speed


def _vehicle_speed(world: World, edge: Edge, when: datetime, offset: float, noise: float) -> float:
    speed = latent_speed(world, edge.id, when) + offset + noise
    return float(min(max(speed, MIN_SPEED_KMH + 1e-6), SPEED_CEILING_RATIO * edge.speed_limit_kmh))


def drive_route(world: World, profile: BehaviorProfile, route: Route, entry_time: datetime,
                rng: np.random.Generator, dwell_s: float = 0.0) -> Tuple[Transaction, GroundTruthTrace]:
    """
    Drive one route. Edge speeds depend on when each edge is entered, which
    depends on the entry-ramp time, which is driven at the mean highway
    speed; the loop settles that fixed point.
    """
    graph = world.graph
    origin, destination = graph.route_endpoints(route)
    ramp_in = graph.station(origin).ramp_length_m
    ramp_out = graph.station(destination).ramp_length_m
    edges = [graph.edge(e) for e in route.edges]
    length = graph.route_length(route)
    noise = rng.normal(0, NOISE_SD_KMH, len(edges)) if world.config.noise else np.zeros(len(edges))

    ramp_speed = _vehicle_speed(world, edges[0], entry_time, profile.speed_offset_kmh, noise[0])
    for _ in range(8):
        highway_start = ramp_in / (ramp_speed / 3.6)
        t, speeds, boundaries = highway_start, [], []
        for k, edge in enumerate(edges):
            v = _vehicle_speed(world, edge, entry_time + timedelta(seconds=t), profile.speed_offset_kmh, noise[k])
            speeds.append(v)
            t += edge.length_m / (v / 3.6)
            boundaries.append(t)
            if k == 0 and dwell_s > 0:
                t += dwell_s
                boundaries.append(t)
        driving = t - highway_start - dwell_s
        mean_speed = length / driving * 3.6
        if abs(mean_speed - ramp_speed) < 1e-9:
            break
        ramp_speed = mean_speed

    knots = [(0.0, -ramp_in)]
    if highway_start > 0:
        knots.append((highway_start, 0.0))
    position, b = 0.0, 0
    for k, edge in enumerate(edges):
        position += edge.length_m
        knots.append((boundaries[b], position))
        b += 1
        if k == 0 and dwell_s > 0:
            knots.append((boundaries[b], position))
            b += 1
    total = t + ramp_out / (ramp_speed / 3.6)
    if ramp_out > 0:
        knots.append((total, length + ramp_out))

    exit_time = entry_time + timedelta(seconds=max(1, int(round(total))))
    transaction = Transaction(profile.vehicle_id, profile.vehicle_type, origin, destination,
                              entry_time, exit_time, profile.axle_count, profile.weight_kg)
    trace = GroundTruthTrace(transaction.trip_id, profile.vehicle_id, profile.vehicle_type, route,
                             entry_time, exit_time, ramp_in, ramp_out,
                             tuple(zip(route.edges, speeds)), tuple(knots), dwell_s)
    return transaction, trace


def _choose_route(world: World, profile: BehaviorProfile, origin: str, destination: str,
                  habits: Dict[Tuple[str, str], Route], rng: np.random.Generator) -> Route:
    """Logit over relative excess length, with a habitual route reused by stickiness"""
    routes = world.graph.enumerate_routes(origin, destination, world.config.max_route_edges)[:ROUTE_CHOICES]
    habit = habits.get((origin, destination))
    if habit is not None and rng.random() < profile.stickiness:
        return habit
    lengths = np.array([world.graph.route_length(r) for r in routes])
    utility = -world.config.route_beta * (lengths / lengths.min() - 1)
    p = np.exp(utility - utility.max())
    route = routes[int(rng.choice(len(routes), p=p / p.sum()))]
    habits[(origin, destination)] = route
    return route


def _at(day: date, hour: float) -> datetime:
    return datetime(day.year, day.month, day.day) + timedelta(seconds=int(round(hour * 3600)))


def _day_trips(profile: BehaviorProfile, day: date, rng: np.random.Generator) -> List[Tuple[str, str, float, bool]]:
    """(origin, destination, hour, relative) legs; relative legs depart hours after the previous exit"""
    if profile.regime is Regime.SINGLE_TRIP:
        if day != profile.single_trip_date:
            return []
        return [(profile.home, profile.destinations[0][0], float(rng.uniform(6, 20)), False)]
    if day.isoweekday() not in profile.active_days:
        return []
    if profile.regime is Regime.COMMUTER:
        if rng.random() >= 0.95:
            return []
        work = profile.destinations[0][0]
        return [(profile.home, work, profile.departure_h + float(rng.normal(0, 0.25)), False),
                (work, profile.home, profile.return_h + float(rng.normal(0, 0.25)), False)]
    if rng.random() >= 0.5:
        return []
    names, weights = zip(*profile.destinations)
    target = names[int(rng.choice(len(names), p=np.array(weights) / sum(weights)))]
    return [(profile.home, target, float(rng.uniform(7, 19)), False),
            (target, profile.home, float(rng.uniform(1, 4)), True)]


def simulate_days(world: World, days: Optional[Sequence[date]] = None, seed: int = 0) -> SimulationResult:
    """
    Drive every vehicle through the given days (default: the whole calendar).
    Vehicles use independent random streams; the merged transactions are
    sorted by entry time then vehicle.
    """
    days = list(days) if days is not None else world.calendar.dates
    streams = np.random.SeedSequence(seed).spawn(len(world.profiles))
    result = SimulationResult([], [])
    for profile, stream in zip(world.profiles, streams):
        rng = np.random.default_rng(stream)
        habits: Dict[Tuple[str, str], Route] = {}
        last_exit: Optional[datetime] = None
        for day in days:
            for origin, destination, hour, relative in _day_trips(profile, day, rng):
                if relative and last_exit is not None:
                    depart = last_exit + timedelta(seconds=int(round(hour * 3600)))
                else:
                    depart = _at(day, min(max(hour, 0.0), 23.5))
                if last_exit is not None and depart <= last_exit:
                    depart = last_exit + timedelta(minutes=10)
                route = _choose_route(world, profile, origin, destination, habits, rng)
                dwell = float(rng.uniform(300, 1200)) if rng.random() < world.config.dwell_probability else 0.0
                transaction, trace = drive_route(world, profile, route, depart, rng, dwell)
                last_exit = transaction.exit_time
                result.transactions.append(transaction)
                result.traces.append(trace)
                result.emission_log.append({"trip_id": transaction.trip_id, "regime": profile.regime.value,
                                            "route": route.key, "dwell_s": dwell})
                for edge_id in route.edges:
                    result.coverage[(edge_id, slot_of(depart, TRUTH_SLOT_MIN).index)] += 1

    order = sorted(range(len(result.transactions)),
                   key=lambda i: (result.transactions[i].entry_time, result.transactions[i].vehicle_id))
    result.transactions = [result.transactions[i] for i in order]
    result.traces = [result.traces[i] for i in order]
    result.emission_log = [result.emission_log[i] for i in order]
    logger.info("Simulated %d days: %d trips from %d vehicles", len(days), len(result.transactions),
                len({t.vehicle_id for t in result.transactions}))
    return result


def corrupt_records(lines: Sequence[str], seed: int = 0, rate: float = 0.05) -> Tuple[List[str], Counter]:
    """Inject malformed transaction records; returns the lines and the injected reject reasons"""
    rng = np.random.default_rng(seed)
    out: List[str] = []
    injected: Counter = Counter()
    for line in lines:
        if line.startswith("#") or line.startswith("vehicle_id,") or rng.random() >= rate:
            out.append(line)
            continue
        fields = line.split(",")
        kind = int(rng.integers(5))
        if kind == 0:
            out.append(",".join(fields[:-2]))
            injected["wrong field count"] += 1
        elif kind == 1:
            fields[3] = "not-a-time"
            out.append(",".join(fields))
            injected["bad timestamp"] += 1
        elif kind == 2:
            fields[1] = "Hovercraft"
            out.append(",".join(fields))
            injected["unknown vehicle type"] += 1
        elif kind == 3:
            fields[2] = "NOWHERE"
            out.append(",".join(fields))
            injected["unknown station NOWHERE"] += 1
        else:
            out.extend([line, line])
            injected["duplicate record"] += 1
    return out, injected


# ---------------------------------------------------------------- files

def save_world(world: World, directory: Union[str, Path], header: Dict[str, object] = None) -> None:
    """profiles.json with the population, congestion depths and world config"""
    config = asdict(world.config)
    config["start_date"] = world.config.start_date.isoformat()
    data = dict(header or {})
    data.update({"config": config, "congestion_depth": world.congestion_depth,
                 "profiles": [p.to_dict() for p in world.profiles]})
    with open(Path(directory) / "profiles.json", "w", encoding="utf-8") as f:
        json.dump(data, f, sort_keys=True, indent=1)


def load_world(directory: Union[str, Path], graph: HighwayGraph, calendar: ContextCalendar) -> World:
    with open(Path(directory) / "profiles.json", "r", encoding="utf-8") as f:
        data = json.load(f)
    config = dict(data["config"])
    config["start_date"] = date.fromisoformat(config["start_date"])
    return World(graph, [BehaviorProfile.from_dict(p) for p in data["profiles"]], calendar,
                 WorldConfig(**config), dict(data["congestion_depth"]))


def write_truth(traces: Iterable[GroundTruthTrace], path: Union[str, Path], header: Sequence[str] = ()) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        for line in header:
            f.write(f"# {line}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(TRUTH_FIELDS)
        for trace in traces:
            writer.writerow(trace.to_record())


def read_truth(path: Union[str, Path]) -> List[GroundTruthTrace]:
    traces = []
    with open(path, "r", encoding="utf-8") as f:
        rows = csv.reader(line for line in f if not line.startswith("#"))
        for number, row in enumerate(rows, start=1):
            if number == 1:
                if row != TRUTH_FIELDS:
                    raise SchemaError(f"{path}: unexpected truth header")
                continue
            try:
                traces.append(GroundTruthTrace.from_record(row))
            except (ValueError, DomainError) as exc:
                raise SchemaError(f"{path} record {number}: {exc}") from exc
    return traces


def write_traces(traces: Iterable[GroundTruthTrace], path: Union[str, Path], header: Sequence[str] = ()) -> None:
    """Per-second along-route positions"""
    with open(path, "w", encoding="utf-8", newline="") as f:
        for line in header:
            f.write(f"# {line}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["vehicle_id", "t", "route_offset_m"])
        for trace in traces:
            for when, offset in trace.per_second():
                writer.writerow([trace.vehicle_id, format_time(when), f"{offset:.3f}"])
