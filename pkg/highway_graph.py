#!/usr/bin/env python3
"""
Highway Graph - toll stations, directed edges and route queries

The network is a directed multigraph: every highway direction between two
adjacent toll stations is its own edge, and two stations may be joined by
more than one edge.
"""

import csv
import logging
from bisect import bisect_right
from dataclasses import dataclass, asdict
from datetime import datetime
from itertools import accumulate
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import networkx as nx

from errors import DomainError, IdentifierError, SchemaError

logger = logging.getLogger(__name__)

DEFAULT_MAX_EDGES = 8
# characters used as separators by the export formats
RESERVED_ID_CHARS = frozenset(",|;:#")


def _check_identifier(kind: str, value: str) -> None:
    if not value or value != value.strip():
        raise SchemaError(f"invalid {kind} id {value!r}")
    bad = RESERVED_ID_CHARS.intersection(value)
    if bad:
        raise SchemaError(f"{kind} id {value!r} contains reserved characters {''.join(sorted(bad))!r}")


@dataclass(frozen=True)
class TollStation:
    """A toll station with one ramp shared by entering and exiting traffic"""
    id: str
    name: str
    ramp_length_m: float = 0.0

    def __post_init__(self):
        _check_identifier("station", self.id)
        if not self.ramp_length_m >= 0:
            raise DomainError(f"station {self.id}: ramp length must be >= 0, got {self.ramp_length_m}")

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict) -> 'TollStation':
        return cls(**data)


@dataclass(frozen=True)
class Edge:
    """Highway segment between two adjacent toll stations, one direction"""
    id: str
    from_station: str
    to_station: str
    length_m: float
    speed_limit_kmh: float

    def __post_init__(self):
        _check_identifier("edge", self.id)
        if not self.length_m > 0:
            raise DomainError(f"edge {self.id}: length must be > 0, got {self.length_m}")
        if not self.speed_limit_kmh > 0:
            raise DomainError(f"edge {self.id}: speed limit must be > 0, got {self.speed_limit_kmh}")
        if self.from_station == self.to_station:
            raise DomainError(f"edge {self.id}: from and to station are both {self.from_station}")

    @property
    def free_flow_time_s(self) -> float:
        """Traversal time at the speed limit"""
        return self.length_m / (self.speed_limit_kmh / 3.6)

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict) -> 'Edge':
        return cls(**data)


@dataclass(frozen=True)
class Route:
    """Ordered edge ids of a simple route"""
    edges: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(self.edges))
        if not self.edges:
            raise DomainError("route must contain at least one edge")
        if len(set(self.edges)) != len(self.edges):
            raise DomainError(f"route repeats an edge: {self.key}")

    def __len__(self) -> int:
        return len(self.edges)

    def __iter__(self):
        return iter(self.edges)

    @property
    def key(self) -> str:
        return "|".join(self.edges)

    @classmethod
    def from_key(cls, key: str) -> 'Route':
        return cls(tuple(part for part in key.split("|") if part))

    def is_prefix_of(self, other: 'Route') -> bool:
        return len(self.edges) < len(other.edges) and other.edges[:len(self.edges)] == self.edges


@dataclass(frozen=True)
class LocationEstimate:
    """A point on a route: the edge, the offset inside it, and the distance travelled"""
    edge_id: str
    offset_m: float
    distance_m: float
    arrived: bool
    route: Route
    timestamp: Optional[datetime] = None


class HighwayGraph:
    """Immutable toll-station network"""

    def __init__(self, stations: Iterable[TollStation], edges: Iterable[Edge]):
        self._stations: Dict[str, TollStation] = {}
        for station in stations:
            if station.id in self._stations:
                raise SchemaError(f"duplicate station id {station.id}")
            self._stations[station.id] = station

        self._edges: Dict[str, Edge] = {}
        self._outgoing: Dict[str, List[Edge]] = {sid: [] for sid in self._stations}
        self._nx = nx.MultiDiGraph()
        self._nx.add_nodes_from(sorted(self._stations))
        for edge in edges:
            if edge.id in self._edges:
                raise SchemaError(f"duplicate edge id {edge.id}")
            for end in (edge.from_station, edge.to_station):
                if end not in self._stations:
                    raise IdentifierError(f"edge {edge.id} references unknown station {end}")
            self._edges[edge.id] = edge
            self._outgoing[edge.from_station].append(edge)
            self._nx.add_edge(edge.from_station, edge.to_station, key=edge.id, length=edge.length_m)
        for sid in self._outgoing:
            self._outgoing[sid].sort(key=lambda e: e.id)

        if not self._stations:
            raise SchemaError("graph has no stations")
        if len(self._stations) > 1 and not nx.is_weakly_connected(self._nx):
            components = sorted(nx.weakly_connected_components(self._nx), key=lambda c: (-len(c), min(c)))
            orphans = sorted(set().union(*components[1:]))
            raise SchemaError(f"graph is not connected; orphan stations: {', '.join(orphans)}")

        self._route_cache: Dict[Tuple[str, str, int], Tuple[Route, ...]] = {}
        logger.debug("Built highway graph with %d stations and %d edges", len(self._stations), len(self._edges))

    # ------------------------------------------------------------------ lookups

    @property
    def stations(self) -> Dict[str, TollStation]:
        return dict(self._stations)

    @property
    def edges(self) -> Dict[str, Edge]:
        return dict(self._edges)

    @property
    def station_ids(self) -> List[str]:
        return sorted(self._stations)

    @property
    def edge_ids(self) -> List[str]:
        return sorted(self._edges)

    def station(self, station_id: str) -> TollStation:
        try:
            return self._stations[station_id]
        except KeyError:
            raise IdentifierError(f"unknown station {station_id}") from None

    def edge(self, edge_id: str) -> Edge:
        try:
            return self._edges[edge_id]
        except KeyError:
            raise IdentifierError(f"unknown edge {edge_id}") from None

    def has_station(self, station_id: str) -> bool:
        return station_id in self._stations

    def outgoing(self, station_id: str) -> Tuple[Edge, ...]:
        self.station(station_id)
        return tuple(self._outgoing[station_id])

    # ------------------------------------------------------------------ routes

    def enumerate_routes(self, origin: str, destination: str,
                         max_edges: int = DEFAULT_MAX_EDGES) -> List[Route]:
        """
        All station-simple routes from origin to destination with at most
        max_edges edges, shortest first, ties by edge-id order.
        """
        self.station(origin)
        self.station(destination)
        if origin == destination:
            raise DomainError(f"origin and destination are both {origin}")
        if max_edges < 1:
            raise DomainError(f"max_edges must be >= 1, got {max_edges}")

        cache_key = (origin, destination, int(max_edges))
        cached = self._route_cache.get(cache_key)
        if cached is None:
            routes = [Route(tuple(key for _, _, key in path))
                      for path in nx.all_simple_edge_paths(self._nx, origin, destination, cutoff=max_edges)]
            routes.sort(key=lambda r: (self.route_length(r), r.edges))
            cached = tuple(routes)
            self._route_cache[cache_key] = cached
        return list(cached)

    def validate_route(self, route: Route) -> None:
        """Raise unless consecutive edges of the route are adjacent"""
        previous: Optional[Edge] = None
        for edge_id in route.edges:
            edge = self.edge(edge_id)
            if previous is not None and previous.to_station != edge.from_station:
                raise DomainError(f"edges {previous.id} and {edge.id} are not adjacent")
            previous = edge

    def route_endpoints(self, route: Route) -> Tuple[str, str]:
        return self.edge(route.edges[0]).from_station, self.edge(route.edges[-1]).to_station

    def route_length(self, route: Route) -> float:
        return float(sum(self.edge(edge_id).length_m for edge_id in route.edges))

    def route_free_flow_time(self, route: Route) -> float:
        return float(sum(self.edge(edge_id).free_flow_time_s for edge_id in route.edges))

    def locate_on_route(self, route: Route, offset_m: float) -> LocationEstimate:
        """Edge and residual offset at a distance along the route"""
        if offset_m < 0:
            raise DomainError(f"offset must be >= 0, got {offset_m}")
        lengths = [self.edge(edge_id).length_m for edge_id in route.edges]
        total = float(sum(lengths))
        if offset_m >= total:
            return LocationEstimate(route.edges[-1], lengths[-1], total, True, route)
        starts = [0.0] + list(accumulate(lengths))[:-1]
        index = bisect_right(starts, offset_m) - 1
        return LocationEstimate(route.edges[index], float(offset_m - starts[index]), float(offset_m), False, route)

    # ------------------------------------------------------------------ files

    def to_lines(self) -> List[str]:
        lines = []
        for sid in self.station_ids:
            s = self._stations[sid]
            lines.append(f"station,{s.id},{s.name},{s.ramp_length_m:.10g}")
        for eid in self.edge_ids:
            e = self._edges[eid]
            lines.append(f"edge,{e.id},{e.from_station},{e.to_station},{e.length_m:.10g},{e.speed_limit_kmh:.10g}")
        return lines

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> 'HighwayGraph':
        stations, edges = [], []
        for number, row in enumerate(csv.reader(lines), start=1):
            if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
                continue
            kind = row[0].strip()
            try:
                if kind == "station" and len(row) == 4:
                    stations.append(TollStation(row[1].strip(), row[2].strip(), float(row[3])))
                elif kind == "edge" and len(row) == 6:
                    edges.append(Edge(row[1].strip(), row[2].strip(), row[3].strip(), float(row[4]), float(row[5])))
                else:
                    raise SchemaError(f"unrecognised record {','.join(row)!r}")
            except (ValueError, DomainError) as exc:
                raise SchemaError(f"graph line {number}: {exc}") from exc
        return cls(stations, edges)


def load_graph(path: Union[str, Path]) -> HighwayGraph:
    with open(path, "r", encoding="utf-8") as f:
        graph = HighwayGraph.from_lines(f.read().splitlines())
    logger.info("Loaded graph %s: %d stations, %d edges", path, len(graph.station_ids), len(graph.edge_ids))
    return graph


def write_graph(graph: HighwayGraph, path: Union[str, Path], header: Sequence[str] = ()) -> None:
    lines = [f"# {line}" for line in header] + graph.to_lines()
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def enumerate_routes(graph: HighwayGraph, origin: str, destination: str,
                     max_edges: int = DEFAULT_MAX_EDGES) -> List[Route]:
    return graph.enumerate_routes(origin, destination, max_edges)


def route_length(graph: HighwayGraph, route: Route) -> float:
    return graph.route_length(route)


def locate_on_route(graph: HighwayGraph, route: Route, offset_m: float) -> LocationEstimate:
    return graph.locate_on_route(route, offset_m)
