"""Tests for the highway graph: route enumeration, lengths, locating and the graph file"""

import numpy as np
import pytest

from errors import DomainError, IdentifierError, SchemaError
from highway_graph import (Edge, HighwayGraph, Route, TollStation, enumerate_routes, load_graph, locate_on_route,
                           route_length, write_graph)


def brute_force_routes(graph, origin, destination, max_edges):
    """Plain DFS over outgoing edges, no networkx"""
    found = []

    def walk(station, path, visited):
        if station == destination and path:
            found.append(tuple(path))
            return
        if len(path) == max_edges:
            return
        for edge in graph.outgoing(station):
            if edge.to_station not in visited:
                walk(edge.to_station, path + [edge.id], visited | {edge.to_station})

    walk(origin, [], {origin})
    return set(found)


def random_graph(seed, n=8, extra=10):
    rng = np.random.default_rng(seed)
    stations = [TollStation(f"S{i}", f"S{i}", 300.0) for i in range(n)]
    edges = []
    for i in range(n - 1):
        length = float(rng.integers(1000, 5000))
        edges += [Edge(f"E{i}f", f"S{i}", f"S{i + 1}", length, 100), Edge(f"E{i}b", f"S{i + 1}", f"S{i}", length, 100)]
    for k in range(extra):
        a, b = rng.choice(n, size=2, replace=False)
        edges.append(Edge(f"X{k}", f"S{a}", f"S{b}", float(rng.integers(1000, 5000)), 110))
    return HighwayGraph(stations, edges)


class TestEnumerateRoutes:

    def test_chain_has_one_route(self, chain_graph):
        assert enumerate_routes(chain_graph, "A", "C", 3) == [Route(("AB", "BC"))]

    def test_diamond_shorter_first(self, diamond_graph):
        routes = diamond_graph.enumerate_routes("A", "D", 2)
        assert routes == [Route(("AB", "BD")), Route(("AC", "CD"))]

    def test_edge_bound_cuts_longer_routes(self, diamond_graph):
        assert diamond_graph.enumerate_routes("A", "D", 1) == []

    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_matches_brute_force(self, seed):
        graph = random_graph(seed)
        for origin in graph.station_ids:
            for destination in graph.station_ids:
                if origin == destination:
                    continue
                routes = graph.enumerate_routes(origin, destination, 4)
                assert {r.edges for r in routes} == brute_force_routes(graph, origin, destination, 4)
                lengths = [graph.route_length(r) for r in routes]
                assert lengths == sorted(lengths)
                for route in routes:
                    graph.validate_route(route)

    def test_unknown_station(self, chain_graph):
        with pytest.raises(IdentifierError):
            chain_graph.enumerate_routes("A", "Z")

    def test_same_origin_and_destination(self, chain_graph):
        with pytest.raises(DomainError):
            chain_graph.enumerate_routes("A", "A")

    def test_no_route_is_empty(self):
        stations = [TollStation("A", "A"), TollStation("B", "B")]
        graph = HighwayGraph(stations, [Edge("AB", "A", "B", 1000, 100)])
        assert graph.enumerate_routes("B", "A") == []


class TestRouteLength:

    def test_additive(self):
        stations = [TollStation(s, s) for s in "ABC"]
        graph = HighwayGraph(stations, [Edge("AB", "A", "B", 1000, 100), Edge("BC", "B", "C", 2500, 100)])
        assert route_length(graph, Route(("AB", "BC"))) == 3500

    def test_empty_route_rejected(self):
        with pytest.raises(DomainError):
            Route(())

    def test_random_route_sum(self):
        graph = random_graph(7)
        route = Route(tuple(f"E{i}f" for i in range(5)))
        assert graph.route_length(route) == pytest.approx(sum(graph.edge(e).length_m for e in route.edges))

    def test_unknown_edge(self, chain_graph):
        with pytest.raises(IdentifierError):
            chain_graph.route_length(Route(("AB", "nope")))


class TestLocateOnRoute:

    @pytest.fixture
    def route(self):
        return Route(("AB", "BC"))

    def test_inside_second_edge(self, chain_graph, route):
        chain_graph_route = locate_on_route(chain_graph, route, 1500)
        assert (chain_graph_route.edge_id, chain_graph_route.offset_m) == ("BC", 500)
        assert not chain_graph_route.arrived

    def test_zero_offset(self, chain_graph, route):
        estimate = chain_graph.locate_on_route(route, 0)
        assert (estimate.edge_id, estimate.offset_m) == ("AB", 0)

    def test_clamps_past_the_end(self, chain_graph, route):
        estimate = chain_graph.locate_on_route(route, 3200)
        assert estimate.arrived
        assert (estimate.edge_id, estimate.offset_m, estimate.distance_m) == ("BC", 2000, 3000)

    def test_route_length_is_terminal(self, chain_graph, route):
        estimate = chain_graph.locate_on_route(route, chain_graph.route_length(route))
        assert estimate.arrived and estimate.edge_id == "BC"

    def test_negative_offset(self, chain_graph, route):
        with pytest.raises(DomainError):
            chain_graph.locate_on_route(route, -1)


class TestGraphFile:

    def test_round_trip(self, tmp_path, chain_graph):
        path = tmp_path / "graph.txt"
        write_graph(chain_graph, path, ["config_hash=abc seed=1"])
        assert path.read_text().startswith("# config_hash=abc seed=1\n")
        loaded = load_graph(path)
        assert loaded.to_lines() == chain_graph.to_lines()

    def test_bad_record_reports_line(self):
        with pytest.raises(SchemaError, match="line 2"):
            HighwayGraph.from_lines(["station,A,Alpha,0", "edge,AB,A,B,-5,100"])

    def test_orphan_station(self):
        lines = ["station,A,A,0", "station,B,B,0", "station,C,C,0", "edge,AB,A,B,1000,100"]
        with pytest.raises(SchemaError, match="C"):
            HighwayGraph.from_lines(lines)

    def test_reserved_characters(self):
        with pytest.raises(SchemaError):
            TollStation("A|B", "bad")
