"""Shared fixtures: tiny hand-built graphs, a transaction factory and a small simulated world"""

import sys
from datetime import datetime
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from etc_ingest import Transaction, VehicleType  # noqa: E402
from highway_graph import Edge, HighwayGraph, TollStation  # noqa: E402
from synth_sim import WorldConfig, generate_world, simulate_days  # noqa: E402


def two_way(edge_id, a, b, length_m, limit_kmh=100.0):
    return [Edge(edge_id, a, b, length_m, limit_kmh), Edge(f"{edge_id}r", b, a, length_m, limit_kmh)]


@pytest.fixture
def chain_graph():
    """A - B - C, 1000 m and 2000 m, both directions, no ramps"""
    stations = [TollStation(s, f"Station {s}") for s in "ABC"]
    return HighwayGraph(stations, two_way("AB", "A", "B", 1000) + two_way("BC", "B", "C", 2000))


@pytest.fixture
def diamond_graph():
    """A -> B -> D (2000 m) and A -> C -> D (3000 m)"""
    stations = [TollStation(s, f"Station {s}") for s in "ABCD"]
    edges = [Edge("AB", "A", "B", 1000, 100), Edge("BD", "B", "D", 1000, 100),
             Edge("AC", "A", "C", 1500, 100), Edge("CD", "C", "D", 1500, 100)]
    return HighwayGraph(stations, edges)


@pytest.fixture
def make_tx():
    def factory(vehicle="V1", origin="A", destination="C", entry="2024-03-04 08:00:00",
                exit="2024-03-04 08:02:00", vehicle_type=VehicleType.CAR):
        return Transaction(vehicle, vehicle_type, origin, destination,
                           datetime.fromisoformat(entry), datetime.fromisoformat(exit))
    return factory


@pytest.fixture(scope="session")
def small_world():
    config = WorldConfig(stations=6, density=1.5, vehicles=40, days=6, rain_rate=0.2, holiday_rate=0.0)
    return generate_world(config, seed=3)


@pytest.fixture(scope="session")
def small_simulation(small_world):
    return simulate_days(small_world, seed=3)
