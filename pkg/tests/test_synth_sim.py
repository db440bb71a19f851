"""Tests for the synthetic world, the driving model and record corruption"""

from collections import Counter
from datetime import datetime

import numpy as np
import pytest

from errors import DomainError
from etc_ingest import Weather, build_vehicle_history, format_transactions, parse_transactions
from mobility_stats import destination_entropy
from synth_sim import (MIN_SPEED_KMH, SPEED_CEILING_RATIO, Regime, WorldConfig, corrupt_records, drive_route,
                       generate_world, latent_speed, load_world, read_truth, save_world, simulate_days,
                       write_truth)


@pytest.fixture(scope="module")
def steady_world():
    config = WorldConfig(stations=5, density=1.2, vehicles=10, days=3, congestion=False, noise=False,
                         personal_variation=False, rain_rate=0.0, heavy_rain_rate=0.0, holiday_rate=0.0)
    return generate_world(config, seed=1)


class TestWorldConfig:

    def test_density_bound(self):
        with pytest.raises(DomainError):
            WorldConfig(stations=4, density=2.0)

    def test_needs_two_stations(self):
        with pytest.raises(DomainError):
            WorldConfig(stations=1, density=0.0)

    def test_rates_bounded(self):
        with pytest.raises(DomainError):
            WorldConfig(rain_rate=0.8, heavy_rain_rate=0.3)


class TestGenerateWorld:

    def test_seed_determines_world(self, small_world):
        again = generate_world(small_world.config, seed=3)
        assert again.graph.to_lines() == small_world.graph.to_lines()
        assert again.profiles == small_world.profiles

    def test_edge_count_follows_density(self, small_world):
        assert len(small_world.graph.edge_ids) == 2 * round(1.5 * 6)

    def test_every_pair_connected(self, small_world):
        graph = small_world.graph
        for origin in graph.station_ids:
            for destination in graph.station_ids:
                if origin != destination:
                    assert graph.enumerate_routes(origin, destination, small_world.config.max_route_edges)

    def test_profiles_are_distributions(self, small_world):
        for profile in small_world.profiles:
            assert sum(p for _, p in profile.destinations) == pytest.approx(1.0)
            assert profile.home not in {d for d, _ in profile.destinations}

    def test_latent_speed_without_congestion(self, steady_world):
        edge = steady_world.graph.edge(steady_world.graph.edge_ids[0])
        when = datetime(2024, 3, 4, 10, 15)
        assert steady_world.calendar.get(when).weather is Weather.CLEAR
        assert latent_speed(steady_world, edge.id, when) == pytest.approx(0.97 * edge.speed_limit_kmh)


class TestDriving:

    def test_trace_matches_transaction(self, small_simulation):
        for tx, trace in zip(small_simulation.transactions, small_simulation.traces):
            assert tx.trip_id == trace.trip_id
            assert (tx.entry_time, tx.exit_time) == (trace.entry_time, trace.exit_time)
            assert trace.position_at(0.0) == pytest.approx(-trace.ramp_in_m)
            end = (trace.exit_time - trace.entry_time).total_seconds() + 1
            assert trace.position_at(end) == pytest.approx(trace.route_length_m + trace.ramp_out_m)

    def test_edge_speeds_clipped(self, small_world, small_simulation):
        for trace in small_simulation.traces:
            for edge_id, speed in trace.edge_speeds:
                limit = small_world.graph.edge(edge_id).speed_limit_kmh
                assert MIN_SPEED_KMH < speed <= SPEED_CEILING_RATIO * limit + 1e-9

    def test_positions_monotone(self, small_simulation):
        trace = small_simulation.traces[0]
        positions = [p for _, p in trace.per_second()]
        assert positions == sorted(positions)

    def test_ramp_driven_at_mean_highway_speed(self, steady_world):
        profile = steady_world.profiles[0]
        graph = steady_world.graph
        destination = next(s for s in graph.station_ids if s != profile.home)
        route = graph.enumerate_routes(profile.home, destination)[0]
        _, trace = drive_route(steady_world, profile, route, datetime(2024, 3, 4, 9), np.random.default_rng(0))
        highway_s = trace.highway_end_s - trace.highway_start_s
        mean_speed = graph.route_length(route) / highway_s
        assert trace.ramp_in_m / trace.highway_start_s == pytest.approx(mean_speed)

    def test_dwell_stretches_duration(self, steady_world):
        profile = steady_world.profiles[0]
        graph = steady_world.graph
        destination = next(s for s in graph.station_ids if s != profile.home)
        route = graph.enumerate_routes(profile.home, destination)[0]
        start = datetime(2024, 3, 4, 9)
        plain, _ = drive_route(steady_world, profile, route, start, np.random.default_rng(0))
        dwelling, trace = drive_route(steady_world, profile, route, start, np.random.default_rng(0), dwell_s=600)
        assert dwelling.duration_s == pytest.approx(plain.duration_s + 600, abs=1)
        assert trace.dwell_s == 600


class TestSimulateDays:

    def test_records_parse_cleanly(self, small_world, small_simulation):
        accepted, rejects = parse_transactions(format_transactions(small_simulation.transactions), small_world.graph)
        assert rejects == []
        assert len(accepted) == len(small_simulation.transactions)

    def test_sorted_by_entry_then_vehicle(self, small_simulation):
        keys = [(t.entry_time, t.vehicle_id) for t in small_simulation.transactions]
        assert keys == sorted(keys)

    def test_emission_log_aligned(self, small_simulation):
        assert [e["trip_id"] for e in small_simulation.emission_log] == \
            [t.trip_id for t in small_simulation.transactions]

    def test_regimes_shape_histories(self, small_world, small_simulation):
        history = build_vehicle_history(small_simulation.transactions)
        regimes = {p.vehicle_id: p.regime for p in small_world.profiles}
        for vehicle_id, trips in history.items():
            if regimes[vehicle_id] is Regime.SINGLE_TRIP:
                assert len(trips) == 1
            elif regimes[vehicle_id] is Regime.COMMUTER:
                assert destination_entropy(trips) <= 1.0 + 1e-9

    def test_seeded(self, small_world, small_simulation):
        assert simulate_days(small_world, seed=3).transactions == small_simulation.transactions


class TestCorruptRecords:

    def test_rejects_match_injected(self, small_world, small_simulation):
        lines = format_transactions(small_simulation.transactions, ["config_hash=abc seed=3"])
        corrupted, injected = corrupt_records(lines, seed=8, rate=0.05)
        _, rejects = parse_transactions(corrupted, small_world.graph)
        assert Counter(r.reason for r in rejects) == injected
        assert corrupted[:2] == lines[:2]

    def test_zero_rate_is_identity(self, small_simulation):
        lines = format_transactions(small_simulation.transactions)
        assert corrupt_records(lines, rate=0.0) == (lines, Counter())


class TestFiles:

    def test_truth_round_trip(self, tmp_path, small_simulation):
        path = tmp_path / "truth.csv"
        write_truth(small_simulation.traces[:20], path, ["config_hash=abc seed=3"])
        loaded = read_truth(path)
        assert [t.trip_id for t in loaded] == [t.trip_id for t in small_simulation.traces[:20]]
        original = small_simulation.traces[0]
        assert loaded[0].route == original.route
        assert loaded[0].position_at(30.0) == pytest.approx(original.position_at(30.0), abs=1e-3)

    def test_world_round_trip(self, tmp_path, small_world):
        save_world(small_world, tmp_path, {"config_hash": "abc", "seed": 3})
        loaded = load_world(tmp_path, small_world.graph, small_world.calendar)
        assert loaded.profiles == small_world.profiles
        assert loaded.config == small_world.config
        assert loaded.congestion_depth == small_world.congestion_depth
