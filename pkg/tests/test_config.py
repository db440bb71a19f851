"""Tests for the run configuration: loading, overrides, validation and the artifact stamp"""

import re

import pytest

from config import RunConfig, parse_overrides
from errors import ConfigError


class TestStamp:

    def test_hash_is_stable(self):
        assert RunConfig().config_hash() == RunConfig().config_hash()
        assert re.fullmatch(r"[0-9a-f]{12}", RunConfig().config_hash())

    def test_hash_tracks_every_field(self):
        base = RunConfig()
        assert base.with_overrides({"n_trees": "26"}).config_hash() != base.config_hash()
        assert base.with_overrides({"seed": "1"}).config_hash() != base.config_hash()

    def test_header_and_stamp(self):
        config = RunConfig(seed=7)
        assert config.header() == f"config_hash={config.config_hash()} seed=7"
        assert config.stamp() == {"config_hash": config.config_hash(), "seed": 7}


class TestLoad:

    def test_file_then_overrides(self, tmp_path):
        path = tmp_path / "run.env"
        path.write_text("# small run\nN_TREES=3\nnoise=false\nthreshold_m=50\n")
        config = RunConfig.load(path, {"threshold_m": "200"})
        assert config.n_trees == 3
        assert config.noise is False
        assert config.threshold_m == 200.0

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            RunConfig.load(tmp_path / "absent.env")

    def test_no_file_gives_defaults(self):
        assert RunConfig.load() == RunConfig()

    @pytest.mark.parametrize("overrides", [
        {"trees": "3"},
        {"n_trees": "three"},
        {"noise": "maybe"},
        {"n_trees": "0"},
        {"alpha": "0.9"},
        {"mode": "vemo-x"},
        {"start_date": "04/03/2024"},
        {"slot_width_min": "7"},
    ])
    def test_rejected_values(self, overrides):
        with pytest.raises(ConfigError):
            RunConfig.load(overrides=overrides)

    def test_parse_overrides(self):
        assert parse_overrides(["seed=3", "mode=vemo-r", "start_date=2024-01-01"]) == {
            "seed": "3", "mode": "vemo-r", "start_date": "2024-01-01"}
        assert parse_overrides(None) == {}
        with pytest.raises(ConfigError):
            parse_overrides(["seed"])


class TestModuleConfigs:

    def test_discretization(self):
        config = RunConfig(recovery_slot_min=15, max_candidates_per_route=4)
        disc = config.discretization()
        assert (disc.slot_width_min, disc.max_candidates_per_route) == (15, 4)

    def test_world_spans_train_and_test(self):
        config = RunConfig(train_days=4, test_days=2, stations=5)
        assert config.world().days == 6
        assert config.world().stations == 5

    def test_world_validation_surfaces_as_config_error(self):
        with pytest.raises(ConfigError):
            RunConfig(stations=3, density=5.0).world()

    def test_predictors_share_seed(self):
        config = RunConfig(seed=9, n_trees=4)
        assert (config.predictors().seed, config.predictors().n_trees) == (9, 4)
        assert config.crowd_speed().seed == 9
