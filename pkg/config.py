#!/usr/bin/env python3
"""
Run configuration - every tunable of the pipeline in one flat record

The config file is plain `key=value` text (read with python-dotenv, without
touching the process environment). Command-line `--set key=value` pairs
override file values. Each numeric field declares its valid range.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import date
from pathlib import Path
from typing import Dict, Mapping, Optional, Union

from dotenv import dotenv_values

from crowd_speed import DEFAULT_LAMBDA, CrowdSpeedConfig
from errors import ConfigError, DomainError
from predictors import PredictorConfig
from route_recovery import DiscretizationConfig
from synth_sim import WorldConfig

INF = float("inf")


def _ranged(default, low, high):
    return field(default=default, metadata={"range": (low, high)})


@dataclass(frozen=True)
class RunConfig:
    seed: int = _ranged(0, 0, 2 ** 32 - 1)

    # inputs, relative to the work directory
    graph_file: str = "graph.txt"
    transactions_file: str = "transactions.csv"
    context_file: str = "context.csv"

    # route and speed recovery
    recovery_slot_min: int = _ranged(10, 1, 60)
    segment_length_m: float = _ranged(1000.0, 100.0, 10000.0)
    speed_unit_kmh: float = _ranged(1.0, 0.1, 10.0)
    search_grid_kmh: float = _ranged(5.0, 0.5, 20.0)
    speed_window_kmh: float = _ranged(10.0, 0.0, 60.0)
    max_candidates_per_route: int = _ranged(25, 1, 1000)
    node_budget: int = _ranged(50_000, 1, 10 ** 8)
    alpha: float = _ranged(0.05, 1e-6, 0.5)
    duration_slack: float = _ranged(3.0, 1.0, 10.0)
    overspeed_ratio: float = _ranged(1.3, 1.0, 2.0)
    min_group_size: int = _ranged(8, 3, 1000)

    # crowd speed
    lam: float = _ranged(DEFAULT_LAMBDA, 1e-3, 1e4)
    gmm_components: int = _ranged(2, 1, 8)
    min_samples: int = _ranged(5, 1, 1000)
    slot_width_min: int = _ranged(30, 5, 120)
    max_differencing_edges: int = _ranged(3, 1, 8)

    # predictors
    n_trees: int = _ranged(25, 1, 500)
    top_k: int = _ranged(5, 1, 20)
    route_slots: int = _ranged(5, 1, 20)
    max_route_edges: int = _ranged(8, 1, 20)
    discount_factor: float = _ranged(10.0, 0.0, 1000.0)
    speed_min_samples_split: int = _ranged(8, 2, 1000)

    # locator and evaluation
    threshold_m: float = _ranged(100.0, 1.0, 10000.0)
    interval_s: float = _ranged(15.0, 1.0, 600.0)
    speed_floor_kmh: float = _ranged(5.0, 0.1, 60.0)
    mode: str = "vemo-a"

    # simulated world
    stations: int = _ranged(12, 2, 500)
    density: float = _ranged(1.5, 0.5, 10.0)
    vehicles: int = _ranged(300, 1, 100_000)
    start_date: str = "2024-03-04"
    single_trip_share: float = _ranged(0.3, 0.0, 1.0)
    commuter_share: float = _ranged(0.4, 0.0, 1.0)
    rain_rate: float = _ranged(0.15, 0.0, 1.0)
    heavy_rain_rate: float = _ranged(0.05, 0.0, 1.0)
    holiday_rate: float = _ranged(0.03, 0.0, 1.0)
    dwell_probability: float = _ranged(0.0, 0.0, 1.0)
    noise: bool = True

    # train/test split in days
    train_days: int = _ranged(25, 1, 3650)
    test_days: int = _ranged(5, 1, 3650)

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            low, high = f.metadata.get("range", (None, None))
            if low is not None and not low <= value <= high:
                raise ConfigError(f"{f.name}={value} outside [{low:g}, {high:g}]")
        if self.mode not in ("vemo-a", "vemo-r"):
            raise ConfigError(f"mode must be vemo-a or vemo-r, got {self.mode!r}")
        try:
            date.fromisoformat(self.start_date)
        except ValueError:
            raise ConfigError(f"start_date {self.start_date!r} is not YYYY-MM-DD") from None
        if 1440 % self.slot_width_min or 1440 % self.recovery_slot_min:
            raise ConfigError("slot widths must divide a day")

    @property
    def days(self) -> int:
        return self.train_days + self.test_days

    def with_overrides(self, overrides: Mapping[str, Optional[str]]) -> 'RunConfig':
        return replace(self, **_coerce(overrides))

    @classmethod
    def load(cls, path: Optional[Union[str, Path]] = None,
             overrides: Optional[Mapping[str, Optional[str]]] = None) -> 'RunConfig':
        values: Dict[str, Optional[str]] = {}
        if path is not None:
            if not Path(path).exists():
                raise ConfigError(f"config file not found: {path}")
            values.update(dotenv_values(path))
        values.update(overrides or {})
        return cls(**_coerce(values))

    def to_dict(self) -> Dict:
        return asdict(self)

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]

    def header(self) -> str:
        """The `config_hash=... seed=...` stamp carried by every artifact"""
        return f"config_hash={self.config_hash()} seed={self.seed}"

    def stamp(self) -> Dict[str, object]:
        return {"config_hash": self.config_hash(), "seed": self.seed}

    # ------------------------------------------------------------ module configs

    def discretization(self) -> DiscretizationConfig:
        try:
            return DiscretizationConfig(
                slot_width_min=self.recovery_slot_min, segment_length_m=self.segment_length_m,
                speed_unit_kmh=self.speed_unit_kmh, search_grid_kmh=self.search_grid_kmh,
                speed_window_kmh=self.speed_window_kmh, max_candidates_per_route=self.max_candidates_per_route,
                duration_slack=self.duration_slack, overspeed_ratio=self.overspeed_ratio,
                min_speed_kmh=self.speed_floor_kmh, max_route_edges=self.max_route_edges,
                min_group_size=self.min_group_size)
        except DomainError as e:
            raise ConfigError(str(e)) from e

    def crowd_speed(self) -> CrowdSpeedConfig:
        return CrowdSpeedConfig(lam=self.lam, components=self.gmm_components, min_samples=self.min_samples,
                                width_min=self.slot_width_min, max_edges=self.max_differencing_edges, seed=self.seed)

    def predictors(self) -> PredictorConfig:
        return PredictorConfig(n_trees=self.n_trees, seed=self.seed, top_k=self.top_k, route_slots=self.route_slots,
                               max_route_edges=self.max_route_edges, discount_factor=self.discount_factor,
                               speed_min_samples_split=self.speed_min_samples_split,
                               slot_width_min=self.slot_width_min)

    def world(self) -> WorldConfig:
        try:
            return WorldConfig(
                stations=self.stations, density=self.density, vehicles=self.vehicles, days=self.days,
                start_date=date.fromisoformat(self.start_date), single_trip_share=self.single_trip_share,
                commuter_share=self.commuter_share, rain_rate=self.rain_rate,
                heavy_rain_rate=self.heavy_rain_rate, holiday_rate=self.holiday_rate, noise=self.noise,
                dwell_probability=self.dwell_probability, max_route_edges=self.max_route_edges)
        except DomainError as e:
            raise ConfigError(str(e)) from e


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(values: Mapping[str, Optional[str]]) -> Dict[str, object]:
    """Typed field values from text, rejecting unknown keys"""
    known = {f.name: f for f in fields(RunConfig)}
    out: Dict[str, object] = {}
    for key, text in values.items():
        name = key.strip().lower()
        if name not in known:
            raise ConfigError(f"unknown config key {key!r}")
        if text is None:
            raise ConfigError(f"config key {key!r} has no value")
        kind = type(known[name].default)
        text = str(text).strip()
        try:
            if kind is bool:
                if text.lower() not in _TRUE | _FALSE:
                    raise ValueError(text)
                out[name] = text.lower() in _TRUE
            else:
                out[name] = kind(text)
        except ValueError:
            raise ConfigError(f"{name}: cannot read {text!r} as {kind.__name__}") from None
    return out


def parse_overrides(pairs) -> Dict[str, str]:
    """`key=value` strings from the command line"""
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"expected key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        out[key.strip()] = value
    return out
