"""Run configuration: flat key=value files with [section] headers.

Sections mirror the modules: [env], [schedule], [oracle], [policy], [run].
Command-line overrides use dotted keys, e.g. --set policy.algorithm=igw.
Anything malformed raises ConfigError, which the CLI maps to exit code 2.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .core import DOUBLING, EXPLICIT, FIXED_LENGTH, EpochSchedule
from .environments import SCENARIOS, EnvironmentSpec
from .policy import ALGORITHMS


class ConfigError(Exception):
    pass


# Generous per-scenario reward envelopes: mean-reward extremes plus noise
# margin.  Overridable via [policy] r_lo / r_hi.
DEFAULT_REWARD_RANGE = {
    "lin_lin": (-0.5, 2.5),
    "lin_const": (-0.5, 4.5),
    "step_lin": (-2.5, 2.5),
    "perturbed": (-4.5, 3.5),
    "nonstationary": (-1.5, 5.5),
}


@dataclass
class RunConfig:
    scenario: str = "lin_lin"
    d: int = 20
    num_actions: int = 2
    sigma: float = 0.1
    horizon: int = 5000
    amplitude: float = 0.5
    period: float = 500.0

    schedule_kind: str = DOUBLING
    schedule_base: int = 1
    schedule_boundaries: Tuple[int, ...] = ()

    algorithm: str = "hte_igw"
    delta: float = 0.05
    n_min: int = 32
    r_lo: Optional[float] = None
    r_hi: Optional[float] = None

    ridge_scale: float = 1e-6
    num_folds: int = 2
    rate_const: float = 1.0
    lasso_const: float = 1.0

    seeds: Tuple[int, ...] = tuple(range(1, 11))
    output_dir: str = "out"

    def schedule(self) -> EpochSchedule:
        return EpochSchedule(self.schedule_kind, base=self.schedule_base,
                             boundaries=self.schedule_boundaries)

    def reward_range(self) -> Tuple[float, float]:
        lo, hi = DEFAULT_REWARD_RANGE[self.scenario]
        if self.r_lo is not None:
            lo = self.r_lo
        if self.r_hi is not None:
            hi = self.r_hi
        return (lo, hi)

    def env_spec(self, seed: int) -> EnvironmentSpec:
        return EnvironmentSpec(scenario=self.scenario, d=self.d,
                               num_actions=self.num_actions, sigma=self.sigma,
                               horizon=self.horizon, seed=seed,
                               amplitude=self.amplitude, period=self.period)

    def validate(self) -> "RunConfig":
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.horizon < 0:
            raise ConfigError("horizon must be nonnegative")
        if self.d < 1 or self.num_actions < 2:
            raise ConfigError("need d >= 1 and at least two actions")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError("delta must lie in (0, 1)")
        if not self.seeds:
            raise ConfigError("at least one seed required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        try:
            sched = self.schedule()
        except ValueError as e:
            raise ConfigError(str(e)) from e
        if not sched.covers(self.horizon):
            raise ConfigError("explicit schedule does not cover the horizon")
        lo, hi = self.reward_range()
        if not hi > lo:
            raise ConfigError("reward range must be nondegenerate")
        return self


_SECTIONS = {
    "env": {"scenario": str, "d": int, "num_actions": int, "sigma": float,
            "horizon": int, "amplitude": float, "period": float},
    "schedule": {"kind": str, "base": int, "boundaries": "int_list"},
    "oracle": {"ridge_scale": float, "num_folds": int, "rate_const": float,
               "lasso_const": float},
    "policy": {"algorithm": str, "delta": float, "n_min": int,
               "r_lo": float, "r_hi": float},
    "run": {"seeds": "int_list", "output_dir": str},
}

_FIELD_NAME = {
    ("env", "scenario"): "scenario", ("env", "d"): "d",
    ("env", "num_actions"): "num_actions", ("env", "sigma"): "sigma",
    ("env", "horizon"): "horizon", ("env", "amplitude"): "amplitude",
    ("env", "period"): "period",
    ("schedule", "kind"): "schedule_kind", ("schedule", "base"): "schedule_base",
    ("schedule", "boundaries"): "schedule_boundaries",
    ("oracle", "ridge_scale"): "ridge_scale", ("oracle", "num_folds"): "num_folds",
    ("oracle", "rate_const"): "rate_const", ("oracle", "lasso_const"): "lasso_const",
    ("policy", "algorithm"): "algorithm", ("policy", "delta"): "delta",
    ("policy", "n_min"): "n_min", ("policy", "r_lo"): "r_lo",
    ("policy", "r_hi"): "r_hi",
    ("run", "seeds"): "seeds", ("run", "output_dir"): "output_dir",
}


def _convert(section: str, key: str, raw: str):
    spec = _SECTIONS.get(section)
    if spec is None:
        raise ConfigError(f"unknown section [{section}]")
    typ = spec.get(key)
    if typ is None:
        raise ConfigError(f"unknown key {section}.{key}")
    raw = raw.strip()
    try:
        if typ == "int_list":
            return tuple(int(v) for v in raw.split(",") if v.strip())
        return typ(raw)
    except ValueError as e:
        raise ConfigError(f"bad value for {section}.{key}: {raw!r}") from e


def parse_overrides(pairs: List[str]) -> Dict[Tuple[str, str], str]:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not key=value")
        key, value = pair.split("=", 1)
        if "." not in key:
            raise ConfigError(f"override key {key!r} must be section.key")
        section, name = key.split(".", 1)
        out[(section.strip(), name.strip())] = value
    return out


def load_config(path: Optional[str] = None,
                overrides: Optional[List[str]] = None) -> RunConfig:
    cfg = RunConfig()
    items: Dict[Tuple[str, str], str] = {}
    if path is not None:
        parser = configparser.ConfigParser()
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        except configparser.Error as e:
            raise ConfigError(f"malformed config {path}: {e}") from e
        for section in parser.sections():
            for key, raw in parser.items(section):
                items[(section, key)] = raw
    if overrides:
        items.update(parse_overrides(overrides))
    for (section, key), raw in items.items():
        value = _convert(section, key, raw)
        setattr(cfg, _FIELD_NAME[(section, key)], value)
    return cfg.validate()
