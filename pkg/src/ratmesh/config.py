"""Experiment configuration: defaults matching the reference scenario, a flat
`key = value` config-file parser, and adapters to the typed parameter objects
used by the library modules.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .channel import ChannelParams, RatParams
from .consensus import RuleConfig
from .simengine import TimerConfig
from .topology import DeploymentConfig


class ConfigError(Exception):
    """Invalid configuration file or option value."""


@dataclass(frozen=True)
class ExperimentConfig:
    # channel
    transition_width: float = 20.0
    shadow_sigma: float = 7.0
    location_pct: float = 0.1
    l_urban: float = 6.8
    delta_los: float = -7.9
    delta_nlos: float = -9.0
    literal_q_sign: bool = False
    # RATs
    rat1_freq_mhz: float = 2400.0
    rat1_mcl_db: float = 105.0
    rat2_freq_mhz: float = 868.0
    rat2_mcl_db: float = 154.0
    rho: float = 5.0
    # deployment
    intensity: float = 50.0
    r_a: float = 500.0
    # timers (transitions per second)
    lambda_on: float = 0.1
    lambda_ch: float = 0.2
    lambda_m: float = 0.2
    # batch execution
    runs: "int | str" = "auto"
    min_runs: int = 100
    max_runs: int = 200_000
    target_rel_margin: float = 0.005
    abs_margin_fallback: float = 0.002
    confidence: float = 0.95
    seed: int = 1
    event_cap: int = 1_000_000
    workers: int = 1
    # rule-table modes
    literal_rules: bool = False
    reparent_orphans: bool = False
    # output grids
    curve_d_max: float = 5000.0
    curve_d_step: float = 1.0
    linear_d_min_start: float = 50.0
    linear_d_min_stop: float = 500.0
    linear_d_min_step: float = 10.0

    def validate(self) -> None:
        if not 0.0 < self.confidence < 1.0:
            raise ConfigError("confidence must be in (0, 1)")
        if self.target_rel_margin <= 0:
            raise ConfigError("target_rel_margin must be positive")
        if isinstance(self.runs, int) and self.runs < 1:
            raise ConfigError("runs must be >= 1 or 'auto'")
        if isinstance(self.runs, str) and self.runs != "auto":
            raise ConfigError(f"runs must be an integer or 'auto', got {self.runs!r}")
        if self.min_runs < 1 or self.max_runs < self.min_runs:
            raise ConfigError("need 1 <= min_runs <= max_runs")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.event_cap < 1:
            raise ConfigError("event_cap must be >= 1")
        if not 0.0 < self.location_pct < 1.0:
            raise ConfigError("location_pct must be in (0, 1)")
        for name in ("transition_width", "shadow_sigma", "intensity", "r_a",
                     "lambda_on", "lambda_ch", "lambda_m", "rho",
                     "rat1_freq_mhz", "rat2_freq_mhz",
                     "curve_d_max", "curve_d_step",
                     "linear_d_min_start", "linear_d_min_step"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.rho < 1:
            raise ConfigError("rho must be >= 1")

    # typed views -----------------------------------------------------------

    def channel_params(self) -> ChannelParams:
        return ChannelParams(
            transition_width=self.transition_width,
            shadow_sigma=self.shadow_sigma,
            location_pct=self.location_pct,
            l_urban=self.l_urban,
            delta_los=self.delta_los,
            delta_nlos=self.delta_nlos,
        )

    def rats(self) -> "tuple[RatParams, RatParams]":
        return (
            RatParams(1, self.rat1_freq_mhz, self.rat1_mcl_db, 1.0),
            RatParams(2, self.rat2_freq_mhz, self.rat2_mcl_db, self.rho),
        )

    def deployment_config(self) -> DeploymentConfig:
        return DeploymentConfig(intensity=self.intensity, area_radius=self.r_a)

    def timer_config(self) -> TimerConfig:
        return TimerConfig(self.lambda_on, self.lambda_ch, self.lambda_m)

    def rule_config(self) -> RuleConfig:
        return RuleConfig(literal_tables=self.literal_rules,
                          reparent_orphans=self.reparent_orphans)


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _coerce(key: str, raw: str):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    want = _FIELD_TYPES[key]
    raw = raw.strip()
    if key == "runs":
        if raw == "auto":
            return "auto"
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"runs must be an integer or 'auto', got {raw!r}")
    if want == "bool":
        low = raw.lower()
        if low in _BOOL_TRUE:
            return True
        if low in _BOOL_FALSE:
            return False
        raise ConfigError(f"{key} expects a boolean, got {raw!r}")
    if want == "int":
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key} expects an integer, got {raw!r}")
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key} expects a number, got {raw!r}")


def parse_config_text(text: str, base: "ExperimentConfig | None" = None) -> ExperimentConfig:
    """Parse `key = value` lines ('#' starts a comment) on top of defaults."""
    overrides = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        overrides[key] = _coerce(key, value)
    cfg = replace(base or ExperimentConfig(), **overrides)
    cfg.validate()
    return cfg


def load_config(path, base: "ExperimentConfig | None" = None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}")
    return parse_config_text(text, base)
