"""Scenario configuration read from a key = value file.

The file has a single ``[scenario]`` section whose keys are the field names
of :class:`ScenarioConfig`; list values are comma separated. Unknown keys
are rejected so that typos fail loudly.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

SPEED_OF_LIGHT = 299_792_458.0
MODES = ("nmse_sweep", "beam_pattern", "tracking", "full_pipeline")


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    mode: str = "nmse_sweep"
    seed: int = 20240601
    trials: int = 100
    workers: int = 1
    # system
    carrier_frequency: float = 28e9
    spacing: float = 0.5                 # element pitch in wavelengths
    m_bs: int = 256
    m_ue: int = 4
    m_ris: int = 256
    m_ris_list: list[int] = field(default_factory=lambda: [16, 64, 256])
    u_p_list: list[int] = field(default_factory=lambda: [8, 32, 128])
    l_g: int = 5
    l_h: int = 1
    nlos_variance: float = 0.1
    bs_departure_deg: list[float] = field(default_factory=lambda: [30.0, 45.0])
    ris_arrival_deg: list[float] = field(default_factory=lambda: [30.0, 0.0])
    ue_elevation_deg: list[float] = field(default_factory=lambda: [10.0, 60.0])
    ue_azimuth_deg: list[float] = field(default_factory=lambda: [90.0, 270.0])
    snr_db: list[float] = field(default_factory=lambda: [0.0, 5.0, 10.0, 15.0])
    baseline: bool = True
    # beam training
    tau: int = 5
    k_beams: int = 10
    rotations: int = 8
    refine_levels: int = 3
    training_symbols: int = 8
    dwell_scaling: bool = True
    # estimation
    epsilon: float = 1e-8
    delta: float = 1e-6
    max_iter: int = 50
    zeta_c: float = 1.0
    zeta_floor: float = 1e-10
    # beam pattern
    pattern_n_ris: int = 16
    pattern_desired_deg: list[float] = field(default_factory=lambda: [45.0, 60.0])
    pattern_el_points: int = 181
    pattern_az_points: int = 361
    pattern_trials: int = 50
    rich_paths: int = 64
    # tracking
    tracking_snr_db: float = 20.0
    tracking_steps: int = 200
    rate_deg_per_step: float = 0.1
    rho: float = 0.995
    q_gain: float | None = None          # None: matched to the gain innovation
    q_angle_deg: float = 0.5
    nis_gate_steps: int = 3
    static_steps: int = 60
    moving_steps: int = 200
    baseline_refresh: int = 1

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    def validate(self) -> "ScenarioConfig":
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        counts = ("trials", "workers", "m_bs", "m_ue", "m_ris", "l_g", "l_h", "tau", "k_beams", "rotations",
                  "refine_levels", "training_symbols", "max_iter", "pattern_n_ris", "pattern_el_points",
                  "pattern_az_points", "pattern_trials", "rich_paths", "tracking_steps", "nis_gate_steps",
                  "moving_steps", "baseline_refresh")
        for name in counts:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.static_steps < 0:
            raise ConfigError("static_steps must be >= 0")
        if not self.snr_db:
            raise ConfigError("snr_db must not be empty")
        if len(self.m_ris_list) != len(self.u_p_list) or not self.m_ris_list:
            raise ConfigError("m_ris_list and u_p_list must be non-empty and of equal length")
        for m in [self.m_ris, self.m_bs, self.m_ue, *self.m_ris_list]:
            if round(m ** 0.5) ** 2 != m:
                raise ConfigError(f"array size {m} is not a square")
        if self.tau < 2 or self.k_beams < 2:
            raise ConfigError("tau and k_beams must be >= 2")
        if not 0.0 < self.rho <= 1.0:
            raise ConfigError("rho must lie in (0, 1]")
        if self.spacing <= 0 or self.carrier_frequency <= 0:
            raise ConfigError("spacing and carrier_frequency must be positive")
        for name in ("bs_departure_deg", "ris_arrival_deg", "ue_elevation_deg", "ue_azimuth_deg",
                     "pattern_desired_deg"):
            if len(getattr(self, name)) != 2:
                raise ConfigError(f"{name} takes two values")
        return self

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes).validate()


def _convert(raw: str, default, name: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError(raw)
            return low in ("true", "yes", "1")
        if isinstance(default, list):
            elem = type(default[0]) if default else float
            return [elem(float(v)) if elem is int else elem(v) for v in raw.split(",") if v.strip()]
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float) or default is None:
            return None if raw.lower() == "none" else float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def parse_config(text: str) -> ScenarioConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    if not parser.has_section("scenario"):
        raise ConfigError("missing [scenario] section")
    base = ScenarioConfig()
    known = {f.name for f in fields(ScenarioConfig)}
    changes = {}
    for key, raw in parser.items("scenario"):
        if key not in known:
            raise ConfigError(f"unknown key {key!r}")
        changes[key] = _convert(raw, getattr(base, key), key)
    return dataclasses.replace(base, **changes).validate()


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def dump_config(cfg: ScenarioConfig) -> str:
    lines = ["[scenario]"]
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, list):
            v = ", ".join(repr(x) for x in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
