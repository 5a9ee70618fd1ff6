"""Experiment configuration: a flat YAML mapping plus ``key=value`` overrides.

Every key has a default, so an empty file is a valid configuration.  Unknown
keys are rejected.  See README.md for the schema.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .constants import (
    SECH_FWHM_FACTOR,
    larmor_omega,
    sech_sigma_from_bandwidth,
    sech_sigma_from_fwhm,
)
from .ensemble import EnsembleConfig, spread_for_t2star
from .nuclear import NuclearConfig
from .pulse import PulseParams
from .spinmap import EvolutionParams


class ConfigError(ValueError):
    """Bad configuration file, override, or value."""


def _floats(*xs):
    return field(default_factory=lambda: list(xs))


@dataclass
class ExperimentConfig:
    # physical parameters
    B_T: float = 3.0
    g_e: float = 0.43
    rep_rate_mhz: float = 81.0
    T2_ns: float = 150.0
    T1_ns: float | None = None
    pump_shape: str = "sech"
    pump_area_pi: float = 1.0
    pump_bandwidth_mev: float = 0.6
    pump_fwhm_ps: float | None = None
    t2star_ps: float = 450.0
    probe_fwhm_mev: float = 1.3
    # nuclear bath
    n_nuc: int = 20000
    full_shift_ghz: float = 5.0
    rate_scale: float = 1.0
    omega_min_frac: float = 0.01
    nuc_window_half: int | None = None
    # ensemble sampling
    omega_span_sigma: float = 4.0
    omega_stride: int = 4
    qd_window_mev: float = 3.0
    qd_points: int = 61
    seed: int = 0
    # pulse
    pulse_areas_pi: list = _floats(0.5, 1.0, 2.0)
    pulse_detunings_sigma: list = _floats(-3.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0)
    pulse_oracle: bool = True
    # steady-state
    ss_detunings_mev: list = _floats(-0.5, 0.5)
    ss_psc_min: float = 222.0
    ss_psc_max: float = 225.0
    ss_points: int = 1201
    # trace
    trace_areas_pi: list = _floats(0.25, 1.0)
    trace_t_min_ps: float = -1000.0
    trace_t_max_ps: float = 3000.0
    trace_step_ps: float = 2.0
    trace_nuclei: bool = False
    # spectra
    spectra_areas_pi: list = _floats(0.25, 0.5, 1.0, 1.5)
    probe_min_mev: float = -3.0
    probe_max_mev: float = 3.0
    probe_points: int = 121
    spectra_nuclei: bool = True
    # nuclear-evolve, nuclear-dos
    evolve_detunings_mev: list = _floats(-0.8, 0.0, 0.8)
    evolve_init_fraction: float = 0.0085
    evolve_window_spacings: float = 6.0
    evolve_times: int = 41
    evolve_t_max: float | None = None
    evolve_omega0_psc: float | None = None
    dos_detunings_mev: list = _floats(-0.8, 0.0, 0.8)
    dos_bins_per_spacing: int = 40
    dos_omega_stride: int = 1

    # ---- validation -------------------------------------------------------

    _POSITIVE = ("B_T", "rep_rate_mhz", "T2_ns", "T1_ns", "pump_bandwidth_mev", "pump_fwhm_ps",
                 "t2star_ps", "probe_fwhm_mev", "full_shift_ghz", "rate_scale", "omega_min_frac",
                 "omega_span_sigma", "trace_step_ps", "evolve_init_fraction", "evolve_window_spacings",
                 "evolve_t_max", "evolve_omega0_psc", "g_e")
    _POSITIVE_INT = ("n_nuc", "omega_stride", "qd_points", "ss_points", "probe_points",
                     "evolve_times", "dos_bins_per_spacing", "dos_omega_stride", "nuc_window_half")

    def validate(self) -> ExperimentConfig:
        for name in self._POSITIVE:
            v = getattr(self, name)
            if v is not None and not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{name}: must be a positive number (got {v!r})")
        for name in self._POSITIVE_INT:
            v = getattr(self, name)
            if v is not None and not (isinstance(v, int) and v > 0):
                raise ConfigError(f"{name}: must be a positive integer (got {v!r})")
        if self.pump_shape not in ("sech", "square"):
            raise ConfigError(f"pump_shape: must be 'sech' or 'square' (got {self.pump_shape!r})")
        if not self.pump_area_pi >= 0:
            raise ConfigError("pump_area_pi: must be >= 0")
        if self.n_nuc < 2:
            raise ConfigError("n_nuc: must be >= 2")
        if self.qd_window_mev < 0:
            raise ConfigError("qd_window_mev: must be >= 0")
        if self.ss_psc_max <= self.ss_psc_min or self.ss_psc_min <= 0:
            raise ConfigError("ss_psc_min/ss_psc_max: need 0 < ss_psc_min < ss_psc_max")
        if self.probe_max_mev < self.probe_min_mev:
            raise ConfigError("probe_min_mev/probe_max_mev: empty probe range")
        if not (-self.T_R_ps < self.trace_t_min_ps < self.trace_t_max_ps < self.T_R_ps):
            raise ConfigError("trace_t_min_ps/trace_t_max_ps: need -T_R < t_min < t_max < T_R")
        for name in ("pulse_areas_pi", "pulse_detunings_sigma", "ss_detunings_mev", "trace_areas_pi", "spectra_areas_pi",
                     "evolve_detunings_mev", "dos_detunings_mev"):
            v = getattr(self, name)
            if not isinstance(v, list) or not v or not all(isinstance(x, (int, float)) for x in v):
                raise ConfigError(f"{name}: must be a non-empty list of numbers")
        for name in ("pulse_areas_pi", "trace_areas_pi", "spectra_areas_pi"):
            if any(x < 0 for x in getattr(self, name)):
                raise ConfigError(f"{name}: areas must be >= 0")
        return self

    # ---- derived quantities ---------------------------------------------

    @property
    def T_R_ps(self) -> float:
        return 1e6 / self.rep_rate_mhz

    @property
    def T2_ps(self) -> float:
        return self.T2_ns * 1e3

    @property
    def T1_ps(self) -> float:
        return (self.T1_ns if self.T1_ns is not None else self.T2_ns) * 1e3

    @property
    def psc_spacing(self) -> float:
        return 2.0 * math.pi / self.T_R_ps

    @property
    def omega_larmor(self) -> float:
        return larmor_omega(self.g_e, self.B_T)

    @property
    def sech_sigma(self) -> float:
        if self.pump_fwhm_ps is not None:
            return sech_sigma_from_fwhm(self.pump_fwhm_ps)
        return sech_sigma_from_bandwidth(self.pump_bandwidth_mev)

    def pump(self, area: float | None = None, detuning: float = 0.0) -> PulseParams:
        """Pump pulse of the configured shape; `area` in rad, `detuning` in rad/ps."""
        area = self.pump_area_pi * math.pi if area is None else area
        if self.pump_shape == "sech":
            return PulseParams.sech(area, detuning, self.sech_sigma)
        duration = self.pump_fwhm_ps if self.pump_fwhm_ps is not None else SECH_FWHM_FACTOR / self.sech_sigma
        return PulseParams.square(area, detuning, duration)

    def evolution(self, omega: float | None = None) -> EvolutionParams:
        return EvolutionParams(self.omega_larmor if omega is None else omega,
                               self.T_R_ps, self.T2_ps, self.T1_ps)

    def nuclear(self, window=None) -> NuclearConfig:
        cfg = NuclearConfig(self.n_nuc, self.full_shift_ghz, self.rate_scale,
                            self.omega_min_frac * self.psc_spacing)
        if window is not None:
            return cfg.with_window(*window)
        return cfg

    def n_per_spacing(self) -> float:
        a = self.nuclear().a_hf
        return self.psc_spacing / a if a > 0 else math.inf

    def stationary_window(self) -> NuclearConfig:
        """Window centred on n = 0 wide enough for stationary laws of the full bath."""
        if self.nuc_window_half is not None:
            half = self.nuc_window_half
        else:
            spread = 8.0 * math.sqrt(self.n_nuc)
            spacings = 3.0 * self.n_per_spacing() if math.isfinite(self.n_per_spacing()) else 0.0
            half = int(math.ceil(max(spread, spacings)))
        return self.nuclear((-half, half))

    def ensemble(self, area: float | None = None, nuclei: bool = False,
                 threads: int | None = 1, stride: int | None = None) -> EnsembleConfig:
        nuc = self.stationary_window()
        return EnsembleConfig(
            pump=self.pump(area),
            T_R=self.T_R_ps,
            T2=self.T2_ps,
            T1=self.T1_ps,
            omega_center=self.omega_larmor,
            omega_spread=spread_for_t2star(self.t2star_ps),
            omega_span=self.omega_span_sigma,
            omega_stride=self.omega_stride if stride is None else stride,
            qd_window_mev=self.qd_window_mev,
            qd_points=self.qd_points,
            probe_hwhm_mev=0.5 * self.probe_fwhm_mev,
            nuclei=nuclei,
            nuclear=nuc,
            threads=threads,
        )

    # ---- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def _number(value):
    # YAML 1.1 reads exponent forms such as 1e5 as strings
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            return value
    return value


def _coerce(name: str, value):
    default = _FIELDS[name].default
    if default is dataclasses.MISSING:
        default = _FIELDS[name].default_factory()
    if value is None:
        if default is None:
            return None
        raise ConfigError(f"{name}: a value is required")
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected true/false (got {value!r})")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{name}: expected a list (got {value!r})")
        out = []
        for x in map(_number, value):
            if isinstance(x, bool) or not isinstance(x, (int, float)):
                raise ConfigError(f"{name}: list entries must be numbers (got {x!r})")
            out.append(float(x))
        return out
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{name}: expected a string (got {value!r})")
        return value
    value = _number(value)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name}: expected a number (got {value!r})")
    if name in ExperimentConfig._POSITIVE_INT:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"{name}: expected an integer (got {value!r})")
        return int(value)
    return float(value)


def _load_yaml(text: str, source: str) -> dict:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" line {mark.line + 1}, column {mark.column + 1}" if mark is not None else ""
        raise ConfigError(f"{source}:{where}: {getattr(exc, 'problem', exc)}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a key: value mapping")
    return data


def parse_override(item: str) -> tuple[str, object]:
    """Split ``key=value``; the value is parsed as a YAML scalar or flow list."""
    if "=" not in item:
        raise ConfigError(f"override {item!r}: expected key=value")
    key, raw = item.split("=", 1)
    key = key.strip()
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"override {key}: cannot parse value {raw!r}") from exc
    return key, value


def parse_config(path=None, overrides=()) -> ExperimentConfig:
    """Load a configuration file (optional) and apply ``key=value`` overrides."""
    values: dict = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from exc
        data = _load_yaml(text, str(path))
        lines = text.splitlines()
        for key, value in data.items():
            if key not in _FIELDS:
                line = next((i + 1 for i, ln in enumerate(lines) if ln.lstrip().startswith(f"{key}:")), None)
                where = f" line {line}" if line else ""
                raise ConfigError(f"{path}:{where}: unknown key {key!r}")
            values[key] = _coerce(key, value)
    for item in overrides:
        key, value = parse_override(item)
        if key not in _FIELDS:
            raise ConfigError(f"override: unknown key {key!r}")
        values[key] = _coerce(key, value)
    return ExperimentConfig(**values).validate()
