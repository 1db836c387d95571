"""Experiment configuration files.

TOML and JSON are both accepted, keyed by file extension. Frequencies
and rates appear in configs in cyclic units under *_over_2pi_hz names
and are converted to angular units exactly once, here, at the load
boundary. Everything downstream is rad/s.
"""

from __future__ import annotations

import json
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

from .device import DeviceParams

_TWO_PI = 2.0 * math.pi

# device-table keys carrying cyclic frequencies, mapped to the angular
# DeviceParams field they fill
_FREQ_KEYS = {
    "delta0_over_2pi_hz": "delta0",
    "omega_r_over_2pi_hz": "omega_r",
    "omega_p_over_2pi_hz": "omega_p",
    "gamma_p_over_2pi_hz": "gamma_p",
}

_PLAIN_KEYS = (
    "wire_length", "wire_width", "chem_potential", "surface_velocity",
    "loop_area", "field_gradient", "zero_point_amp", "quality_factor",
    "temperature", "theta_on", "theta_off",
)

_OPTIONAL_KEYS = ("zeta", "ec_over_el", "fermi_velocity_override")

_OVERRIDE_KEYS = {
    "g_over_2pi_hz": "g",
    "g_prime_over_2pi_hz": "g_prime",
    "omega_t_over_2pi_hz": "omega_t",
}


class ConfigError(ValueError):
    """Malformed or incomplete configuration input."""


@dataclass
class ExperimentConfig:
    device: DeviceParams
    coupling_overrides: dict = field(default_factory=dict)
    protocol: str = "state-transfer"
    model: str = "effective"
    n_fock: int = 10
    m_fock: int = 5
    ramp_time: float = 2e-9
    square: bool = False
    sample_dt: float = 0.5e-9
    perturbation_pct: float = 1.0
    sweep: Optional[dict] = None
    raw: dict = field(default_factory=dict)


def _load_tables(path) -> dict:
    path = os.fspath(path)
    if path.endswith(".toml"):
        with open(path, "rb") as fh:
            return _toml.load(fh)
    if path.endswith(".json"):
        with open(path) as fh:
            return json.load(fh)
    raise ConfigError(f"unsupported config extension on {path!r} (use .toml or .json)")


def _device_from_table(table: dict) -> DeviceParams:
    kwargs = {}
    for key, fieldname in _FREQ_KEYS.items():
        if key not in table:
            raise ConfigError(f"device.{key} missing")
        kwargs[fieldname] = _TWO_PI * float(table[key])
    for key in _PLAIN_KEYS:
        if key not in table:
            raise ConfigError(f"device.{key} missing")
        kwargs[key] = float(table[key])
    for key in _OPTIONAL_KEYS:
        if key in table:
            kwargs[key] = float(table[key])
    known = set(_FREQ_KEYS) | set(_PLAIN_KEYS) | set(_OPTIONAL_KEYS)
    unknown = set(table) - known
    if unknown:
        raise ConfigError(f"unknown device keys: {sorted(unknown)}")
    try:
        return DeviceParams(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"device: {exc}") from exc


def load_config(path: str) -> ExperimentConfig:
    doc = _load_tables(path)
    if "device" not in doc:
        raise ConfigError("device table missing")
    device = _device_from_table(doc["device"])

    overrides = {}
    for key, name in _OVERRIDE_KEYS.items():
        if key in doc.get("derived", {}):
            overrides[name] = _TWO_PI * float(doc["derived"][key])
    unknown = set(doc.get("derived", {})) - set(_OVERRIDE_KEYS)
    if unknown:
        raise ConfigError(f"unknown derived keys: {sorted(unknown)}")

    run = doc.get("run", {})
    cfg = ExperimentConfig(
        device=device,
        coupling_overrides=overrides,
        protocol=str(run.get("protocol", "state-transfer")),
        model=str(run.get("model", "effective")),
        n_fock=int(run.get("n_fock", 10)),
        m_fock=int(run.get("m_fock", 5)),
        ramp_time=float(run.get("ramp_time_s", 2e-9)),
        square=bool(run.get("square", False)),
        sample_dt=float(run.get("sample_dt_s", 0.5e-9)),
        perturbation_pct=float(run.get("perturbation_pct", 1.0)),
        sweep=doc.get("sweep"),
        raw=doc,
    )
    if cfg.protocol not in ("state-transfer", "entangle", "sensitivity"):
        raise ConfigError(f"unknown protocol {cfg.protocol!r}")
    if cfg.model not in ("effective", "full"):
        raise ConfigError(f"unknown model {cfg.model!r}")
    if cfg.n_fock < 2 or cfg.m_fock < 2:
        raise ConfigError("n_fock and m_fock must be at least 2")
    if cfg.sweep is not None:
        _validate_sweep(cfg.sweep)
    return cfg


def _validate_sweep(sweep: dict) -> None:
    axes = sweep.get("axes")
    if not isinstance(axes, list) or not 1 <= len(axes) <= 2:
        raise ConfigError("sweep.axes must list one or two axes")
    for ax in axes:
        if "param" not in ax or "values" not in ax:
            raise ConfigError("each sweep axis needs 'param' and 'values'")
        if not isinstance(ax["values"], list) or not ax["values"]:
            raise ConfigError(f"sweep axis {ax.get('param')!r} has no values")
