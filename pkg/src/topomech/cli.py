"""Command-line interface.

Subcommands: params (derived-quantity report), simulate (one protocol
run to CSV + JSON), sweep (fidelity over one or two parameter axes),
gate-check (closed-system gate verification). Exit codes: 0 success,
2 configuration or usage error, 3 numerical invariant violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import itertools
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config, _device_from_table
from .device import couplings, fermi_velocity, qubit_splitting
from .dynamics import NumericalInvariantError
from .protocols import (controlled_phase, run_entangle, run_state_transfer,
                        sensitivity, swap_check, transfer_fidelity)

_TWO_PI = 2.0 * math.pi

CSV_REAL_COLUMNS = ("rho_s00", "rho_s11", "rho_s22", "fidelity")

_FORMULAS = {
    "omega_t": "qubit splitting evaluated at theta_on",
    "g": "xi / sqrt(2) * dE/dtheta at theta_on",
    "g_prime": "zeta / sqrt(2) * dE/dtheta at theta_on",
    "xi": "2*pi * loop_area * field_gradient * zero_point_amp / flux_quantum",
    "n_p": "thermal occupation of the controller mode at the device temperature",
    "n_r": "thermal occupation of the mechanical mode at the device temperature",
    "delta_shift": "gamma_p * g_prime^2 / (2 * omega_p^2)",
    "gamma_big_p": "2 * gamma_p^2 * omega_t * g_prime^2 / omega_p^4",
    "gamma_r": "(omega_r / 2pi) / quality_factor",
    "gamma_w": "exp(-h * v_fermi / (k_B * temperature * wire_length))",
    "omega_p": "device input, carried through",
    "gamma_p": "device input, carried through",
}


def _resolved_run(cfg: ExperimentConfig) -> dict:
    return {
        "protocol": cfg.protocol,
        "model": cfg.model,
        "n_fock": cfg.n_fock,
        "m_fock": cfg.m_fock,
        "ramp_time_s": cfg.ramp_time,
        "square": cfg.square,
        "sample_dt_s": cfg.sample_dt,
        "perturbation_pct": cfg.perturbation_pct,
    }


def _resolved_config(cfg: ExperimentConfig) -> dict:
    return {
        "device": cfg.raw.get("device", {}),
        "derived": cfg.raw.get("derived", {}),
        "run": _resolved_run(cfg),
        "sweep": cfg.sweep,
    }


def _apply_cli_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if getattr(args, "model", None):
        cfg.model = args.model
    if getattr(args, "n_fock", None):
        cfg.n_fock = args.n_fock
    if getattr(args, "m_fock", None):
        cfg.m_fock = args.m_fock
    if getattr(args, "protocol", None):
        cfg.protocol = args.protocol
    return cfg


def cmd_params(args) -> int:
    cfg = load_config(args.config)
    p = cfg.device
    dc = couplings(p, cfg.coupling_overrides or None)
    vf = fermi_velocity(p)
    e_off = qubit_splitting(p.theta_off, p)
    report = {}
    for f in dataclasses.fields(dc):
        report[f.name] = {
            "value": getattr(dc, f.name),
            "formula": _FORMULAS[f.name],
        }
    report["fermi_velocity"] = {"value": vf, "formula": "wire dispersion velocity (m/s)"}
    report["splitting_theta_off"] = {
        "value": e_off, "formula": "qubit splitting evaluated at theta_off"}
    report["off_state_suppression"] = {
        "value": e_off / dc.omega_t if dc.omega_t else float("nan"),
        "formula": "splitting at theta_off over splitting at theta_on"}
    doc = {"version": __version__, "config": _resolved_config(cfg), "derived": report}
    out = os.path.join(args.out, "params.json")
    with open(out, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"omega_t/2pi = {dc.omega_t / _TWO_PI:.6e} Hz")
    print(f"g/2pi       = {dc.g / _TWO_PI:.6e} Hz")
    print(f"g_prime/2pi = {dc.g_prime / _TWO_PI:.6e} Hz")
    print(f"xi          = {dc.xi:.6e}")
    print(f"off/on splitting ratio = {e_off / dc.omega_t:.3e}")
    print(f"wrote {out}")
    return 0


def _run_protocol(cfg: ExperimentConfig):
    dc = couplings(cfg.device, cfg.coupling_overrides or None)
    common = dict(model=cfg.model, n_fock=cfg.n_fock, m_fock=cfg.m_fock,
                  ramp_time=cfg.ramp_time, square=cfg.square,
                  sample_dt=cfg.sample_dt)
    if cfg.protocol == "state-transfer":
        r = 1.0 / math.sqrt(2.0)
        return run_state_transfer(dc, r, r, **common), None
    if cfg.protocol == "entangle":
        return run_entangle(dc, **common), None
    if cfg.protocol == "sensitivity":
        rep = sensitivity(dc, cfg.perturbation_pct, **common)
        r = 1.0 / math.sqrt(2.0)
        res = run_state_transfer(dc, r, r, detuning=rep["detuning"],
                                 g_scale=rep["g_scale"], **common)
        return res, rep
    raise ConfigError(f"unknown protocol {cfg.protocol!r}")


def cmd_simulate(args) -> int:
    cfg = _apply_cli_overrides(load_config(args.config), args)
    res, extra = _run_protocol(cfg)
    stem = f"{cfg.protocol}_{cfg.model}"
    csv_path = os.path.join(args.out, stem + ".csv")
    json_path = os.path.join(args.out, stem + ".json")
    res.to_csv(csv_path, real_columns=CSV_REAL_COLUMNS)
    if extra is not None:
        res.metadata["sensitivity"] = extra
    res.to_json(json_path, config=_resolved_config(cfg), version=__version__)
    print(f"final fidelity = {res.fidelity:.6f}")
    if extra is not None:
        print(f"baseline fidelity = {extra['baseline_fidelity']:.6f}")
    print(f"wrote {csv_path}")
    print(f"wrote {json_path}")
    return 0


def _sweep_cell(payload) -> float:
    device_table, derived_table, overrides, axes, values, run_kwargs = payload
    table = dict(device_table)
    dc_kwargs = dict(overrides)
    direct_gamma_r = None
    for (param, value) in zip(axes, values):
        if param == "gamma_r":
            direct_gamma_r = float(value)
        elif param in table or param in (
                "zeta", "ec_over_el", "fermi_velocity_override"):
            table[param] = float(value)
        else:
            raise ConfigError(f"sweep parameter {param!r} is not a device key or gamma_r")
    device = _device_from_table(table)
    dc = couplings(device, dc_kwargs or None)
    if direct_gamma_r is not None:
        dc = dataclasses.replace(dc, gamma_r=direct_gamma_r)
    return transfer_fidelity(dc, **run_kwargs)


def cmd_sweep(args) -> int:
    cfg = _apply_cli_overrides(load_config(args.config), args)
    if cfg.sweep is None:
        raise ConfigError("config has no sweep table")
    axes = cfg.sweep["axes"]
    names = [ax["param"] for ax in axes]
    grids = [list(map(float, ax["values"])) for ax in axes]
    run_kwargs = dict(model=cfg.model, n_fock=cfg.n_fock, m_fock=cfg.m_fock,
                      ramp_time=cfg.ramp_time, square=cfg.square,
                      sample_dt=cfg.sample_dt)
    device_table = cfg.raw.get("device", {})
    derived_table = cfg.raw.get("derived", {})
    cells = [
        (device_table, derived_table, cfg.coupling_overrides, names, combo, run_kwargs)
        for combo in itertools.product(*grids)
    ]
    if args.workers and args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            fids = list(pool.map(_sweep_cell, cells, chunksize=1))
    else:
        fids = [_sweep_cell(c) for c in cells]
    out = os.path.join(args.out, "sweep.csv")
    with open(out, "w") as fh:
        fh.write(",".join(names + ["fidelity"]) + "\n")
        for combo, fid in zip(itertools.product(*grids), fids):
            row = [f"{v:.12e}" for v in combo] + [f"{fid:.12e}"]
            fh.write(",".join(row) + "\n")
    print(f"{len(cells)} cells -> {out}")
    return 0


def cmd_gate_check(args) -> int:
    if args.closed == "false":
        print("gate-check: gate extraction is defined for closed-system "
              "evolution only (--closed false refused)", file=sys.stderr)
        return 2
    sw = swap_check()
    cp = controlled_phase()
    doc = {
        "version": __version__,
        "double_pulse_vs_phased_swap_residual": sw["residual"],
        "double_pulse_local_phases": [[z.real, z.imag] for z in
                                      (complex(p) for p in sw["local_phases"])],
        "double_pulse_invariants": list(sw["double_invariants"]),
        "single_pulse_invariants": list(sw["single_invariants"]),
        "controlled_phase_invariants": list(cp["invariants"]),
        "controlled_phase_target": list(cp["target_invariants"]),
        "controlled_phase_distance": cp["distance"],
        "unitarity_residuals": {"double_pulse": sw["unitarity"],
                                "controlled_phase": cp["unitarity"]},
    }
    out = os.path.join(args.out, "gate_check.json")
    with open(out, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"double pulse vs phased SWAP residual: {sw['residual']:.3e}")
    print(f"controlled-phase class distance:      {cp['distance']:.3e}")
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="topomech",
        description="Hybrid topological-qubit / nanomechanical-resonator simulator")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=".", help="output directory")

    cfg_common = argparse.ArgumentParser(add_help=False)
    cfg_common.add_argument("--config", required=True, help="TOML or JSON config file")

    run_common = argparse.ArgumentParser(add_help=False)
    run_common.add_argument("--model", choices=["effective", "full"])
    run_common.add_argument("--n-fock", type=int, dest="n_fock")
    run_common.add_argument("--m-fock", type=int, dest="m_fock")

    p = sub.add_parser("params", parents=[common, cfg_common],
                       help="derived operating-point quantities, each with "
                            "the formula it came from")
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("simulate", parents=[common, cfg_common, run_common],
                       help="run one protocol, write CSV and JSON")
    p.add_argument("--protocol", choices=["state-transfer", "entangle", "sensitivity"])
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", parents=[common, cfg_common, run_common],
                       help="fidelity over one or two config-declared axes")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gate-check", parents=[common],
                       help="closed-system gate identities and invariants")
    p.add_argument("--closed", default="true", choices=["true", "false"])
    p.set_defaults(func=cmd_gate_check)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalInvariantError as exc:
        print(f"numerical invariant violation: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
