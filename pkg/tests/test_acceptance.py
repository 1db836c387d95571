"""End-to-end acceptance checks.

One test per numbered criterion; each prints a single PASS/FAIL line
with the measured numbers before asserting, so the printed record
survives in the failure report when a criterion does not hold.

Criterion 3 is split: 3a (full vs reduced model transfer fidelity) and
3b (qubit decay rate in the full model against the reduced model's
relaxation-rate formula). 3b fails: the dynamically measured decay
rate at the test's scaled operating point is about eight times the
formula's prediction, while an independent weak-coupling oracle
(test_criterion_03b_decay_rate_oracle) confirms the measured rate to a
few percent. The formula, not the integrator, is what disagrees.
"""

import dataclasses
import math
import time
import warnings

import numpy as np
import pytest

from topomech.cli import _sweep_cell
from topomech.config import load_config
from topomech.device import (
    HBAR,
    KB,
    DeviceParams,
    correlation_j_raw,
    correlation_k_raw,
    couplings,
    qubit_splitting,
)
from topomech.dynamics import PulseSchedule, build_full, integrate
from topomech.operators import DensityMatrix, HilbertSpec, ladder, qubit_ops
from topomech.protocols import (
    MAKHLIN_TARGETS,
    controlled_phase,
    run_entangle,
    run_state_transfer,
    sensitivity,
    swap_check,
    transfer_fidelity,
)

from conftest import CONFIGS

R = 1.0 / math.sqrt(2.0)

_CAPSYS = None


@pytest.fixture(autouse=True)
def _live_reporting(capsys):
    # keeps the per-criterion lines visible in the terminal for passing
    # tests too, where captured stdout would otherwise be discarded
    global _CAPSYS
    _CAPSYS = capsys
    yield
    _CAPSYS = None


def _report(tag: str, ok: bool, detail: str) -> None:
    line = f"criterion {tag}: {'PASS' if ok else 'FAIL'} - {detail}"
    if _CAPSYS is not None:
        with _CAPSYS.disabled():
            print(line)
    else:
        print(line)


def test_criterion_01_fidelity_regression(dc):
    t0 = time.perf_counter()
    f1 = run_state_transfer(dc, R, R, n_fock=10).fidelity
    t1 = time.perf_counter() - t0
    t0 = time.perf_counter()
    f2 = run_entangle(dc, n_fock=10).fidelity
    t2 = time.perf_counter() - t0
    ok = (abs(f1 - 0.990) <= 0.005 and abs(f2 - 0.993) <= 0.005
          and t1 < 10.0 and t2 < 10.0)
    _report("1", ok,
            f"transfer F1={f1:.6f} (0.990+-0.005, {t1:.2f}s), "
            f"entangle F2={f2:.6f} (0.993+-0.005, {t2:.2f}s)")
    assert abs(f1 - 0.990) <= 0.005
    assert abs(f2 - 0.993) <= 0.005
    assert t1 < 10.0 and t2 < 10.0


def test_criterion_02_closed_system_exactness(dc):
    ft = run_state_transfer(dc, R, R, closed=True).fidelity
    fe = run_entangle(dc, closed=True).fidelity
    dur = PulseSchedule.square(-math.pi, dc.g).total_duration
    expect = math.pi / abs(dc.g)
    ok = (abs(ft - 1.0) < 1e-6 and abs(fe - 1.0) < 1e-6
          and dur == pytest.approx(expect, rel=1e-12)
          and expect == pytest.approx(25e-9, rel=1e-12))
    _report("2", ok,
            f"closed transfer 1-F={abs(ft - 1.0):.2e}, "
            f"closed entangle 1-F={abs(fe - 1.0):.2e}, "
            f"square pulse {dur * 1e9:.3f} ns (target 25 ns)")
    assert ft == pytest.approx(1.0, abs=1e-6)
    assert fe == pytest.approx(1.0, abs=1e-6)
    assert dur == pytest.approx(25e-9, rel=1e-12)


def test_criterion_03a_model_agreement(dc):
    # controller occupation is tiny at the fixture point, so a shallow
    # controller ladder is exact to well below the tolerance; the
    # difference is insensitive to both truncations (criterion 9 pins
    # the mechanical one)
    f_eff = transfer_fidelity(dc, n_fock=4)
    f_full = transfer_fidelity(dc, model="full", n_fock=4, m_fock=2)
    diff = abs(f_full - f_eff)
    ok = diff < 0.01
    _report("3a", ok,
            f"reduced F={f_eff:.6f}, full F={f_full:.6f}, |diff|={diff:.3e} (< 0.01)")
    assert diff < 0.01


@pytest.fixture(scope="module")
def decay_fit():
    """Qubit-only relaxation in the full model with the transfer drive off.

    The operating point is scaled from the fixture so the decay is
    resolvable in a short run: splitting 10 MHz cyclic, controller at
    100 MHz cyclic with linewidth 20 MHz cyclic, exchange amplitude
    -20 MHz cyclic, controller occupation exactly 0.1. The decay rate
    and equilibrium come from regressing dP/dt against P over the
    sampled trajectory, which is exact for a single-exponential law and
    ignores the unconverged tail.
    """
    omega_p = 2 * math.pi * 1e8
    temperature = HBAR * omega_p / (KB * math.log(11.0))  # occupation 1/10
    p = DeviceParams(
        delta0=2 * math.pi * 25e9, wire_length=5e-6, wire_width=1e-7,
        chem_potential=2.0, surface_velocity=2.2e4,
        fermi_velocity_override=32710.4155678623, loop_area=1e-12,
        field_gradient=1e8, zero_point_amp=15e-15,
        omega_r=2 * math.pi * 1e9, omega_p=omega_p,
        gamma_p=2 * math.pi * 2e7, quality_factor=1e12,
        temperature=temperature, theta_on=0.09, theta_off=3.1,
        zeta=0.0232)
    dc3 = couplings(p, {"omega_t": 2 * math.pi * 1e7,
                        "g": -2 * math.pi * 2e6,
                        "g_prime": -2 * math.pi * 2e7})

    space = HilbertSpec((2, 2, 3))
    L = build_full(dc3, space)
    # qubit up, mechanics ground, controller thermal at its occupation
    up = np.diag([0.0, 1.0]).astype(complex)
    ground = np.diag([1.0, 0.0]).astype(complex)
    r = dc3.n_p / (dc3.n_p + 1.0)
    w = r ** np.arange(3, dtype=float)
    th = np.diag(w / w.sum()).astype(complex)
    rho0 = DensityMatrix(space, np.kron(np.kron(up, ground), th))

    q = qubit_ops(space, 0)
    p_up = q["sigma_plus"].matrix @ q["sigma_minus"].matrix
    t_run = 2.0e-6
    out = integrate(L, rho0, PulseSchedule.hold(t_run),
                    sample_dt=t_run / 400.0, observables={"p_up": p_up})

    pop = np.real(out.traces["p_up"])
    t = out.times
    lo, hi = int(0.05 * len(t)), int(0.85 * len(t))
    dpdt = np.gradient(pop, t)[lo:hi]
    design = np.stack([pop[lo:hi], np.ones(hi - lo)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(design, dpdt, rcond=None)
    lam = -float(slope)
    p_eq = float(intercept) / lam
    return {"dc": dc3, "lambda": lam, "p_eq": p_eq}


def test_criterion_03b_elimination_decay_rate(decay_fit):
    dc3 = decay_fit["dc"]
    lam = decay_fit["lambda"]
    target = dc3.gamma_big_p * (1.0 + dc3.n_p)
    rel = abs(lam - target) / target
    ok = rel <= 0.20
    _report("3b", ok,
            f"fitted decay {lam:.4e} 1/s vs relaxation-formula prediction "
            f"{target:.4e} 1/s (ratio {lam / target:.2f}, tolerance 20%); "
            "see test_criterion_03b_decay_rate_oracle for the independent "
            "check that the fitted rate itself is correct")
    assert rel <= 0.20, (
        f"dynamically measured qubit decay {lam:.4e} 1/s differs from the "
        f"relaxation-rate formula {target:.4e} 1/s by {rel * 100:.0f}% "
        "(the weak-coupling oracle confirms the measured value, so the "
        "formula's scaling, not the simulation, is what disagrees)")


def test_criterion_03b_decay_rate_oracle(decay_fit):
    # independent weak-coupling prediction for the same run: exchange at
    # amplitude g'/2 against a mode of linewidth gamma_p detuned by
    # omega_p - omega_t decays the qubit at the Lorentzian-weighted rate
    # times (1 + 2 n_p), settling at n_p/(1 + 2 n_p)
    dc3 = decay_fit["dc"]
    delta = dc3.omega_p - dc3.omega_t
    lorentz = (0.5 * dc3.g_prime) ** 2 * dc3.gamma_p / (
        delta * delta + 0.25 * dc3.gamma_p * dc3.gamma_p)
    predicted = lorentz * (1.0 + 2.0 * dc3.n_p)
    rel = abs(decay_fit["lambda"] - predicted) / predicted
    eq_expected = dc3.n_p / (1.0 + 2.0 * dc3.n_p)
    ok = rel < 0.05 and abs(decay_fit["p_eq"] - eq_expected) < 2e-3
    _report("3b-oracle", ok,
            f"fitted decay {decay_fit['lambda']:.4e} vs weak-coupling "
            f"prediction {predicted:.4e} ({rel * 100:.1f}% off, tolerance 5%); "
            f"equilibrium {decay_fit['p_eq']:.5f} vs {eq_expected:.5f}")
    assert rel < 0.05
    assert decay_fit["p_eq"] == pytest.approx(eq_expected, abs=2e-3)


def test_criterion_04_correlation_quadrature():
    import scipy.integrate as si

    def half_line_fourier(w):
        # integral of exp(-u/2) exp(i w u) over u >= 0, via weighted quads
        c, _ = si.quad(lambda u: math.exp(-0.5 * u), 0, np.inf,
                       weight="cos", wvar=abs(w), epsabs=1e-13,
                       limlst=200, limit=400)
        s, _ = si.quad(lambda u: math.exp(-0.5 * u), 0, np.inf,
                       weight="sin", wvar=abs(w), epsabs=1e-13,
                       limlst=200, limit=400)
        return c + 1j * math.copysign(1.0, w) * s if w != 0 else c + 0j

    rng = np.random.RandomState(42)
    worst = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", si.IntegrationWarning)
        for _ in range(20):
            omega_p = 10 ** rng.uniform(8, 10)
            omega_t = rng.uniform(0.05, 0.95) * omega_p
            gamma_p = omega_p * 10 ** rng.uniform(-3, -1)
            n_p = rng.uniform(0.0, 2.0)
            # substitution u = gamma_p * tau: the 1/gamma_p from du
            # cancels the gamma_p in the correlator prefactor
            w_minus = (omega_t - omega_p) / gamma_p
            w_plus = (omega_t + omega_p) / gamma_p
            j_num = ((n_p + 1.0) / (2.0 * omega_p)
                     * (half_line_fourier(w_minus) - half_line_fourier(w_plus)))
            k_num = (n_p / (2.0 * omega_p)
                     * (half_line_fourier(-w_plus) - half_line_fourier(-w_minus)))
            j_cl = correlation_j_raw(omega_t, omega_p, gamma_p, n_p)
            k_cl = correlation_k_raw(omega_t, omega_p, gamma_p, n_p)
            worst = max(worst, abs(j_num - j_cl) / abs(j_cl))
            if n_p > 0:
                worst = max(worst, abs(k_num - k_cl) / abs(k_cl))
    ok = worst < 1e-6
    _report("4", ok, f"worst relative quadrature error {worst:.2e} over "
                     "20 draws (< 1e-6)")
    assert worst < 1e-6


def test_criterion_05_invariant_suite(dc):
    # trace, hermiticity and positivity bounds are enforced by the
    # integrator monitor on every run in this suite (violations raise);
    # here the trace drift is also checked explicitly, then the two
    # physical invariants: the undriven mechanics settle at the thermal
    # occupation, and closed-system evolution conserves excitation
    run = run_state_transfer(dc, R, R)
    drift = run.metadata["trace_drift"]

    space = HilbertSpec((2, 10))
    no_flip = dataclasses.replace(dc, gamma_big_p=0.0)
    from topomech.dynamics import build_effective
    from topomech.operators import thermal_state

    L = build_effective(no_flip, space)
    a = ladder(space, 1).matrix
    num_op = a.conj().T @ a
    rho0 = thermal_state(space, 1, 0.0)
    relax = integrate(L, rho0, PulseSchedule.hold(10.0 / dc.gamma_r),
                      observables={"n": num_op})
    n_final = float(np.real(relax.traces["n"][-1]))

    # closed evolution from a vacuum start never leaves the zero/one
    # quantum sector, so the recorded matrix elements carry the whole
    # excitation number: up-population plus single-quantum population
    cons = run_state_transfer(dc, R, R, closed=True, n_fock=4)
    exc = (np.real(cons.traces["rho_s11"]) + np.real(cons.traces["rho_s22"]))
    exc_drift = float(np.max(np.abs(exc - exc[0])))

    ok = (drift < 1e-8 and abs(n_final - dc.n_r) < 1e-4 and exc_drift < 1e-8)
    _report("5", ok,
            f"trace drift {drift:.2e} (< 1e-8), thermal occupation "
            f"{n_final:.6f} vs {dc.n_r:.6f} (+-1e-4), closed excitation "
            f"drift {exc_drift:.2e} (< 1e-8)")
    assert drift < 1e-8
    assert n_final == pytest.approx(dc.n_r, abs=1e-4)
    assert exc_drift < 1e-8


def test_criterion_06_sensitivity_band(dc):
    rep = sensitivity(dc, 1.0)
    f = rep["perturbed_fidelity"]
    ok = 0.975 <= f <= 0.990
    _report("6", ok,
            f"1% miscalibration: F {rep['baseline_fidelity']:.5f} -> {f:.5f} "
            "(band [0.975, 0.990])")
    assert 0.975 <= f <= 0.990


def test_criterion_07_parameter_chain(caption_config, cold_config):
    p = caption_config.device
    chain = couplings(p)  # no pins: the full physical chain
    g_target = -2 * math.pi * 20e6
    gp_target = -2 * math.pi * 100e6
    g_off = abs(chain.g - g_target) / abs(g_target)
    gp_off = abs(chain.g_prime - gp_target) / abs(gp_target)
    supp = qubit_splitting(p.theta_off, p) / qubit_splitting(p.theta_on, p)
    gw_cold = couplings(cold_config.device).gamma_w
    ok = (chain.xi > 0.002 and g_off < 0.10 and gp_off < 0.10
          and supp < 1e-3 and gw_cold < 1e-3)
    _report("7", ok,
            f"xi={chain.xi:.5f} (> 0.002), g within {g_off * 100:.1f}%, "
            f"g' within {gp_off * 100:.1f}% (both < 10%), off/on splitting "
            f"{supp:.2e} (>= 3 orders), cold-wire leakage {gw_cold:.2e} (< 1e-3)")
    assert chain.xi > 0.002
    assert g_off < 0.10
    assert gp_off < 0.10
    assert supp < 1e-3
    assert gw_cold < 1e-3


def test_criterion_08_gate_algebra():
    sw = swap_check()
    cp = controlled_phase()
    cz_dist = cp["distance"]
    ok = (sw["residual"] < 1e-8 and cz_dist < 1e-8
          and sw["unitarity"] < 1e-8 and cp["unitarity"] < 1e-8)
    _report("8", ok,
            f"double pulse vs phased-SWAP residual {sw['residual']:.2e}, "
            f"controlled-phase invariant distance {cz_dist:.2e}, unitarity "
            f"{max(sw['unitarity'], cp['unitarity']):.2e} (all < 1e-8)")
    assert sw["residual"] < 1e-8
    assert cz_dist < 1e-8
    assert sw["unitarity"] < 1e-8
    assert cp["unitarity"] < 1e-8
    # the double pulse is locally iSWAP-class because of its phase
    # pattern, which is why the check is elementwise, not invariant-based
    assert np.allclose(sw["double_invariants"], MAKHLIN_TARGETS["iswap"], atol=1e-6)


def test_criterion_09_truncation_stability(dc):
    f10 = transfer_fidelity(dc, n_fock=10)
    f20 = transfer_fidelity(dc, n_fock=20)
    diff = abs(f20 - f10)
    ok = diff < 1e-4
    _report("9", ok, f"F(10 levels)={f10:.9f}, F(20 levels)={f20:.9f}, "
                     f"|diff|={diff:.2e} (< 1e-4)")
    assert diff < 1e-4


def test_criterion_10_decoherence_grid_monotone():
    cfg = load_config(CONFIGS / "decoherence_sweep.toml")
    axes = cfg.sweep["axes"]
    names = [ax["param"] for ax in axes]
    grids = [list(map(float, ax["values"])) for ax in axes]
    run_kwargs = dict(model=cfg.model, n_fock=cfg.n_fock, m_fock=cfg.m_fock,
                      ramp_time=cfg.ramp_time, square=cfg.square,
                      sample_dt=cfg.sample_dt)
    device_table = cfg.raw["device"]
    derived_table = cfg.raw.get("derived", {})
    fids = np.empty((len(grids[0]), len(grids[1])))
    for i, v0 in enumerate(grids[0]):
        for j, v1 in enumerate(grids[1]):
            fids[i, j] = _sweep_cell((device_table, derived_table,
                                      cfg.coupling_overrides, names,
                                      (v0, v1), run_kwargs))
    slack = 1e-9
    worst0 = float(np.max(np.diff(fids, axis=0)))
    worst1 = float(np.max(np.diff(fids, axis=1)))
    ok = worst0 <= slack and worst1 <= slack
    _report("10", ok,
            f"10x10 grid over ({names[0]}, {names[1]}): F spans "
            f"[{fids.min():.4f}, {fids.max():.4f}], largest increase along "
            f"axis 0 = {worst0:.2e}, axis 1 = {worst1:.2e} (both <= {slack:.0e})")
    assert worst0 <= slack
    assert worst1 <= slack
