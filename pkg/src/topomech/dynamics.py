"""Pulse schedules and Lindblad-equation integration.

The integrator is a fixed-step classical Runge-Kutta (RK4) scheme on
the density matrix. The right-hand side is assembled in the folded form

    rhs(rho) = A rho + (A rho)^dagger + sum_i rate_i c_i rho c_i^dagger,
    A = -i H(t) - (1/2) sum_i rate_i c_i^dagger c_i,

which keeps every stage exactly Hermitian for Hermitian input, so no
re-hermitization or trace renormalization is ever applied. Structural
invariants (trace, hermiticity, positivity) are monitored at sample
instants and violations raise instead of being patched over.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .operators import (DensityMatrix, HilbertSpec, Operator, ladder,
                        qubit_ops, expectation)

# Step rule: h = 1 / (STEP_SCALE_FACTOR * stiffness_scale), capped by the
# sampling interval. Factor 50 puts h*|lambda_max| near 0.02, where the
# accumulated RK4 error over the protocols in use stays below 1e-8.
STEP_SCALE_FACTOR = 50.0

_SEGMENT_KINDS = ("constant", "ramp_up", "ramp_down")


class NumericalInvariantError(RuntimeError):
    """Integration produced a state violating a structural invariant."""


@dataclass(frozen=True)
class Segment:
    kind: str
    duration: float
    g_peak: float

    def __post_init__(self):
        if self.kind not in _SEGMENT_KINDS:
            raise ValueError(f"unknown segment kind {self.kind!r}")
        if self.duration < 0:
            raise ValueError(f"segment duration must be >= 0, got {self.duration}")

    @property
    def area(self) -> float:
        if self.kind == "constant":
            return self.g_peak * self.duration
        return 0.5 * self.g_peak * self.duration  # sin^2 ramp integrates to half

    def value(self, t_local: float) -> float:
        if self.kind == "constant":
            return self.g_peak
        if self.duration == 0.0:
            return self.g_peak if self.kind == "ramp_down" else 0.0
        x = t_local / self.duration
        if self.kind == "ramp_up":
            s = math.sin(0.5 * math.pi * x)
        else:
            s = math.cos(0.5 * math.pi * x)
        return self.g_peak * s * s


@dataclass(frozen=True)
class PulseSchedule:
    """Piecewise drive envelope g(t) with an exact target area.

    Built from the classmethods; the constructor checks that the
    analytic segment areas reproduce target_area to 1e-9 (absolute,
    relative for large areas), so a schedule object is always
    internally consistent.
    """

    segments: tuple
    target_area: float

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        a = sum(s.area for s in self.segments)
        tol = 1e-9 * max(1.0, abs(self.target_area))
        if abs(a - self.target_area) > tol:
            raise ValueError(
                f"segment areas sum to {a}, schedule promises {self.target_area}")

    @classmethod
    def square(cls, area: float, g_peak: float) -> "PulseSchedule":
        """Single constant segment of duration area/g_peak."""
        if area == 0.0:
            return cls(segments=(), target_area=0.0)
        if g_peak == 0.0 or area / g_peak <= 0.0:
            raise ValueError("area and g_peak must be nonzero with matching signs")
        return cls(segments=(Segment("constant", area / g_peak, g_peak),),
                   target_area=area)

    @classmethod
    def ramped(cls, area: float, g_peak: float, ramp_time: float = 2e-9) -> "PulseSchedule":
        """sin^2 ramp up, flat plateau, sin^2 ramp down.

        Each ramp contributes g_peak*ramp_time/2 of area, so the plateau
        lasts area/g_peak - ramp_time. If that would be negative the
        plateau is dropped and both ramps shrink to area/g_peak each,
        keeping the area exact.
        """
        if area == 0.0:
            return cls(segments=(), target_area=0.0)
        if g_peak == 0.0 or area / g_peak <= 0.0:
            raise ValueError("area and g_peak must be nonzero with matching signs")
        if ramp_time <= 0.0:
            return cls.square(area, g_peak)
        plateau = area / g_peak - ramp_time
        if plateau >= 0.0:
            segs = (Segment("ramp_up", ramp_time, g_peak),
                    Segment("constant", plateau, g_peak),
                    Segment("ramp_down", ramp_time, g_peak))
        else:
            tau = area / g_peak  # two half-area ramps, no plateau
            segs = (Segment("ramp_up", tau, g_peak),
                    Segment("ramp_down", tau, g_peak))
        return cls(segments=segs, target_area=area)

    @classmethod
    def hold(cls, duration: float) -> "PulseSchedule":
        """Zero drive for a fixed time (free evolution under the static part)."""
        if duration < 0:
            raise ValueError("hold duration must be >= 0")
        if duration == 0.0:
            return cls(segments=(), target_area=0.0)
        return cls(segments=(Segment("constant", duration, 0.0),), target_area=0.0)

    def with_peak_scale(self, scale: float) -> "PulseSchedule":
        """Same durations, every amplitude (and hence the area) scaled.

        This is how a miscalibrated drive is modeled: timing solved for
        the nominal amplitude, hardware delivering a different one.
        """
        segs = tuple(Segment(s.kind, s.duration, s.g_peak * scale) for s in self.segments)
        return PulseSchedule(segments=segs, target_area=self.target_area * scale)

    @property
    def total_duration(self) -> float:
        return sum(s.duration for s in self.segments)

    @property
    def edges(self) -> np.ndarray:
        """Cumulative segment end times, starting at 0."""
        out = [0.0]
        for s in self.segments:
            out.append(out[-1] + s.duration)
        return np.asarray(out)

    @property
    def max_peak(self) -> float:
        return max((abs(s.g_peak) for s in self.segments), default=0.0)

    def value(self, t: float) -> float:
        edges = self.edges
        if t <= 0.0:
            return self.segments[0].value(0.0) if self.segments else 0.0
        if t >= edges[-1]:
            return self.segments[-1].value(self.segments[-1].duration) if self.segments else 0.0
        i = int(np.searchsorted(edges, t, side="right")) - 1
        return self.segments[i].value(t - edges[i])


@dataclass(frozen=True, eq=False)
class LiouvillianSpec:
    """Static Hamiltonian, drive operator, and dissipator list.

    The drive enters the Hamiltonian as -g(t)/2 times drive_op, with
    g(t) supplied by the schedule at integration time. Dissipators are
    (rate, collapse operator) pairs in the convention
    D[c]rho = (2 c rho c^dag - c^dag c rho - rho c^dag c)/2.
    """

    space: HilbertSpec
    h_static: np.ndarray
    drive_op: Optional[np.ndarray]
    dissipators: tuple

    def __post_init__(self):
        n = self.space.total_dim
        h = np.ascontiguousarray(np.asarray(self.h_static, dtype=complex))
        if h.shape != (n, n):
            raise ValueError(f"h_static shape {h.shape} does not match dim {n}")
        if np.max(np.abs(h - h.conj().T)) > 1e-6 * max(1.0, float(np.max(np.abs(h)))):
            raise ValueError("h_static must be Hermitian")
        object.__setattr__(self, "h_static", h)
        if self.drive_op is not None:
            d = np.ascontiguousarray(np.asarray(self.drive_op, dtype=complex))
            if d.shape != (n, n):
                raise ValueError(f"drive_op shape {d.shape} does not match dim {n}")
            object.__setattr__(self, "drive_op", d)
        diss = []
        for rate, c in self.dissipators:
            rate = float(rate)
            if rate < 0 or not math.isfinite(rate):
                raise ValueError(f"dissipator rates must be finite and >= 0, got {rate}")
            c = np.ascontiguousarray(np.asarray(c, dtype=complex))
            if c.shape != (n, n):
                raise ValueError(f"collapse operator shape {c.shape} does not match dim {n}")
            if rate > 0.0:
                diss.append((rate, c))
        object.__setattr__(self, "dissipators", tuple(diss))

    @property
    def stiffness_scale(self) -> float:
        s = float(np.max(np.abs(self.h_static))) if self.h_static.size else 0.0
        dim = self.space.total_dim
        for rate, _c in self.dissipators:
            s = max(s, rate * dim)
        return s


def build_effective(dc, space: HilbertSpec, include_dissipation: bool = True) -> LiouvillianSpec:
    """Two-factor model: qubit (factor 0) and mechanical mode (factor 1).

    The controller is eliminated: its backaction survives as the qubit
    frequency shift delta_shift and the qubit relaxation channel at rate
    gamma_big_p, alongside the mechanical damping pair at gamma_r.
    """
    if len(space.factor_dims) != 2 or space.factor_dims[0] != 2:
        raise ValueError("effective model wants factor_dims = (2, n_fock)")
    q = qubit_ops(space, 0)
    a = ladder(space, 1).matrix
    ad = a.conj().T
    sm = q["sigma_minus"].matrix
    sp = q["sigma_plus"].matrix
    h = 0.5 * dc.delta_shift * q["sigma_z"].matrix
    drive = ad @ sm + a @ sp
    diss = ()
    if include_dissipation:
        diss = (
            (dc.gamma_r * (dc.n_r + 1.0), a),
            (dc.gamma_r * dc.n_r, ad),
            (dc.gamma_big_p * (dc.n_p + 1.0), sm),
            (dc.gamma_big_p * dc.n_p, sp),
        )
    return LiouvillianSpec(space=space, h_static=h, drive_op=drive, dissipators=diss)


def build_full(dc, space: HilbertSpec, include_dissipation: bool = True) -> LiouvillianSpec:
    """Three-factor model: qubit, mechanical mode, controller mode.

    Frame rotating at the qubit splitting, so the controller detuning
    omega_p - omega_t appears on its number operator and the
    qubit-controller exchange is static. No derived shift or derived
    qubit relaxation enters here; both must emerge dynamically.
    """
    if len(space.factor_dims) != 3 or space.factor_dims[0] != 2:
        raise ValueError("full model wants factor_dims = (2, n_fock, m_fock)")
    q = qubit_ops(space, 0)
    a = ladder(space, 1).matrix
    b = ladder(space, 2).matrix
    ad = a.conj().T
    bd = b.conj().T
    sm = q["sigma_minus"].matrix
    sp = q["sigma_plus"].matrix
    h = (dc.omega_p - dc.omega_t) * (bd @ b) - 0.5 * dc.g_prime * (b @ sp + bd @ sm)
    drive = ad @ sm + a @ sp
    diss = ()
    if include_dissipation:
        diss = (
            (dc.gamma_r * (dc.n_r + 1.0), a),
            (dc.gamma_r * dc.n_r, ad),
            (dc.gamma_p * (dc.n_p + 1.0), b),
            (dc.gamma_p * dc.n_p, bd),
        )
    return LiouvillianSpec(space=space, h_static=h, drive_op=drive, dissipators=diss)


@dataclass
class SimulationResult:
    """Sampled trajectory data plus the validated final state."""

    times: np.ndarray
    traces: dict
    final_state: DensityMatrix
    fidelity: Optional[float]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 1:
            raise ValueError("times must be a nonempty 1-d array")
        if np.any(np.diff(t) <= 0):
            raise ValueError("sample times must be strictly increasing")
        for name, series in self.traces.items():
            if len(series) != t.size:
                raise ValueError(f"trace {name!r} length does not match times")
        self.times = t

    def to_csv(self, path, real_columns: Sequence[str] = ()) -> None:
        """One row per sample. Columns named in real_columns are written
        as plain floats; everything else complex as re+imj literals."""
        real = set(real_columns)
        names = list(self.traces)
        with open(path, "w") as fh:
            fh.write(",".join(["t"] + names) + "\n")
            for i, t in enumerate(self.times):
                row = [f"{t:.12e}"]
                for name in names:
                    z = self.traces[name][i]
                    if name in real:
                        row.append(f"{np.real(z):.12e}")
                    else:
                        z = complex(z)
                        row.append(f"{z.real:.12e}{z.imag:+.12e}j")
                fh.write(",".join(row) + "\n")

    def to_json(self, path, config: Optional[dict] = None, version: str = "") -> None:
        pops = [float(x) for x in np.real(np.diag(self.final_state.matrix))]
        doc = {
            "version": version,
            "config": config if config is not None else {},
            "fidelity": self.fidelity,
            "final_populations": pops,
            "metadata": self.metadata,
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _check_state(m: np.ndarray, t: float) -> float:
    """Invariant monitor. Returns the trace deviation for bookkeeping."""
    tr_dev = abs(m.trace() - 1.0)
    if tr_dev > 1e-8:
        raise NumericalInvariantError(f"trace deviates by {tr_dev:.3e} at t={t:.3e}")
    herm = float(np.max(np.abs(m - m.conj().T)))
    if herm > 1e-9:
        raise NumericalInvariantError(f"hermiticity deviation {herm:.3e} at t={t:.3e}")
    lo = float(np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min())
    if lo < -1e-7:
        raise NumericalInvariantError(f"eigenvalue {lo:.3e} at t={t:.3e}")
    return tr_dev


def _rhs(m: np.ndarray, a_fold: np.ndarray, drive: Optional[np.ndarray],
         g_val: float, jumps: Sequence) -> np.ndarray:
    # A = a_fold + i*(g/2)*drive implements H_drive = -(g/2)*drive.
    # Both contributions are folded through (x + x^dag), so the output is
    # exactly Hermitian for Hermitian input even in floating point; a
    # bare c@m@cd would seed an ulp-scale asymmetric component whose
    # dynamics under this folded evaluation are not contractive.
    if drive is not None and g_val != 0.0:
        a = a_fold + (0.5j * g_val) * drive
    else:
        a = a_fold
    half = a @ m
    out = half + half.conj().T
    for rate, c, cd in jumps:
        j = c @ m @ cd
        out += (0.5 * rate) * (j + j.conj().T)
    return out


def _commutator_rhs(m: np.ndarray, a_fold: np.ndarray, drive: Optional[np.ndarray],
                    g_val: float, jumps: Sequence) -> np.ndarray:
    # Same generator applied to a general (non-Hermitian) matrix:
    # d m/dt = A m + m A^dag + sum rate c m c^dag. Used for propagator
    # reconstruction from matrix-unit initial conditions.
    if drive is not None and g_val != 0.0:
        a = a_fold + (0.5j * g_val) * drive
    else:
        a = a_fold
    out = a @ m + m @ a.conj().T
    for rate, c, cd in jumps:
        out += rate * (c @ m @ cd)
    return out


def _prepare(L: LiouvillianSpec):
    a_fold = -1j * L.h_static
    jumps = []
    for rate, c in L.dissipators:
        cd = c.conj().T
        a_fold = a_fold - 0.5 * rate * (cd @ c)
        jumps.append((rate, c, cd))
    return np.ascontiguousarray(a_fold), jumps


def _event_grid(schedule: PulseSchedule, sample_dt: Optional[float]):
    """Merged, deduplicated list of segment edges and sample instants.

    Returns (events, is_sample) with events[0] = 0 and events[-1] = T.
    Segment edges always land on step boundaries so the envelope stays
    smooth inside every RK4 step.
    """
    total = schedule.total_duration
    edges = [float(e) for e in schedule.edges]
    samples = [0.0, total]
    if sample_dt is not None and sample_dt > 0 and total > 0:
        n = int(math.floor(total / sample_dt + 1e-9))
        samples = [k * sample_dt for k in range(n + 1)]
        if total - samples[-1] > 1e-12 * max(total, 1.0):
            samples.append(total)
        else:
            samples[-1] = total
    tol = 1e-12 * max(total, 1.0)
    cands = [(e, False) for e in edges] + [(s, True) for s in samples]
    cands.sort()
    merged = []
    for t, flag in cands:
        if merged and t - merged[-1][0] <= tol:
            merged[-1] = (merged[-1][0], merged[-1][1] or flag)
        else:
            merged.append((t, flag))
    events = [m[0] for m in merged]
    is_sample = [m[1] for m in merged]
    if not events:
        events, is_sample = [0.0], [True]
    return events, is_sample


def _h_max(L: LiouvillianSpec, schedule: PulseSchedule, sample_dt: Optional[float],
           step_scale: float = STEP_SCALE_FACTOR) -> float:
    scale = max(L.stiffness_scale, schedule.max_peak)
    if scale <= 0.0:
        return sample_dt if (sample_dt and sample_dt > 0) else max(schedule.total_duration, 1.0)
    h = 1.0 / (step_scale * scale)
    if sample_dt is not None and sample_dt > 0:
        h = min(h, sample_dt)
    return h


def _rk4_span(rhs: Callable, m: np.ndarray, t0: float, t1: float, h_max: float,
              envelope: Callable[[float], float], a_fold, drive, jumps):
    span = t1 - t0
    if span <= 0:
        return m, 0
    n = max(1, int(math.ceil(span / h_max - 1e-12)))
    h = span / n
    t = t0
    for _ in range(n):
        g1 = envelope(t)
        gm = envelope(t + 0.5 * h)
        g2 = envelope(t + h)
        k1 = rhs(m, a_fold, drive, g1, jumps)
        k2 = rhs(m + 0.5 * h * k1, a_fold, drive, gm, jumps)
        k3 = rhs(m + 0.5 * h * k2, a_fold, drive, gm, jumps)
        k4 = rhs(m + h * k3, a_fold, drive, g2, jumps)
        m = m + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
    return m, n


def integrate(L: LiouvillianSpec, rho0: DensityMatrix, schedule: PulseSchedule,
              sample_dt: Optional[float] = None,
              observables: Optional[Mapping[str, np.ndarray]] = None,
              fidelity_op: Optional[np.ndarray] = None,
              step_scale: float = STEP_SCALE_FACTOR) -> SimulationResult:
    """Propagate rho0 through the schedule, sampling every sample_dt.

    observables maps trace names to matrices; each trace records
    tr(O rho) at the sample instants. fidelity_op, when given, adds a
    real-valued "fidelity" trace and fills SimulationResult.fidelity
    with its final value. Structural invariants are checked at every
    sample instant and a violation raises NumericalInvariantError.
    step_scale overrides the default step rule (larger means finer
    steps); it exists for convergence studies, not routine use.
    """
    if rho0.space.total_dim != L.space.total_dim:
        raise ValueError("initial state space does not match the Liouvillian")
    obs = dict(observables or {})
    a_fold, jumps = _prepare(L)
    h_max = _h_max(L, schedule, sample_dt, step_scale)
    events, is_sample = _event_grid(schedule, sample_dt)

    m = rho0.matrix.copy()
    times = []
    traces = {name: [] for name in obs}
    fid_trace = []
    max_tr_dev = 0.0
    n_steps = 0

    def record(t):
        nonlocal max_tr_dev
        max_tr_dev = max(max_tr_dev, _check_state(m, t))
        times.append(t)
        for name, op in obs.items():
            traces[name].append(expectation(m, op))
        if fidelity_op is not None:
            fid_trace.append(float(np.real(expectation(m, fidelity_op))))

    if is_sample[0]:
        record(events[0])
    for i in range(1, len(events)):
        m, n = _rk4_span(_rhs, m, events[i - 1], events[i], h_max,
                         schedule.value, a_fold, L.drive_op, jumps)
        n_steps += n
        if is_sample[i]:
            record(events[i])

    final = DensityMatrix(L.space, 0.5 * (m + m.conj().T))
    out_traces = {k: np.asarray(v) for k, v in traces.items()}
    fid = None
    if fidelity_op is not None:
        out_traces["fidelity"] = np.asarray(fid_trace)
        fid = fid_trace[-1]
    meta = {
        "n_steps": n_steps,
        "h_max": h_max,
        "trace_drift": max_tr_dev,
        "factor_dims": list(L.space.factor_dims),
        "schedule": [[s.kind, s.duration, s.g_peak] for s in schedule.segments],
        "target_area": schedule.target_area,
    }
    return SimulationResult(times=np.asarray(times), traces=out_traces,
                            final_state=final, fidelity=fid, metadata=meta)


def propagate_matrix(L: LiouvillianSpec, m0: np.ndarray,
                     schedule: PulseSchedule) -> np.ndarray:
    """Evolve an arbitrary matrix under the same generator.

    Linear in m0 with no hermiticity assumption, so matrix units
    |j><k| can be pushed through to reconstruct a closed-system
    propagator from density-matrix machinery alone. No sampling, no
    invariant checks (the input is generally not a state).
    """
    m = np.asarray(m0, dtype=complex).copy()
    a_fold, jumps = _prepare(L)
    h_max = _h_max(L, schedule, None)
    edges = [float(e) for e in schedule.edges]
    if len(edges) == 1:
        return m
    for i in range(1, len(edges)):
        m, _ = _rk4_span(_commutator_rhs, m, edges[i - 1], edges[i], h_max,
                         schedule.value, a_fold, L.drive_op, jumps)
    return m
