"""Device physics for the hybrid topological-qubit / resonator system.

Everything in here is closed-form or root-finder work on plain floats:
the phase-dependent qubit splitting, the effective Fermi velocity, the
magnetic-coupling constants, thermal occupations, induced rates, and the
controller correlation spectra. No quantum operators, no time evolution.

All frequencies and rates are angular (rad/s) unless a name says
otherwise. Signs are kept: the couplings inherit the sign of the
splitting derivative at the working point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

HBAR = 1.054571817e-34        # J*s
PLANCK_H = 6.62607015e-34     # J*s
KB = 1.380649e-23             # J/K
FLUX_QUANTUM = PLANCK_H / (2 * 1.602176634e-19)  # superconducting Phi_0, Wb

_TWO_PI = 2.0 * math.pi


class ConvergenceError(RuntimeError):
    """Root finder exhausted its iteration budget."""


@dataclass(frozen=True)
class DeviceParams:
    """Physical constants of one device realization.

    delta0, omega_r, omega_p, gamma_p are angular (rad/s). Lengths in m,
    temperature in K, field_gradient in T/m. chem_potential is the
    dimensionless chemical-potential angle of the wire dispersion (the
    gap is nondimensionalized against surface_velocity / wire_width).
    Exactly one of zeta / ec_over_el selects the controller fluctuation
    amplitude: zeta directly, or via zeta = 2*sqrt(pi)*(E_C/E_L)^(1/4).
    """

    delta0: float
    wire_length: float
    wire_width: float
    chem_potential: float
    surface_velocity: float
    loop_area: float
    field_gradient: float
    zero_point_amp: float
    omega_r: float
    omega_p: float
    gamma_p: float
    quality_factor: float
    temperature: float
    theta_on: float
    theta_off: float
    zeta: Optional[float] = None
    ec_over_el: Optional[float] = None
    fermi_velocity_override: Optional[float] = None

    def __post_init__(self):
        positive = [
            ("delta0", self.delta0), ("wire_length", self.wire_length),
            ("wire_width", self.wire_width),
            ("surface_velocity", self.surface_velocity),
            ("loop_area", self.loop_area),
            ("field_gradient", self.field_gradient),
            ("zero_point_amp", self.zero_point_amp),
            ("omega_r", self.omega_r), ("omega_p", self.omega_p),
            ("gamma_p", self.gamma_p), ("temperature", self.temperature),
        ]
        for name, value in positive:
            if not value > 0.0:
                raise ValueError(f"{name} must be strictly positive, got {value}")
        if self.quality_factor < 1.0:
            raise ValueError(f"quality_factor must be >= 1, got {self.quality_factor}")
        if not (0.0 < self.theta_on < self.theta_off < _TWO_PI):
            raise ValueError(
                "working points must satisfy 0 < theta_on < theta_off < 2*pi, "
                f"got theta_on={self.theta_on}, theta_off={self.theta_off}")
        if (self.zeta is None) == (self.ec_over_el is None):
            raise ValueError("exactly one of zeta / ec_over_el must be supplied")
        if self.fermi_velocity_override is not None and self.fermi_velocity_override <= 0:
            raise ValueError("fermi_velocity_override must be positive when given")

    @property
    def zeta_value(self) -> float:
        if self.zeta is not None:
            return self.zeta
        return 2.0 * math.sqrt(math.pi) * self.ec_over_el ** 0.25


@dataclass(frozen=True)
class DerivedCouplings:
    """Computed operating-point quantities.

    omega_p and gamma_p are carried through from the device so that the
    downstream full-model builder needs only this object.
    """

    omega_t: float
    g: float
    g_prime: float
    xi: float
    n_p: float
    n_r: float
    delta_shift: float
    gamma_big_p: float
    gamma_r: float
    gamma_w: float
    omega_p: float
    gamma_p: float

    def __post_init__(self):
        if self.omega_t <= 0:
            raise ValueError(f"omega_t must be positive, got {self.omega_t}")
        for name in ("n_p", "n_r", "delta_shift", "gamma_big_p", "gamma_r"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not 0.0 <= self.gamma_w <= 1.0:
            raise ValueError(f"gamma_w must lie in [0, 1], got {self.gamma_w}")


def _bisect_newton(f, df, lo, hi, bracket_tol=1e-13, newton_steps=3, max_iter=200):
    """Bisect [lo, hi] down to bracket_tol, then polish with Newton.

    The bracket endpoints must straddle the root. Deterministic; raises
    ConvergenceError if the bisection budget runs out before the bracket
    shrinks to bracket_tol.
    """
    flo = f(lo)
    fhi = f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0.0:
        raise ValueError(f"root not bracketed on [{lo}, {hi}]")
    it = 0
    while hi - lo > bracket_tol:
        it += 1
        if it > max_iter:
            raise ConvergenceError(
                f"bisection stalled: bracket [{lo}, {hi}] after {max_iter} iterations")
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if flo * fm < 0.0:
            hi, fhi = mid, fm
        else:
            lo, flo = mid, fm
    x = 0.5 * (lo + hi)
    for _ in range(newton_steps):
        d = df(x)
        if d == 0.0:
            break
        x = x - f(x) / d
    return x


def f0_inverse(y: float) -> float:
    """Inverse of y = x/tan(x) on the branch x in (0, pi).

    On this branch x/tan(x) falls monotonically from 1 (at x -> 0)
    toward -inf (at x -> pi), so any y <= 1 has a unique preimage.
    y > 1 has no real solution here; callers wanting the analytic
    continuation use f0_squared.
    """
    if y > 1.0:
        raise ValueError(f"f0_inverse requires y <= 1, got {y} (use f0_squared)")
    if y == 1.0:
        return 0.0
    if y == 0.0:
        return 0.5 * math.pi

    def f(x):
        return x / math.tan(x) - y

    def df(x):
        s = math.sin(x)
        return 1.0 / math.tan(x) - x / (s * s)

    lo = 1e-12
    hi = math.pi - 1e-6
    # push hi toward pi until the bracket straddles (x/tan x -> -inf there)
    while f(hi) > 0.0:
        hi = math.pi - (math.pi - hi) * 0.1
        if math.pi - hi < 1e-15:
            raise ConvergenceError(f"could not bracket f0_inverse({y})")
    return _bisect_newton(f, df, lo, hi)


def _kappa_root(y: float) -> float:
    """Solve kappa/tanh(kappa) = y for y > 1 (kappa > 0)."""
    if y <= 1.0:
        raise ValueError(f"kappa branch requires y > 1, got {y}")

    def f(k):
        return k / math.tanh(k) - y

    def df(k):
        if k > 300.0:
            return 1.0  # sinh overflows; tanh is 1 to machine precision
        s = math.sinh(k)
        return 1.0 / math.tanh(k) - k / (s * s)

    return _bisect_newton(f, df, 1e-12, y + 1.0)


def f0_squared(y: float) -> float:
    """Signed square of the splitting inverse function, total on reals.

    For y <= 1 this is f0_inverse(y)**2 >= 0. For y > 1 the solution
    continues as x = i*kappa with kappa/tanh(kappa) = y, giving the
    negative value -kappa**2. Continuous through y = 1 with value 0.
    """
    if y == 1.0:
        return 0.0
    if y > 1.0:
        k = _kappa_root(y)
        return -k * k
    x = f0_inverse(y)
    return x * x


def fermi_velocity(p: DeviceParams) -> float:
    """Effective wire Fermi velocity in m/s.

    If fermi_velocity_override is set it is returned unchanged (the
    operating points in common use tune the chemical potential to hit a
    target velocity, so the override is the primary path). Otherwise the
    dimensionless dispersion formula is evaluated with the gap measured
    against surface_velocity/wire_width and chem_potential doubling as
    the phase angle. chem_potential = 0 takes the exact analytic limit
    rather than dividing by zero.
    """
    if p.fermi_velocity_override is not None:
        return p.fermi_velocity_override
    d0t = p.delta0 * p.wire_width / p.surface_velocity
    mt = p.chem_potential
    if mt == 0.0:
        return p.surface_velocity * (1.0 + d0t)
    bracket = math.cos(mt) + (d0t / mt) * math.sin(mt)
    vf = p.surface_velocity * bracket * d0t * d0t / (mt * mt + d0t * d0t)
    if vf <= 0.0:
        raise ValueError(
            "dispersion parameters give a nonpositive wire velocity "
            f"({vf:.6g} m/s); set fermi_velocity_override or retune "
            "chem_potential"
        )
    return vf


def qubit_splitting(theta: float, p: DeviceParams) -> float:
    """Qubit energy splitting E(theta) in rad/s.

    E = (v_F/L) * sqrt(lam^2 + f0_squared(lam)) with
    lam = (delta0*L/v_F)*sin(theta/2). Past lam = 1 the square root is
    evaluated as lam/cosh(kappa), which is algebraically identical but
    avoids the catastrophic cancellation lam^2 - kappa^2 that sets in
    once the splitting is exponentially suppressed.
    """
    if not 0.0 <= theta <= _TWO_PI:
        raise ValueError(f"theta must lie in [0, 2*pi], got {theta}")
    vf = fermi_velocity(p)
    lam = (p.delta0 * p.wire_length / vf) * math.sin(0.5 * theta)
    scale = vf / p.wire_length
    if lam > 1.0:
        k = _kappa_root(lam)
        if k > 700.0:
            return 0.0  # cosh overflow; splitting below double-precision range
        return scale * lam / math.cosh(k)
    s = lam * lam + f0_squared(lam)
    return scale * math.sqrt(max(s, 0.0))


def splitting_derivative(theta: float, p: DeviceParams) -> float:
    """dE/dtheta at theta, in rad/s per rad.

    Central difference with step 1e-6 rad plus one Richardson
    extrapolation step. The implicit root solve inside E makes an
    analytic derivative unattractive; the extrapolated stencil is good
    to better than 1e-6 relative away from the endpoints.
    """
    h = 1e-6
    h = min(h, 0.5 * theta if theta > 0 else h, 0.5 * (_TWO_PI - theta) if theta < _TWO_PI else h)
    if h <= 0.0:
        raise ValueError("derivative undefined at the domain endpoints")

    def central(step):
        return (qubit_splitting(theta + step, p) - qubit_splitting(theta - step, p)) / (2.0 * step)

    d_h = central(h)
    d_h2 = central(0.5 * h)
    return (4.0 * d_h2 - d_h) / 3.0


def bose_occupation(omega: float, temperature: float) -> float:
    """Mean thermal quanta of a mode at angular frequency omega."""
    if omega <= 0 or temperature <= 0:
        raise ValueError("bose_occupation needs omega > 0 and temperature > 0")
    return 1.0 / math.expm1(HBAR * omega / (KB * temperature))


def couplings(p: DeviceParams, overrides: Optional[dict] = None) -> DerivedCouplings:
    """Evaluate the full derived-quantity chain at theta_on.

    overrides may pin any of {"omega_t", "g", "g_prime"} (rad/s) after
    the chain runs; the dependent rates (delta_shift, gamma_big_p) are
    recomputed from the pinned values. This is how simulation fixtures
    stated directly in terms of (g, g') are expressed without bypassing
    the device layer.

    Conventions fixed here: gamma_r = (omega_r/2pi)/Q_r, i.e. the
    quality factor divides the cyclic frequency; gamma_w uses the
    Planck-constant normalization exp(-h*v_F/(k_B*T*L)), which makes the
    exponent dimensionless and reproduces the design-level suppression
    estimate at millikelvin temperatures.
    """
    vf = fermi_velocity(p)
    omega_t = qubit_splitting(p.theta_on, p)
    de = splitting_derivative(p.theta_on, p)
    xi = _TWO_PI * p.loop_area * p.field_gradient * p.zero_point_amp / FLUX_QUANTUM
    zeta = p.zeta_value
    g = xi / math.sqrt(2.0) * de
    g_prime = zeta / math.sqrt(2.0) * de

    if overrides:
        unknown = set(overrides) - {"omega_t", "g", "g_prime"}
        if unknown:
            raise ValueError(f"unknown coupling overrides: {sorted(unknown)}")
        omega_t = overrides.get("omega_t", omega_t)
        g = overrides.get("g", g)
        g_prime = overrides.get("g_prime", g_prime)

    n_p = bose_occupation(p.omega_p, p.temperature)
    n_r = bose_occupation(p.omega_r, p.temperature)
    delta_shift = p.gamma_p * g_prime * g_prime / (2.0 * p.omega_p * p.omega_p)
    gamma_big_p = 2.0 * p.gamma_p ** 2 * omega_t * g_prime ** 2 / p.omega_p ** 4
    gamma_r = (p.omega_r / _TWO_PI) / p.quality_factor
    gamma_w = math.exp(-PLANCK_H * vf / (KB * p.temperature * p.wire_length))
    return DerivedCouplings(
        omega_t=omega_t, g=g, g_prime=g_prime, xi=xi, n_p=n_p, n_r=n_r,
        delta_shift=delta_shift, gamma_big_p=gamma_big_p, gamma_r=gamma_r,
        gamma_w=gamma_w, omega_p=p.omega_p, gamma_p=p.gamma_p)


def correlation_j_raw(omega_t: float, omega_p: float, gamma_p: float, n_p: float) -> complex:
    """Emission-side controller spectrum, closed form (complex rate)."""
    if gamma_p <= 0:
        raise ValueError("correlation functions need gamma_p > 0")
    pref = gamma_p * (n_p + 1.0) / (2.0 * omega_p)
    return pref * (1.0 / (1j * omega_t + 1j * omega_p - 0.5 * gamma_p)
                   - 1.0 / (1j * omega_t - 1j * omega_p - 0.5 * gamma_p))


def correlation_k_raw(omega_t: float, omega_p: float, gamma_p: float, n_p: float) -> complex:
    """Absorption-side controller spectrum, closed form (complex rate)."""
    if gamma_p <= 0:
        raise ValueError("correlation functions need gamma_p > 0")
    pref = gamma_p * n_p / (2.0 * omega_p)
    return pref * (1.0 / (-1j * omega_t + 1j * omega_p - 0.5 * gamma_p)
                   - 1.0 / (-1j * omega_t - 1j * omega_p - 0.5 * gamma_p))


def correlation_j(omega_t: float, p: DeviceParams) -> complex:
    return correlation_j_raw(omega_t, p.omega_p, p.gamma_p,
                             bose_occupation(p.omega_p, p.temperature))


def correlation_k(omega_t: float, p: DeviceParams) -> complex:
    return correlation_k_raw(omega_t, p.omega_p, p.gamma_p,
                             bose_occupation(p.omega_p, p.temperature))
