"""Finite-dimensional operator algebra on tensor-product spaces.

Dense numpy matrices throughout. Factor ordering is fixed row-major:
the first factor varies slowest, so for a (qubit, mode) space the basis
index of |q, n> is q*dim_mode + n. Qubit basis index 0 is the rotated
down state and index 1 the rotated up state; sigma_minus maps up to
down, and sigma_z = diag(-1, +1) in this ordering.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

MAX_TOTAL_DIM = 4096

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-9
EIGENVALUE_FLOOR = -1e-8


class StateValidationError(ValueError):
    """A density matrix violated one of its structural invariants."""


@dataclass(frozen=True)
class HilbertSpec:
    """Dimensions of the tensor factors, in fixed row-major order."""

    factor_dims: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.factor_dims)
        object.__setattr__(self, "factor_dims", dims)
        if not dims:
            raise ValueError("HilbertSpec needs at least one factor")
        for d in dims:
            if d < 1:
                raise ValueError(f"factor dimensions must be >= 1, got {dims}")
        if self.total_dim > MAX_TOTAL_DIM:
            raise ValueError(
                f"total dimension {self.total_dim} exceeds the supported "
                f"maximum {MAX_TOTAL_DIM}")

    @property
    def total_dim(self) -> int:
        out = 1
        for d in self.factor_dims:
            out *= d
        return out


@dataclass(frozen=True)
class Operator:
    space: HilbertSpec
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        n = self.space.total_dim
        if m.shape != (n, n):
            raise ValueError(f"operator shape {m.shape} does not match space dim {n}")
        object.__setattr__(self, "matrix", m)

    def dagger(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T)


@dataclass(frozen=True)
class DensityMatrix:
    """Validated quantum state: Hermitian, unit trace, eigenvalues >= floor."""

    space: HilbertSpec
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        n = self.space.total_dim
        if m.shape != (n, n):
            raise ValueError(f"state shape {m.shape} does not match space dim {n}")
        herm = np.max(np.abs(m - m.conj().T))
        if herm > HERMITICITY_TOL:
            raise StateValidationError(f"hermiticity deviation {herm:.3e} exceeds {HERMITICITY_TOL}")
        tr = m.trace()
        if abs(tr - 1.0) > TRACE_TOL:
            raise StateValidationError(f"trace deviates from 1 by {abs(tr - 1.0):.3e}")
        lo = float(np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min())
        if lo < EIGENVALUE_FLOOR:
            raise StateValidationError(f"minimum eigenvalue {lo:.3e} below floor {EIGENVALUE_FLOOR}")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_pure(cls, space: HilbertSpec, psi: np.ndarray) -> "DensityMatrix":
        v = np.asarray(psi, dtype=complex).reshape(-1)
        if v.shape[0] != space.total_dim:
            raise ValueError("state vector length does not match space")
        nrm = np.linalg.norm(v)
        if abs(nrm - 1.0) > 1e-9:
            raise StateValidationError(f"pure state norm {nrm} is not 1")
        return cls(space, np.outer(v, v.conj()))


def _embed(space: HilbertSpec, factor: int, local: np.ndarray) -> np.ndarray:
    dims = space.factor_dims
    if not 0 <= factor < len(dims):
        raise ValueError(f"factor index {factor} out of range for {dims}")
    if local.shape != (dims[factor], dims[factor]):
        raise ValueError(f"local operator shape {local.shape} does not match factor dim {dims[factor]}")
    out = np.eye(1, dtype=complex)
    for i, d in enumerate(dims):
        out = np.kron(out, local if i == factor else np.eye(d, dtype=complex))
    return out


def ladder(space: HilbertSpec, factor: int) -> Operator:
    """Annihilation operator of one bosonic factor, embedded in the full space."""
    d = space.factor_dims[factor]
    a = np.diag(np.sqrt(np.arange(1, d, dtype=float)), 1).astype(complex)
    return Operator(space, _embed(space, factor, a))


def qubit_ops(space: HilbertSpec, factor: int = 0) -> dict:
    """sigma_minus, sigma_plus, sigma_z of a two-level factor.

    Index 0 is the rotated down state, index 1 the rotated up state, so
    sigma_minus = |down><up| has its single 1 at row 0, column 1, and
    sigma_z = diag(-1, +1).
    """
    if space.factor_dims[factor] != 2:
        raise ValueError("qubit_ops requires a dimension-2 factor")
    sm = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
    sz = np.diag([-1.0, 1.0]).astype(complex)
    return {
        "sigma_minus": Operator(space, _embed(space, factor, sm)),
        "sigma_plus": Operator(space, _embed(space, factor, sm.conj().T)),
        "sigma_z": Operator(space, _embed(space, factor, sz)),
    }


def tensor(ops: Sequence[Operator]) -> Operator:
    """Kronecker product of operators on disjoint spaces, in the given order."""
    if not ops:
        raise ValueError("tensor of zero operators is undefined")
    dims = ()
    m = np.eye(1, dtype=complex)
    for op in ops:
        dims = dims + op.space.factor_dims
        m = np.kron(m, op.matrix)
    return Operator(HilbertSpec(dims), m)


def partial_trace(rho: DensityMatrix, keep: Iterable[int]) -> DensityMatrix:
    """Trace out every factor not listed in keep.

    keep is a set of factor indices; the surviving factors stay in their
    original order.
    """
    dims = rho.space.factor_dims
    n = len(dims)
    keep_sorted = sorted(set(int(k) for k in keep))
    for k in keep_sorted:
        if not 0 <= k < n:
            raise ValueError(f"keep index {k} out of range for {dims}")
    if not keep_sorted:
        raise ValueError("must keep at least one factor")
    arr = rho.matrix.reshape(dims + dims)
    drop = [i for i in range(n) if i not in keep_sorted]
    live = n
    for i in sorted(drop, reverse=True):
        arr = np.trace(arr, axis1=i, axis2=i + live)
        live -= 1
    new_space = HilbertSpec(tuple(dims[i] for i in keep_sorted))
    d = new_space.total_dim
    return DensityMatrix(new_space, arr.reshape(d, d))


def fidelity(rho: DensityMatrix, target: np.ndarray) -> float:
    """Overlap <psi|rho|psi> with a normalized pure target."""
    v = np.asarray(target, dtype=complex).reshape(-1)
    if v.shape[0] != rho.space.total_dim:
        raise ValueError("target length does not match state space")
    nrm = np.linalg.norm(v)
    if abs(nrm - 1.0) > 1e-9:
        raise ValueError(f"target must be normalized, norm is {nrm}")
    return float(np.real(v.conj() @ rho.matrix @ v))


def thermal_state(space: HilbertSpec, factor: int, n_occupation: float) -> DensityMatrix:
    """Product state: one factor thermal at mean occupation, the rest in ground.

    The geometric weights p_n proportional to (N/(N+1))^n are normalized
    over the truncated factor dimension, so the realized mean occupation
    sits slightly below N when the tail is clipped.
    """
    if n_occupation < 0:
        raise ValueError("mean occupation must be >= 0")
    dims = space.factor_dims
    blocks = []
    for i, d in enumerate(dims):
        if i == factor:
            if n_occupation == 0.0:
                w = np.zeros(d)
                w[0] = 1.0
            else:
                r = n_occupation / (n_occupation + 1.0)
                w = r ** np.arange(d, dtype=float)
                w = w / w.sum()
            blocks.append(np.diag(w).astype(complex))
        else:
            ground = np.zeros((d, d), dtype=complex)
            ground[0, 0] = 1.0
            blocks.append(ground)
    m = np.eye(1, dtype=complex)
    for b in blocks:
        m = np.kron(m, b)
    return DensityMatrix(space, m)


def expectation(rho_matrix: np.ndarray, op_matrix: np.ndarray) -> complex:
    """tr(op @ rho) without any state validation (hot path helper)."""
    return complex(np.einsum("ij,ji->", op_matrix, rho_matrix))
