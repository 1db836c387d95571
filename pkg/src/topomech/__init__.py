"""Simulator for a hybrid topological-qubit / nanomechanical-resonator device."""

__version__ = "0.1.0"

from .device import (DeviceParams, DerivedCouplings, bose_occupation,
                     correlation_j, correlation_k, couplings, f0_inverse,
                     f0_squared, fermi_velocity, qubit_splitting,
                     splitting_derivative)
from .dynamics import (LiouvillianSpec, NumericalInvariantError, PulseSchedule,
                       SimulationResult, build_effective, build_full, integrate)
from .operators import (DensityMatrix, HilbertSpec, Operator, fidelity,
                        ladder, partial_trace, qubit_ops, tensor, thermal_state)
from .protocols import (controlled_phase, extract_unitary, makhlin_invariants,
                        run_entangle, run_state_transfer, sensitivity,
                        swap_check, transfer_fidelity)

__all__ = [
    "DeviceParams", "DerivedCouplings", "bose_occupation", "correlation_j",
    "correlation_k", "couplings", "f0_inverse", "f0_squared", "fermi_velocity",
    "qubit_splitting", "splitting_derivative",
    "LiouvillianSpec", "NumericalInvariantError", "PulseSchedule",
    "SimulationResult", "build_effective", "build_full", "integrate",
    "DensityMatrix", "HilbertSpec", "Operator", "fidelity", "ladder",
    "partial_trace", "qubit_ops", "tensor", "thermal_state",
    "controlled_phase", "extract_unitary", "makhlin_invariants", "run_entangle",
    "run_state_transfer", "sensitivity", "swap_check", "transfer_fidelity",
    "__version__",
]
