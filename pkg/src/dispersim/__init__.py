"""Simulator for joint homodyne measurement of two dispersively coupled qubits."""

__version__ = "0.1.0"

from .model import (
    CavityAmplitudes,
    DriveProfile,
    MeasurementSnapshot,
    SystemParams,
    chi_table,
    derive_dispersive,
    homodyne_amplitude,
    information_rate,
    quadrature_components,
    snapshot,
    steady_alphas,
    steady_gamma11,
    step_alphas,
)
from .quantum import (
    BASIS_LABELS,
    basis_state,
    concurrence,
    density,
    fidelity,
    phi_minus,
    phi_plus,
    product_plus,
    psi_minus,
    psi_plus,
    purity,
    trace_distance,
)

__all__ = [
    "BASIS_LABELS",
    "CavityAmplitudes",
    "DriveProfile",
    "MeasurementSnapshot",
    "SystemParams",
    "basis_state",
    "chi_table",
    "concurrence",
    "density",
    "derive_dispersive",
    "fidelity",
    "homodyne_amplitude",
    "information_rate",
    "phi_minus",
    "phi_plus",
    "product_plus",
    "psi_minus",
    "psi_plus",
    "purity",
    "quadrature_components",
    "snapshot",
    "steady_alphas",
    "steady_gamma11",
    "step_alphas",
    "trace_distance",
    "__version__",
]
