"""Two-qubit states, operators and entanglement measures.

Basis convention used everywhere in this package: the computational basis is
ordered (|gg>, |ge>, |eg>, |ee>) with the FIRST letter referring to qubit 1,
so qubit 1 is the most significant bit.  sigma_z|e> = +|e> and
sigma_minus|e> = |g>.  All operators are plain (4, 4) complex ndarrays.
"""

from __future__ import annotations

import numpy as np

BASIS_LABELS = ("gg", "ge", "eg", "ee")
GG, GE, EG, EE = 0, 1, 2, 3


def _frozen(a):
    a = np.asarray(a, dtype=complex)
    a.setflags(write=False)
    return a


# Single-qubit matrices in (g, e) order.
_SZ = np.diag([-1.0, 1.0]).astype(complex)
_SM = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)  # |g><e|
_ID = np.eye(2, dtype=complex)

SZ1 = _frozen(np.kron(_SZ, _ID))
SZ2 = _frozen(np.kron(_ID, _SZ))
SM1 = _frozen(np.kron(_SM, _ID))
SM2 = _frozen(np.kron(_ID, _SM))
SZ1SZ2 = _frozen(np.kron(_SZ, _SZ))

# PROJECTORS[x] = |x><x| for x in (gg, ge, eg, ee).
PROJECTORS = _frozen(np.stack([np.outer(e, e) for e in np.eye(4)]))

# Spin-flip matrix (sigma_y x sigma_y) entering the Wootters concurrence.
_YY = np.zeros((4, 4), dtype=complex)
_YY[GG, EE] = _YY[EE, GG] = -1.0
_YY[GE, EG] = _YY[EG, GE] = 1.0
YY = _frozen(_YY)


def pauli_ops() -> dict[str, np.ndarray]:
    """The full operator set keyed by name, projectors as proj_gg .. proj_ee."""
    ops = {"sz1": SZ1, "sz2": SZ2, "sm1": SM1, "sm2": SM2, "sz1sz2": SZ1SZ2}
    for x, label in enumerate(BASIS_LABELS):
        ops[f"proj_{label}"] = PROJECTORS[x]
    return ops


def basis_state(label: str) -> np.ndarray:
    """Computational basis ket for a two-letter label such as 'eg'."""
    ket = np.zeros(4, dtype=complex)
    ket[BASIS_LABELS.index(label)] = 1.0
    return ket


def phi_plus() -> np.ndarray:
    """Odd-parity Bell ket (|eg> + |ge>) / sqrt(2)."""
    return (basis_state("eg") + basis_state("ge")) / np.sqrt(2.0)


def phi_minus() -> np.ndarray:
    """Odd-parity Bell ket (|eg> - |ge>) / sqrt(2)."""
    return (basis_state("eg") - basis_state("ge")) / np.sqrt(2.0)


def psi_plus() -> np.ndarray:
    """Even-parity Bell ket (|gg> + |ee>) / sqrt(2)."""
    return (basis_state("gg") + basis_state("ee")) / np.sqrt(2.0)


def psi_minus() -> np.ndarray:
    """Even-parity Bell ket (|gg> - |ee>) / sqrt(2)."""
    return (basis_state("gg") - basis_state("ee")) / np.sqrt(2.0)


def product_plus() -> np.ndarray:
    """Unbiased product ket (|g> + |e>)(|g> + |e>) / 2."""
    return np.full(4, 0.5, dtype=complex)


def density(psi: np.ndarray) -> np.ndarray:
    """Rank-one density matrix |psi><psi| from a (normalized) ket."""
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def dissipator(c: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Lindblad dissipator D[c]rho = c rho c+ - {c+c, rho}/2."""
    cdc = c.conj().T @ c
    return c @ rho @ c.conj().T - 0.5 * (cdc @ rho + rho @ cdc)


def measurement_superop(c: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Homodyne back-action M[c]rho = {c, rho}/2 - Tr[c rho] rho.

    Defined for Hermitian c only; the operator is trace free and nonlinear
    in rho through the expectation-value subtraction.
    """
    c = np.asarray(c, dtype=complex)
    if not np.allclose(c, c.conj().T, atol=1e-12):
        raise ValueError("measurement_superop requires a Hermitian operator")
    return 0.5 * (c @ rho + rho @ c) - np.trace(c @ rho) * rho


def purity(rho: np.ndarray) -> float:
    return float(np.real(np.trace(rho @ rho)))


def fidelity(rho: np.ndarray, psi: np.ndarray) -> float:
    """Pure-state fidelity <psi|rho|psi>."""
    psi = np.asarray(psi, dtype=complex)
    return float(np.real(psi.conj() @ rho @ psi))


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Half the trace norm of (a - b) for Hermitian a, b."""
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(a - b))))


def concurrence(rho: np.ndarray) -> float:
    """Wootters concurrence of a two-qubit density matrix.

    C = max(0, r1 - r2 - r3 - r4) where the r_i are the square roots of
    the eigenvalues of rho (Y x Y) rho* (Y x Y) in decreasing order.
    Tiny negative eigenvalues from floating-point noise are clamped to 0.
    """
    rho = np.asarray(rho, dtype=complex)
    prod = rho @ YY @ rho.conj() @ YY
    eigs = np.linalg.eigvals(prod).real
    eigs[eigs < 0.0] = 0.0  # spectrum is nonnegative up to round-off
    roots = np.sort(np.sqrt(eigs))[::-1]
    return float(max(0.0, roots[0] - roots[1] - roots[2] - roots[3]))


def concurrence_batch(rhos: np.ndarray) -> np.ndarray:
    """Concurrence of a (..., 4, 4) stack of density matrices."""
    prod = rhos @ YY @ rhos.conj() @ YY
    eigs = np.linalg.eigvals(prod).real
    eigs[eigs < 0.0] = 0.0
    roots = np.sort(np.sqrt(eigs), axis=-1)[..., ::-1]
    c = roots[..., 0] - roots[..., 1] - roots[..., 2] - roots[..., 3]
    return np.maximum(c, 0.0)


def min_eigenvalue(rho: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(rho)[0].real)


def assert_density_matrix(
    rho: np.ndarray,
    trace_tol: float = 1e-9,
    herm_tol: float = 1e-12,
    eig_floor: float = -1e-6,
) -> None:
    """Raise ValueError naming the violated density-matrix invariant."""
    rho = np.asarray(rho)
    if rho.shape != (4, 4):
        raise ValueError(f"expected shape (4, 4), got {rho.shape}")
    tr = np.trace(rho)
    if abs(tr - 1.0) > trace_tol:
        raise ValueError(f"trace deviates from 1 by {abs(tr - 1.0):.3e}")
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > herm_tol:
        raise ValueError(f"Hermiticity violated by {herm:.3e}")
    lo = min_eigenvalue(0.5 * (rho + rho.conj().T))
    if lo < eig_floor:
        raise ValueError(f"minimum eigenvalue {lo:.3e} below {eig_floor:.0e}")
