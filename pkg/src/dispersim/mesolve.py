"""Deterministic solvers.

evolve_me integrates the reduced two-qubit master equation (intrinsic
relaxation and dephasing, collective decay through the cavity, and the
amplitude-derived dephasing/ac-Stark kernel), co-integrating the cavity
amplitudes with the state in one RK4 loop so the kernel is sampled at the
stage times.

evolve_full_oracle integrates the unreduced qubits-plus-cavity master
equation on a truncated Fock space.  It exists as an independent
cross-check of the reduction and shares no rate code with evolve_me.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import model, quantum
from .model import CavityAmplitudes, SystemParams

POSITIVITY_FLOOR = -1e-7
TRACE_TOL = 1e-8


def reduced_channels(params: SystemParams, include_purcell: bool = True):
    """Static collapse channels as (rate, operator) pairs.

    Individual relaxation at gamma1_j, pure dephasing at gamma_phi_j / 2,
    and, when include_purcell is set, collective decay through the cavity
    with operator sum_j lambda_j sigma_minus_j at rate kappa.
    """
    channels = [
        (params.gamma1[0], quantum.SM1),
        (params.gamma1[1], quantum.SM2),
        (params.gamma_phi[0] / 2.0, quantum.SZ1),
        (params.gamma_phi[1] / 2.0, quantum.SZ2),
    ]
    if include_purcell:
        lam = params.lambdas
        channels.append((params.kappa, lam[0] * quantum.SM1 + lam[1] * quantum.SM2))
    return [(rate, c) for rate, c in channels if rate > 0.0]


def apply_liouvillian(
    rho: np.ndarray,
    snap: model.MeasurementSnapshot,
    params: SystemParams,
    include_purcell: bool = True,
) -> np.ndarray:
    """Right-hand side of the reduced master equation at one instant.

    The amplitude-derived part acts entrywise: drho_xy gains
    (Gamma_d^xy - i A_c^xy) rho_xy, with Gamma_d <= 0 off the diagonal.
    """
    out = (snap.Gamma_d - 1j * snap.A_c) * rho
    for rate, c in reduced_channels(params, include_purcell):
        out += rate * quantum.dissipator(c, rho)
    return out


@dataclass
class MeSolution:
    """Stored grid of a deterministic run."""

    times: np.ndarray   # (n,)
    rhos: np.ndarray    # (n, 4, 4) complex
    alphas: np.ndarray  # (n, 4) complex
    params: SystemParams

    def photon_number(self) -> np.ndarray:
        """Reduced-model intracavity photon estimate sum_x rho_xx |alpha_x|^2."""
        pops = np.einsum("nii->ni", self.rhos).real
        return np.sum(pops * np.abs(self.alphas) ** 2, axis=1)

    def fidelity_to(self, psi: np.ndarray) -> np.ndarray:
        return np.einsum("i,nij,j->n", psi.conj(), self.rhos, psi).real


def _me_derivative(rho, alpha, t, params, channels, chix):
    dalpha = (
        -1j * (params.delta_r + chix) * alpha
        - 1j * params.drive.amplitude(t)
        - 0.5 * params.kappa * alpha
    )
    prod = alpha[:, None] * alpha[None, :].conj()
    dchi = chix[:, None] - chix[None, :]
    kernel = dchi * prod.imag - 1j * (dchi * prod.real)
    drho = kernel * rho
    for rate, c in channels:
        drho = drho + rate * quantum.dissipator(c, rho)
    return drho, dalpha


def evolve_me(
    params: SystemParams,
    rho0: np.ndarray,
    t_final: float,
    dt: float | None = None,
    store_every: int | None = None,
    include_purcell: bool = True,
    alpha0: np.ndarray | None = None,
) -> MeSolution:
    """Integrate the reduced master equation with fixed-step RK4.

    The four cavity amplitudes are advanced inside the same RK4 stages as
    the state.  Every step the state is checked for trace and positivity;
    a violation beyond POSITIVITY_FLOOR aborts with the offending time.
    """
    if dt is None:
        dt = 1e-3 / params.kappa
    if dt <= 0 or t_final <= 0:
        raise ValueError("dt and t_final must be positive")
    n_steps = int(round(t_final / dt))
    if store_every is None:
        store_every = max(1, n_steps // 400)

    rho = np.array(rho0, dtype=complex)
    quantum.assert_density_matrix(rho)
    alpha = (
        np.zeros(4, dtype=complex) if alpha0 is None else np.asarray(alpha0, dtype=complex)
    )
    chix = model.chi_table(params)
    channels = reduced_channels(params, include_purcell)
    guard = max(10.0 * 2.0 * abs(params.drive.eps) / params.kappa,
                2.0 * float(np.max(np.abs(alpha))), 1e-9)

    times, rhos, alphas = [0.0], [rho.copy()], [alpha.copy()]
    t = 0.0
    for k in range(n_steps):
        k1r, k1a = _me_derivative(rho, alpha, t, params, channels, chix)
        k2r, k2a = _me_derivative(
            rho + 0.5 * dt * k1r, alpha + 0.5 * dt * k1a, t + 0.5 * dt, params, channels, chix
        )
        k3r, k3a = _me_derivative(
            rho + 0.5 * dt * k2r, alpha + 0.5 * dt * k2a, t + 0.5 * dt, params, channels, chix
        )
        k4r, k4a = _me_derivative(
            rho + dt * k3r, alpha + dt * k3a, t + dt, params, channels, chix
        )
        rho = rho + (dt / 6.0) * (k1r + 2 * k2r + 2 * k3r + k4r)
        alpha = alpha + (dt / 6.0) * (k1a + 2 * k2a + 2 * k3a + k4a)
        t = (k + 1) * dt

        if np.max(np.abs(alpha)) > guard:
            raise RuntimeError(f"cavity amplitude integration unstable at t = {t:.6g}")
        tr = rho.trace().real
        if abs(tr - 1.0) > TRACE_TOL:
            raise RuntimeError(f"trace drifted to {tr:.12f} at t = {t:.6g}")
        if np.linalg.eigvalsh(rho)[0] < POSITIVITY_FLOOR:
            raise RuntimeError(
                f"state positivity violated at t = {t:.6g} "
                f"(min eigenvalue {np.linalg.eigvalsh(rho)[0]:.3e}); reduce dt"
            )
        if (k + 1) % store_every == 0 or k + 1 == n_steps:
            times.append(t)
            rhos.append(rho.copy())
            alphas.append(alpha.copy())

    return MeSolution(
        times=np.array(times), rhos=np.array(rhos), alphas=np.array(alphas), params=params
    )


@dataclass
class OracleSolution:
    """Stored grid of a full-cavity run, with the qubit reduction precomputed."""

    times: np.ndarray          # (n,)
    rhos_reduced: np.ndarray   # (n, 4, 4) qubit state after tracing out the cavity
    photon_number: np.ndarray  # (n,)
    top_fock_max: float        # max occupancy seen in the highest Fock level
    fock_cutoff: int
    rho_full_final: np.ndarray


def default_fock_cutoff(params: SystemParams) -> int:
    """Truncation sized to the steady coherent amplitude: 4 (2 eps/kappa)^2 + 10."""
    return int(np.ceil(4.0 * (2.0 * abs(params.drive.eps) / params.kappa) ** 2 + 10))


def evolve_full_oracle(
    params: SystemParams,
    rho0_qubits: np.ndarray,
    t_final: float,
    fock_cutoff: int | None = None,
    dt: float = 2e-4,
    store_every: int | None = None,
    include_purcell: bool = False,
) -> OracleSolution:
    """Integrate the qubits-plus-cavity master equation with fixed-step RK4.

    The Hamiltonian is the dispersive-frame joint model: cavity detuning and
    per-state pull on the photon number, plus the measurement drive.  Decay
    channels are cavity loss at kappa, intrinsic qubit relaxation and
    dephasing, and optionally the same by-hand collective cavity-mediated
    decay the reduced equation carries (off by default, so the default
    compares the reduction against the bare joint model).

    The cavity starts in vacuum.  Occupancy of the top Fock level is tracked
    and a warning is issued if it ever exceeds 1e-6.
    """
    if fock_cutoff is None:
        fock_cutoff = default_fock_cutoff(params)
    if fock_cutoff < 2:
        raise ValueError("fock_cutoff must be at least 2")
    n_f = fock_cutoff
    dim = 4 * n_f
    n_steps = int(round(t_final / dt))
    if store_every is None:
        store_every = max(1, n_steps // 200)

    quantum.assert_density_matrix(np.asarray(rho0_qubits, dtype=complex))
    a_f = np.diag(np.sqrt(np.arange(1, n_f)), k=1)
    n_f_op = a_f.T @ a_f
    eye_f = np.eye(n_f)
    eye4 = np.eye(4)
    a_full = np.kron(eye4, a_f)
    x_full = np.kron(eye4, a_f + a_f.T)
    chix = model.chi_table(params)
    h_static = np.kron(np.diag(params.delta_r + chix), n_f_op)

    jumps = [(params.kappa, a_full)]
    for rate, c in reduced_channels(params, include_purcell=False):
        jumps.append((rate, np.kron(c, eye_f)))
    if include_purcell:
        lam = params.lambdas
        jumps.append(
            (params.kappa, np.kron(lam[0] * quantum.SM1 + lam[1] * quantum.SM2, eye_f))
        )

    # non-Hermitian drift G(t) = -iH(t) - (1/2) sum_k rate_k c_k^dag c_k
    damp = np.zeros((dim, dim), dtype=complex)
    for rate, c in jumps:
        damp += 0.5 * rate * (c.conj().T @ c)
    g_static = -1j * h_static - damp
    jump_ops = [(rate, c) for rate, c in jumps]

    def deriv(rho, t):
        g = g_static - 1j * params.drive.amplitude(t) * x_full
        out = g @ rho + rho @ g.conj().T
        for rate, c in jump_ops:
            out += rate * (c @ rho @ c.conj().T)
        return out

    rho = np.zeros((dim, dim), dtype=complex)
    vac = np.zeros((n_f, n_f))
    vac[0, 0] = 1.0
    rho[:, :] = np.kron(np.asarray(rho0_qubits, dtype=complex), vac)

    def reduce_qubits(r):
        return r.reshape(4, n_f, 4, n_f).trace(axis1=1, axis2=3)

    def photon(r):
        return np.einsum("ij,ji->", a_full.conj().T @ a_full, r).real

    def top_occ(r):
        idx = np.arange(4) * n_f + (n_f - 1)
        return float(np.sum(np.real(r[idx, idx])))

    times, rhos_red, photons = [0.0], [reduce_qubits(rho)], [photon(rho)]
    top_max = top_occ(rho)
    t = 0.0
    for k in range(n_steps):
        k1 = deriv(rho, t)
        k2 = deriv(rho + 0.5 * dt * k1, t + 0.5 * dt)
        k3 = deriv(rho + 0.5 * dt * k2, t + 0.5 * dt)
        k4 = deriv(rho + dt * k3, t + dt)
        rho = rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t = (k + 1) * dt
        if (k + 1) % store_every == 0 or k + 1 == n_steps:
            tr = rho.trace().real
            if abs(tr - 1.0) > 1e-6:
                raise RuntimeError(f"oracle trace drifted to {tr:.9f} at t = {t:.6g}")
            top_max = max(top_max, top_occ(rho))
            times.append(t)
            rhos_red.append(reduce_qubits(rho))
            photons.append(photon(rho))

    if top_max > 1e-6:
        warnings.warn(
            f"top Fock level reached occupancy {top_max:.2e}; raise fock_cutoff",
            stacklevel=2,
        )
    return OracleSolution(
        times=np.array(times),
        rhos_reduced=np.array(rhos_red),
        photon_number=np.array(photons),
        top_fock_max=top_max,
        fock_cutoff=n_f,
        rho_full_final=rho,
    )
