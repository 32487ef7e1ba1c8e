"""Physical parameters, cavity coherent amplitudes, and measurement-rate geometry.

Everything is expressed in units of the cavity decay rate kappa (rates in
kappa, times in 1/kappa, angles in radians).  The dynamics live in the frame
rotating at the measurement-drive frequency for the cavity and at the
Lamb-shifted qubit frequencies for the qubits, so the only surviving
Hamiltonian-like piece is the ac-Stark table A_c.

Logical-state index order follows quantum.BASIS_LABELS: (gg, ge, eg, ee),
first letter = qubit 1.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

# sigma_z eigenvalue of qubit 1 / qubit 2 for each logical state.
SIGN_Q1 = np.array([-1.0, -1.0, 1.0, 1.0])
SIGN_Q2 = np.array([-1.0, 1.0, -1.0, 1.0])
SIGN_PARITY = SIGN_Q1 * SIGN_Q2

DRIVE_SHAPES = ("constant", "tanh")


@dataclass(frozen=True)
class DriveProfile:
    """Measurement-drive envelope: constant eps, or the ramp eps*tanh(t/sigma)."""

    shape: str = "constant"
    eps: float = 0.5
    sigma: float = 1.0

    def __post_init__(self):
        if self.shape not in DRIVE_SHAPES:
            raise ValueError(f"drive shape must be one of {DRIVE_SHAPES}, got {self.shape!r}")
        if self.shape == "tanh" and self.sigma <= 0:
            raise ValueError("tanh drive requires sigma > 0")

    def amplitude(self, t):
        """Drive amplitude at time t (scalar or ndarray)."""
        if self.shape == "constant":
            return self.eps * np.ones_like(np.asarray(t, dtype=float))
        return self.eps * np.tanh(np.asarray(t, dtype=float) / self.sigma)


@dataclass(frozen=True)
class SystemParams:
    """All physical and measurement parameters, immutable after construction.

    g and delta_qc fix the dispersive couplings lambda_j = g_j/delta_qc_j and
    chi_j = g_j^2/delta_qc_j.  j_q and omega_a_tilde are stored for
    completeness; the solvers never use them (j_q is dropped, the frame
    removes omega_a_tilde).
    """

    g: tuple[float, float]
    delta_qc: tuple[float, float]
    kappa: float = 1.0
    delta_r: float = 0.0
    gamma1: tuple[float, float] = (0.0, 0.0)
    gamma_phi: tuple[float, float] = (0.0, 0.0)
    eta: float = 1.0
    phi_lo: float = np.pi / 2
    drive: DriveProfile = field(default_factory=DriveProfile)
    j_q: float = 0.0
    omega_a_tilde: tuple[float, float] = (0.0, 0.0)
    kappa_2pi_hz: float | None = None

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if any(x < 0 for x in self.gamma1) or any(x < 0 for x in self.gamma_phi):
            raise ValueError("relaxation and dephasing rates must be nonnegative")
        if any(d == 0 for d in self.delta_qc):
            raise ValueError("delta_qc must be nonzero (dispersive regime undefined)")
        lam, _ = derive_dispersive(self)
        worst = float(np.max(np.abs(lam)))
        if worst > 0.5:
            raise ValueError(f"|g/delta_qc| = {worst:.3f} > 0.5: outside the dispersive regime")
        if worst >= 0.2:
            warnings.warn(
                f"|g/delta_qc| = {worst:.3f} >= 0.2: dispersive approximation is marginal",
                stacklevel=2,
            )

    @property
    def lambdas(self) -> np.ndarray:
        return derive_dispersive(self)[0]

    @property
    def chis(self) -> np.ndarray:
        return derive_dispersive(self)[1]


def derive_dispersive(params: SystemParams) -> tuple[np.ndarray, np.ndarray]:
    """Per-qubit (lambda_j, chi_j) with lambda_j = g_j/delta_j, chi_j = g_j^2/delta_j."""
    g = np.asarray(params.g, dtype=float)
    delta = np.asarray(params.delta_qc, dtype=float)
    lam = g / delta
    return lam, g * lam


def chi_of_state(chis: np.ndarray, label: str) -> float:
    """Dispersive cavity pull chi_x for the logical state named by label."""
    from .quantum import BASIS_LABELS

    x = BASIS_LABELS.index(label)
    return float(chis[0] * SIGN_Q1[x] + chis[1] * SIGN_Q2[x])


def chi_table(params: SystemParams) -> np.ndarray:
    """All four chi_x in basis order (gg, ge, eg, ee)."""
    chis = params.chis
    return chis[0] * SIGN_Q1 + chis[1] * SIGN_Q2


@dataclass
class CavityAmplitudes:
    """The four qubit-state-conditioned coherent amplitudes alpha_x at time t."""

    alpha: np.ndarray  # complex (4,), order (gg, ge, eg, ee)
    t: float = 0.0

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=complex)
        if self.alpha.shape != (4,):
            raise ValueError(f"alpha must have shape (4,), got {self.alpha.shape}")


def alpha_derivative(alpha: np.ndarray, t: float, params: SystemParams) -> np.ndarray:
    """Rotating-frame amplitude ODE: -i(delta_r + chi_x)a - i eps(t) - kappa a/2."""
    chix = chi_table(params)
    return (
        -1j * (params.delta_r + chix) * alpha
        - 1j * params.drive.amplitude(t)
        - 0.5 * params.kappa * alpha
    )


def _alpha_rk4(alpha: np.ndarray, t: float, params: SystemParams, dt: float) -> np.ndarray:
    k1 = alpha_derivative(alpha, t, params)
    k2 = alpha_derivative(alpha + 0.5 * dt * k1, t + 0.5 * dt, params)
    k3 = alpha_derivative(alpha + 0.5 * dt * k2, t + 0.5 * dt, params)
    k4 = alpha_derivative(alpha + dt * k3, t + dt, params)
    return alpha + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _alpha_guard(params: SystemParams, alpha0: np.ndarray) -> float:
    # steady magnitude is bounded by 2|eps|/kappa; allow decaying initial data
    bound = 10.0 * (2.0 * abs(params.drive.eps) / params.kappa)
    return max(bound, 2.0 * float(np.max(np.abs(alpha0))), 1e-9)


def step_alphas(state: CavityAmplitudes, params: SystemParams, dt: float) -> CavityAmplitudes:
    """Advance all four amplitudes by one fixed RK4 step."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    new = _alpha_rk4(state.alpha, state.t, params, dt)
    if np.max(np.abs(new)) > _alpha_guard(params, state.alpha):
        raise RuntimeError(
            f"cavity amplitude integration unstable at t = {state.t + dt:.6g}: "
            f"max|alpha| = {np.max(np.abs(new)):.3g}"
        )
    return CavityAmplitudes(alpha=new, t=state.t + dt)


def steady_alphas(params: SystemParams) -> CavityAmplitudes:
    """Closed-form steady state alpha_x = -i eps / (kappa/2 + i(delta_r + chi_x))."""
    if params.drive.shape != "constant":
        raise ValueError("steady_alphas requires a constant drive")
    chix = chi_table(params)
    alpha = -1j * params.drive.eps / (0.5 * params.kappa + 1j * (params.delta_r + chix))
    return CavityAmplitudes(alpha=alpha, t=np.inf)


def alpha_grid(params: SystemParams, n_steps: int, dt: float) -> np.ndarray:
    """RK4-integrated amplitudes on the uniform grid t_k = k dt, from vacuum.

    Returns a complex (n_steps + 1, 4) table; row k is alpha(t_k).  Both
    solvers consume this shared table so their rate snapshots stay in sync.
    """
    out = np.zeros((n_steps + 1, 4), dtype=complex)
    state = CavityAmplitudes(alpha=np.zeros(4, dtype=complex), t=0.0)
    for k in range(n_steps):
        state = step_alphas(state, params, dt)
        out[k + 1] = state.alpha
    return out


@dataclass
class MeasurementSnapshot:
    """Instantaneous rate geometry derived from the cavity amplitudes.

    Gamma_d and A_c are the 4x4 dephasing/ac-Stark tables; beta holds the
    quadrature components by subscript ("00" recorded for diagnostics only);
    m holds the signed homodyne amplitudes at the run's LO phase, and c_phi /
    c_phi_perp the measurement operators at phi and phi - pi/2.
    """

    t: float
    chi_x: np.ndarray          # (4,) real
    Gamma_d: np.ndarray        # (4,4) real symmetric, zero diagonal
    A_c: np.ndarray            # (4,4) real antisymmetric
    beta: dict[str, complex]   # keys 00, 01, 10, 11
    m: dict[str, float]        # keys 01, 10, 11 (signed, at phi_lo)
    c_phi: np.ndarray          # (4,4) Hermitian diagonal
    c_phi_perp: np.ndarray     # (4,4) Hermitian diagonal


def quadrature_components(alpha: np.ndarray) -> dict[str, complex]:
    """beta_ij = (a_ee + (-1)^j a_eg + (-1)^i a_ge + (-1)^(i+j) a_gg) / 2."""
    agg, age, aeg, aee = alpha
    return {
        "00": (aee + aeg + age + agg) / 2.0,
        "01": (aee - aeg + age - agg) / 2.0,
        "10": (aee + aeg - age - agg) / 2.0,
        "11": (aee - aeg - age + agg) / 2.0,
    }


def homodyne_amplitude(beta: complex, phi: float, kappa: float, eta: float) -> float:
    """Signed amplitude m_ij(phi) = sqrt(kappa eta) |beta_ij| cos(phi - arg beta_ij)."""
    return float(np.sqrt(kappa * eta) * np.abs(beta) * np.cos(phi - np.angle(beta)))


def information_rate(beta: complex, phi: float, kappa: float, eta: float) -> float:
    """Gamma_ij(phi) = kappa eta |beta_ij|^2 cos^2(phi - arg beta_ij) = m_ij(phi)^2."""
    return homodyne_amplitude(beta, phi, kappa, eta) ** 2


def _c_diag(betas: dict[str, complex], phi: float, kappa: float, eta: float) -> np.ndarray:
    """Diagonal of c_phi = m_10 sz1 + m_01 sz2 + m_11 sz1 sz2 (identity part excluded)."""
    m10 = homodyne_amplitude(betas["10"], phi, kappa, eta)
    m01 = homodyne_amplitude(betas["01"], phi, kappa, eta)
    m11 = homodyne_amplitude(betas["11"], phi, kappa, eta)
    return m10 * SIGN_Q1 + m01 * SIGN_Q2 + m11 * SIGN_PARITY


def snapshot(alphas: CavityAmplitudes, params: SystemParams) -> MeasurementSnapshot:
    """Full rate geometry at one instant: dephasing and ac-Stark tables plus measurement operators."""
    a = alphas.alpha
    chix = chi_table(params)
    prod = a[:, None] * a[None, :].conj()
    dchi = chix[:, None] - chix[None, :]
    gamma_d = dchi * prod.imag
    a_c = dchi * prod.real
    betas = quadrature_components(a)
    kappa, eta, phi = params.kappa, params.eta, params.phi_lo
    m = {ij: homodyne_amplitude(betas[ij], phi, kappa, eta) for ij in ("01", "10", "11")}
    return MeasurementSnapshot(
        t=alphas.t,
        chi_x=chix,
        Gamma_d=gamma_d,
        A_c=a_c,
        beta=betas,
        m=m,
        c_phi=np.diag(_c_diag(betas, phi, kappa, eta)).astype(complex),
        c_phi_perp=np.diag(_c_diag(betas, phi - np.pi / 2, kappa, eta)).astype(complex),
    )


def snapshot_tables(alpha_rows: np.ndarray, params: SystemParams):
    """Vectorized snapshot over a stack of amplitude rows.

    Parameters
    ----------
    alpha_rows : complex (n, 4)

    Returns
    -------
    K : complex (n, 4, 4)
        Dephasing kernel Gamma_d - i A_c, applied entrywise to rho.
    c_diag, c_perp_diag : real (n, 4)
        Diagonals of c_phi and c_(phi - pi/2).
    ac_eegg : real (n,)
        A_c^(ee,gg), the ac-Stark rate integrated into the deterministic
        phase correction applied before threshold classification.
    """
    a = np.asarray(alpha_rows, dtype=complex)
    chix = chi_table(params)
    prod = a[:, :, None] * a[:, None, :].conj()
    dchi = chix[:, None] - chix[None, :]
    K = dchi * prod.imag - 1j * (dchi * prod.real)
    agg, age, aeg, aee = a[:, 0], a[:, 1], a[:, 2], a[:, 3]
    b01 = (aee - aeg + age - agg) / 2.0
    b10 = (aee + aeg - age - agg) / 2.0
    b11 = (aee - aeg - age + agg) / 2.0
    root = np.sqrt(params.kappa * params.eta)

    def mcol(b, ph):
        return root * np.abs(b) * np.cos(ph - np.angle(b))

    def cdiag(ph):
        return (
            mcol(b10, ph)[:, None] * SIGN_Q1
            + mcol(b01, ph)[:, None] * SIGN_Q2
            + mcol(b11, ph)[:, None] * SIGN_PARITY
        )

    phi = params.phi_lo
    ac_eegg = dchi[3, 0] * (aee * agg.conj()).real
    return K, cdiag(phi), cdiag(phi - np.pi / 2), ac_eegg


def steady_gamma11(params: SystemParams) -> float:
    """Steady-state Gamma_11(pi/2), the integrated-current normalization scale."""
    betas = quadrature_components(steady_alphas(params).alpha)
    return information_rate(betas["11"], np.pi / 2, params.kappa, params.eta)
