"""Stochastic solver for homodyne-conditioned trajectories.

The conditional state is advanced with Euler-Maruyama: the deterministic
part is the same generator evolve_me integrates, the stochastic part is the
measurement back-action of c_phi plus the quadrature-rotation commutator of
c_(phi - pi/2), both scaled by the same Wiener increment.  After every step
the state is renormalized.

Trajectories are reproducible and order-independent: trajectory b draws
its noise from a counter-based Philox stream seeded with
SeedSequence(master_seed, spawn_key=(b,)), so results depend only on
(master_seed, b), never on batching or scheduling.

Positivity is enforced in windows: every check_every steps the whole batch
is eigenvalue-checked against the checkpoint taken at the window start.
Offending trajectories are rewound and the window is redone once with each
step split into ten substeps (dt/10, with the step's Wiener increment split
evenly so the realized noise path is preserved).  A trajectory that still
violates positivity after the retry is aborted: it is frozen at its last
good state and flagged.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import model, quantum
from .mesolve import reduced_channels
from .model import SystemParams

POSITIVITY_FLOOR = -1e-6
MAX_DT = 1e-3
NOISE_BLOCK = 2000  # steps of noise drawn per stream per refill


def liouvillian_matrix(channels) -> np.ndarray:
    """Static dissipators as a 16x16 matrix acting on row-major flattened rho."""
    eye4 = np.eye(4)
    out = np.zeros((16, 16), dtype=complex)
    for rate, c in channels:
        cc = c.conj().T @ c
        out += rate * (
            np.kron(c, c.conj()) - 0.5 * np.kron(cc, eye4) - 0.5 * np.kron(eye4, cc.T)
        )
    return out


@dataclass
class SmePrecomputed:
    """Grid-sampled rate tables shared by every trajectory of a run."""

    params: SystemParams
    include_purcell: bool
    dt: float
    n_steps: int
    times: np.ndarray        # (n_steps + 1,)
    alphas: np.ndarray       # (n_steps + 1, 4) complex
    l_static: np.ndarray     # (16, 16) complex
    kernel: np.ndarray       # (n_steps + 1, 4, 4) complex, Gamma_d - i A_c
    c_diag: np.ndarray       # (n_steps + 1, 4) real
    c_perp_diag: np.ndarray  # (n_steps + 1, 4) real
    theta_ac: np.ndarray     # (n_steps + 1,) cumulative integral of A_c^(ee,gg)
    gamma11_s: float         # steady Gamma_11(pi/2) at the run's eta


def precompute(
    params: SystemParams,
    t_final: float,
    dt: float = MAX_DT,
    include_purcell: bool = True,
) -> SmePrecomputed:
    """Integrate the amplitudes once and tabulate every per-step quantity."""
    if dt > MAX_DT / params.kappa * (1 + 1e-12):
        raise ValueError(f"stochastic stepping requires dt <= {MAX_DT:g}/kappa, got {dt:g}")
    if dt <= 0 or t_final <= 0:
        raise ValueError("dt and t_final must be positive")
    n_steps = int(round(t_final / dt))
    alphas = model.alpha_grid(params, n_steps, dt)
    kernel, c_diag, c_perp_diag, ac = model.snapshot_tables(alphas, params)
    theta_ac = np.concatenate([[0.0], np.cumsum(ac[:-1]) * dt])
    steady_params = replace(params, drive=replace(params.drive, shape="constant"))
    return SmePrecomputed(
        params=params,
        include_purcell=include_purcell,
        dt=dt,
        n_steps=n_steps,
        times=np.arange(n_steps + 1) * dt,
        alphas=alphas,
        l_static=liouvillian_matrix(reduced_channels(params, include_purcell)),
        kernel=kernel,
        c_diag=c_diag,
        c_perp_diag=c_perp_diag,
        theta_ac=theta_ac,
        gamma11_s=model.steady_gamma11(steady_params),
    )


def trajectory_stream(master_seed: int, index: int) -> np.random.Generator:
    """The Philox stream owned by trajectory `index` under `master_seed`."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(master_seed, spawn_key=(index,)))
    )


def _batch_step(rho, k, pre, dw):
    """One Euler-Maruyama step of the whole batch.

    Returns the unnormalized updated batch and the pre-step expectation
    Tr[c_phi rho] that also feeds the photocurrent.
    """
    c = pre.c_diag[k]
    cp = pre.c_perp_diag[k]
    n = rho.shape[0]
    drift = (rho.reshape(n, 16) @ pre.l_static.T).reshape(n, 4, 4) + pre.kernel[k] * rho
    expect_c = np.einsum("bi,bii->b", np.broadcast_to(c, (n, 4)), rho).real
    back_action = (
        0.5 * (c[:, None] + c[None, :]) * rho
        - expect_c[:, None, None] * rho
        - 0.5j * (cp[:, None] - cp[None, :]) * rho
    )
    return rho + pre.dt * drift + dw[:, None, None] * back_action, expect_c


def _renormalize(rho):
    tr = np.einsum("bii->b", rho).real
    rho /= tr[:, None, None]
    return rho


def _substep_redo(rho_start, rows, k_start, steps, pre, dw_window):
    """Redo a window for selected rows with each step split into 10 substeps."""
    sub = rho_start[rows].copy()
    ds = np.zeros(len(rows))
    ok = np.ones(len(rows), dtype=bool)
    root = np.sqrt(pre.gamma11_s)
    for j in range(steps):
        k = k_start + j
        dw10 = dw_window[rows, j] / 10.0
        dt10 = pre.dt / 10.0
        c = pre.c_diag[k]
        cp = pre.c_perp_diag[k]
        expect0 = None
        for _ in range(10):
            n = sub.shape[0]
            drift = (sub.reshape(n, 16) @ pre.l_static.T).reshape(n, 4, 4) + pre.kernel[k] * sub
            expect_c = np.einsum("bi,bii->b", np.broadcast_to(c, (n, 4)), sub).real
            if expect0 is None:
                expect0 = expect_c
            back = (
                0.5 * (c[:, None] + c[None, :]) * sub
                - expect_c[:, None, None] * sub
                - 0.5j * (cp[:, None] - cp[None, :]) * sub
            )
            sub = sub + dt10 * drift + dw10[:, None, None] * back
            sub = _renormalize(sub)
        ds += root * (expect0 * pre.dt + dw_window[rows, j])
        ok &= np.linalg.eigvalsh(sub).min(axis=1) >= POSITIVITY_FLOOR
    return sub, ds, ok


@dataclass
class BatchResult:
    """Raw per-trajectory output of one engine call."""

    times: np.ndarray             # (n_store,) store grid, starts at 0
    s: np.ndarray                 # (B, n_store) integrated current
    final_rho: np.ndarray         # (B, 4, 4)
    rho_sum: np.ndarray           # (n_store, 4, 4) sum over live trajectories
    live_count: np.ndarray        # (n_store,) trajectories contributing to rho_sum
    aborted: np.ndarray           # (B,) bool
    n_retried: int                # windows redone with substeps
    projections: dict             # name -> (B, n_store) real <psi|rho|psi>
    rho_series: np.ndarray | None # (B, n_store, 4, 4) if requested
    j_binned: np.ndarray | None   # (B, n_bins) 10-step-averaged photocurrent
    concurrence: np.ndarray | None# (B, n_store) if requested
    store_idx: np.ndarray         # (n_store,) step indices of the store grid
    theta_ac: np.ndarray          # (n_store,) accumulated ac-Stark phase
    index_offset: int


def run_batch(
    pre: SmePrecomputed,
    rho0: np.ndarray,
    n_traj: int,
    master_seed: int,
    index_offset: int = 0,
    store_every: int = 50,
    check_every: int = 10,
    project_states: dict[str, np.ndarray] | None = None,
    store_rho: bool = False,
    record_j: bool = False,
    record_concurrence: bool = False,
) -> BatchResult:
    """Evolve trajectories index_offset .. index_offset + n_traj - 1.

    store_every is rounded up to a multiple of check_every so snapshots are
    always taken on positivity-verified states.  J, when recorded, is the
    per-step photocurrent averaged in ten-step bins.
    """
    quantum.assert_density_matrix(np.asarray(rho0, dtype=complex))
    check_every = max(1, check_every)
    store_every = max(check_every, (store_every // check_every) * check_every)
    n_steps = pre.n_steps
    b = n_traj

    store_idx = np.arange(0, n_steps + 1, store_every)
    if store_idx[-1] != n_steps:
        store_idx = np.append(store_idx, n_steps)
    n_store = len(store_idx)
    store_pos = {int(k): i for i, k in enumerate(store_idx)}

    rho = np.tile(np.asarray(rho0, dtype=complex), (b, 1, 1))
    s = np.zeros(b)
    aborted = np.zeros(b, dtype=bool)
    s_series = np.zeros((b, n_store))
    rho_sum = np.zeros((n_store, 4, 4), dtype=complex)
    live_count = np.zeros(n_store, dtype=np.int64)
    projections = {
        name: np.zeros((b, n_store)) for name in (project_states or {})
    }
    rho_series = np.zeros((b, n_store, 4, 4), dtype=complex) if store_rho else None
    j_steps = np.zeros((b, n_steps)) if record_j else None
    conc_series = np.zeros((b, n_store)) if record_concurrence else None

    streams = [trajectory_stream(master_seed, index_offset + i) for i in range(b)]
    root_g11 = np.sqrt(pre.gamma11_s)
    sqrt_dt = np.sqrt(pre.dt)

    def take_snapshot(pos):
        s_series[:, pos] = s
        live = ~aborted
        rho_sum[pos] = rho[live].sum(axis=0)
        live_count[pos] = live.sum()
        for name, psi in (project_states or {}).items():
            projections[name][:, pos] = np.einsum(
                "i,bij,j->b", psi.conj(), rho, psi
            ).real
        if rho_series is not None:
            rho_series[:, pos] = rho
        if conc_series is not None:
            conc_series[:, pos] = quantum.concurrence_batch(rho)

    take_snapshot(0)

    noise = np.empty((b, 0))
    noise_base = 0  # global step index of noise[:, 0]
    n_retried = 0
    k = 0
    while k < n_steps:
        win = min(check_every, n_steps - k)
        if k + win > noise_base + noise.shape[1]:
            drawn = noise_base + noise.shape[1]
            block = max(min(NOISE_BLOCK, n_steps - drawn), k + win - drawn)
            fresh = np.stack([g.standard_normal(block) for g in streams]) * sqrt_dt
            keep = noise[:, k - noise_base:]
            noise = np.concatenate([keep, fresh], axis=1)
            noise_base = k
        dw_window = noise[:, k - noise_base : k - noise_base + win]

        ck_rho = rho.copy()
        ck_s = s.copy()
        suspect = np.zeros(b, dtype=bool)
        for j in range(win):
            dw = dw_window[:, j]
            new_rho, expect_c = _batch_step(rho, k + j, pre, dw)
            rho = _renormalize(new_rho)
            live = ~aborted
            ds = root_g11 * (expect_c * pre.dt + dw)
            s += np.where(live, ds, 0.0)
            if record_j:
                j_steps[:, k + j] = expect_c + dw / pre.dt
            diag_min = np.einsum("bii->bi", rho).real.min(axis=1)
            suspect |= diag_min < POSITIVITY_FLOOR
            if aborted.any():
                rho[aborted] = ck_rho[aborted]

        bad = suspect | (np.linalg.eigvalsh(rho).min(axis=1) < POSITIVITY_FLOOR)
        bad &= ~aborted
        if bad.any():
            n_retried += 1
            rows = np.flatnonzero(bad)
            redo_rho, redo_ds, redo_ok = _substep_redo(
                ck_rho, rows, k, win, pre, dw_window
            )
            rho[rows] = redo_rho
            s[rows] = ck_s[rows] + redo_ds
            newly_dead = rows[~redo_ok]
            if len(newly_dead):
                aborted[newly_dead] = True
                rho[newly_dead] = ck_rho[newly_dead]
                s[newly_dead] = ck_s[newly_dead]

        k += win
        if k in store_pos:
            take_snapshot(store_pos[k])

    j_binned = None
    if record_j:
        n_bins = n_steps // 10
        j_binned = j_steps[:, : n_bins * 10].reshape(b, n_bins, 10).mean(axis=2)
        tail = n_steps - n_bins * 10
        if tail:
            j_binned = np.concatenate(
                [j_binned, j_steps[:, n_bins * 10 :].mean(axis=1, keepdims=True)], axis=1
            )

    return BatchResult(
        times=store_idx * pre.dt,
        s=s_series,
        final_rho=rho,
        rho_sum=rho_sum,
        live_count=live_count,
        aborted=aborted,
        n_retried=n_retried,
        projections=projections,
        rho_series=rho_series,
        j_binned=j_binned,
        concurrence=conc_series,
        store_idx=store_idx,
        theta_ac=pre.theta_ac[store_idx],
        index_offset=index_offset,
    )


def step_sme(
    rho: np.ndarray,
    snap: model.MeasurementSnapshot,
    params: SystemParams,
    dt: float,
    dw: float,
    include_purcell: bool = True,
) -> tuple[np.ndarray, float]:
    """One conditional update of a single state; returns (rho', photocurrent).

    The photocurrent sample is Tr[c_phi rho] + dw/dt with the pre-step
    state.  If the updated state loses positivity the step is retried once
    as ten substeps (dt/10, dw/10); a second failure raises.
    """
    if dt > MAX_DT / params.kappa * (1 + 1e-12):
        raise ValueError(f"stochastic stepping requires dt <= {MAX_DT:g}/kappa, got {dt:g}")
    channels = reduced_channels(params, include_purcell)
    kernel = snap.Gamma_d - 1j * snap.A_c
    c = np.diag(snap.c_phi).real
    cp = np.diag(snap.c_phi_perp).real
    current = float(np.sum(c * np.diag(rho).real)) + dw / dt

    def advance(state, h, dwh):
        drift = kernel * state
        for rate, op in channels:
            drift = drift + rate * quantum.dissipator(op, state)
        expect_c = float(np.sum(c * np.diag(state).real))
        back = (
            0.5 * (c[:, None] + c[None, :]) * state
            - expect_c * state
            - 0.5j * (cp[:, None] - cp[None, :]) * state
        )
        out = state + h * drift + dwh * back
        return out / out.trace().real

    new = advance(rho, dt, dw)
    if np.linalg.eigvalsh(new)[0] < POSITIVITY_FLOOR:
        new = rho
        for _ in range(10):
            new = advance(new, dt / 10.0, dw / 10.0)
        if np.linalg.eigvalsh(new)[0] < POSITIVITY_FLOOR:
            raise RuntimeError(
                f"positivity lost at t = {snap.t:.6g} even after substepping; reduce dt"
            )
    return new, current


@dataclass
class TrajectoryRecord:
    """A single conditional trajectory with its binned measurement record."""

    times: np.ndarray      # (n_store,)
    rhos: np.ndarray       # (n_store, 4, 4)
    s: np.ndarray          # (n_store,)
    theta_ac: np.ndarray   # (n_store,) accumulated ee-gg ac-Stark phase
    j_times: np.ndarray    # (n_bins,) bin centers
    j_binned: np.ndarray   # (n_bins,)
    master_seed: int
    index: int
    aborted: bool


def run_trajectory(
    params: SystemParams,
    rho0: np.ndarray,
    t_final: float,
    master_seed: int,
    index: int = 0,
    dt: float = MAX_DT,
    store_every: int = 50,
    include_purcell: bool = True,
    pre: SmePrecomputed | None = None,
) -> TrajectoryRecord:
    """Evolve one trajectory, keeping its full state history and record."""
    if pre is None:
        pre = precompute(params, t_final, dt, include_purcell)
    batch = run_batch(
        pre,
        rho0,
        n_traj=1,
        master_seed=master_seed,
        index_offset=index,
        store_every=store_every,
        store_rho=True,
        record_j=True,
    )
    n_bins = batch.j_binned.shape[1]
    bin_steps = min(10, pre.n_steps)
    j_times = (np.arange(n_bins) + 0.5) * bin_steps * pre.dt
    if n_bins * 10 > pre.n_steps:  # trailing partial bin keeps its true center
        j_times[-1] = 0.5 * (n_bins - 1) * 10 * pre.dt + 0.5 * pre.n_steps * pre.dt
    return TrajectoryRecord(
        times=batch.times,
        rhos=batch.rho_series[0],
        s=batch.s[0],
        theta_ac=batch.theta_ac,
        j_times=j_times,
        j_binned=batch.j_binned[0],
        master_seed=master_seed,
        index=index,
        aborted=bool(batch.aborted[0]),
    )
