"""Monte Carlo ensembles, integrated-current histograms, and threshold statistics.

Trajectories are identified by their global index; each draws noise from its
own counter-based stream keyed by (master_seed, index), and aggregation is a
deterministic fold in index order, so results are byte-identical no matter
how the work is chunked or scheduled.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from . import quantum
from .model import SystemParams
from .smesolve import SmePrecomputed, precompute, run_batch

# Fixed default so unseeded runs are still reproducible end to end.
DEFAULT_MASTER_SEED = 987654321

DEFAULT_CHUNK = 2000
ABORT_TOLERANCE = 0.01


class SimulationQualityError(RuntimeError):
    """Raised when too many trajectories abort for the run to be trusted."""


@dataclass
class EnsembleResult:
    """Raw records of a trajectory ensemble on a common store grid."""

    params: SystemParams
    include_purcell: bool
    t_final: float
    dt: float
    master_seed: int
    n_traj: int
    times: np.ndarray            # (n_store,)
    theta_ac: np.ndarray         # (n_store,)
    s: np.ndarray                # (n_traj, n_store)
    final_rho: np.ndarray        # (n_traj, 4, 4)
    mean_rho: np.ndarray         # (n_store, 4, 4) over live trajectories
    live_count: np.ndarray       # (n_store,)
    aborted: np.ndarray          # (n_traj,) bool
    n_retried: int
    gamma11_s: float
    projections: dict = field(default_factory=dict)
    concurrence: np.ndarray | None = None   # (n_traj, n_store)
    rho_series: np.ndarray | None = None    # (n_traj, n_store, 4, 4)

    def mean_concurrence(self) -> np.ndarray:
        """Ensemble-average conditional concurrence vs time (live trajectories)."""
        if self.concurrence is None:
            raise ValueError("run the ensemble with record_concurrence=True")
        live = ~self.aborted
        return self.concurrence[live].mean(axis=0)

    def store_index_of(self, t: float) -> int:
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 0.51 * max(
            np.diff(self.times).max(), self.dt
        ):
            raise ValueError(f"t = {t:g} is not on the stored grid")
        return idx


def run_ensemble(
    params: SystemParams,
    rho0: np.ndarray,
    t_final: float,
    n_traj: int,
    dt: float = 1e-3,
    master_seed: int = DEFAULT_MASTER_SEED,
    workers: int | None = None,
    chunk_size: int = DEFAULT_CHUNK,
    store_every: int = 50,
    check_every: int = 10,
    include_purcell: bool = True,
    project_states: dict[str, np.ndarray] | None = None,
    store_rho: bool = False,
    record_concurrence: bool = False,
    abort_tolerance: float = ABORT_TOLERANCE,
    pre: SmePrecomputed | None = None,
) -> EnsembleResult:
    """Run n_traj independent trajectories and fold them in index order.

    workers bounds thread parallelism (default: available cores).  The run
    fails with SimulationQualityError if more than abort_tolerance of the
    trajectories abort on positivity.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be at least 1")
    if pre is None:
        pre = precompute(params, t_final, dt, include_purcell)
    if workers is None:
        workers = os.cpu_count() or 1
    chunk_size = max(1, chunk_size)

    offsets = list(range(0, n_traj, chunk_size))
    chunks = [(off, min(chunk_size, n_traj - off)) for off in offsets]

    def job(off, size):
        return run_batch(
            pre,
            rho0,
            n_traj=size,
            master_seed=master_seed,
            index_offset=off,
            store_every=store_every,
            check_every=check_every,
            project_states=project_states,
            store_rho=store_rho,
            record_concurrence=record_concurrence,
        )

    if len(chunks) == 1 or workers == 1:
        results = {off: job(off, size) for off, size in chunks}
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {off: pool.submit(job, off, size) for off, size in chunks}
            results = {off: fut.result() for off, fut in futures.items()}

    first = results[0]
    n_store = len(first.times)
    s = np.zeros((n_traj, n_store))
    final_rho = np.zeros((n_traj, 4, 4), dtype=complex)
    aborted = np.zeros(n_traj, dtype=bool)
    rho_sum = np.zeros((n_store, 4, 4), dtype=complex)
    live_count = np.zeros(n_store, dtype=np.int64)
    projections = {
        name: np.zeros((n_traj, n_store)) for name in (project_states or {})
    }
    concurrence = np.zeros((n_traj, n_store)) if record_concurrence else None
    rho_series = (
        np.zeros((n_traj, n_store, 4, 4), dtype=complex) if store_rho else None
    )
    n_retried = 0

    for off, size in chunks:  # fixed index order, not completion order
        r = results[off]
        sl = slice(off, off + size)
        s[sl] = r.s
        final_rho[sl] = r.final_rho
        aborted[sl] = r.aborted
        rho_sum += r.rho_sum
        live_count += r.live_count
        n_retried += r.n_retried
        for name in projections:
            projections[name][sl] = r.projections[name]
        if concurrence is not None:
            concurrence[sl] = r.concurrence
        if rho_series is not None:
            rho_series[sl] = r.rho_series

    frac = aborted.mean()
    if frac > abort_tolerance:
        raise SimulationQualityError(
            f"{aborted.sum()} of {n_traj} trajectories "
            f"({frac:.2%}) aborted on positivity; tolerance is {abort_tolerance:.0%}"
        )

    safe = np.maximum(live_count, 1)
    return EnsembleResult(
        params=params,
        include_purcell=include_purcell,
        t_final=t_final,
        dt=pre.dt,
        master_seed=master_seed,
        n_traj=n_traj,
        times=first.times,
        theta_ac=first.theta_ac,
        s=s,
        final_rho=final_rho,
        mean_rho=rho_sum / safe[:, None, None],
        live_count=live_count,
        aborted=aborted,
        n_retried=n_retried,
        gamma11_s=pre.gamma11_s,
        projections=projections,
        concurrence=concurrence,
        rho_series=rho_series,
    )


@dataclass
class TwoGaussianFit:
    """Least-squares two-Gaussian decomposition of an s histogram."""

    weight_minus: float
    mean_minus: float
    sigma_minus: float
    mean_plus: float
    sigma_plus: float
    overlap: float       # integral of min(w N_-, (1-w) N_+)
    converged: bool

    @property
    def separation(self) -> float:
        return self.mean_plus - self.mean_minus


@dataclass
class HistogramResult:
    """Binned s sample at one time, with the fit when it converged."""

    t: float
    n_samples: int
    edges: np.ndarray
    density: np.ndarray
    fit: TwoGaussianFit | None


def _gauss(x, mu, sigma):
    return np.exp(-0.5 * ((x - mu) / sigma) ** 2) / (sigma * np.sqrt(2 * np.pi))


def fit_two_gaussians(samples: np.ndarray) -> TwoGaussianFit | None:
    """Fit w N(m-, s-) + (1-w) N(m+, s+) to the binned density of samples.

    Starting point comes from the sample quartiles; the weight is bounded
    away from 0 and 1 so early, barely-bimodal samples stay stable.  Returns
    None when the fit cannot converge.
    """
    samples = np.asarray(samples, dtype=float)
    span = np.ptp(samples)
    if samples.size < 10 or span == 0.0:
        return None
    edges = np.histogram_bin_edges(samples, bins="fd")
    density, _ = np.histogram(samples, bins=edges, density=True)
    centers = 0.5 * (edges[:-1] + edges[1:])
    bin_width = edges[1] - edges[0]

    def model(x, w, m1, s1, m2, s2):
        return w * _gauss(x, m1, s1) + (1 - w) * _gauss(x, m2, s2)

    # Stage 1 fits with the weight frozen at 1/2: in the strongly
    # overlapped regime the 5-parameter problem is degenerate (a spike
    # component + one wide Gaussian fits as well as the truth), while the
    # symmetric 4-parameter problem is well posed.  Stage 2 releases the
    # weight from that basin.  Sigma floors at the bin width keep the
    # optimizer off single-bin spikes.
    med = np.median(samples)
    left, right = samples[samples <= med], samples[samples > med]
    sigma_floor = 0.5 * bin_width
    m_lo, m_hi = samples.min() - span, samples.max() + span
    p0 = [
        left.mean(),
        max(left.std(), bin_width),
        right.mean(),
        max(right.std(), bin_width),
    ]
    try:
        half, _ = curve_fit(
            lambda x, m1, s1, m2, s2: model(x, 0.5, m1, s1, m2, s2),
            centers,
            density,
            p0=p0,
            bounds=([m_lo, sigma_floor, m_lo, sigma_floor], [m_hi, 2 * span, m_hi, 2 * span]),
            maxfev=20000,
        )
        popt, _ = curve_fit(
            model,
            centers,
            density,
            p0=[0.5, *half],
            bounds=(
                [0.05, m_lo, sigma_floor, m_lo, sigma_floor],
                [0.95, m_hi, 2 * span, m_hi, 2 * span],
            ),
            maxfev=20000,
        )
        if min(popt[0] - 0.05, 0.95 - popt[0]) < 1e-3:
            # weight ran to its bound: the free-weight problem is degenerate
            # for this sample, keep the symmetric solution
            popt = np.array([0.5, *half])
    except (RuntimeError, ValueError):
        return None
    w, m1, s1, m2, s2 = popt
    if m1 > m2:  # canonical order: minus branch on the left
        w, m1, s1, m2, s2 = 1 - w, m2, s2, m1, s1
    grid = np.linspace(min(m1 - 6 * s1, m2 - 6 * s2), max(m1 + 6 * s1, m2 + 6 * s2), 4001)
    lower = np.minimum(w * _gauss(grid, m1, s1), (1 - w) * _gauss(grid, m2, s2))
    overlap = float(lower.sum() * (grid[1] - grid[0]))
    return TwoGaussianFit(
        weight_minus=float(w),
        mean_minus=float(m1),
        sigma_minus=float(s1),
        mean_plus=float(m2),
        sigma_plus=float(s2),
        overlap=overlap,
        converged=True,
    )


def histogram_s(result: EnsembleResult, t: float) -> HistogramResult:
    """Histogram the integrated current at stored time t and fit two Gaussians."""
    idx = result.store_index_of(t)
    samples = result.s[~result.aborted, idx]
    span = np.ptp(samples)
    if span == 0.0:
        edges = np.array([samples[0] - 0.5, samples[0] + 0.5])
        density = np.array([1.0])
    else:
        edges = np.histogram_bin_edges(samples, bins="fd")
        density, _ = np.histogram(samples, bins=edges, density=True)
    return HistogramResult(
        t=float(result.times[idx]),
        n_samples=int(samples.size),
        edges=edges,
        density=density,
        fit=fit_two_gaussians(samples),
    )


@dataclass
class EnsembleStats:
    """Conditional statistics of one threshold classification."""

    t: float
    s_th: float
    s0: float
    n_traj: int
    labels: np.ndarray          # (n_traj,) +1 / -1 / 0 (discarded or aborted)
    p_success: float
    mean_rho_plus: np.ndarray | None
    mean_rho_minus: np.ndarray | None
    fidelity_plus: float        # <psi+| E+ |psi+> after phase correction
    fidelity_minus: float       # <phi+| E- |phi+>
    concurrence_plus: float
    concurrence_minus: float
    f_bar: float
    c_bar: float
    empty_plus: bool
    empty_minus: bool


def classify_and_average(
    result: EnsembleResult,
    s_th: float = 0.0,
    t: float | None = None,
    phase_correct: bool = True,
) -> EnsembleStats:
    """Split trajectories on the integrated current and average each branch.

    s0 is the median of s(t) over live trajectories.  A trajectory joins the
    plus branch if s >= s0 + s_th (boundary ties resolve to plus) and the
    minus branch if s < s0 - s_th; anything else is discarded.  The plus
    branch is compared against the even-parity target after each trajectory
    is corrected for the accumulated ac-Stark phase; the minus branch is
    compared against the odd-parity dark state.
    """
    if s_th < 0:
        raise ValueError("s_th must be nonnegative")
    if t is None:
        idx = len(result.times) - 1
    else:
        idx = result.store_index_of(t)
    if idx == len(result.times) - 1:
        rhos = result.final_rho
    elif result.rho_series is not None:
        rhos = result.rho_series[:, idx]
    else:
        raise ValueError(
            "classification before the final time needs rho_series "
            "(run the ensemble with store_rho=True)"
        )

    live = ~result.aborted
    s_t = result.s[:, idx]
    s0 = float(np.median(s_t[live]))
    labels = np.zeros(result.n_traj, dtype=np.int8)
    labels[live & (s_t >= s0 + s_th)] = 1
    labels[live & (s_t < s0 - s_th)] = -1
    plus = labels == 1
    minus = labels == -1
    p_success = float((plus.sum() + minus.sum()) / max(live.sum(), 1))

    theta = float(result.theta_ac[idx])
    stats = {}
    for name, mask in (("plus", plus), ("minus", minus)):
        if not mask.any():
            stats[name] = (None, np.nan, np.nan)
            continue
        branch = rhos[mask]
        if name == "plus" and phase_correct:
            u = np.diag([1.0, 1.0, 1.0, np.exp(1j * theta)])
            branch = np.einsum("ij,bjk,kl->bil", u, branch, u.conj().T)
        mean = branch.mean(axis=0)
        target = quantum.psi_plus() if name == "plus" else quantum.phi_plus()
        stats[name] = (mean, quantum.fidelity(mean, target), quantum.concurrence(mean))

    mean_p, f_p, c_p = stats["plus"]
    mean_m, f_m, c_m = stats["minus"]
    return EnsembleStats(
        t=float(result.times[idx]),
        s_th=float(s_th),
        s0=s0,
        n_traj=result.n_traj,
        labels=labels,
        p_success=p_success,
        mean_rho_plus=mean_p,
        mean_rho_minus=mean_m,
        fidelity_plus=f_p,
        fidelity_minus=f_m,
        concurrence_plus=c_p,
        concurrence_minus=c_m,
        f_bar=0.5 * (f_p + f_m),
        c_bar=0.5 * (c_p + c_m),
        empty_plus=mean_p is None,
        empty_minus=mean_m is None,
    )


def threshold_sweep(
    result: EnsembleResult,
    s_th_values,
    t: float | None = None,
    phase_correct: bool = True,
) -> list[EnsembleStats]:
    """classify_and_average across a grid of thresholds."""
    return [
        classify_and_average(result, s_th=v, t=t, phase_correct=phase_correct)
        for v in s_th_values
    ]
