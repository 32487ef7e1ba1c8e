"""Command pipelines: each takes a RunConfig and writes files into a directory.

Every pipeline writes manifest.json and resolved.ini next to its outputs and
returns a JSON-able summary dict.  Outputs carry no timestamps, so repeat
runs with the same config and seed are byte-identical.
"""

from __future__ import annotations

import os
from dataclasses import replace

import numpy as np

from . import io as dio
from . import model, quantum
from .config import RunConfig
from .ensemble import (
    SimulationQualityError,
    classify_and_average,
    fit_two_gaussians,
    histogram_s,
    run_ensemble,
    threshold_sweep,
)
from .mesolve import evolve_full_oracle, evolve_me
from .model import information_rate, quadrature_components, snapshot, steady_alphas
from .smesolve import precompute, run_trajectory

ORACLE_TD_TOL = 0.05
ORACLE_PHOTON_TOL = 0.10


def _constant_drive(params):
    return replace(params, drive=replace(params.drive, shape="constant"))


def _beta_weights(params, delta_r):
    """Phase-optimal measurement rates kappa eta |beta_ij|^2 at one detuning."""
    p = replace(_constant_drive(params), delta_r=float(delta_r))
    betas = quadrature_components(steady_alphas(p).alpha)
    scale = p.kappa * p.eta
    return {ij: scale * abs(betas[ij]) ** 2 for ij in ("01", "10", "11")}


def steady_summary(cfg: RunConfig) -> dict:
    """Steady-state measurement geometry at the configured working point."""
    params = cfg.to_params()
    steady = _constant_drive(params)
    snap = snapshot(steady_alphas(steady), steady)
    return {
        "alpha": steady_alphas(steady).alpha,
        "beta": snap.beta,
        "m": snap.m,
        "gamma_at_phi_lo": {
            ij: information_rate(snap.beta[ij], params.phi_lo, params.kappa, params.eta)
            for ij in ("01", "10", "11")
        },
        "gamma_d": snap.Gamma_d,
        "a_c": snap.A_c,
        "gamma11_s": model.steady_gamma11(steady),
        "chi": list(params.chis),
    }


def run_rates(cfg: RunConfig, out_dir: str) -> dict:
    """Steady-state rate geometry: tables, phase sweep, detuning sweep."""
    params = cfg.to_params()
    steady = _constant_drive(params)
    snap = snapshot(steady_alphas(steady), steady)
    betas = snap.beta
    sha = dio.write_run_outputs(out_dir, cfg, {"command": "rates"})["config_sha256"]

    phi_grid = np.linspace(0.0, np.pi, cfg.rates.phi_steps)
    rows = []
    for phi in phi_grid:
        g = {
            ij: information_rate(betas[ij], phi, params.kappa, params.eta)
            for ij in ("01", "10", "11")
        }
        rows.append([phi, g["01"], g["10"], g["11"]])
    dio.write_csv(
        os.path.join(out_dir, "rates_vs_phi.csv"),
        ["phi", "gamma_01", "gamma_10", "gamma_11"],
        rows,
        comments=[f"config_sha256={sha}"],
    )

    dr_grid = np.linspace(
        cfg.rates.delta_r_min, cfg.rates.delta_r_max, cfg.rates.delta_r_steps
    )
    rows = []
    w_diff = []
    for dr in dr_grid:
        w = _beta_weights(params, dr)
        rows.append([dr, w["01"], w["10"], w["11"]])
        w_diff.append(w["10"] - w["11"])
    dio.write_csv(
        os.path.join(out_dir, "rates_vs_delta_r.csv"),
        ["delta_r", "weight_01", "weight_10", "weight_11"],
        rows,
        comments=[f"config_sha256={sha}", "weight_ij = kappa eta |beta_ij|^2"],
    )
    # detunings where the single-qubit and two-qubit channels carry equal weight
    w_diff = np.asarray(w_diff)
    crossings = []
    for i in np.flatnonzero(np.diff(np.sign(w_diff)) != 0):
        x0, x1 = dr_grid[i], dr_grid[i + 1]
        y0, y1 = w_diff[i], w_diff[i + 1]
        crossings.append(float(x0 - y0 * (x1 - x0) / (y1 - y0)))

    alphas = steady_alphas(steady).alpha
    dio.write_csv(
        os.path.join(out_dir, "phase_space.csv"),
        ["label", "re", "im"],
        [[f"alpha_{label}", a.real, a.imag]
         for label, a in zip(quantum.BASIS_LABELS, alphas)]
        + [[f"beta_{ij}", betas[ij].real, betas[ij].imag]
           for ij in ("00", "01", "10", "11")],
        comments=[f"config_sha256={sha}"],
    )

    summary = steady_summary(cfg)
    summary["equal_weight_crossings"] = crossings
    dio.write_json(os.path.join(out_dir, "steady_rates.json"), summary)
    return dio._jsonable(summary)


def _theta_ac_at(params, t_final, dt, times):
    pre = precompute(params, t_final, dt, include_purcell=False)
    idx = np.rint(np.asarray(times) / dt).astype(int)
    return pre.theta_ac[np.clip(idx, 0, pre.n_steps)]


def _me_series_rows(sol, theta):
    phi_p, psi_p = quantum.phi_plus(), quantum.psi_plus()
    rows = []
    for i, t in enumerate(sol.times):
        rho = sol.rhos[i]
        u = np.diag([1.0, 1.0, 1.0, np.exp(1j * theta[i])])
        rho_corr = u @ rho @ u.conj().T
        rows.append(
            [
                t,
                *[rho[x, x].real for x in range(4)],
                abs(rho[1, 2]),
                abs(rho[0, 3]),
                float(np.angle(rho[3, 0])),
                quantum.fidelity(rho, phi_p),
                quantum.fidelity(rho, psi_p),
                quantum.fidelity(rho_corr, psi_p),
                quantum.purity(rho),
                sol.photon_number()[i],
            ]
        )
    return rows


_ME_HEADER = [
    "t",
    "p_gg",
    "p_ge",
    "p_eg",
    "p_ee",
    "abs_rho_ge_eg",
    "abs_rho_gg_ee",
    "arg_rho_ee_gg",
    "fid_phi_plus",
    "fid_psi_plus",
    "fid_psi_plus_corrected",
    "purity",
    "photon_estimate",
]


def run_me(cfg: RunConfig, out_dir: str) -> dict:
    """Deterministic ensemble-average evolution."""
    params = cfg.to_params()
    sha = dio.write_run_outputs(out_dir, cfg, {"command": "me"})["config_sha256"]
    sol = evolve_me(
        params,
        cfg.initial_rho(),
        cfg.run.t_final,
        dt=cfg.run.dt,
        store_every=cfg.run.store_every,
        include_purcell=cfg.run.include_purcell,
    )
    theta = _theta_ac_at(params, cfg.run.t_final, cfg.run.dt, sol.times)
    dio.write_csv(
        os.path.join(out_dir, "me_series.csv"),
        _ME_HEADER,
        _me_series_rows(sol, theta),
        comments=[f"config_sha256={sha}"],
    )
    summary = {
        "final_fid_phi_plus": quantum.fidelity(sol.rhos[-1], quantum.phi_plus()),
        "final_fid_psi_plus": quantum.fidelity(sol.rhos[-1], quantum.psi_plus()),
        "final_purity": quantum.purity(sol.rhos[-1]),
        "theta_ac_final": float(theta[-1]),
        "gamma11_s": model.steady_gamma11(_constant_drive(params)),
    }
    dio.write_json(os.path.join(out_dir, "summary.json"), summary)
    return summary


def run_trajectory_cmd(cfg: RunConfig, out_dir: str) -> dict:
    """One conditional trajectory with its record and binary dump."""
    params = cfg.to_params()
    manifest = dio.write_run_outputs(out_dir, cfg, {"command": "trajectory"})
    sha = manifest["config_sha256"]
    record = run_trajectory(
        params,
        cfg.initial_rho(),
        cfg.run.t_final,
        master_seed=cfg.run.master_seed,
        index=cfg.run.traj_index,
        dt=cfg.run.dt,
        store_every=cfg.run.store_every,
        include_purcell=cfg.run.include_purcell,
    )
    phi_p, psi_p = quantum.phi_plus(), quantum.psi_plus()
    rows = []
    for i, t in enumerate(record.times):
        rho = record.rhos[i]
        u = np.diag([1.0, 1.0, 1.0, np.exp(1j * record.theta_ac[i])])
        rho_corr = u @ rho @ u.conj().T
        rows.append(
            [
                t,
                record.s[i],
                record.theta_ac[i],
                *[rho[x, x].real for x in range(4)],
                quantum.fidelity(rho, phi_p),
                quantum.fidelity(rho, psi_p),
                quantum.fidelity(rho_corr, psi_p),
                quantum.purity(rho),
            ]
        )
    dio.write_csv(
        os.path.join(out_dir, "trajectory.csv"),
        ["t", "s", "theta_ac", "p_gg", "p_ge", "p_eg", "p_ee",
         "fid_phi_plus", "fid_psi_plus", "fid_psi_plus_corrected", "purity"],
        rows,
        comments=[f"config_sha256={sha}"],
    )
    dio.write_csv(
        os.path.join(out_dir, "current.csv"),
        ["t", "j"],
        list(zip(record.j_times, record.j_binned)),
        comments=[f"config_sha256={sha}", "j averaged in 10-step bins"],
    )
    dio.write_trajectory(os.path.join(out_dir, "trajectory.bin"), record, sha)
    summary = {
        "s_final": float(record.s[-1]),
        "aborted": record.aborted,
        "final_fid_phi_plus": quantum.fidelity(record.rhos[-1], phi_p),
        "final_fid_psi_plus": quantum.fidelity(record.rhos[-1], psi_p),
        "master_seed": record.master_seed,
        "index": record.index,
    }
    dio.write_json(os.path.join(out_dir, "summary.json"), summary)
    return summary


def _run_ensemble_from_cfg(cfg: RunConfig, record_concurrence: bool):
    params = cfg.to_params()
    return run_ensemble(
        params,
        cfg.initial_rho(),
        t_final=cfg.run.t_final,
        n_traj=cfg.run.n_traj,
        dt=cfg.run.dt,
        master_seed=cfg.run.master_seed,
        workers=cfg.effective_workers(),
        store_every=cfg.run.store_every,
        include_purcell=cfg.run.include_purcell,
        project_states={"phi_plus": quantum.phi_plus(), "psi_plus": quantum.psi_plus()},
        record_concurrence=record_concurrence,
    )


def run_ensemble_cmd(cfg: RunConfig, out_dir: str) -> dict:
    """Trajectory ensemble: averaged series, histograms, and fit growth."""
    params = cfg.to_params()
    sha = dio.write_run_outputs(out_dir, cfg, {"command": "ensemble"})["config_sha256"]
    result = _run_ensemble_from_cfg(cfg, record_concurrence=True)

    live = ~result.aborted
    me = evolve_me(
        params,
        cfg.initial_rho(),
        cfg.run.t_final,
        dt=cfg.run.dt,
        store_every=1,
        include_purcell=cfg.run.include_purcell,
    )
    me_idx = {round(t / cfg.run.dt): i for i, t in enumerate(me.times)}
    rows = []
    for i, t in enumerate(result.times):
        j = me_idx.get(round(t / cfg.run.dt))
        td = (
            quantum.trace_distance(result.mean_rho[i], me.rhos[j])
            if j is not None
            else np.nan
        )
        rows.append(
            [
                t,
                result.projections["phi_plus"][live, i].mean(),
                result.projections["psi_plus"][live, i].mean(),
                result.mean_concurrence()[i],
                result.s[live, i].mean(),
                result.s[live, i].std(),
                td,
            ]
        )
    dio.write_csv(
        os.path.join(out_dir, "ensemble_series.csv"),
        ["t", "mean_fid_phi_plus", "mean_fid_psi_plus", "mean_concurrence",
         "mean_s", "std_s", "trace_distance_to_me"],
        rows,
        comments=[f"config_sha256={sha}"],
    )

    fits = {}
    for n, t in enumerate(cfg.histogram.times):
        hist = histogram_s(result, t)
        dio.write_csv(
            os.path.join(out_dir, f"hist_{n}.csv"),
            ["bin_lo", "bin_hi", "density"],
            list(zip(hist.edges[:-1], hist.edges[1:], hist.density)),
            comments=[f"config_sha256={sha}", f"t={hist.t}", f"n={hist.n_samples}"],
        )
        fits[str(t)] = hist.fit

    fit_grid = np.arange(
        cfg.histogram.fit_t_min,
        cfg.histogram.fit_t_max + 0.5 * cfg.histogram.fit_t_step,
        cfg.histogram.fit_t_step,
    )
    separations = []
    sep_rows = []
    for t in fit_grid:
        fit = histogram_s(result, float(t)).fit
        if fit is None:
            continue
        separations.append((t, fit.separation))
        sep_rows.append(
            [t, fit.separation, fit.sigma_minus, fit.sigma_plus, fit.overlap,
             fit.weight_minus]
        )
    dio.write_csv(
        os.path.join(out_dir, "separations.csv"),
        ["t", "separation", "sigma_minus", "sigma_plus", "overlap", "weight_minus"],
        sep_rows,
        comments=[f"config_sha256={sha}"],
    )
    slope = np.nan
    if len(separations) >= 2:
        ts, seps = zip(*separations)
        slope = float(np.polyfit(ts, seps, 1)[0])

    stats = classify_and_average(result)
    summary = {
        "n_traj": result.n_traj,
        "aborted": int(result.aborted.sum()),
        "gamma11_s": result.gamma11_s,
        "separation_slope": slope,
        "separation_slope_expected": 2.0 * result.gamma11_s,
        "fits": {k: (None if v is None else dio._jsonable(v)) for k, v in fits.items()},
        "p_success_at_zero": stats.p_success,
        "f_bar_at_zero": stats.f_bar,
        "c_bar_at_zero": stats.c_bar,
        "mean_concurrence_final": float(result.mean_concurrence()[-1]),
    }
    dio.write_json(os.path.join(out_dir, "summary.json"), summary)
    return summary


def run_threshold(cfg: RunConfig, out_dir: str) -> dict:
    """Threshold classification sweep and its headline statistics."""
    sha = dio.write_run_outputs(out_dir, cfg, {"command": "threshold"})["config_sha256"]
    result = _run_ensemble_from_cfg(cfg, record_concurrence=False)

    hist = histogram_s(result, float(result.times[-1]))
    dio.write_csv(
        os.path.join(out_dir, "hist_final.csv"),
        ["bin_lo", "bin_hi", "density"],
        list(zip(hist.edges[:-1], hist.edges[1:], hist.density)),
        comments=[f"config_sha256={sha}", f"t={hist.t}", f"n={hist.n_samples}"],
    )

    grid = np.linspace(0.0, cfg.threshold.s_th_max, cfg.threshold.s_th_steps)
    sweep = threshold_sweep(result, grid)
    rows = [
        [
            st.s_th,
            st.p_success,
            st.f_bar,
            st.c_bar,
            st.fidelity_plus,
            st.fidelity_minus,
            st.concurrence_plus,
            st.concurrence_minus,
            int((st.labels == 1).sum()),
            int((st.labels == -1).sum()),
        ]
        for st in sweep
    ]
    dio.write_csv(
        os.path.join(out_dir, "threshold_sweep.csv"),
        ["s_th", "p_success", "f_bar", "c_bar", "fid_plus", "fid_minus",
         "conc_plus", "conc_minus", "n_plus", "n_minus"],
        rows,
        comments=[f"config_sha256={sha}"],
    )

    # plateau: the largest threshold still keeping both branches populated
    populated = [
        st
        for st in sweep
        if (st.labels == 1).sum() >= 100 and (st.labels == -1).sum() >= 100
    ]
    plateau = populated[-1] if populated else sweep[0]
    zero = sweep[0]
    summary = {
        "n_traj": result.n_traj,
        "aborted": int(result.aborted.sum()),
        "theta_ac_final": float(result.theta_ac[-1]),
        "gamma11_s": result.gamma11_s,
        "s0": zero.s0,
        "f_bar_at_zero": zero.f_bar,
        "c_bar_at_zero": zero.c_bar,
        "p_success_at_zero": zero.p_success,
        "plateau_s_th": plateau.s_th,
        "f_bar_plateau": plateau.f_bar,
        "c_bar_plateau": plateau.c_bar,
        "p_success_plateau": plateau.p_success,
        "hist_fit": None if hist.fit is None else dio._jsonable(hist.fit),
    }
    dio.write_json(os.path.join(out_dir, "summary.json"), summary)
    return summary


def run_oracle_check(cfg: RunConfig, out_dir: str) -> dict:
    """Reduced equation vs the unreduced qubits-plus-cavity integration."""
    params = cfg.to_params()
    sha = dio.write_run_outputs(out_dir, cfg, {"command": "oracle-check"})["config_sha256"]
    t_final, dt_o = cfg.oracle.t_final, cfg.oracle.dt
    cutoff = cfg.oracle.fock_cutoff or None

    n_rows = 100
    me_every = max(1, round(t_final / cfg.run.dt / n_rows))
    oracle_every = max(1, round(t_final / dt_o / n_rows))
    me = evolve_me(
        params,
        cfg.initial_rho(),
        t_final,
        dt=cfg.run.dt,
        store_every=me_every,
        include_purcell=cfg.run.include_purcell,
    )
    oracle = evolve_full_oracle(
        params,
        cfg.initial_rho(),
        t_final,
        fock_cutoff=cutoff,
        dt=dt_o,
        store_every=oracle_every,
    )
    me_by_t = {round(t, 9): i for i, t in enumerate(me.times)}
    photon_me = me.photon_number()
    rows = []
    tds = []
    ratios = []
    for i, t in enumerate(oracle.times):
        j = me_by_t.get(round(float(t), 9))
        if j is None:
            continue
        td = quantum.trace_distance(oracle.rhos_reduced[i], me.rhos[j])
        rows.append([t, td, oracle.photon_number[i], photon_me[j]])
        tds.append(td)
        if oracle.photon_number[i] > 0.05:
            ratios.append(photon_me[j] / oracle.photon_number[i])
    dio.write_csv(
        os.path.join(out_dir, "oracle_compare.csv"),
        ["t", "trace_distance", "photon_full", "photon_reduced"],
        rows,
        comments=[f"config_sha256={sha}", f"fock_cutoff={oracle.fock_cutoff}"],
    )
    max_td = float(np.max(tds))
    photon_ratio = float(ratios[-1]) if ratios else np.nan
    passed = max_td <= ORACLE_TD_TOL and abs(photon_ratio - 1.0) <= ORACLE_PHOTON_TOL
    summary = {
        "max_trace_distance": max_td,
        "trace_distance_tolerance": ORACLE_TD_TOL,
        "photon_ratio_final": photon_ratio,
        "photon_ratio_tolerance": ORACLE_PHOTON_TOL,
        "fock_cutoff": oracle.fock_cutoff,
        "top_fock_max": oracle.top_fock_max,
        "passed": passed,
    }
    dio.write_json(os.path.join(out_dir, "summary.json"), summary)
    if not passed:
        raise SimulationQualityError(
            f"oracle disagreement: max trace distance {max_td:.4f} "
            f"(tolerance {ORACLE_TD_TOL}), photon ratio {photon_ratio:.4f} "
            f"(tolerance 1 +- {ORACLE_PHOTON_TOL})"
        )
    return summary


PIPELINES = {
    "rates": run_rates,
    "me": run_me,
    "trajectory": run_trajectory_cmd,
    "ensemble": run_ensemble_cmd,
    "threshold": run_threshold,
    "oracle-check": run_oracle_check,
}
