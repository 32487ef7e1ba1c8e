"""File output: CSV tables, JSON summaries, run manifests, trajectory dumps.

The trajectory dump is a versioned little-endian binary:

    offset  size  field
    0       8     magic "DSIMTRJ1"
    8       4     format version (u32, currently 1)
    12      4     flags (u32; bit 0 = trajectory aborted)
    16      8     master_seed (u64)
    24      8     trajectory index (u64)
    32      8     dt (f64)
    40      8     n_store (u64)
    48      8     n_bins (u64)
    56      32    sha256 of the resolved run config (raw bytes)
    88      -     f64 arrays, little-endian, in order:
                   times[n_store], s[n_store], theta_ac[n_store],
                   rho[n_store*4*4*2] (row-major, re/im interleaved),
                   j_times[n_bins], j_binned[n_bins]
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import struct
from dataclasses import asdict, is_dataclass

import numpy as np

from . import __version__
from .smesolve import TrajectoryRecord

TRAJ_MAGIC = b"DSIMTRJ1"
TRAJ_VERSION = 1
_HEADER = struct.Struct("<8sIIQQdQQ32s")


def _jsonable(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return _jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return {"re": obj.real.tolist(), "im": obj.imag.tolist()}
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(path: str, header: list[str], rows, comments: list[str] | None = None) -> None:
    """Plain CSV with optional leading '#' comment lines (manifest pointers)."""
    with open(path, "w", newline="") as fh:
        for line in comments or []:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(v) for v in row])


def _format_cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def config_sha256(config_text: str) -> str:
    return hashlib.sha256(config_text.encode()).hexdigest()


def build_manifest(config, extra: dict | None = None) -> dict:
    """The reproducibility record written next to every output file set.

    Records the resolved config, code version, seed, and the regime ratios
    a reader needs to judge validity: the detector bandwidth margin
    kappa/2 vs the total intrinsic relaxation, the per-qubit cavity-mediated
    decay lambda^2 kappa, and the sign convention chosen for the
    qubit-cavity detunings (positive delta, qubits above the cavity, so the
    pulls chi are positive as specified).

    gamma_d_offdiag_max monitors the dephasing table over the run's whole
    transient: at steady state every off-diagonal entry is provably
    non-positive, but no such proof covers the ring-up, so the largest
    entry is logged (a positive value marks an interval where the reduced
    kernel amplifies a coherence) instead of asserted.
    """
    from . import config as config_mod
    from . import model

    params = config.to_params()
    text = config_mod.dumps(config)
    lam = params.lambdas
    n_steps = max(1, round(config.run.t_final / config.run.dt))
    rows = model.alpha_grid(params, n_steps, config.run.dt)
    K = model.snapshot_tables(rows, params)[0]
    off = ~np.eye(4, dtype=bool)
    manifest = {
        "code_version": __version__,
        "config_sha256": config_sha256(text),
        "resolved_config": config.as_dict(),
        "master_seed": config.run.master_seed,
        "dt": config.run.dt,
        "lambdas": list(lam),
        "chis": list(params.chis),
        "purcell_rate_per_qubit": list(lam**2 * params.kappa),
        "bandwidth_margin": {
            "kappa_over_2": params.kappa / 2.0,
            "gamma1_total": float(sum(params.gamma1)),
            "ratio": float(
                (params.kappa / 2.0) / max(sum(params.gamma1), 1e-300)
            ),
        },
        "delta_qc_sign": "positive (qubits above the cavity); chi_j > 0",
        "gamma_d_offdiag_max": float(K.real[:, off].max()),
    }
    if extra:
        manifest.update(extra)
    return manifest


def write_run_outputs(out_dir: str, config, extra_manifest: dict | None = None) -> dict:
    """Write manifest.json + resolved.ini into out_dir; returns the manifest."""
    from . import config as config_mod

    os.makedirs(out_dir, exist_ok=True)
    manifest = build_manifest(config, extra_manifest)
    write_json(os.path.join(out_dir, "manifest.json"), manifest)
    config_mod.save(config, os.path.join(out_dir, "resolved.ini"))
    return manifest


def write_trajectory(path: str, record: TrajectoryRecord, config_sha: str) -> None:
    """Serialize one trajectory to the versioned binary layout above."""
    sha = bytes.fromhex(config_sha)
    if len(sha) != 32:
        raise ValueError("config_sha must be a sha256 hex digest")
    times = np.ascontiguousarray(record.times, dtype="<f8")
    s = np.ascontiguousarray(record.s, dtype="<f8")
    theta = np.ascontiguousarray(record.theta_ac, dtype="<f8")
    rhos = np.ascontiguousarray(record.rhos, dtype="<c16")
    j_times = np.ascontiguousarray(record.j_times, dtype="<f8")
    j_binned = np.ascontiguousarray(record.j_binned, dtype="<f8")
    n_store, n_bins = len(times), len(j_times)
    if not (len(s) == len(theta) == n_store and rhos.shape == (n_store, 4, 4)):
        raise ValueError("inconsistent trajectory record array lengths")
    header = _HEADER.pack(
        TRAJ_MAGIC,
        TRAJ_VERSION,
        1 if record.aborted else 0,
        record.master_seed,
        record.index,
        record.times[1] - record.times[0] if n_store > 1 else 0.0,
        n_store,
        n_bins,
        sha,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(times.tobytes())
        fh.write(s.tobytes())
        fh.write(theta.tobytes())
        fh.write(rhos.view("<f8").tobytes())
        fh.write(j_times.tobytes())
        fh.write(j_binned.tobytes())


def read_trajectory(path: str) -> tuple[TrajectoryRecord, str]:
    """Load a trajectory dump; returns (record, config_sha256_hex)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size or raw[:8] != TRAJ_MAGIC:
        raise ValueError(f"{path} is not a trajectory dump")
    magic, version, flags, seed, index, _dt, n_store, n_bins, sha = _HEADER.unpack(
        raw[: _HEADER.size]
    )
    if version != TRAJ_VERSION:
        raise ValueError(f"unsupported trajectory dump version {version}")
    body = np.frombuffer(raw[_HEADER.size :], dtype="<f8")
    expected = 3 * n_store + n_store * 32 + 2 * n_bins
    if len(body) != expected:
        raise ValueError(f"trajectory dump is truncated ({len(body)} of {expected} values)")
    pos = 0

    def take(n):
        nonlocal pos
        out = body[pos : pos + n]
        pos += n
        return out

    times = take(n_store).copy()
    s = take(n_store).copy()
    theta = take(n_store).copy()
    rhos = take(n_store * 32).view("<c16").reshape(n_store, 4, 4).copy()
    j_times = take(n_bins).copy()
    j_binned = take(n_bins).copy()
    record = TrajectoryRecord(
        times=times,
        rhos=rhos,
        s=s,
        theta_ac=theta,
        j_times=j_times,
        j_binned=j_binned,
        master_seed=seed,
        index=index,
        aborted=bool(flags & 1),
    )
    return record, sha.hex()
