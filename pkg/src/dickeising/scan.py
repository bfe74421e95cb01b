"""Workflow drivers: phase-diagram scans, fixed-coupling slices, trajectory
ensembles, and peak-scaling analysis.

Grids are processed in a fixed deterministic order with warm-start chaining
inside each independent row; rows can be distributed over worker processes,
and the parent process is the only writer, so output files are identical for
any worker count. Resume never recomputes a finished row: existing output is
merged and rewritten in canonical order, keeping reruns byte-identical.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .dynamics import (KrylovConfig, TrajectoryRecord, cat_purification_state,
                       ensemble_statistics, run_trajectory)
from .groundstate import (DMRGConfig, ground_state, thermal_average,
                          thermal_weights)
from .io import (config_hash, write_solver_record, write_table, read_table,
                 write_trajectory_table)
from .model import ModelParams
from .mpo import build_dicke_ising_mpo
from .mps import basis_product_mps, random_mps
from .observables import (oscillator_entropy, parity_expectation,
                          photon_statistics, quadrature_mean,
                          sigma_y_correlations, top_fock_weight)
from .tensor import TruncationSpec

SCAN_COLUMNS = ("h", "J", "g", "energy", "gap1", "gap2", "n_mean", "n_over_L",
                "n_var", "q_mean", "entropy", "parity", "xi", "no_decay",
                "top_fock", "variance", "sweeps", "converged")
SLICE_COLUMNS = ("h", "energy", "gap1", "gap2", "variance", "n_mean", "n_var",
                 "varn_over_n", "q_mean", "entropy", "parity", "xi",
                 "no_decay", "top_fock", "n_thermal", "thermal_tail",
                 "sweeps", "converged")


def simplex_points(resolution: int) -> list[tuple[int, int, int]]:
    """All (ih, iJ, ig) with ih + iJ + ig = resolution; couplings are i/R."""
    if resolution < 1:
        raise ValueError("resolution must be at least 1")
    pts = []
    for ig in range(resolution + 1):
        for ih in range(resolution - ig, -1, -1):
            pts.append((ih, resolution - ig - ih, ig))
    return pts


def _dmrg_config(solver_cfg: dict) -> DMRGConfig:
    base = DMRGConfig()
    keys = ("max_bond", "rel_tol", "max_sweeps", "min_sweeps", "energy_tol",
            "variance_tol", "expansion_alpha", "expansion_decay", "eig_tol",
            "guess_bond", "guess_seed")
    kwargs = {k: solver_cfg[k] for k in keys if k in solver_cfg}
    return DMRGConfig(**{**base.__dict__, **kwargs})


def _point_observables(params: ModelParams, result) -> dict:
    psi = result.state
    n_mean, n_var = photon_statistics(psi)
    return {
        "energy": result.energy,
        "variance": result.report.variance,
        "n_mean": n_mean, "n_var": n_var,
        "q_mean": quadrature_mean(psi),
        "entropy": oscillator_entropy(psi),
        "parity": parity_expectation(psi),
        "top_fock": top_fock_weight(psi),
        "sweeps": result.report.sweeps,
        "converged": int(result.report.converged),
    }


def _add_correlation(obs: dict, psi) -> dict:
    """Attach the fitted correlation length; nan when the chain is too short
    for the fit window, -1.0 when the fit diverges (no decay resolved)."""
    try:
        prof = sigma_y_correlations(psi)
        obs["xi"] = prof.xi if np.isfinite(prof.xi) else -1.0
        obs["no_decay"] = int(prof.no_decay)
    except ValueError:
        obs["xi"] = math.nan
        obs["no_decay"] = 0
    return obs


def _excitation_gaps(params: ModelParams, h_mpo, ground, n_states: int,
                     config: DMRGConfig) -> tuple[list, list[float]]:
    """Penalized solves above a known ground state; returns (states, gaps)."""
    states = [ground.state]
    gaps = []
    for k in range(1, n_states):
        rng = np.random.default_rng(config.guess_seed + k)
        guess = random_mps(h_mpo.site_specs, config.guess_bond, rng)
        res = ground_state(params, config=config, guess=guess, h_mpo=h_mpo,
                           orthogonal_to=states)
        states.append(res.state)
        gaps.append(res.energy - ground.energy)
    return states, gaps


def _scan_row_worker(args) -> list[tuple]:
    """One constant-g row of the simplex, chained from high h to low h."""
    model_cfg, solver_cfg, scan_cfg, resolution, row_points = args
    config = _dmrg_config(solver_cfg)
    n_states = int(scan_cfg.get("n_states", 3))
    rows = []
    guess = None
    for ih, ij, ig in row_points:
        params = ModelParams(
            omega=model_cfg.get("omega", 1.0), h=ih / resolution,
            J=ij / resolution, g=ig / resolution, L=model_cfg["L"],
            n_max=model_cfg.get("n_max", 0))
        h_mpo = build_dicke_ising_mpo(params)
        res = ground_state(params, config=config, guess=guess, h_mpo=h_mpo)
        guess = res.state
        obs = _point_observables(params, res)
        _, gaps = _excitation_gaps(params, h_mpo, res, n_states, config)
        obs["gap1"] = gaps[0] if len(gaps) > 0 else math.nan
        obs["gap2"] = gaps[1] if len(gaps) > 1 else math.nan
        obs["n_over_L"] = obs["n_mean"] / params.L
        _add_correlation(obs, res.state)
        rows.append((ih, ij, ig, obs))
    return rows


def run_simplex_scan(cfg: dict, output_dir, workers: int = 1,
                     resume: bool = False) -> Path:
    """Ground-state scan over the barycentric coupling grid h + J + g = 1."""
    output_dir = Path(output_dir)
    resolution = int(cfg["scan"]["resolution"])
    model_cfg = dict(cfg.get("model", {}))
    solver_cfg = dict(cfg.get("solver", {}))
    out_path = output_dir / "scan.tsv"
    digest = config_hash(cfg)

    done: dict[tuple[int, int, int], tuple] = {}
    if resume and out_path.exists():
        meta, columns, arr = read_table(out_path)
        if meta.get("config_hash") not in (None, digest):
            raise ValueError("existing scan.tsv was made with a different config")
        for row in arr:
            key = tuple(int(round(row[i] * resolution)) for i in range(3))
            done[key] = tuple(row)

    pending_rows: list[list[tuple[int, int, int]]] = []
    for ig in range(resolution + 1):
        row = [(ih, resolution - ig - ih, ig)
               for ih in range(resolution - ig, -1, -1)
               if (ih, resolution - ig - ih, ig) not in done]
        if row:
            pending_rows.append(row)

    scan_cfg = dict(cfg["scan"])
    jobs = [(model_cfg, solver_cfg, scan_cfg, resolution, row)
            for row in pending_rows]
    for batch in _map_jobs(_scan_row_worker, jobs, workers):
        for ih, ij, ig, obs in batch:
            done[(ih, ij, ig)] = (
                ih / resolution, ij / resolution, ig / resolution,
                *[obs[c] for c in SCAN_COLUMNS[3:]])

    ordered = [done[key] for key in sorted(done)]
    meta = {"config_hash": digest, "resolution": resolution,
            "L": model_cfg["L"], "kind": "simplex-scan"}
    write_table(out_path, list(SCAN_COLUMNS), ordered, meta)
    write_solver_record(output_dir / "scan_record.json", {
        "kind": "simplex-scan", "config": cfg, "config_hash": digest,
        "n_points": len(ordered)})
    return out_path


def _slice_worker(args) -> tuple[int, list[tuple]]:
    """One chain length of a fixed-(g, J) slice, chained from high h down."""
    model_cfg, solver_cfg, slice_cfg, L = args
    config = _dmrg_config(solver_cfg)
    n_states = int(slice_cfg.get("n_states", 1))
    temperature = slice_cfg.get("temperature")
    if temperature is not None and n_states < 2:
        raise ValueError("thermal averaging needs n_states >= 2")
    h_values = sorted(_slice_h_values(slice_cfg), reverse=True)
    rows = []
    guess = None
    for h in h_values:
        params = ModelParams(
            omega=model_cfg.get("omega", 1.0), h=h, J=slice_cfg["J"],
            g=slice_cfg["g"], L=L, n_max=model_cfg.get("n_max", 0))
        h_mpo = build_dicke_ising_mpo(params)
        res = ground_state(params, config=config, guess=guess, h_mpo=h_mpo)
        guess = res.state
        obs = _point_observables(params, res)
        n_mean = obs["n_mean"]
        obs["varn_over_n"] = obs["n_var"] / n_mean if n_mean > 0 else math.nan
        _add_correlation(obs, res.state)
        states, gaps = _excitation_gaps(params, h_mpo, res, n_states, config)
        obs["gap1"] = gaps[0] if len(gaps) > 0 else math.nan
        obs["gap2"] = gaps[1] if len(gaps) > 1 else math.nan
        obs["n_thermal"] = obs["thermal_tail"] = math.nan
        if temperature is not None:
            energies = np.array([res.energy] + [res.energy + dg for dg in gaps])
            ns = np.array([photon_statistics(s)[0] for s in states])
            obs["n_thermal"] = thermal_average(energies, ns, temperature)
            obs["thermal_tail"] = float(
                thermal_weights(energies, temperature)[int(np.argmax(energies))])
        rows.append((h,) + tuple(obs[c] for c in SLICE_COLUMNS[1:]))
    rows.sort(key=lambda r: r[0])
    return L, rows


def _slice_h_values(slice_cfg: dict) -> list[float]:
    if "h_values" in slice_cfg:
        return [float(h) for h in slice_cfg["h_values"]]
    start, stop = float(slice_cfg["h_start"]), float(slice_cfg["h_stop"])
    step = float(slice_cfg["h_step"])
    n = int(round((stop - start) / step))
    return [start + k * step for k in range(n + 1)]


def run_slice(cfg: dict, output_dir, workers: int = 1,
              resume: bool = False) -> list[Path]:
    """Oscillator-variance slices at fixed (g, J) across chain lengths."""
    output_dir = Path(output_dir)
    model_cfg = dict(cfg.get("model", {}))
    solver_cfg = dict(cfg.get("solver", {}))
    slice_cfg = dict(cfg["slice"])
    digest = config_hash(cfg)
    lengths = [int(L) for L in slice_cfg["L_values"]]

    paths = {L: output_dir / f"slice_L{L:03d}.tsv" for L in lengths}
    todo = [L for L in lengths
            if not (resume and paths[L].exists()
                    and read_table(paths[L])[0].get("config_hash") == digest)]
    jobs = [(model_cfg, solver_cfg, slice_cfg, L) for L in todo]
    for L, rows in _map_jobs(_slice_worker, jobs, workers):
        meta = {"config_hash": digest, "L": L, "g": slice_cfg["g"],
                "J": slice_cfg["J"], "kind": "coupling-slice"}
        write_table(paths[L], list(SLICE_COLUMNS), rows, meta)
    write_solver_record(output_dir / "slice_record.json", {
        "kind": "coupling-slice", "config": cfg, "config_hash": digest,
        "L_values": lengths})
    return [paths[L] for L in lengths]


def _trajectory_worker(args) -> tuple[int, TrajectoryRecord]:
    model_cfg, solver_cfg, traj_cfg, seed = args
    params = ModelParams(
        omega=model_cfg.get("omega", 1.0), h=traj_cfg["h"], J=traj_cfg["J"],
        g=traj_cfg["g"], L=model_cfg["L"],
        n_max=model_cfg.get("n_max", 0))
    initial = traj_cfg.get("initial", "ground")
    if initial == "ground":
        res = ground_state(params, config=_dmrg_config(solver_cfg))
        psi0 = res.state
    elif initial == "cat":
        psi0 = cat_purification_state(params, complex(traj_cfg["alpha"]))
    elif initial == "basis":
        psi0 = basis_product_mps(params.site_specs(),
                                 [0] * (params.L + 1))
    else:
        raise ValueError(f"unknown initial state {initial!r}")
    config = KrylovConfig(
        basis_size=int(traj_cfg.get("krylov_dim", 8)),
        trunc=TruncationSpec(max_rank=int(traj_cfg.get("max_bond", 64)),
                             rel_tol=float(traj_cfg.get("rel_tol", 0.0))))
    rec = run_trajectory(
        params, psi0, float(traj_cfg["t_final"]), float(traj_cfg["dt"]),
        float(traj_cfg["kappa"]), seed=seed, config=config,
        record_every=int(traj_cfg.get("record_every", 1)))
    return seed, rec


def _record_from_table(path) -> TrajectoryRecord:
    meta, columns, arr = read_table(path)
    cols = {name: arr[:, i] for i, name in enumerate(columns)}
    return TrajectoryRecord(
        times=cols["t"], dy=cols["dy"], q_mean=cols["q"], n_mean=cols["n"],
        entropy=cols["S"], parity=cols["P"], norm_drift=cols["norm_drift"],
        dt=float(meta["dt"]), kappa=float(meta["kappa"]),
        seed=int(meta["seed"]) if meta.get("seed") else None,
        error_estimate=float(meta["error_estimate"]),
        max_bond=int(meta["max_bond"]))


ENSEMBLE_COLUMNS = ("t", "q_mean", "q_se", "n_mean", "n_se", "S_mean", "S_se",
                    "P_mean", "P_se")


def run_trajectory_ensemble(cfg: dict, output_dir, workers: int = 1,
                            resume: bool = False,
                            seed_base: int | None = None) -> list[Path]:
    """Stochastic trajectories with seeds seed_base..seed_base+n-1, plus the
    ensemble mean/standard-error table."""
    output_dir = Path(output_dir)
    model_cfg = dict(cfg.get("model", {}))
    solver_cfg = dict(cfg.get("solver", {}))
    traj_cfg = dict(cfg["trajectory"])
    if seed_base is None:
        seed_base = int(traj_cfg.get("seed_base", 0))
    n_traj = int(traj_cfg["n_trajectories"])
    digest = config_hash(cfg)

    seeds = [seed_base + k for k in range(n_traj)]
    paths = {s: output_dir / f"traj_{s:06d}.tsv" for s in seeds}
    records: dict[int, TrajectoryRecord] = {}
    todo = []
    for s in seeds:
        if resume and paths[s].exists():
            records[s] = _record_from_table(paths[s])
        else:
            todo.append(s)
    jobs = [(model_cfg, solver_cfg, traj_cfg, s) for s in todo]
    for seed, rec in _map_jobs(_trajectory_worker, jobs, workers):
        records[seed] = rec
        write_trajectory_table(paths[seed], rec, {"config_hash": digest})

    stats = ensemble_statistics([records[s] for s in seeds])
    rows = np.column_stack([
        stats["times"], stats["q_mean"], stats["q_mean_se"],
        stats["n_mean"], stats["n_mean_se"], stats["entropy"],
        stats["entropy_se"], stats["parity"], stats["parity_se"]])
    ens_path = output_dir / "ensemble.tsv"
    write_table(ens_path, list(ENSEMBLE_COLUMNS), rows.tolist(),
                {"config_hash": digest, "n_trajectories": n_traj,
                 "seed_base": seed_base, "kind": "trajectory-ensemble"})
    write_solver_record(output_dir / "trajectory_record.json", {
        "kind": "trajectory-ensemble", "config": cfg, "config_hash": digest,
        "seeds": seeds,
        "error_estimates": {s: records[s].error_estimate for s in seeds}})
    return [paths[s] for s in seeds] + [ens_path]


def quadratic_peak(h: np.ndarray, y: np.ndarray) -> tuple[float, float, bool]:
    """Sub-grid peak estimate by a parabola through the three points around
    the grid maximum. Returns (location, height, interior)."""
    h = np.asarray(h, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(h) < 3:
        raise ValueError("need at least three points")
    order = np.argsort(h)
    h, y = h[order], y[order]
    m = int(np.argmax(y))
    if m == 0 or m == len(h) - 1:
        return float(h[m]), float(y[m]), False
    x0, x1, x2 = h[m - 1:m + 2]
    y0, y1, y2 = y[m - 1:m + 2]
    coef = np.polyfit([x0, x1, x2], [y0, y1, y2], 2)
    if coef[0] >= 0:
        return float(h[m]), float(y[m]), False
    loc = -coef[1] / (2 * coef[0])
    height = float(np.polyval(coef, loc))
    return float(loc), height, bool(x0 < loc < x2)


def _loglog_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Least-squares slope and its standard error for log y vs log x."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, res, _, _ = np.linalg.lstsq(A, ly, rcond=None)
    dof = len(lx) - 2
    if dof > 0 and res.size:
        cov = (float(res[0]) / dof) * np.linalg.inv(A.T @ A)
        err = float(np.sqrt(cov[0, 0]))
    else:
        err = 0.0
    return float(coef[0]), err


def peak_scaling_analysis(ratio_by_length: dict[int, tuple[np.ndarray, np.ndarray]],
                          h_c: float = 0.312) -> dict:
    """Finite-size peak positions/heights and their power-law exponents.

    Input maps L -> (h grid, variance-ratio values). The height exponent is
    the log-log slope of peak height vs L; the drift exponent is the slope of
    |h_peak - h_c| vs L. Standard errors come from the fit covariance.
    """
    lengths = sorted(ratio_by_length)
    peaks = {}
    for L in lengths:
        h, y = ratio_by_length[L]
        loc, height, interior = quadratic_peak(h, y)
        peaks[L] = {"location": loc, "height": height, "interior": interior}
    ls = np.array(lengths, dtype=float)
    heights = np.array([peaks[L]["height"] for L in lengths])
    locs = np.array([peaks[L]["location"] for L in lengths])
    out = {"h_c": h_c, "lengths": lengths, "peaks": peaks}
    if len(lengths) >= 2:
        out["height_exponent"], out["height_exponent_err"] = _loglog_fit(
            ls, heights)
        drift = np.abs(locs - h_c)
        if np.all(drift > 0):
            out["drift_exponent"], out["drift_exponent_err"] = _loglog_fit(
                ls, drift)
    return out


def analyze_slices(cfg: dict, output_dir, slice_paths=None) -> Path:
    """Read slice tables, locate peaks, fit exponents, write peaks + scaling."""
    output_dir = Path(output_dir)
    if slice_paths is None:
        slice_paths = sorted(output_dir.glob("slice_L*.tsv"))
    if not slice_paths:
        raise FileNotFoundError(f"no slice tables found in {output_dir}")
    ratio_by_length = {}
    for path in slice_paths:
        meta, columns, arr = read_table(path)
        L = int(meta["L"])
        hcol = columns.index("h")
        rcol = columns.index("varn_over_n")
        ratio_by_length[L] = (arr[:, hcol], arr[:, rcol])
    h_c = float(cfg.get("analyze", {}).get("h_c", 0.312))
    result = peak_scaling_analysis(ratio_by_length, h_c=h_c)
    rows = [(L, result["peaks"][L]["location"], result["peaks"][L]["height"],
             int(result["peaks"][L]["interior"]))
            for L in result["lengths"]]
    write_table(output_dir / "peaks.tsv",
                ["L", "h_peak", "height", "interior"], rows,
                {"h_c": h_c, "kind": "peak-summary",
                 "config_hash": config_hash(cfg)})
    record = {"kind": "peak-scaling", "config_hash": config_hash(cfg)}
    record.update({k: v for k, v in result.items() if k != "peaks"})
    record["peaks"] = {str(L): result["peaks"][L] for L in result["lengths"]}
    write_solver_record(output_dir / "scaling.json", record)
    return output_dir / "scaling.json"


def _map_jobs(fn, jobs, workers: int):
    """Run jobs serially or on a process pool; yields results as they finish
    computing but callers must not rely on order."""
    if workers <= 1 or len(jobs) <= 1:
        for job in jobs:
            yield fn(job)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(fn, jobs)
