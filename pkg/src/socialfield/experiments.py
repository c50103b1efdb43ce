"""Experiment drivers behind the CLI subcommands.

Each ``run_*`` function takes an ``ExperimentConfig``, writes its artefacts to
``cfg.output_dir`` and returns the list of written paths. The numerical cores
(``sweep_member``, ``chaos_rows``, ...) are exposed separately so tests can
call them without touching the filesystem.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, svg
from .abm import Trajectory, simulate
from .config import ConfigError, ExperimentConfig, config_hash
from .io import read_ndjson, write_csv, write_manifest, write_ndjson
from .measures import (
    cluster_components,
    fluctuation_slope,
    sample_from_density,
    sliced_w2_quantile,
    within_cluster_spread,
)
from .model import SystemState
from .pde import DensityField, Grid2D, init_gaussian_mixture, pde_integrate

U64 = 2**64


def member_seed(base: int, k: int) -> int:
    return (int(base) + k) % U64


def pmap(fn, items, threads: int = 1):
    """Ordered map; results never depend on the worker count."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# -- statistics ----------------------------------------------------------------


def cluster_stats(s: SystemState, radius: float, min_group: int = 2) -> dict:
    """Component count, count of components with >= ``min_group`` agents, opinion spread."""
    cl = cluster_components(s, radius)
    sizes = np.bincount(cl.labels, minlength=cl.n_clusters)
    return {
        "n_clusters": cl.n_clusters,
        "n_groups": int(np.sum(sizes >= min_group)),
        "spread": within_cluster_spread(s, cl),
    }


def sweep_member(sim_cfg, tail: int = 50) -> dict:
    """Run one ensemble member; final cluster stats plus group counts over the last ``tail`` snapshots."""
    tr = simulate(sim_cfg)
    r = sim_cfg.model.radius
    out = cluster_stats(tr.final, r)
    series = [cluster_stats(s, r) for s in tr.snapshots[-tail:]]
    out["group_series"] = [x["n_groups"] for x in series]
    out["cluster_series"] = [x["n_clusters"] for x in series]
    out["trajectory"] = tr
    return out


def pde_reference(cfg: ExperimentConfig, t_end: float, snapshot_stride=None):
    grid = cfg.grid()
    rho0 = init_gaussian_mixture(grid, cfg.mixture_components())
    p = cfg.model()
    res = pde_integrate(
        rho0,
        t_end,
        cfg.get("pde_dt"),
        p,
        cfg.noise(),
        coeff_stride=cfg.get("coeff_stride", int),
        scaling=cfg.get("interaction_scaling"),
        snapshot_stride=snapshot_stride,
    )
    return rho0, res


def _abm_points(s: SystemState) -> np.ndarray:
    return np.column_stack([s.positions, s.opinions])


def chaos_rows(cfg: ExperimentConfig, n_list=None, ensemble=None):
    """Distances between ABM empirical measures at T and PDE samples at T.

    Returns (rows, summary, floor) where rows are (N, seed, distance), summary
    per-N (N, mean, stderr, members) and floor per-N the mean distance of N
    PDE samples to the same reference sample (pure sampling noise).
    """
    n_list = n_list or cfg.list("n_list", int)
    ensemble = ensemble or cfg.get("ensemble", int)
    t_end = cfg.get("t_end")
    n_proj = cfg.get("n_proj", int)
    n_samp = cfg.get("pde_samples", int)
    base = cfg.seed
    _, res = pde_reference(cfg, t_end)
    ref = sample_from_density(res.snapshots[-1], n_samp, member_seed(base, 7919))

    jobs = [(n, member_seed(base, k)) for n in n_list for k in range(ensemble)]

    def one(job):
        n, seed = job
        tr = simulate(cfg.sim(n_agents=n, seed=seed, dim=1, t_end=t_end, stride=10**9))
        d = sliced_w2_quantile(_abm_points(tr.final), ref, n_proj, seed).value
        own = sample_from_density(res.snapshots[-1], n, member_seed(seed, 104729))
        f = sliced_w2_quantile(own, ref, n_proj, seed).value
        return n, seed, d, f

    out = pmap(one, jobs, cfg.threads)
    rows = [(n, s, d) for n, s, d, _ in out]
    summary, floor = [], {}
    for n in dict.fromkeys(n_list):
        ds = np.array([d for m, _, d, _ in out if m == n])
        fs = np.array([f for m, _, _, f in out if m == n])
        se = float(ds.std(ddof=1) / math.sqrt(ds.size)) if ds.size > 1 else 0.0
        summary.append((n, float(ds.mean()), se, int(ds.size)))
        floor[n] = float(fs.mean())
    return rows, summary, floor


def trend_stats(means) -> dict:
    means = np.asarray(means, float)
    inversions = int(np.sum(np.diff(means) >= 0))
    return {"inversions": inversions, "ratio_last_first": float(means[-1] / means[0])}


def fluctuation_rows(cfg: ExperimentConfig, n_list=None, ensemble=None):
    """Mean opinion at T for every (N, member); returns rows and {N: values}."""
    n_list = n_list or cfg.list("n_list", int)
    ensemble = ensemble or cfg.get("ensemble", int)
    jobs = [(n, member_seed(cfg.seed, k)) for n in n_list for k in range(ensemble)]

    def one(job):
        n, seed = job
        tr = simulate(cfg.sim(n_agents=n, seed=seed, stride=10**9))
        return n, seed, float(np.mean(tr.final.opinions))

    rows = pmap(one, jobs, cfg.threads)
    groups: dict[int, list] = {}
    for n, _, m in rows:
        groups.setdefault(n, []).append(m)
    return rows, groups


# -- writers -----------------------------------------------------------------


def _want(cfg, fmt):
    return fmt in cfg.formats


def _hist_edges(cfg):
    return np.linspace(-1.0, 1.0, cfg.get("hist_bins", int) + 1)


def _histogram(opinions, edges):
    return np.histogram(np.clip(opinions, edges[0], edges[-1]), bins=edges)[0]


def write_trajectory(cfg: ExperimentConfig, tr: Trajectory, out: Path, prefix: str = "") -> list:
    files = []
    d = tr.final.dim
    r = tr.config.model.radius
    edges = _hist_edges(cfg)
    if _want(cfg, "ndjson"):
        files.append(
            write_ndjson(
                out / f"{prefix}snapshots.ndjson",
                (
                    {
                        "t": s.time,
                        "n_agents": s.n_agents,
                        "dim": d,
                        "positions": s.positions.ravel(),
                        "opinions": s.opinions,
                    }
                    for s in tr.snapshots
                ),
            )
        )
    if _want(cfg, "csv"):
        header = ["t", "agent"] + [f"x_{i}" for i in range(d)] + ["theta"]
        rows = (
            [s.time, k, *s.positions[k], s.opinions[k]]
            for s in tr.snapshots
            for k in range(s.n_agents)
        )
        files.append(write_csv(out / f"{prefix}trajectory.csv", header, rows))
        stats = ((s.time, *cluster_stats(s, r).values()) for s in tr.snapshots)
        files.append(
            write_csv(out / f"{prefix}clusters.csv", ["t", "n_clusters", "n_groups", "spread"], stats)
        )
        hist_rows = (
            (s.time, lo, hi, c)
            for s in tr.snapshots
            for lo, hi, c in zip(edges[:-1], edges[1:], _histogram(s.opinions, edges))
        )
        files.append(
            write_csv(out / f"{prefix}histogram.csv", ["t", "bin_lo", "bin_hi", "count"], hist_rows)
        )
    if _want(cfg, "svg"):
        files += _trajectory_svgs(tr.times, tr.positions(), tr.opinions(), edges, out, prefix)
    return files


def _trajectory_svgs(times, positions, opinions, edges, out: Path, prefix: str) -> list:
    t_end = times[-1]
    p = out / f"{prefix}final.svg"
    p.write_text(svg.scatter(positions[-1], opinions[-1], f"agents at t = {t_end:g}"))
    q = out / f"{prefix}trajectories.svg"
    q.write_text(svg.trajectories(times, opinions, "opinion trajectories"))
    h = out / f"{prefix}histogram.svg"
    h.write_text(svg.histogram(edges, _histogram(opinions[-1], edges), f"opinions at t = {t_end:g}"))
    return [p, q, h]


def _density_record(f: DensityField) -> dict:
    g = f.grid
    return {
        "t": f.time,
        "z_min": g.z_min,
        "z_max": g.z_max,
        "eta_min": g.eta_min,
        "eta_max": g.eta_max,
        "h": g.h,
        "nz": g.nz,
        "neta": g.neta,
        "values": f.values.ravel(),
    }


def _heatmaps(fields, out: Path, prefix: str = "density") -> list:
    if not fields:
        return []
    picks = {"t0": fields[0], "tmid": None, "tend": fields[-1]}
    t_mid = 0.5 * (fields[0].time + fields[-1].time)
    picks["tmid"] = min(fields, key=lambda f: abs(f.time - t_mid))
    vmax = max(float(f.values.max()) for f in picks.values())
    files = []
    for tag, f in picks.items():
        g = f.grid
        path = out / f"{prefix}_{tag}.svg"
        path.write_text(
            svg.heatmap(f.values, (g.z_min, g.z_max, g.eta_min, g.eta_max), f"density at t = {f.time:g}", vmax)
        )
        files.append(path)
    return files


# -- modes ---------------------------------------------------------------------


def run_abm(cfg: ExperimentConfig) -> list:
    tr = simulate(cfg.sim())
    return write_trajectory(cfg, tr, cfg.output_dir)


def _pde_stride(cfg: ExperimentConfig, t_end: float) -> int:
    text = cfg.raw["pde_snapshot_stride"].strip()
    if text:
        return max(1, int(text))
    steps = max(1, int(round(t_end / cfg.get("pde_dt"))))
    return steps // 10 if steps % 10 == 0 else max(1, steps // 2)


def run_pde(cfg: ExperimentConfig) -> list:
    t_end = cfg.get("pde_t_end")
    _, res = pde_reference(cfg, t_end, snapshot_stride=_pde_stride(cfg, t_end))
    out = cfg.output_dir
    files = []
    if _want(cfg, "ndjson"):
        files.append(write_ndjson(out / "density.ndjson", (_density_record(f) for f in res.snapshots)))
    if _want(cfg, "csv"):
        rows = ((f.time, f.mass, float(f.values.max())) for f in res.snapshots)
        files.append(write_csv(out / "conservation.csv", ["t", "mass", "max_density"], rows))
        files.append(
            write_csv(
                out / "pde_report.csv",
                ["steps", "dt", "clipped_mass", "max_mass_drift"],
                [(res.steps, cfg.get("pde_dt"), res.clipped_mass, res.max_mass_drift)],
            )
        )
    if _want(cfg, "svg"):
        files += _heatmaps(res.snapshots, out)
    return files


def run_compare_limits(cfg: ExperimentConfig) -> list:
    t_end = cfg.get("t_end")
    k = cfg.get("compare_points", int)
    sim_cfg = cfg.sim(dim=1)
    n_abm = sim_cfg.n_steps
    n_pde = int(round(t_end / cfg.get("pde_dt")))
    if k < 1 or n_abm % k or n_pde % k:
        raise ConfigError(
            f"compare_points={k} must divide both ABM ({n_abm}) and PDE ({n_pde}) step counts"
        )
    tr = simulate(cfg.sim(dim=1, stride=n_abm // k))
    _, res = pde_reference(cfg, t_end, snapshot_stride=n_pde // k)
    n_proj = cfg.get("n_proj", int)
    n_samp = cfg.get("pde_samples", int)
    rows = []
    for j, (s, f) in enumerate(zip(tr.snapshots, res.snapshots)):
        ref = sample_from_density(f, n_samp, member_seed(cfg.seed, 7919 + j))
        d = sliced_w2_quantile(_abm_points(s), ref, n_proj, cfg.seed).value
        eta = f.grid.eta
        pde_mean = float((f.values.sum(axis=0) * eta).sum() * f.grid.cell_area)
        rows.append((s.time, d, float(s.opinions.mean()), pde_mean))
    out = cfg.output_dir
    files = []
    if _want(cfg, "csv"):
        files.append(
            write_csv(out / "compare.csv", ["t", "sliced_w2", "abm_mean_opinion", "pde_mean_opinion"], rows)
        )
    files += write_trajectory(cfg, tr, out, prefix="abm_")
    if _want(cfg, "ndjson"):
        files.append(write_ndjson(out / "density.ndjson", (_density_record(f) for f in res.snapshots)))
    if _want(cfg, "svg"):
        files += _heatmaps(res.snapshots, out)
    return files


def run_noise_sweep(cfg: ExperimentConfig) -> list:
    sigmas = cfg.list("sigmas")
    if not sigmas:
        raise ConfigError("noise-sweep needs a non-empty sigmas list")
    ensemble = cfg.get("ensemble", int)
    jobs = [(sg, member_seed(cfg.seed, k)) for sg in sigmas for k in range(ensemble)]
    results = pmap(lambda j: (j, sweep_member(cfg.sim(seed=j[1], sigma=j[0]))), jobs, cfg.threads)
    out = cfg.output_dir
    files = []
    rows = [(sg, seed, r["n_clusters"], r["n_groups"], r["spread"]) for (sg, seed), r in results]
    summary = []
    for sg in dict.fromkeys(sigmas):
        sel = [r for (s, _), r in results if s == sg]
        summary.append(
            (
                sg,
                float(np.median([r["n_clusters"] for r in sel])),
                float(np.median([r["n_groups"] for r in sel])),
                float(np.median([r["spread"] for r in sel])),
            )
        )
    if _want(cfg, "csv"):
        files.append(write_csv(out / "sweep.csv", ["sigma", "seed", "n_clusters", "n_groups", "spread"], rows))
        files.append(
            write_csv(
                out / "sweep_summary.csv",
                ["sigma", "median_clusters", "median_groups", "median_spread"],
                summary,
            )
        )
    if _want(cfg, "svg"):
        edges = _hist_edges(cfg)
        for sg in dict.fromkeys(sigmas):
            tr = next(r["trajectory"] for (s, _), r in results if s == sg)
            files += _trajectory_svgs(
                tr.times, tr.positions(), tr.opinions(), edges, out, f"sigma_{sg:g}_"
            )
    return files


def run_chaos_study(cfg: ExperimentConfig) -> list:
    rows, summary, floor = chaos_rows(cfg)
    out = cfg.output_dir
    files = []
    if _want(cfg, "csv"):
        files.append(write_csv(out / "chaos.csv", ["n", "seed", "sliced_w2"], rows))
        files.append(
            write_csv(
                out / "chaos_summary.csv",
                ["n", "mean", "stderr", "members", "sampling_floor"],
                [(*row, floor[row[0]]) for row in summary],
            )
        )
        t = trend_stats([m for _, m, _, _ in summary])
        files.append(write_csv(out / "chaos_trend.csv", list(t), [list(t.values())]))
    return files


def run_fluctuation_study(cfg: ExperimentConfig) -> list:
    rows, groups = fluctuation_rows(cfg)
    out = cfg.output_dir
    files = []
    if _want(cfg, "csv"):
        files.append(write_csv(out / "fluctuation.csv", ["n", "seed", "mean_opinion"], rows))
        files.append(
            write_csv(
                out / "fluctuation_summary.csv",
                ["n", "variance", "members"],
                [(n, float(np.var(v, ddof=1)), len(v)) for n, v in groups.items()],
            )
        )
        slope = fluctuation_slope(groups) if len(groups) >= 3 else float("nan")
        files.append(write_csv(out / "fluctuation_slope.csv", ["slope"], [(slope,)]))
    return files


def run_render(cfg: ExperimentConfig) -> list:
    src = Path(cfg.raw["input"])
    if not src.exists():
        raise ConfigError(f"render input {src} does not exist")
    recs = read_ndjson(src)
    if not recs:
        raise ConfigError(f"render input {src} is empty")
    out = cfg.output_dir
    if "values" in recs[0]:
        fields = []
        for r in recs:
            g = Grid2D(r["z_min"], r["z_max"], r["eta_min"], r["eta_max"], r["h"])
            fields.append(DensityField(np.reshape(r["values"], (r["nz"], r["neta"])), g, r["t"]))
        return _heatmaps(fields, out)
    times = np.array([r["t"] for r in recs])
    pos = np.stack([np.reshape(r["positions"], (r["n_agents"], r["dim"])) for r in recs])
    ops = np.stack([np.asarray(r["opinions"], float) for r in recs])
    return _trajectory_svgs(times, pos, ops, _hist_edges(cfg), out, "")


RUNNERS = {
    "run-abm": run_abm,
    "run-pde": run_pde,
    "compare-limits": run_compare_limits,
    "noise-sweep": run_noise_sweep,
    "chaos-study": run_chaos_study,
    "fluctuation-study": run_fluctuation_study,
    "render": run_render,
}


def execute(cfg: ExperimentConfig) -> Path:
    """Run the configured mode and write ``manifest.ndjson`` next to the outputs."""
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    files = RUNNERS[cfg.mode](cfg)
    header = {
        "mode": cfg.mode,
        "config_hash": config_hash(cfg.raw),
        "seed": cfg.seed,
        "version": __version__,
        "wall_clock_s": round(time.perf_counter() - start, 3),
    }
    return write_manifest(cfg.output_dir, header, files)
