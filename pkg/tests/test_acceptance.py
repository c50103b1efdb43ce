"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line."""
import os
import time

import numpy as np
import pytest

from socialfield.abm import SimConfig, UniformBox, simulate
from socialfield.cli import main
from socialfield.config import build
from socialfield.experiments import chaos_rows, fluctuation_rows, pmap, sweep_member, trend_stats
from socialfield.measures import fluctuation_slope, sliced_w2, w2_1d_exact
from socialfield.model import Additive, ModelParams, MultiplicativeMin
from socialfield.pde import Grid2D, DensityField, init_gaussian_mixture, nonlocal_coefficients, pde_integrate, random_clusters

from oracles import full_quadrature, w2_assignment

BASE = ModelParams(alpha=20, beta=20, radius=0.15, dim=2)


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail

    return emit


class Clock:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


def test_criterion_1_mean_opinion_conservation(report):
    with Clock() as clk:
        tr = simulate(SimConfig(n_agents=100, t_end=2.5, dt=0.01, model=BASE, noise=Additive(0, 0), seed=0))
        drift = abs(tr.final.opinions.mean() - tr.snapshots[0].opinions.mean())
    ok = drift < 1e-10 and clk.elapsed < 5
    report(1, ok, f"|mean drift| = {drift:.2e} (< 1e-10), {clk.elapsed:.2f} s (< 5 s)")


def test_criterion_2_euler_maruyama_oracle(report):
    with Clock() as clk:
        lin = SimConfig(
            n_agents=1, t_end=1.0, dt=1e-4, init=UniformBox((1.0,), (1.0,), 1.0, 1.0),
            model=ModelParams(dim=1), noise=Additive(0, 0), kernel="linear", snapshot_stride=10**6,
        )
        err = abs(simulate(lin).final.positions[0, 0] - np.exp(-1.0))
        bm = SimConfig(
            n_agents=10_000, t_end=1.0, dt=0.01, init=UniformBox((0, 0), (0, 0), 0.0, 0.0),
            model=BASE, noise=Additive(0.1, 0.1), kernel="free", snapshot_stride=10**6,
        )
        var = float(np.var(simulate(bm).final.opinions, ddof=1))
    rel = abs(var - 0.01) / 0.01
    ok = err < 1e-3 and rel < 0.1 and clk.elapsed < 10
    report(2, ok, f"|x(T)-e^-1| = {err:.2e}, var = {var:.5f} (rel err {rel:.3f}), {clk.elapsed:.2f} s")


def _ensemble(noise, seeds=16):
    def one(seed):
        cfg = SimConfig(n_agents=100, t_end=2.5, dt=0.01, model=BASE, noise=noise, seed=seed)
        return sweep_member(cfg, tail=50)

    return pmap(one, range(seeds))


def test_criterion_3_noise_sweep(report):
    with Clock() as clk:
        low = _ensemble(Additive(0.01, 0.01))
        high = _ensemble(Additive(0.15, 0.15))
    count = float(np.median([r["n_clusters"] for r in low]))
    groups = float(np.median([r["n_groups"] for r in low]))
    s_low = float(np.median([r["spread"] for r in low]))
    s_high = float(np.median([r["spread"] for r in high]))
    ok = 2 <= count <= 15 and s_low < 0.05 and s_high >= 3 * s_low and clk.elapsed < 180
    report(
        3,
        ok,
        f"sigma=0.01: median clusters {count:g} (groups >= 2 agents: {groups:g}), spread {s_low:.4f}; "
        f"sigma=0.15: spread {s_high:.4f} ({s_high / s_low:.1f}x); {clk.elapsed:.1f} s",
    )


def test_criterion_4_multiplicative_noise(report):
    with Clock() as clk:
        runs = _ensemble(MultiplicativeMin(0.05))
    groups = np.median(np.array([r["group_series"] for r in runs]), axis=0)
    raw = np.median(np.array([r["cluster_series"] for r in runs]), axis=0)
    spread = float(np.median([r["spread"] for r in runs]))
    constant = bool(np.all(groups == groups[0]))
    ok = len(groups) == 50 and constant and spread < 0.02 and clk.elapsed < 180
    report(
        4,
        ok,
        f"median group count over last 50 steps {sorted(set(groups.tolist()))} "
        f"(all components: {sorted(set(raw.tolist()))}), spread {spread:.5f}; {clk.elapsed:.1f} s",
    )


def test_criterion_5_pde_conservation(report):
    with Clock() as clk:
        rho0 = init_gaussian_mixture(Grid2D(-2, 2, -2, 2, 0.05), random_clusters(0))
        res = pde_integrate(
            rho0, 1.0, 1e-4, ModelParams(alpha=20, beta=20, radius=0.15, dim=1),
            Additive(0.01, 0.01), scaling=0.5, snapshot_stride=500,
        )
    times = np.array([f.time for f in res.snapshots])
    peaks = np.array(res.max_density)[times >= 0.2 - 1e-9]
    monotone = bool(np.all(np.diff(peaks) >= 0))
    ok = res.max_mass_drift < 1e-6 and res.clipped_mass < 1e-3 and monotone and clk.elapsed < 300
    report(
        5,
        ok,
        f"mass drift {res.max_mass_drift:.1e}, clipped {res.clipped_mass:.1e}, "
        f"max density {peaks[0]:.2f} -> {peaks[-1]:.2f} non-decreasing={monotone}; {clk.elapsed:.1f} s",
    )


def test_criterion_6_coefficient_oracle(report):
    with Clock() as clk:
        g = Grid2D(-1, 1, -1, 1, 0.05)
        r = np.random.default_rng(6).uniform(0, 1, g.shape)
        rho = DensityField(r / (r.sum() * g.cell_area), g)
        p = ModelParams(alpha=20, beta=20, radius=0.15, dim=1)
        c = nonlocal_coefficients(rho, p, Additive(0.01, 0.01))
        u, v = full_quadrature(rho.values, g.z, g.eta, g.h, p.alpha, p.beta, p.radius)
        err = max(np.abs(c.u_field - u).max(), np.abs(c.v_field - v).max())
    ok = g.shape == (40, 40) and err <= 1e-12 and clk.elapsed < 30
    report(6, ok, f"40x40 grid, max |stencil - quadrature| = {err:.1e}; {clk.elapsed:.2f} s")


CHAOS_ENV = {
    "SOCIALFIELD_DIM": "1",
    "SOCIALFIELD_ALPHA": "10",
    "SOCIALFIELD_BETA": "10",
    "SOCIALFIELD_T_END": "1.0",
    "SOCIALFIELD_SIGMA": "0.05",
    "SOCIALFIELD_INIT": "mixture",
    "SOCIALFIELD_MIXTURE": "-0.6,-0.5,0.2,1; 0.5,0.6,0.2,1; 0.4,-0.4,0.2,1; -0.5,0.5,0.2,1",
    "SOCIALFIELD_PDE_DT": "0.0002",
    "SOCIALFIELD_N_LIST": "50,100,200,400",
    "SOCIALFIELD_ENSEMBLE": "8",
    "SOCIALFIELD_N_PROJ": "100",
    "SOCIALFIELD_PDE_SAMPLES": "10000",
}


def test_criterion_7_propagation_of_chaos(report, tmp_path):
    with Clock() as clk:
        cfg = build("chaos-study", output_dir=tmp_path, env=CHAOS_ENV)
        _, summary, floor = chaos_rows(cfg)
    means = [m for _, m, _, _ in summary]
    t = trend_stats(means)
    ok = t["inversions"] <= 1 and means[-1] < 0.7 * means[0] and clk.elapsed < 600
    pretty = ", ".join(f"N={n}: {m:.4f} (floor {floor[n]:.4f})" for n, m, _, _ in summary)
    report(7, ok, f"{pretty}; inversions {t['inversions']}, ratio {t['ratio_last_first']:.2f}; {clk.elapsed:.1f} s")


def test_criterion_8_fluctuation_scaling(report, tmp_path):
    env = {
        "SOCIALFIELD_T_END": "1.0",
        "SOCIALFIELD_SIGMA": "0.05",
        "SOCIALFIELD_N_LIST": "50,100,200,400",
        "SOCIALFIELD_ENSEMBLE": "32",
    }
    with Clock() as clk:
        cfg = build("fluctuation-study", output_dir=tmp_path, env=env)
        _, groups = fluctuation_rows(cfg)
        slope = fluctuation_slope(groups)
    ok = -1.4 <= slope <= -0.6 and all(len(v) == 32 for v in groups.values()) and clk.elapsed < 600
    report(8, ok, f"log-log slope {slope:.3f} (target [-1.4, -0.6]); {clk.elapsed:.1f} s")


DETERMINISM_RUNS = {
    "run-abm": "n_agents = 60\nt_end = 0.3\nsnapshot_stride = 5\n",
    "run-pde": "z_min = -1\nz_max = 1\neta_min = -1\neta_max = 1\npde_t_end = 0.02\nmixture_seed = 3\n",
    "compare-limits": (
        "dim = 1\nn_agents = 40\nt_end = 0.1\ninit = mixture\nz_min = -1\nz_max = 1\neta_min = -1\n"
        "eta_max = 1\nmixture = -0.3,0.3,0.2,1; 0.3,-0.3,0.2,1\npde_samples = 500\ncompare_points = 5\n"
    ),
    "noise-sweep": "n_agents = 40\nt_end = 0.2\nsigmas = 0.01,0.15\nensemble = 4\n",
    "chaos-study": (
        "dim = 1\nt_end = 0.1\ninit = mixture\nz_min = -1\nz_max = 1\neta_min = -1\neta_max = 1\n"
        "mixture = -0.3,0.3,0.2,1; 0.3,-0.3,0.2,1\nn_list = 20,40\nensemble = 4\npde_samples = 500\n"
    ),
    "fluctuation-study": "t_end = 0.1\nn_list = 10,20,40\nensemble = 8\n",
}


def _data_files(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.suffix in (".csv", ".ndjson") and p.name != "manifest.ndjson"}


def test_criterion_9_determinism(report, tmp_path):
    max_threads = max(4, os.cpu_count() or 1)
    mismatched, checked = [], 0
    with Clock() as clk:
        for mode, text in DETERMINISM_RUNS.items():
            cfg = tmp_path / f"{mode}.cfg"
            cfg.write_text(text + "seed = 12345\n")
            outs = []
            for tag, threads in (("a", 1), ("b", 1), ("c", max_threads)):
                out = tmp_path / f"{mode}-{tag}"
                code = main([mode, "--config", str(cfg), "--output", str(out), "--threads", str(threads)])
                assert code == 0, f"{mode} exited with {code}"
                outs.append(_data_files(out))
            checked += len(outs[0])
            if not (outs[0] == outs[1] == outs[2]) or not outs[0]:
                mismatched.append(mode)
    ok = not mismatched
    report(
        9,
        ok,
        f"{len(DETERMINISM_RUNS)} modes, {checked} CSV/NDJSON files byte-identical at threads 1/1/{max_threads}"
        + (f"; mismatched: {mismatched}" if mismatched else "")
        + f"; {clk.elapsed:.1f} s",
    )


def test_criterion_10_metric_properties(report):
    rng = np.random.default_rng(10)
    failures = 0
    for _ in range(1000):
        n = int(rng.integers(1, 12))
        a, b, c = (rng.normal(size=n) * rng.uniform(0.1, 3) for _ in range(3))
        dab, dba = w2_1d_exact(a, b), w2_1d_exact(b, a)
        failures += not (dab == dba)
        failures += not (w2_1d_exact(a, a) == 0.0 and (dab > 0) == (not np.array_equal(np.sort(a), np.sort(b))))
        failures += not (w2_1d_exact(a, c) <= dab + w2_1d_exact(b, c) + 1e-12)
    worst = 0.0
    for k in range(10):
        pa, pb = rng.uniform(-1, 1, (4, 2)), rng.uniform(-1, 1, (4, 2))
        exact = w2_assignment(pa, pb)
        sl = sliced_w2(pa, pb, n_proj=200, seed=k).normalized
        worst = max(worst, abs(sl - exact) / exact)
    ok = failures == 0 and worst <= 0.3
    report(10, ok, f"1000 triples, {failures} metric violations; worst sliced/exact deviation {worst:.3f} (<= 0.30)")
