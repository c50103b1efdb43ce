"""Empirical measures, clustering and Wasserstein-type distances."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .model import SystemState
from .neighbors import neighbor_pairs
from .pde import DensityField


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Uniform-weight point cloud in position x opinion space."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError("an empirical measure needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise ValueError("non-finite support point")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_state(cls, s: SystemState) -> "EmpiricalMeasure":
        return cls(np.column_stack([s.positions, s.opinions]))

    @property
    def weight(self) -> float:
        return 1.0 / self.points.shape[0]


@dataclass(frozen=True)
class ClusterLabels:
    labels: np.ndarray
    n_clusters: int

    def members(self):
        return [np.flatnonzero(self.labels == c) for c in range(self.n_clusters)]


@dataclass(frozen=True)
class DistanceReport:
    value: float
    method: str
    n_projections: int = 0
    seed: int = 0
    dim: int = 1

    @property
    def normalized(self) -> float:
        """Sliced value rescaled by sqrt(dim): E<u, v>^2 = |v|^2 / dim over the sphere,
        so this matches the full W2 for pure translations."""
        if self.method != "sliced":
            return self.value
        return self.value * np.sqrt(self.dim)


def cluster_components(s: SystemState, radius: float) -> ClusterLabels:
    """Connected components of the in-radius graph, labelled in order of smallest member."""
    n = s.n_agents
    parent = np.arange(n)

    def find(a):
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    for i, j in neighbor_pairs(s, radius):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    roots = np.array([find(i) for i in range(n)])
    _, labels = np.unique(roots, return_inverse=True)
    return ClusterLabels(labels.astype(np.int64), int(labels.max()) + 1)


def within_cluster_spread(s: SystemState, clusters: ClusterLabels) -> float:
    """Size-weighted mean of per-cluster opinion standard deviations (population std)."""
    total = 0.0
    for idx in clusters.members():
        total += len(idx) * float(np.std(s.opinions[idx]))
    return total / s.n_agents


def w2_1d_exact(a: Sequence[float], b: Sequence[float]) -> float:
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise ValueError(f"sample sizes differ: {a.shape[0]} vs {b.shape[0]}")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def _as_points(x) -> np.ndarray:
    if isinstance(x, EmpiricalMeasure):
        return x.points
    pts = np.asarray(x, dtype=float)
    return pts[:, None] if pts.ndim == 1 else pts


def random_directions(dim: int, n_proj: int, seed: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(int(seed)))
    u = rng.standard_normal((n_proj, dim))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def _project(points: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    # einsum loop, not BLAS: keeps projections independent of thread count
    return np.einsum("nd,pd->np", points, dirs, optimize=False)


def sliced_w2(pa, pb, n_proj: int = 100, seed: int = 0) -> DistanceReport:
    """Root-mean-square of 1-D W2 over ``n_proj`` uniform random unit directions.

    Needs equal sample counts; see ``sliced_w2_quantile`` for unequal ones.
    """
    a, b = _as_points(pa), _as_points(pb)
    if a.shape != b.shape:
        raise ValueError(f"point clouds differ in shape: {a.shape} vs {b.shape}")
    if n_proj < 1:
        raise ValueError("n_proj must be >= 1")
    dirs = random_directions(a.shape[1], n_proj, seed)
    qa = np.sort(_project(a, dirs), axis=0)
    qb = np.sort(_project(b, dirs), axis=0)
    value = float(np.sqrt(np.mean((qa - qb) ** 2)))
    return DistanceReport(value, "sliced", n_proj, int(seed), a.shape[1])


def sliced_w2_quantile(pa, pb, n_proj: int = 100, seed: int = 0, n_quantiles: int | None = None):
    """Sliced W2 for clouds of different sizes via matched empirical quantiles.

    Each projection compares the two empirical quantile functions at common
    midpoint levels, which is exact 1-D W2 when the sizes divide the level count.
    """
    a, b = _as_points(pa), _as_points(pb)
    if a.shape[1] != b.shape[1]:
        raise ValueError("point clouds live in different dimensions")
    if n_proj < 1:
        raise ValueError("n_proj must be >= 1")
    m = n_quantiles or int(np.lcm(a.shape[0], b.shape[0]))
    levels = (np.arange(m) + 0.5) / m
    ia = np.floor(levels * a.shape[0]).astype(int)
    ib = np.floor(levels * b.shape[0]).astype(int)
    dirs = random_directions(a.shape[1], n_proj, seed)
    qa = np.sort(_project(a, dirs), axis=0)[ia]
    qb = np.sort(_project(b, dirs), axis=0)[ib]
    value = float(np.sqrt(np.mean((qa - qb) ** 2)))
    return DistanceReport(value, "sliced", n_proj, int(seed), a.shape[1])


def synchronous_path_distance(traj_a, traj_b, t: float) -> float:
    """(1/N) sum_i sup_{s<=t} |Z^i_A(s) - Z^i_B(s)|^2 under the agent-index coupling."""
    ta, tb = traj_a.times, traj_b.times
    if ta.shape != tb.shape or not np.allclose(ta, tb, rtol=0, atol=1e-12):
        raise ValueError("trajectories have different snapshot times")
    if traj_a.final.n_agents != traj_b.final.n_agents:
        raise ValueError("trajectories have different agent counts")
    keep = ta <= t + 1e-12
    if not keep.any():
        raise ValueError(f"no snapshot at or before t={t}")
    dx = traj_a.positions()[keep] - traj_b.positions()[keep]
    dth = traj_a.opinions()[keep] - traj_b.opinions()[keep]
    sq = np.sum(dx * dx, axis=2) + dth * dth
    return float(np.mean(sq.max(axis=0)))


def sample_from_density(rho: DensityField, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` points: inverse CDF over cell masses, then uniform jitter inside the cell."""
    g = rho.grid
    w = np.clip(rho.values, 0.0, None).ravel()
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    rng = np.random.Generator(np.random.Philox(int(seed)))
    u = rng.random(n)
    cell = np.minimum(np.searchsorted(cdf, u, side="right"), w.size - 1)
    iz, ie = np.unravel_index(cell, g.shape)
    jitter = rng.random((n, 2))
    z = g.z_min + (iz + jitter[:, 0]) * g.h
    eta = g.eta_min + (ie + jitter[:, 1]) * g.h
    return np.column_stack([z, eta])


def fluctuation_slope(groups: Mapping[int, Sequence[float]]) -> float:
    """Least-squares slope of log Var(observable) against log N."""
    if len(groups) < 3:
        raise ValueError("need at least three distinct N")
    logs_n, logs_v = [], []
    for n, vals in sorted(groups.items()):
        vals = np.asarray(vals, dtype=float)
        if vals.size < 8:
            raise ValueError(f"N={n}: need at least 8 ensemble members, got {vals.size}")
        var = float(np.var(vals, ddof=1))
        if not var > 0:
            raise ValueError(f"N={n}: zero variance")
        logs_n.append(np.log(n))
        logs_v.append(np.log(var))
    return float(np.polyfit(logs_n, logs_v, 1)[0])
