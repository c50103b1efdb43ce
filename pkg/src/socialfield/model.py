"""Domain types, interaction kernels, drift assembly and noise amplitudes.

Agents carry a position in a d-dimensional social space and a scalar opinion.
Two pairwise maps drive the dynamics:

* opinion:  V(x1, x2, th1, th2) = alpha * 1[|x1 - x2| <= R] * (th2 - th1)
* spatial:  U(x1, x2, th1, th2) = beta  * 1[|x1 - x2| <= R] * sgn(th1 th2) * (x2 - x1)

plus an optional three-body opinion map for peer-pressure effects. All scalar
kernels broadcast over numpy arrays so the same functions serve as brute-force
oracles for the vectorized assembly paths.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

# Relative slack on the closed indicator 1_[0,R]. Keeps |x|=R inside even when
# R is reconstructed from grid offsets (3 * 0.05 != 0.15 in binary).
RADIUS_RTOL = 1e-12

PAIRWISE = "pairwise"
THREEBODY = "threebody"
FREE = "free"
LINEAR = "linear"
KERNELS = (PAIRWISE, THREEBODY, FREE, LINEAR)


class StateError(ValueError):
    """Raised for malformed states or parameters."""


@dataclass(frozen=True)
class SystemState:
    positions: np.ndarray
    opinions: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim == 1:
            pos = pos[:, None]
        op = np.asarray(self.opinions, dtype=float).reshape(-1)
        if pos.ndim != 2 or pos.shape[0] != op.shape[0]:
            raise StateError(
                f"positions {pos.shape} and opinions {op.shape} disagree on agent count"
            )
        if op.shape[0] < 1:
            raise StateError("a state needs at least one agent")
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(op))):
            raise StateError("state contains non-finite entries")
        if self.time < 0:
            raise StateError("time must be non-negative")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "opinions", op)

    @property
    def n_agents(self) -> int:
        return self.opinions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]


@dataclass(frozen=True)
class ModelParams:
    alpha: float = 20.0
    beta: float = 20.0
    radius: float = 0.15
    lam: float = -1.0
    dim: int = 2

    def __post_init__(self):
        if not self.radius > 0:
            raise StateError("radius must be positive")
        if not self.alpha > 0:
            raise StateError("alpha must be positive")
        if self.beta < 0:
            raise StateError("beta must be non-negative")
        if self.dim < 1:
            raise StateError("dim must be >= 1")


@dataclass(frozen=True)
class Additive:
    sigma_sp: float = 0.0
    sigma_op: float = 0.0

    def __post_init__(self):
        if self.sigma_sp < 0 or self.sigma_op < 0:
            raise StateError("noise amplitudes must be non-negative")


@dataclass(frozen=True)
class MultiplicativeMin:
    """Opinion-gap noise: sigma_i = min |th_i - th_j| over in-radius neighbours j != i.

    Agents without neighbours fall back to ``sigma_iso``.
    """

    sigma_iso: float = 0.05
    apply_to: str = "both"

    def __post_init__(self):
        if self.sigma_iso < 0:
            raise StateError("sigma_iso must be non-negative")
        if self.apply_to not in ("both", "opinion-only"):
            raise StateError(f"apply_to must be 'both' or 'opinion-only', got {self.apply_to!r}")


@dataclass(frozen=True)
class SigmaKernel:
    """Pair diffusion coefficient sigma(x1, x2, th1, th2).

    kinds:
      constant  -> scale
      indicator -> scale * 1[|x1 - x2| <= R]
      gap       -> scale * 1[|x1 - x2| <= R] * |th1 - th2|
    """

    kind: str = "constant"
    scale: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "indicator", "gap"):
            raise StateError(f"unknown sigma kernel {self.kind!r}")
        if self.scale < 0:
            raise StateError("sigma kernel scale must be non-negative")

    def __call__(self, x1, x2, th1, th2, radius: float):
        th1 = np.asarray(th1, dtype=float)
        th2 = np.asarray(th2, dtype=float)
        if self.kind == "constant":
            return self.scale * np.ones(np.broadcast(th1, th2).shape)
        ind = indicator(pair_distance(x1, x2), radius)
        if self.kind == "indicator":
            return self.scale * ind * np.ones_like(th1 + th2)
        return self.scale * ind * np.abs(th1 - th2)


@dataclass(frozen=True)
class KernelAveraged:
    sigma_sp_kernel: SigmaKernel = field(default_factory=SigmaKernel)
    sigma_op_kernel: SigmaKernel = field(default_factory=SigmaKernel)


NoiseSpec = Union[Additive, MultiplicativeMin, KernelAveraged]


@dataclass(frozen=True)
class DriftVector:
    spatial: np.ndarray
    opinion: np.ndarray


# -- scalar kernels (broadcasting) ------------------------------------------


def pair_distance(x1, x2):
    """Euclidean distance over the last axis; scalars are treated as 1-D points."""
    diff = np.asarray(x1, dtype=float) - np.asarray(x2, dtype=float)
    if diff.ndim == 0:
        return np.abs(diff)
    return np.sqrt(np.sum(diff * diff, axis=-1))


def indicator(dist, radius: float):
    """Closed-ball indicator 1_[0,R](dist) as float."""
    return (np.asarray(dist) <= radius * (1.0 + RADIUS_RTOL)).astype(float)


def opinion_drift_pair(x1, x2, th1, th2, p: ModelParams):
    val = p.alpha * indicator(pair_distance(x1, x2), p.radius) * (
        np.asarray(th2, dtype=float) - np.asarray(th1, dtype=float)
    )
    return float(val) if np.ndim(val) == 0 else val


def spatial_drift_pair(x1, x2, th1, th2, p: ModelParams):
    """Attraction towards same-sign neighbours, repulsion from opposite-sign ones."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    coef = (
        p.beta
        * indicator(pair_distance(x1, x2), p.radius)
        * np.sign(np.asarray(th1, dtype=float) * np.asarray(th2, dtype=float))
    )
    if x1.ndim == 0 and x2.ndim == 0:
        out = coef * (x2 - x1)
        return float(out) if np.ndim(out) == 0 else out
    return np.asarray(coef)[..., None] * (x2 - x1)


def opinion_drift_threebody(x1, x2, x3, th1, th2, th3, p: ModelParams):
    """Peer-pressure map on a triple; nonzero only if all three are mutually in range.

    Uses opinion differences (th2 - th1) + (th3 - th1) weighted by
    exp(lam * |th2 - th3|), so agreeing peers pull harder.
    """
    ind = (
        indicator(pair_distance(x1, x2), p.radius)
        * indicator(pair_distance(x1, x3), p.radius)
        * indicator(pair_distance(x2, x3), p.radius)
    )
    th1, th2, th3 = (np.asarray(t, dtype=float) for t in (th1, th2, th3))
    val = p.alpha * ind * np.exp(p.lam * np.abs(th2 - th3)) * ((th2 - th1) + (th3 - th1))
    return float(val) if np.ndim(val) == 0 else val


# -- assembly ----------------------------------------------------------------


def _differences(positions: np.ndarray):
    diff = positions[None, :, :] - positions[:, None, :]  # diff[k, j] = x_j - x_k
    return diff, np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def adjacency(positions: np.ndarray, radius: float) -> np.ndarray:
    """Dense N x N in-radius indicator matrix (diagonal included)."""
    return indicator(_differences(positions)[1], radius)


def _pairwise_dense(s: SystemState, p: ModelParams):
    th = s.opinions
    n = s.n_agents
    diff, dist = _differences(s.positions)
    a = indicator(dist, p.radius)
    v = p.alpha * np.sum(a * (th[None, :] - th[:, None]), axis=1)
    w = p.beta * a * np.sign(th[:, None] * th[None, :])
    u = np.sum(w[:, :, None] * diff, axis=1)
    return u / n, v / n


def _pairwise_sparse(s: SystemState, p: ModelParams):
    from .neighbors import neighbor_pairs

    x, th = s.positions, s.opinions
    n = s.n_agents
    pairs = neighbor_pairs(s, p.radius, method="cells")
    v = np.zeros(n)
    u = np.zeros_like(x)
    if len(pairs):
        i, j = pairs[:, 0], pairs[:, 1]
        dth = th[j] - th[i]
        v += np.bincount(i, weights=p.alpha * dth, minlength=n)
        v -= np.bincount(j, weights=p.alpha * dth, minlength=n)
        sg = p.beta * np.sign(th[i] * th[j])
        dx = x[j] - x[i]
        for ax in range(x.shape[1]):
            u[:, ax] += np.bincount(i, weights=sg * dx[:, ax], minlength=n)
            u[:, ax] -= np.bincount(j, weights=sg * dx[:, ax], minlength=n)
    return u / n, v / n


def _threebody_opinion(s: SystemState, p: ModelParams):
    th = s.opinions
    n = s.n_agents
    a = adjacency(s.positions, p.radius)
    m = a * np.exp(p.lam * np.abs(th[:, None] - th[None, :]))
    # b[k, j] = sum_l a_kl m_lj; einsum without BLAS keeps results thread-count independent
    b = np.einsum("kl,lj->kj", a, m, optimize=False)
    s1 = np.sum(a * th[None, :] * b, axis=1)
    s0 = np.sum(a * b, axis=1)
    return p.alpha * (2.0 * s1 - 2.0 * th * s0) / n**2


def total_drift(
    s: SystemState, p: ModelParams, kernel: str = PAIRWISE, method: str = "dense"
) -> DriftVector:
    """Mean-field drift for every agent.

    ``pairwise``: (1/N) sum_j of the pair maps, self-term included (it is zero).
    ``threebody``: three-body opinion map averaged with 1/N^2, spatial part
    pairwise. ``free``: zero drift. ``linear``: restoring test drift -x, -th.
    ``method="cells"`` routes the pairwise kernel through the cell list.
    """
    if s.n_agents < 1:
        raise StateError("total_drift needs N >= 1")
    if kernel == FREE:
        return DriftVector(np.zeros_like(s.positions), np.zeros_like(s.opinions))
    if kernel == LINEAR:
        return DriftVector(-s.positions.copy(), -s.opinions.copy())
    if kernel not in (PAIRWISE, THREEBODY):
        raise StateError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")
    if method == "cells":
        u, v = _pairwise_sparse(s, p)
    elif method == "dense":
        u, v = _pairwise_dense(s, p)
    else:
        raise StateError(f"unknown drift method {method!r}")
    if kernel == THREEBODY:
        if not p.lam < 0:
            raise StateError("three-body kernel needs lam < 0")
        v = _threebody_opinion(s, p)
    return DriftVector(u, v)


def _nearest_gap(s: SystemState, p: ModelParams, fallback: float) -> np.ndarray:
    th = s.opinions
    a = adjacency(s.positions, p.radius)
    np.fill_diagonal(a, 0.0)
    gaps = np.where(a > 0, np.abs(th[:, None] - th[None, :]), np.inf)
    sig = gaps.min(axis=1) if s.n_agents > 1 else np.full(1, np.inf)
    return np.where(np.isfinite(sig), sig, fallback)


def noise_amplitude(s: SystemState, spec: NoiseSpec, p: ModelParams):
    """Per-agent diffusion amplitudes ``(spatial, opinion)``, each of shape (N,)."""
    n = s.n_agents
    if isinstance(spec, Additive):
        return np.full(n, float(spec.sigma_sp)), np.full(n, float(spec.sigma_op))
    if isinstance(spec, MultiplicativeMin):
        sig = _nearest_gap(s, p, spec.sigma_iso)
        sp = sig.copy() if spec.apply_to == "both" else np.zeros(n)
        return sp, sig
    if isinstance(spec, KernelAveraged):
        x, th = s.positions, s.opinions
        xi, xj = x[:, None, :], x[None, :, :]
        ti, tj = th[:, None], th[None, :]
        sp = np.mean(spec.sigma_sp_kernel(xi, xj, ti, tj, p.radius), axis=1)
        op = np.mean(spec.sigma_op_kernel(xi, xj, ti, tj, p.radius), axis=1)
        return sp, op
    raise StateError(f"unsupported noise spec {spec!r}")
