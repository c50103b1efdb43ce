"""Euler-Maruyama integration of the N-agent opinion/position system."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .model import (
    PAIRWISE,
    Additive,
    ModelParams,
    NoiseSpec,
    StateError,
    SystemState,
    noise_amplitude,
    total_drift,
)
from .rng import STREAM_INIT, STREAM_NOISE, CounterRNG


class BlowUpError(ArithmeticError):
    def __init__(self, step: int):
        super().__init__(f"non-finite state after step {step}")
        self.step = step


@dataclass(frozen=True)
class UniformBox:
    pos_low: Sequence[float] = (-0.25, -0.25)
    pos_high: Sequence[float] = (0.25, 0.25)
    op_low: float = -1.0
    op_high: float = 1.0

    def __post_init__(self):
        lo = np.asarray(self.pos_low, dtype=float)
        hi = np.asarray(self.pos_high, dtype=float)
        if lo.shape != hi.shape:
            raise StateError("position bounds differ in dimension")
        if np.any(lo > hi) or self.op_low > self.op_high:
            raise StateError("malformed bounds: low > high")

    @property
    def dim(self) -> int:
        return len(self.pos_low)


@dataclass(frozen=True)
class GaussianMixture:
    """Isotropic components over (position..., opinion) with per-component std."""

    means: Sequence[Sequence[float]]
    stds: Sequence[float]
    weights: Sequence[float] | None = None

    def __post_init__(self):
        m = np.asarray(self.means, dtype=float)
        if m.ndim != 2 or m.shape[1] < 2:
            raise StateError("mixture means must be (K, d+1) with d >= 1")
        if len(self.stds) != m.shape[0]:
            raise StateError("one std per mixture component required")
        if any(s <= 0 for s in self.stds):
            raise StateError("mixture stds must be positive")
        if self.weights is not None and (
            len(self.weights) != m.shape[0] or any(w <= 0 for w in self.weights)
        ):
            raise StateError("mixture weights must be positive, one per component")

    @property
    def dim(self) -> int:
        return len(self.means[0]) - 1

    def normalized_weights(self) -> np.ndarray:
        w = np.ones(len(self.stds)) if self.weights is None else np.asarray(self.weights, float)
        return w / w.sum()


InitLaw = Union[UniformBox, GaussianMixture]


@dataclass(frozen=True)
class SimConfig:
    n_agents: int = 100
    t_end: float = 2.5
    dt: float = 0.01
    init: InitLaw = field(default_factory=UniformBox)
    model: ModelParams = field(default_factory=ModelParams)
    noise: NoiseSpec = field(default_factory=lambda: Additive(0.05, 0.05))
    kernel: str = PAIRWISE
    seed: int = 0
    snapshot_stride: int = 1
    neighbor_method: str = "dense"

    def __post_init__(self):
        if self.n_agents < 1:
            raise StateError("n_agents must be >= 1")
        if not self.dt > 0:
            raise StateError("dt must be positive")
        if self.t_end < 0:
            raise StateError("t_end must be non-negative")
        if self.t_end > 0 and self.dt > self.t_end * (1 + 1e-12):
            raise StateError("dt must not exceed t_end")
        if self.snapshot_stride < 1:
            raise StateError("snapshot_stride must be >= 1")
        if self.init.dim != self.model.dim:
            raise StateError(
                f"initial law has dimension {self.init.dim}, model has {self.model.dim}"
            )

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass(frozen=True)
class Trajectory:
    snapshots: tuple
    config: SimConfig

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots])

    @property
    def final(self) -> SystemState:
        return self.snapshots[-1]

    def positions(self) -> np.ndarray:
        """(T, N, d) stacked positions."""
        return np.stack([s.positions for s in self.snapshots])

    def opinions(self) -> np.ndarray:
        return np.stack([s.opinions for s in self.snapshots])


def init_state(cfg: SimConfig, rng: CounterRNG | None = None) -> SystemState:
    rng = rng or CounterRNG(cfg.seed)
    n, d = cfg.n_agents, cfg.model.dim
    law = cfg.init
    if isinstance(law, UniformBox):
        u = rng.uniform(STREAM_INIT, 0, n * (d + 1)).reshape(n, d + 1)
        lo = np.append(np.asarray(law.pos_low, float), law.op_low)
        hi = np.append(np.asarray(law.pos_high, float), law.op_high)
        z = lo + (hi - lo) * u
    elif isinstance(law, GaussianMixture):
        u = rng.uniform(STREAM_INIT, 0, n)
        comp = np.searchsorted(np.cumsum(law.normalized_weights()), u, side="right")
        comp = np.minimum(comp, len(law.stds) - 1)
        xi = rng.normal(STREAM_INIT, 1, (n, d + 1))
        z = np.asarray(law.means, float)[comp] + np.asarray(law.stds, float)[comp, None] * xi
    else:
        raise StateError(f"unsupported initial law {law!r}")
    return SystemState(z[:, :d], z[:, d], 0.0)


def em_step(
    s: SystemState, cfg: SimConfig, step_index: int, rng: CounterRNG | None = None
) -> SystemState:
    """One explicit Euler-Maruyama step; coefficients frozen at the pre-step state."""
    rng = rng or CounterRNG(cfg.seed)
    dt = cfg.dt
    drift = total_drift(s, cfg.model, cfg.kernel, method=cfg.neighbor_method)
    amp_sp, amp_op = noise_amplitude(s, cfg.noise, cfg.model)
    n, d = s.n_agents, s.dim
    xi = rng.normal(STREAM_NOISE, step_index, (n, d + 1))
    sq = np.sqrt(dt)
    with np.errstate(over="ignore", invalid="ignore"):
        x = s.positions + drift.spatial * dt + (amp_sp * sq)[:, None] * xi[:, :d]
        th = s.opinions + drift.opinion * dt + amp_op * sq * xi[:, d]
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(th))):
        raise BlowUpError(step_index)
    return SystemState(x, th, (step_index + 1) * dt)


def simulate(cfg: SimConfig, initial: SystemState | None = None) -> Trajectory:
    rng = CounterRNG(cfg.seed)
    s = initial if initial is not None else init_state(cfg, rng)
    steps = cfg.n_steps
    snaps = [s]
    for k in range(steps):
        s = em_step(s, cfg, k, rng)
        if (k + 1) % cfg.snapshot_stride == 0 or k + 1 == steps:
            snaps.append(s)
    return Trajectory(tuple(snaps), cfg)
