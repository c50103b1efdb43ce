"""Finite-volume solver for the nonlocal mean-field equation in (z, eta).

    d_t rho = -d_z(rho U[rho]) - d_eta(rho V[rho])
              + 1/2 d_zz(rho sig_sp^2) + 1/2 d_etaeta(rho sig_op^2)

on a cell-centred grid with one spatial and one opinion axis. Fluxes live on
cell faces (first-order upwind advection on the face-averaged velocity,
centred differences of rho*sig^2 for diffusion) and vanish on the domain
boundary, so total mass telescopes exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import (
    RADIUS_RTOL,
    Additive,
    KernelAveraged,
    ModelParams,
    MultiplicativeMin,
    NoiseSpec,
    SigmaKernel,
)


class StabilityError(RuntimeError):
    def __init__(self, message: str, bound: float | None = None, step: int | None = None):
        super().__init__(message)
        self.bound = bound
        self.step = step


@dataclass(frozen=True)
class Grid2D:
    z_min: float = -2.0
    z_max: float = 2.0
    eta_min: float = -2.0
    eta_max: float = 2.0
    h: float = 0.05

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("grid spacing must be positive")
        for lo, hi in ((self.z_min, self.z_max), (self.eta_min, self.eta_max)):
            cells = (hi - lo) / self.h
            if hi <= lo or abs(cells - round(cells)) > 1e-9 * max(1.0, cells):
                raise ValueError(f"[{lo}, {hi}] is not an integer number of cells of size {self.h}")

    @property
    def nz(self) -> int:
        return int(round((self.z_max - self.z_min) / self.h))

    @property
    def neta(self) -> int:
        return int(round((self.eta_max - self.eta_min) / self.h))

    @property
    def shape(self) -> tuple[int, int]:
        return self.nz, self.neta

    @staticmethod
    def _centres(lo: float, hi: float, n: int, h: float) -> np.ndarray:
        # measured from the midpoint so a centre on 0 is exactly 0 and sgn() sees it
        return 0.5 * (lo + hi) + (np.arange(n) - 0.5 * (n - 1)) * h

    @property
    def z(self) -> np.ndarray:
        return self._centres(self.z_min, self.z_max, self.nz, self.h)

    @property
    def eta(self) -> np.ndarray:
        return self._centres(self.eta_min, self.eta_max, self.neta, self.h)

    @property
    def cell_area(self) -> float:
        return self.h * self.h


@dataclass(frozen=True)
class DensityField:
    values: np.ndarray
    grid: Grid2D
    time: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", v)

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.grid.cell_area)


@dataclass(frozen=True)
class CoefficientFields:
    u_field: np.ndarray
    v_field: np.ndarray
    sig_sp_field: np.ndarray
    sig_op_field: np.ndarray


@dataclass
class PDEResult:
    snapshots: list
    clipped_mass: float = 0.0
    max_mass_drift: float = 0.0
    max_density: list = field(default_factory=list)
    steps: int = 0


# -- initial data ------------------------------------------------------------


def init_gaussian_mixture(grid: Grid2D, components) -> DensityField:
    """Isotropic Gaussian mixture sampled at cell centres, renormalised to unit mass.

    ``components`` is an iterable of (mean_z, mean_eta, std, weight).
    """
    z, eta = np.meshgrid(grid.z, grid.eta, indexing="ij")
    rho = np.zeros(grid.shape)
    for mz, me, std, w in components:
        if std <= 0:
            raise ValueError("component std must be positive")
        if w <= 0:
            raise ValueError("component weight must be positive")
        r2 = (z - mz) ** 2 + (eta - me) ** 2
        rho += w * np.exp(-0.5 * r2 / std**2) / (2 * np.pi * std**2)
    total = rho.sum() * grid.cell_area
    if not total > 0:
        raise ValueError("mixture has no mass on the grid")
    return DensityField(rho / total, grid, 0.0)


def random_clusters(seed: int, k: int = 4, box: float = 1.2, std: float = 0.2, weights=None):
    """Draw ``k`` cluster centres uniformly in [-box, box]^2 with a common std."""
    rng = np.random.Generator(np.random.Philox(int(seed)))
    centres = rng.uniform(-box, box, size=(k, 2))
    w = np.ones(k) if weights is None else np.asarray(weights, float)
    return [(float(c[0]), float(c[1]), float(std), float(wi)) for c, wi in zip(centres, w)]


# -- coefficients ------------------------------------------------------------


def stencil_halfwidth(radius: float, h: float) -> int:
    k = int(math.floor(radius / h)) + 1
    while k * h > radius * (1.0 + RADIUS_RTOL):
        k -= 1
    return k


def _window_sum(profile: np.ndarray, zc: np.ndarray, k: int, weight_by_offset: bool):
    """sum over |o| <= k of profile[i + o] (optionally times z[i+o] - z[i]), zero-padded."""
    n = profile.shape[0]
    out = np.zeros_like(profile)
    for o in range(-k, k + 1):
        lo, hi = max(0, -o), min(n, n - o)
        if lo >= hi:
            continue
        src = profile[lo + o : hi + o]
        if weight_by_offset:
            dz = zc[lo + o : hi + o] - zc[lo:hi]
            src = src * dz.reshape((-1,) + (1,) * (profile.ndim - 1))
        out[lo:hi] += src
    return out


def _sigma_field(kern: SigmaKernel, rho, grid, k, m0_local, total_mass):
    shape = grid.shape
    if kern.kind == "constant":
        return np.full(shape, kern.scale * total_mass)
    if kern.kind == "indicator":
        return kern.scale * np.repeat(m0_local[:, None], grid.neta, axis=1)
    eta = grid.eta
    gap = np.abs(eta[:, None] - eta[None, :])  # gap[theta, eta]
    g = np.einsum("yt,te->ye", rho, gap, optimize=False) * grid.cell_area
    return kern.scale * _window_sum(g, grid.z, k, False)


def nonlocal_coefficients(
    rho: DensityField, p: ModelParams, noise: NoiseSpec, scaling: float = 1.0
) -> CoefficientFields:
    """Integrate the pair kernels against rho with midpoint quadrature.

    The sign factor sgn(eta * theta) separates, and the spatial indicator
    restricts y to a stencil of half-width floor(R/h), so every field reduces
    to windowed sums of per-column moments in theta.
    """
    g = rho.grid
    r = rho.values
    area = g.cell_area
    eta = g.eta
    k = stencil_halfwidth(p.radius, g.h)

    m0 = r.sum(axis=1) * area
    m1 = (r * eta[None, :]).sum(axis=1) * area
    ms = (r * np.sign(eta)[None, :]).sum(axis=1) * area

    w0 = _window_sum(m0, g.z, k, False)
    w1 = _window_sum(m1, g.z, k, False)
    ws = _window_sum(ms, g.z, k, True)

    u = scaling * p.beta * ws[:, None] * np.sign(eta)[None, :]
    v = scaling * p.alpha * (w1[:, None] - eta[None, :] * w0[:, None])

    if isinstance(noise, Additive):
        ssp = np.full(g.shape, float(noise.sigma_sp))
        sop = np.full(g.shape, float(noise.sigma_op))
    elif isinstance(noise, KernelAveraged):
        total = float(r.sum() * area)
        ssp = _sigma_field(noise.sigma_sp_kernel, r, g, k, w0, total)
        sop = _sigma_field(noise.sigma_op_kernel, r, g, k, w0, total)
    elif isinstance(noise, MultiplicativeMin):
        raise ValueError("nearest-gap multiplicative noise has no mean-field counterpart")
    else:
        raise ValueError(f"unsupported noise spec {noise!r}")
    return CoefficientFields(u, v, ssp, sop)


# -- right-hand side -----------------------------------------------------------


def _face_flux(rho: np.ndarray, vel: np.ndarray, diff: np.ndarray, h: float, axis: int):
    """Interior face fluxes along ``axis`` padded with zero boundary faces."""
    a = np.moveaxis(rho, axis, 0)
    c = np.moveaxis(vel, axis, 0)
    d = np.moveaxis(diff, axis, 0)
    cf = 0.5 * (c[:-1] + c[1:])
    adv = np.maximum(cf, 0.0) * a[:-1] + np.minimum(cf, 0.0) * a[1:]
    dif = -(d[1:] - d[:-1]) / h
    flux = np.zeros((a.shape[0] + 1,) + a.shape[1:])
    flux[1:-1] = adv + dif
    return np.moveaxis(flux, 0, axis)


def pde_rhs(rho: DensityField, coeff: CoefficientFields) -> np.ndarray:
    r = rho.values
    h = rho.grid.h
    for name in ("u_field", "v_field", "sig_sp_field", "sig_op_field"):
        if getattr(coeff, name).shape != r.shape:
            raise ValueError(f"{name} does not match the density grid")
    fz = _face_flux(r, coeff.u_field, 0.5 * r * coeff.sig_sp_field**2, h, 0)
    fe = _face_flux(r, coeff.v_field, 0.5 * r * coeff.sig_op_field**2, h, 1)
    return -(fz[1:] - fz[:-1]) / h - (fe[:, 1:] - fe[:, :-1]) / h


# -- time stepping -------------------------------------------------------------


def _sigma_bound(noise: NoiseSpec, grid: Grid2D) -> float:
    if isinstance(noise, Additive):
        return max(noise.sigma_sp, noise.sigma_op)
    if isinstance(noise, KernelAveraged):
        span = grid.eta_max - grid.eta_min
        return max(
            k.scale * (span if k.kind == "gap" else 1.0)
            for k in (noise.sigma_sp_kernel, noise.sigma_op_kernel)
        )
    raise ValueError("nearest-gap multiplicative noise has no mean-field counterpart")


def stable_dt(grid: Grid2D, p: ModelParams, noise: NoiseSpec, scaling: float = 1.0) -> float:
    """Largest admissible explicit step, from a priori bounds valid for any unit-mass density.

    |U| <= beta R and |V| <= alpha * (eta span); the advective limit uses |U| + |V|
    because both directions are updated in the same explicit step.
    """
    vel = scaling * (p.beta * p.radius + p.alpha * (grid.eta_max - grid.eta_min))
    sig = _sigma_bound(noise, grid)
    adv = grid.h / vel if vel > 0 else math.inf
    dif = grid.h**2 / (4.0 * sig**2) if sig > 0 else math.inf
    return 0.4 * min(adv, dif)


def pde_integrate(
    rho0: DensityField,
    t_end: float,
    dt: float,
    p: ModelParams,
    noise: NoiseSpec,
    coeff_stride: int = 1,
    scaling: float = 1.0,
    snapshot_stride: int | None = None,
    check_stability: bool = True,
) -> PDEResult:
    """Forward-Euler integration with clip-and-renormalise positivity control.

    Snapshots are kept every ``snapshot_stride`` steps (default: only start
    and end); the final state is always included.
    """
    if coeff_stride < 1:
        raise ValueError("coeff_stride must be >= 1")
    if not dt > 0:
        raise ValueError("dt must be positive")
    bound = stable_dt(rho0.grid, p, noise, scaling)
    if check_stability and dt > bound:
        raise StabilityError(
            f"dt={dt:g} exceeds the explicit stability bound {bound:.6g}", bound=bound
        )
    grid = rho0.grid
    area = grid.cell_area
    steps = int(round(t_end / dt))
    stride = snapshot_stride or max(steps, 1)
    r = rho0.values.copy()
    mass0 = r.sum() * area
    peak0 = max(float(np.abs(r).max()), 1e-300)
    result = PDEResult([DensityField(r.copy(), grid, rho0.time)], max_density=[float(r.max())])
    coeff = None
    for n in range(steps):
        cur = DensityField(r, grid, rho0.time + n * dt)
        if coeff is None or n % coeff_stride == 0:
            coeff = nonlocal_coefficients(cur, p, noise, scaling)
        r = r + dt * pde_rhs(cur, coeff)
        if not np.all(np.isfinite(r)) or np.abs(r).max() > 1e3 * peak0:
            raise StabilityError(f"density blew up at step {n}", bound=bound, step=n)
        neg = r < 0
        if neg.any():
            result.clipped_mass += float(-r[neg].sum() * area)
            r[neg] = 0.0
            r *= mass0 / (r.sum() * area)
        result.max_mass_drift = max(result.max_mass_drift, abs(r.sum() * area - mass0))
        if (n + 1) % stride == 0 or n + 1 == steps:
            t = rho0.time + (n + 1) * dt
            result.snapshots.append(DensityField(r.copy(), grid, t))
            result.max_density.append(float(r.max()))
    result.steps = steps
    return result
