"""Flat ``key = value`` experiment configuration.

One setting per line, ``#`` starts a comment, lists are comma separated and
mixture components are separated by ``;``. Any key can be overridden from the
environment as ``SOCIALFIELD_<KEY>`` (upper case), and a few from CLI flags.
Precedence: file < environment < command line.

Keys, defaults and units are listed in ``DEFAULTS``; see README for the table.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from pathlib import Path

from .abm import GaussianMixture, SimConfig, UniformBox
from .model import (
    KERNELS,
    Additive,
    KernelAveraged,
    ModelParams,
    MultiplicativeMin,
    SigmaKernel,
    StateError,
)
from .pde import Grid2D, random_clusters

ENV_PREFIX = "SOCIALFIELD_"
MODES = (
    "run-abm",
    "run-pde",
    "compare-limits",
    "noise-sweep",
    "chaos-study",
    "fluctuation-study",
    "render",
)
FORMATS = ("csv", "ndjson", "svg")

DEFAULTS: dict[str, str] = {
    # agents and integration
    "seed": "0",
    "n_agents": "100",
    "t_end": "2.5",
    "dt": "0.01",
    "dim": "2",
    "snapshot_stride": "1",
    "kernel": "pairwise",
    "neighbor_method": "dense",
    # interaction
    "alpha": "20",
    "beta": "20",
    "radius": "0.15",
    "lambda": "-1",
    # noise: additive | multiplicative | kernel
    "noise": "additive",
    "sigma": "0.05",
    "sigma_sp": "",
    "sigma_op": "",
    "sigma_iso": "0.05",
    "apply_to": "both",
    "sigma_sp_kernel": "constant:0",
    "sigma_op_kernel": "constant:0",
    # initial law: uniform | mixture
    "init": "uniform",
    "pos_low": "-0.25",
    "pos_high": "0.25",
    "op_low": "-1",
    "op_high": "1",
    "mixture": "",
    "mixture_k": "4",
    "mixture_std": "0.2",
    "mixture_box": "1.2",
    "mixture_seed": "",
    # mean-field PDE
    "z_min": "-2",
    "z_max": "2",
    "eta_min": "-2",
    "eta_max": "2",
    "grid_h": "0.05",
    "pde_t_end": "1.0",
    "pde_dt": "0.0001",
    "coeff_stride": "1",
    "interaction_scaling": "1.0",
    "pde_snapshot_stride": "",
    # studies
    "sigmas": "0.01,0.05,0.15",
    "n_list": "50,100,200,400",
    "ensemble": "8",
    "n_proj": "100",
    "pde_samples": "10000",
    "compare_points": "10",
    "hist_bins": "40",
    # render
    "input": "",
    # output
    "formats": "csv,ndjson,svg",
}


class ConfigError(ValueError):
    pass


def parse_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def load_raw(path: str | Path | None, env=None, overrides=None) -> dict[str, str]:
    raw = dict(DEFAULTS)
    if path is not None:
        try:
            raw.update(parse_text(Path(path).read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    env = os.environ if env is None else env
    for key in DEFAULTS:
        name = ENV_PREFIX + key.upper()
        if name in env:
            raw[key] = env[name]
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = str(value)
    return raw


def config_hash(raw: dict[str, str]) -> str:
    canon = "\n".join(f"{k}={raw[k]}" for k in sorted(raw))
    return hashlib.sha256(canon.encode()).hexdigest()


# -- typed accessors ----------------------------------------------------------


def _num(raw, key, cast=float):
    try:
        return cast(raw[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: cannot parse {raw[key]!r} as {cast.__name__}") from exc


def _list(raw, key, cast=float):
    text = raw[key].strip()
    if not text:
        return []
    try:
        return [cast(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {text!r}") from exc


def _sigma_kernel(raw, key) -> SigmaKernel:
    kind, _, scale = raw[key].partition(":")
    try:
        return SigmaKernel(kind.strip(), float(scale or 0))
    except (ValueError, StateError) as exc:
        raise ConfigError(f"{key}: {exc}") from exc


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    raw: dict
    output_dir: Path
    formats: tuple
    threads: int = 1

    @property
    def seed(self) -> int:
        return _num(self.raw, "seed", int)

    def get(self, key, cast=float):
        return _num(self.raw, key, cast)

    def list(self, key, cast=float):
        return _list(self.raw, key, cast)

    def model(self) -> ModelParams:
        try:
            return ModelParams(
                alpha=self.get("alpha"),
                beta=self.get("beta"),
                radius=self.get("radius"),
                lam=self.get("lambda"),
                dim=self.get("dim", int),
            )
        except StateError as exc:
            raise ConfigError(str(exc)) from exc

    def noise(self, sigma: float | None = None):
        r = self.raw
        kind = r["noise"]
        try:
            if kind == "additive":
                base = self.get("sigma") if sigma is None else sigma
                sp = self.get("sigma_sp") if r["sigma_sp"] and sigma is None else base
                op = self.get("sigma_op") if r["sigma_op"] and sigma is None else base
                return Additive(sp, op)
            if kind == "multiplicative":
                return MultiplicativeMin(self.get("sigma_iso"), r["apply_to"])
            if kind == "kernel":
                return KernelAveraged(
                    _sigma_kernel(r, "sigma_sp_kernel"), _sigma_kernel(r, "sigma_op_kernel")
                )
        except StateError as exc:
            raise ConfigError(str(exc)) from exc
        raise ConfigError(f"noise: unknown kind {kind!r}")

    def mixture_components(self):
        """List of (mean_z, mean_eta, std, weight); explicit or drawn from mixture_seed."""
        text = self.raw["mixture"].strip()
        if text:
            comps = []
            for chunk in text.split(";"):
                try:
                    vals = [float(x) for x in chunk.split(",")]
                except ValueError as exc:
                    raise ConfigError(f"mixture: cannot parse {chunk!r}") from exc
                if len(vals) != 4:
                    raise ConfigError(f"mixture component {chunk!r} needs mz,meta,std,weight")
                comps.append(tuple(vals))
            return comps
        mseed = self.raw["mixture_seed"].strip()
        return random_clusters(
            int(mseed) if mseed else self.seed,
            k=self.get("mixture_k", int),
            box=self.get("mixture_box"),
            std=self.get("mixture_std"),
        )

    def init_law(self, dim: int):
        kind = self.raw["init"]
        try:
            if kind == "uniform":
                lo = self.list("pos_low")
                hi = self.list("pos_high")
                lo = lo * dim if len(lo) == 1 else lo
                hi = hi * dim if len(hi) == 1 else hi
                if len(lo) != dim or len(hi) != dim:
                    raise ConfigError(f"pos_low/pos_high need 1 or {dim} entries")
                return UniformBox(tuple(lo), tuple(hi), self.get("op_low"), self.get("op_high"))
            if kind == "mixture":
                if dim != 1:
                    raise ConfigError("mixture initial law is defined for dim = 1")
                comps = self.mixture_components()
                return GaussianMixture(
                    means=[(c[0], c[1]) for c in comps],
                    stds=[c[2] for c in comps],
                    weights=[c[3] for c in comps],
                )
        except StateError as exc:
            raise ConfigError(str(exc)) from exc
        raise ConfigError(f"init: unknown kind {kind!r}")

    def sim(self, n_agents=None, seed=None, sigma=None, dim=None, t_end=None, stride=None):
        p = self.model()
        if dim is not None and dim != p.dim:
            raise ConfigError(f"this mode needs dim = {dim}, config has dim = {p.dim}")
        kernel = self.raw["kernel"]
        if kernel not in KERNELS:
            raise ConfigError(f"kernel: expected one of {KERNELS}, got {kernel!r}")
        try:
            return SimConfig(
                n_agents=n_agents if n_agents is not None else self.get("n_agents", int),
                t_end=t_end if t_end is not None else self.get("t_end"),
                dt=self.get("dt"),
                init=self.init_law(p.dim),
                model=p,
                noise=self.noise(sigma),
                kernel=kernel,
                seed=seed if seed is not None else self.seed,
                snapshot_stride=stride if stride is not None else self.get("snapshot_stride", int),
                neighbor_method=self.raw["neighbor_method"],
            )
        except StateError as exc:
            raise ConfigError(str(exc)) from exc

    def grid(self) -> Grid2D:
        try:
            return Grid2D(
                self.get("z_min"),
                self.get("z_max"),
                self.get("eta_min"),
                self.get("eta_max"),
                self.get("grid_h"),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def build(
    mode: str,
    path=None,
    output_dir=".",
    seed=None,
    threads=1,
    formats=None,
    env=None,
) -> ExperimentConfig:
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}")
    raw = load_raw(path, env=env, overrides={"seed": seed, "formats": formats})
    fmts = tuple(f.strip() for f in raw["formats"].split(",") if f.strip())
    bad = [f for f in fmts if f not in FORMATS]
    if bad:
        raise ConfigError(f"unknown output formats {bad}")
    if threads is None or int(threads) < 1:
        raise ConfigError("threads must be >= 1")
    cfg = ExperimentConfig(mode, raw, Path(output_dir), fmts, int(threads))
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    """Mode-specific checks, run before any computation."""
    seed = cfg.seed
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    mode = cfg.mode
    if mode == "render":
        if not cfg.raw["input"]:
            raise ConfigError("render needs input = <snapshots.ndjson | density.ndjson>")
        return
    if mode in ("run-abm", "noise-sweep", "fluctuation-study"):
        cfg.sim()
    if mode == "noise-sweep" and not cfg.list("sigmas"):
        raise ConfigError("noise-sweep needs a non-empty sigmas list")
    if mode in ("run-pde", "compare-limits", "chaos-study"):
        cfg.grid()
        if mode != "run-pde" and cfg.model().dim != 1:
            raise ConfigError(f"{mode} compares against the (z, eta) PDE and needs dim = 1")
        if mode != "run-pde":
            cfg.sim(dim=1)
        if not isinstance(cfg.noise(), (Additive, KernelAveraged)):
            raise ConfigError("the mean-field PDE supports additive and kernel noise only")
        cfg.mixture_components()
    if mode in ("chaos-study", "fluctuation-study"):
        ns = cfg.list("n_list", int)
        if len(ns) < 1 or any(n < 1 for n in ns):
            raise ConfigError("n_list needs positive agent counts")
        if cfg.get("ensemble", int) < 1:
            raise ConfigError("ensemble must be >= 1")
