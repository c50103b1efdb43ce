"""Minimal deterministic SVG figures (no timestamps, fixed element order)."""
from __future__ import annotations

import numpy as np

WIDTH = 360
HEIGHT = 360
PAD = 36


def opinion_color(theta: float) -> str:
    """Blue (-1) through white (0) to red (+1), clamped outside [-1, 1]."""
    t = min(1.0, max(-1.0, float(theta)))
    if t < 0:
        r = g = round(255 * (1 + t))
        b = 255
    else:
        r = 255
        g = b = round(255 * (1 - t))
    return f"#{r:02x}{g:02x}{b:02x}"


def _heat_color(v: float, vmax: float) -> str:
    x = 0.0 if vmax <= 0 else min(1.0, max(0.0, v / vmax))
    # white -> dark red
    r = 255 - round(120 * x)
    g = b = 255 - round(255 * x)
    return f"#{r:02x}{g:02x}{b:02x}"


def _f(x: float) -> str:
    return f"{x:.3f}"


def _frame(title: str, body: list[str], xlabel: str, ylabel: str) -> str:
    head = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="18" font-size="12" text-anchor="middle">{title}</text>',
        f'<rect x="{PAD}" y="{PAD}" width="{WIDTH - 2 * PAD}" height="{HEIGHT - 2 * PAD}" '
        'fill="none" stroke="black" stroke-width="0.8"/>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 8}" font-size="11" text-anchor="middle">{xlabel}</text>',
        f'<text x="12" y="{HEIGHT / 2}" font-size="11" text-anchor="middle" '
        f'transform="rotate(-90 12 {HEIGHT / 2})">{ylabel}</text>',
    ]
    return "\n".join(head + body + ["</svg>"]) + "\n"


def _scaler(lo: float, hi: float, out_lo: float, out_hi: float):
    span = hi - lo if hi > lo else 1.0
    return lambda v: out_lo + (np.asarray(v) - lo) / span * (out_hi - out_lo)


def _bounds(values, pad_frac=0.05):
    lo, hi = float(np.min(values)), float(np.max(values))
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    pad = (hi - lo) * pad_frac
    return lo - pad, hi + pad


def scatter(positions: np.ndarray, opinions: np.ndarray, title: str) -> str:
    """Agents in social space coloured by opinion; 1-D positions are plotted against opinion."""
    pos = np.asarray(positions, float)
    if pos.ndim == 1 or pos.shape[1] == 1:
        xs, ys, ylab = pos.reshape(-1), np.asarray(opinions, float), "opinion"
    else:
        xs, ys, ylab = pos[:, 0], pos[:, 1], "x_1"
    sx = _scaler(*_bounds(xs), PAD, WIDTH - PAD)
    sy = _scaler(*_bounds(ys), HEIGHT - PAD, PAD)
    body = [
        f'<circle cx="{_f(sx(x))}" cy="{_f(sy(y))}" r="3" fill="{opinion_color(t)}" '
        'stroke="black" stroke-width="0.3"/>'
        for x, y, t in zip(xs, ys, opinions)
    ]
    return _frame(title, body, "x_0", ylab)


def trajectories(times: np.ndarray, opinions: np.ndarray, title: str) -> str:
    """One polyline per agent: opinion against time. ``opinions`` is (T, N)."""
    times = np.asarray(times, float)
    ops = np.asarray(opinions, float)
    sx = _scaler(*_bounds(times, 0.0), PAD, WIDTH - PAD)
    sy = _scaler(*_bounds(ops), HEIGHT - PAD, PAD)
    body = []
    for k in range(ops.shape[1]):
        pts = " ".join(f"{_f(sx(t))},{_f(sy(v))}" for t, v in zip(times, ops[:, k]))
        body.append(
            f'<polyline points="{pts}" fill="none" stroke="{opinion_color(ops[0, k])}" '
            'stroke-width="0.6" stroke-opacity="0.8"/>'
        )
    return _frame(title, body, "t", "opinion")


def histogram(edges: np.ndarray, counts: np.ndarray, title: str) -> str:
    edges = np.asarray(edges, float)
    counts = np.asarray(counts, float)
    sx = _scaler(edges[0], edges[-1], PAD, WIDTH - PAD)
    top = counts.max() if counts.size and counts.max() > 0 else 1.0
    sy = _scaler(0.0, top * 1.05, HEIGHT - PAD, PAD)
    body = []
    for lo, hi, c in zip(edges[:-1], edges[1:], counts):
        x0, x1 = sx(lo), sx(hi)
        y = sy(c)
        mid = 0.5 * (lo + hi)
        body.append(
            f'<rect x="{_f(x0)}" y="{_f(y)}" width="{_f(x1 - x0)}" '
            f'height="{_f(HEIGHT - PAD - y)}" fill="{opinion_color(mid)}" stroke="black" '
            'stroke-width="0.3"/>'
        )
    return _frame(title, body, "opinion", "count")


def heatmap(values: np.ndarray, extent, title: str, vmax: float | None = None) -> str:
    """Density on a (z, eta) grid; ``values[i, j]`` is cell (z_i, eta_j)."""
    v = np.asarray(values, float)
    z0, z1, e0, e1 = extent
    vmax = float(v.max()) if vmax is None else vmax
    nz, ne = v.shape
    cw = (WIDTH - 2 * PAD) / nz
    ch = (HEIGHT - 2 * PAD) / ne
    body = []
    for i in range(nz):
        for j in range(ne):
            if v[i, j] <= 0:
                continue
            x = PAD + i * cw
            y = HEIGHT - PAD - (j + 1) * ch
            body.append(
                f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(cw)}" height="{_f(ch)}" '
                f'fill="{_heat_color(v[i, j], vmax)}"/>'
            )
    body.append(
        f'<text x="{PAD}" y="{HEIGHT - PAD + 12}" font-size="9">{z0:g}</text>'
        f'<text x="{WIDTH - PAD}" y="{HEIGHT - PAD + 12}" font-size="9" text-anchor="end">{z1:g}</text>'
    )
    return _frame(title, body, f"z in [{z0:g}, {z1:g}]", f"opinion in [{e0:g}, {e1:g}]")
