"""In-radius pair search: naive reference and uniform cell list."""
from __future__ import annotations

from collections import defaultdict
from itertools import product

import numpy as np

from .model import RADIUS_RTOL, SystemState


def _positions(s) -> np.ndarray:
    x = s.positions if isinstance(s, SystemState) else np.asarray(s, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def _within(x: np.ndarray, i: np.ndarray, j: np.ndarray, radius: float) -> np.ndarray:
    d = x[i] - x[j]
    return np.sqrt(np.sum(d * d, axis=1)) <= radius * (1.0 + RADIUS_RTOL)


def naive_pairs(s, radius: float) -> np.ndarray:
    x = _positions(s)
    i, j = np.triu_indices(x.shape[0], k=1)
    keep = _within(x, i, j, radius)
    return np.stack([i[keep], j[keep]], axis=1)


def cell_list_pairs(s, radius: float) -> np.ndarray:
    """Bin agents into cubes of edge ``radius`` and test only adjacent cells."""
    x = _positions(s)
    n, d = x.shape
    cells = np.floor(x / radius).astype(np.int64)
    buckets: dict[tuple, list[int]] = defaultdict(list)
    for idx, c in enumerate(map(tuple, cells)):
        buckets[c].append(idx)
    offsets = list(product((-1, 0, 1), repeat=d))
    ii, jj = [], []
    for c, members in buckets.items():
        mem = np.asarray(members)
        near = []
        for off in offsets:
            other = buckets.get(tuple(a + b for a, b in zip(c, off)))
            if other:
                near.extend(other)
        near = np.asarray(near)
        a, b = np.meshgrid(mem, near, indexing="ij")
        a, b = a.ravel(), b.ravel()
        keep = a < b
        ii.append(a[keep])
        jj.append(b[keep])
    if not ii:
        return np.zeros((0, 2), dtype=np.int64)
    i = np.concatenate(ii)
    j = np.concatenate(jj)
    keep = _within(x, i, j, radius)
    pairs = np.stack([i[keep], j[keep]], axis=1)
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return pairs[order]


def neighbor_pairs(s, radius: float, method: str = "cells") -> np.ndarray:
    """All (i, j) with i < j and |x_i - x_j| <= radius, as a sorted (M, 2) int array."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    if method == "naive":
        return naive_pairs(s, radius)
    if method == "cells":
        return cell_list_pairs(s, radius)
    raise ValueError(f"unknown neighbour method {method!r}")
