"""Composite Gauss-Legendre rules used across the package."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=64)
def _leggauss(q: int):
    x, w = np.polynomial.legendre.leggauss(q)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def panel_rule(edges, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of a q-point rule on each panel between ``edges``."""
    edges = np.asarray(edges, dtype=float)
    x, w = _leggauss(q)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (a + b) + 0.5 * (b - a) * x
    weights = 0.5 * (b - a) * w
    return nodes.ravel(), weights.ravel()


def shell_edges(panels: int) -> np.ndarray:
    """Panel edges in scaled units u in [1/2, 2], split at 1."""
    return np.r_[np.linspace(0.5, 1.0, panels + 1), np.linspace(1.0, 2.0, 2 * panels + 1)[1:]]


def shell_rule(j: int, q: int = 8, panels: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Rule for |y| in [2^(-j-1), 2^(-j+1)], positive side only."""
    u, w = panel_rule(shell_edges(panels), q)
    scale = 2.0 ** (-j)
    return u * scale, w * scale


def symmetric(nodes: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mirror a positive-side rule so that node -y pairs exactly with node y."""
    return np.concatenate([-nodes[::-1], nodes]), np.concatenate([weights[::-1], weights])


def log_panels(lo: float, hi: float, per_octave: int = 2) -> np.ndarray:
    """Geometric panel edges from lo to hi."""
    k = max(1, int(np.ceil(np.log2(hi / lo) * per_octave)))
    return np.geomspace(lo, hi, k + 1)
