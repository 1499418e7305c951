"""Fourier transforms of kernel pieces and of truncated kernels.

All transforms use the convention F(xi) = int f(y) exp(-i xi . y) dy. A
piece lives on |y_l| in [2^(-j_l-1), 2^(-j_l+1)], so in the scaled variable
u_l = 2^(j_l) y_l the oscillation depends only on s_l = 2^(-j_l) xi_l. Each
axis gets Gauss-Legendre panels of 16 nodes on u in [1/2, 2], with at least
one panel per period of the oscillation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product
from typing import Sequence

import numpy as np

from .kernels import Kernel, KernelPiece, dyadic_piece, piece_indices, theta
from .quadrature import panel_rule

PANEL_Q = 16
MIN_PANELS = 6
U_LO, U_HI = 0.5, 2.0
MIN_POINTS_PER_PERIOD = 8
DEFAULT_S_CAP = 128.0


class UnderResolvedError(ValueError):
    """Raised when a requested rule has fewer than 8 nodes per oscillation period."""


def _periods(s: float) -> float:
    return (U_HI - U_LO) * abs(s) / (2 * math.pi)


def required_nodes(s: float) -> int:
    """Minimum nodes per axis for 8 points per period at scaled frequency s."""
    return int(math.ceil(MIN_POINTS_PER_PERIOD * _periods(s)))


def auto_nodes(s: float, fine: bool = True) -> int:
    """Default node count per axis.

    The fine rule (two 16-point panels per period, at least 12 panels) is
    accurate to about 1e-12 relative. The coarse rule used for grid sums
    rounds one panel per period up to 6 * 2^k panels, to within about 1e-8,
    so that few distinct tensor grids are needed.
    """
    if fine:
        return PANEL_Q * max(2 * MIN_PANELS, int(math.ceil(2 * _periods(s))))
    k = max(0, int(math.ceil(math.log2(max(_periods(s), 1.0) / MIN_PANELS))))
    return PANEL_Q * MIN_PANELS * 2**k


def _rule(nodes: int):
    panels = max(1, int(math.ceil(nodes / PANEL_Q)))
    return panel_rule(np.linspace(U_LO, U_HI, panels + 1), PANEL_Q)


@lru_cache(maxsize=64)
def _axis(nodes: int, signed: bool):
    """Scaled nodes, weights and the dyadic profile theta(|u|), which is j-free."""
    u, w = _rule(nodes)
    if signed:
        u, w = np.r_[-u[::-1], u], np.r_[w[::-1], w]
    return u, w * theta(np.abs(u))


def _parities(K: Kernel, alpha) -> list[int] | None:
    """Per-axis parity (1 odd, 0 even) of y^alpha K, or None if not definite."""
    if not K.is_odd:
        return None
    return [(1 + a) % 2 for a in alpha]


def _contract(F: np.ndarray, T: list[np.ndarray]) -> np.ndarray:
    """sum_u F[u_1..u_n] prod_l T_l[m, u_l] for each row m."""
    n = len(T)
    m = T[0].shape[0]
    rest = int(np.prod(F.shape[1:])) if n > 1 else 1
    chunk = max(1, int(4_000_000 // max(rest, 1)))
    out = np.empty(m, dtype=np.result_type(F, *T))
    for a in range(0, m, chunk):
        sl = slice(a, a + chunk)
        R = np.tensordot(T[0][sl], F, axes=(1, 0))
        for l in range(1, n):
            R = np.einsum("mk...,mk->m...", R, T[l][sl])
        out[sl] = R
    return out


@dataclass
class _PieceNodes:
    """Scaled rules and kernel samples of one piece for one node-count tuple."""

    u: list[np.ndarray]
    raw: np.ndarray  # piece values times weights and Jacobian, on the chosen orthant grid
    signed: bool


def _sample(piece: KernelPiece, counts: tuple[int, ...], signed: bool) -> _PieceNodes:
    us, ws = zip(*[_axis(N, signed) for N in counts])
    scale = 2.0 ** (-np.asarray(piece.j, float))
    Y = np.stack(np.meshgrid(*[u * s for u, s in zip(us, scale)], indexing="ij"), axis=-1)
    # the piece is K times prod theta(2^j_l |y_l|) = prod theta(|u_l|), folded into ws
    raw = piece.kernel(Y) * float(np.prod(scale))
    for l, w in enumerate(ws):
        shape = [1] * len(counts)
        shape[l] = -1
        raw = raw * w.reshape(shape)
    return _PieceNodes(us, raw, signed)


def _moment_transform(nodes: _PieceNodes, S: np.ndarray, alpha, parities) -> np.ndarray:
    """int y^alpha K_j(y) exp(-i xi.y) dy for rows of scaled frequencies S."""
    n = S.shape[1]
    F = nodes.raw
    for l, a in enumerate(alpha):
        if a:
            shape = [1] * n
            shape[l] = -1
            F = F * nodes.u[l].reshape(shape) ** a
    if nodes.signed:
        T = [np.exp(-1j * np.outer(S[:, l], nodes.u[l])) for l in range(n)]
        return _contract(F, T).astype(complex)
    T = []
    coef = 1.0 + 0j
    for l in range(n):
        arg = np.outer(S[:, l], nodes.u[l])
        if parities[l]:
            T.append(np.sin(arg))
            coef *= -2j
        else:
            T.append(np.cos(arg))
            coef *= 2.0
    return coef * _contract(F, T)


def _scaled(piece: KernelPiece, xi: np.ndarray) -> np.ndarray:
    return xi * 2.0 ** (-np.asarray(piece.j, float))


def _alpha_scale(piece: KernelPiece, alpha) -> float:
    return float(np.prod(2.0 ** (-np.asarray(piece.j, float) * np.asarray(alpha, float))))


def piece_fourier_transform(piece: KernelPiece, xi, quad_order: int | None = None,
                            alpha: Sequence[int] | None = None, method: str = "auto"):
    """Transform of y^alpha K_j(y) at one frequency or at each row of ``xi``.

    ``quad_order`` is the node count per axis; when omitted it is chosen per
    frequency. A requested order with fewer than 8 nodes per period raises
    UnderResolvedError. ``method="parity"`` integrates over the positive
    orthant against sines and cosines (odd kernels only); ``"general"`` uses
    all 2^n orthant boxes and complex exponentials.
    """
    K = piece.kernel
    n = K.n
    xi_arr = np.atleast_2d(np.asarray(xi, dtype=float))
    if xi_arr.shape[1] != n:
        raise ValueError("xi must have nvars components")
    alpha = tuple(int(a) for a in (alpha if alpha is not None else (0,) * n))
    parities = _parities(K, alpha)
    if method == "parity" and parities is None:
        raise ValueError("parity method needs a kernel odd in every variable")
    if method not in ("auto", "parity", "general"):
        raise ValueError(f"unknown method {method!r}")
    signed = method == "general" or parities is None
    S = _scaled(piece, xi_arr)
    if quad_order is not None:
        need = max(required_nodes(s) for s in S.ravel())
        if quad_order < need:
            raise UnderResolvedError(
                f"quad_order {quad_order} gives fewer than {MIN_POINTS_PER_PERIOD} nodes per period; "
                f"need at least {need}")
    out = np.zeros(len(S), dtype=complex)
    if not piece.is_zero:
        groups: dict[tuple[int, ...], list[int]] = {}
        for r, srow in enumerate(S):
            key = (quad_order,) * n if quad_order is not None else tuple(auto_nodes(s) for s in srow)
            groups.setdefault(key, []).append(r)
        for key, rows in groups.items():
            nodes = _sample(piece, key, signed)
            out[rows] = _moment_transform(nodes, S[rows], alpha, parities)
        out *= _alpha_scale(piece, alpha)
    if np.ndim(xi) == 1:
        return complex(out[0])
    return out


# decay of single pieces ------------------------------------------------------

def decay_grid(piece: KernelPiece, per_decade: int = 8, s_lo: float = 1e-3, s_hi: float = 1e3,
               transverse: Sequence[float] = (0.5, 2.0)) -> np.ndarray:
    """Frequencies along each axis with 2^-j_l |xi_l| log-spaced in [s_lo, s_hi].

    The other scaled coordinates take the ``transverse`` values (there the
    transform of an odd piece would vanish at 0).
    """
    n = piece.kernel.n
    s = np.geomspace(s_lo, s_hi, int(round(per_decade * math.log10(s_hi / s_lo))) + 1)
    scale = 2.0 ** np.asarray(piece.j, float)
    rows = []
    for l in range(n):
        others = [transverse] * (n - 1)
        for t in product(*others):
            for v in s:
                row = list(t)
                row.insert(l, v)
                rows.append(row)
    return np.asarray(rows) * scale


def _envelope_slope(s: np.ndarray, a: np.ndarray, lo: float, hi: float, floor: float) -> float:
    """Negative log-log slope of the running-sup envelope of a on [lo, hi]."""
    order = np.argsort(s)
    s, a = s[order], a[order]
    env = np.maximum.accumulate(a[::-1])[::-1]
    m = (s >= lo) & (s <= hi) & (env > floor)
    if m.sum() < 3:
        return float("nan")
    return float(-np.polyfit(np.log(s[m]), np.log(env[m]), 1)[0])


def verify_fourier_decay(piece: KernelPiece, xi_grid=None, fit_range=(1.0, 64.0),
                         floor_rel: float = 1e-10) -> dict:
    """Measured small- and high-frequency constants of one piece.

    ``C_small`` is the sup of |K_j^(xi)| / (2^-j_l |xi_l|) over grid points
    with 2^-j_l |xi_l| <= 1, maximized over l. ``rho_fit`` is the smallest
    over l of the decay exponent of the running-sup envelope of |K_j^| against
    2^-j_l |xi_l| on ``fit_range``.
    """
    xi = decay_grid(piece) if xi_grid is None else np.atleast_2d(np.asarray(xi_grid, float))
    vals = np.abs(piece_fourier_transform(piece, xi))
    S = np.abs(_scaled(piece, xi))
    floor = floor_rel * max(float(vals.max()), 1e-300)
    c_small = 0.0
    rhos = []
    for l in range(piece.kernel.n):
        low = (S[:, l] <= 1.0) & (S[:, l] > 0)
        if low.any():
            c_small = max(c_small, float(np.max(vals[low] / S[low, l])))
        # the decay is measured along lines where the other coordinates stay O(1)
        others = np.delete(S, l, axis=1)
        line = np.all(others <= 4.0, axis=1) if others.size else np.ones(len(S), bool)
        if line.any():
            rhos.append(_envelope_slope(S[line, l], vals[line], *fit_range, floor))
    rhos = [r for r in rhos if np.isfinite(r)]
    return {
        "j": list(piece.j),
        "C_small": c_small,
        "rho_fit": float(min(rhos)) if rhos else float("nan"),
        "n_points": int(len(xi)),
        "fit_range": list(fit_range),
    }


# truncated kernels -------------------------------------------------------------

def multiplier_xi_grid(n: int, L_max: int, per_octave: int = 4, n_random: int = 4,
                       seed: int = 0) -> np.ndarray:
    """Log-spaced radii 1 .. 2^(L_max+2) along diagonal and random directions.

    Only half of the directions are needed: |K^(-xi)| = |K^(xi)| for real K.
    """
    radii = 2.0 ** (np.arange(per_octave * (L_max + 2) + 1) / per_octave)
    dirs = [np.r_[1.0, s] / math.sqrt(n) for s in product([1.0, -1.0], repeat=n - 1)]
    if n_random:
        g = np.random.default_rng(seed).normal(size=(n_random, n))
        g[:, 0] = np.abs(g[:, 0])
        dirs += list(g / np.linalg.norm(g, axis=1, keepdims=True))
    return np.concatenate([np.outer(radii, d) for d in dirs])


@dataclass
class MultiplierResult:
    L_list: list[int]
    sups: dict
    argmax: dict
    value_at_zero: dict
    skipped_pairs: int
    evaluated_pairs: int
    s_cap: float
    n_xi: int
    alphas: list = field(default_factory=list)


def _truncated_transforms(K: Kernel, L_list: Sequence[int], xi: np.ndarray, alphas, s_cap: float):
    """Values of xi^alpha d^alpha K_L^(xi) for every L and alpha, summed piece by piece."""
    L_list = sorted(int(L) for L in L_list)
    n = K.n
    sums = {(L, a): np.zeros(len(xi), dtype=complex) for L in L_list for a in alphas}
    skipped = evaluated = 0
    pars = {a: _parities(K, a) for a in alphas}
    signed = any(p is None for p in pars.values())
    for j in piece_indices(K, max(L_list)):
        piece = dyadic_piece(K, j)
        S = _scaled(piece, xi)
        ok = np.max(np.abs(S), axis=1) <= s_cap
        skipped += int((~ok).sum())
        evaluated += int(ok.sum())
        if not ok.any():
            continue
        rows_all = np.nonzero(ok)[0]
        keys = [tuple(auto_nodes(s, fine=False) for s in S[r]) for r in rows_all]
        groups: dict[tuple[int, ...], list[int]] = {}
        for r, key in zip(rows_all, keys):
            groups.setdefault(key, []).append(r)
        vals = {a: np.zeros(len(xi), dtype=complex) for a in alphas}
        for key, rows in groups.items():
            nodes = _sample(piece, key, signed)
            for a in alphas:
                t = _moment_transform(nodes, S[rows], a, pars[a])
                # xi^a d^a K^ = (-i)^|a| xi^a (transform of y^a K)
                vals[a][rows] = (-1j) ** sum(a) * np.prod(S[rows] ** np.asarray(a), axis=1) * t
        for L in L_list:
            if max(j) < L:
                for a in alphas:
                    sums[(L, a)] += vals[a]
    return L_list, sums, skipped, evaluated


def multiplier_sup_bound(K: Kernel, L_list: Sequence[int], xi_grid=None, s_cap: float = DEFAULT_S_CAP,
                         per_octave: int = 4, n_random: int = 4, seed: int = 0,
                         alphas: Sequence[Sequence[int]] | None = None) -> MultiplierResult:
    """sup over the grid of |xi^alpha d^alpha K_L^(xi)| for each L (alpha = 0 by default).

    Pairs (piece, xi) with some 2^-j_l |xi_l| above ``s_cap`` are skipped:
    there the piece transform is below roundoff of the sum. The number of
    skipped pairs is reported.
    """
    n = K.n
    xi = (multiplier_xi_grid(n, max(L_list), per_octave, n_random, seed)
          if xi_grid is None else np.atleast_2d(np.asarray(xi_grid, float)))
    alphas = [tuple(int(v) for v in a) for a in (alphas or [(0,) * n])]
    Ls, sums, skipped, evaluated = _truncated_transforms(K, L_list, np.vstack([xi, np.zeros(n)]),
                                                         alphas, s_cap)
    sups, argmax, v0 = {}, {}, {}
    for L in Ls:
        for a in alphas:
            key = str(L) if len(alphas) == 1 else f"{L}:{','.join(map(str, a))}"
            mag = np.abs(sums[(L, a)][:-1])
            k = int(np.argmax(mag)) if len(mag) else 0
            sups[key] = float(mag[k]) if len(mag) else 0.0
            argmax[key] = [float(v) for v in xi[k]] if len(mag) else []
            v0[key] = complex(sums[(L, a)][-1])
    return MultiplierResult(Ls, sups, argmax, v0, skipped, evaluated, s_cap, len(xi),
                            [list(a) for a in alphas])


def marcinkiewicz_check(K: Kernel, L: int, alpha: Sequence[int], xi_grid=None,
                        s_cap: float = DEFAULT_S_CAP, per_octave: int = 4, n_random: int = 4,
                        seed: int = 0) -> float:
    """sup over the grid of |xi^alpha d^alpha K_L^(xi)|."""
    alpha = tuple(int(a) for a in alpha)
    if sum(alpha) > K.n:
        raise ValueError("|alpha| must not exceed nvars")
    r = multiplier_sup_bound(K, [L], xi_grid, s_cap, per_octave, n_random, seed, [alpha])
    return next(iter(r.sups.values()))
