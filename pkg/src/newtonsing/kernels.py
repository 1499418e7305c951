"""Odd singular kernels |b|^(-delta0), their dyadic pieces and truncations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Callable, Sequence

import numpy as np

from .newton import NewtonPolyhedron, b_star_eval, critical_exponent, newton_polyhedron
from .poly import MultiPoly, evaluate
from .quadrature import panel_rule, shell_edges, symmetric

TestFunction = Callable[[np.ndarray], np.ndarray]


# smooth profiles ---------------------------------------------------------

def _expneg(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t)
    m = t > 0
    out[m] = np.exp(-1.0 / t[m])
    return out


def smooth_step(t) -> np.ndarray:
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    a = _expneg(t)
    return a / (a + _expneg(1.0 - t))


def psi(t) -> np.ndarray:
    """Equal to 1 on [0, 1] and 0 on [2, inf)."""
    return 1.0 - smooth_step(np.asarray(t, dtype=float) - 1.0)


def theta(t) -> np.ndarray:
    """Dyadic profile psi(t) - psi(2t); supported in [1/2, 2], sums to 1 over 2^k t."""
    t = np.asarray(t, dtype=float)
    return psi(t) - psi(2.0 * t)


def plateau_cutoff(u, R: float) -> np.ndarray:
    """Bump in u = |x|^2: 1 on [0, R^2/4], 0 on [R^2, inf)."""
    u = np.asarray(u, dtype=float)
    v = np.atleast_1d(u)
    lo = R * R / 4.0
    out = (v <= lo).astype(float)
    m = (v > lo) & (v < R * R)
    out[m] = 1.0 - smooth_step((v[m] - lo) / (R * R - lo))
    return out.reshape(u.shape)[()]


# kernels -----------------------------------------------------------------

@dataclass(frozen=True)
class Kernel:
    """K(x) = prod sgn(x_l) * cutoff(|x - shift|^2) * |b(x)|^(-delta0).

    With ``sign_mode="folded"`` (default) b is evaluated at (|x_1|, ..., |x_n|),
    which makes K odd in every variable for any b. ``"literal"`` uses b(x)
    directly; the two agree when b is even in each variable. ``"unsigned"``
    drops the sign factor and ``cutoff_shift`` moves the bump off the origin;
    both exist only as negative controls with broken cancellation.
    """

    b: MultiPoly
    np: NewtonPolyhedron
    delta0: Fraction
    R: float = 0.5
    sign_mode: str = "folded"
    cutoff_shift: tuple[float, ...] | None = None

    @property
    def n(self) -> int:
        return self.b.nvars

    @property
    def is_odd(self) -> bool:
        if self.cutoff_shift is not None and any(self.cutoff_shift):
            return False
        if self.sign_mode == "folded":
            return True
        if self.sign_mode == "unsigned":
            return False
        return all(all(e % 2 == 0 for e in exp) for exp, _ in self.b.terms)

    def extent(self) -> np.ndarray:
        """Per-axis bound on |x_l| over the support."""
        shift = np.abs(np.asarray(self.cutoff_shift or (0.0,) * self.n, dtype=float))
        return self.R + shift

    def j_min(self) -> tuple[int, ...]:
        """Smallest dyadic index per axis whose shell meets the support."""
        return tuple(int(math.floor(-math.log2(e) - 1.0)) + 1 for e in self.extent())

    def abs_b(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        xe = x if self.sign_mode == "literal" else np.abs(x)
        return np.abs(evaluate(self.b, xe))

    def envelope(self, x: np.ndarray) -> np.ndarray:
        """cutoff * |b|^(-delta0) without the sign; 0 where b = 0."""
        x = np.asarray(x, dtype=float)
        c = (0.0,) * self.n if self.cutoff_shift is None else self.cutoff_shift
        # per-axis loops: reductions over a short last axis are slow in numpy
        r2 = sum((x[..., l] - c[l]) ** 2 for l in range(self.n))
        chi = plateau_cutoff(r2, self.R)
        bv = self.abs_b(x)
        out = np.zeros_like(bv)
        m = (bv > 0) & (chi > 0)
        out[m] = chi[m] * bv[m] ** (-float(self.delta0))
        return out

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.sign_mode == "unsigned":
            return self.envelope(x)
        sgn = np.sign(x[..., 0])
        for l in range(1, self.n):
            sgn = sgn * np.sign(x[..., l])
        return sgn * self.envelope(x)


def example_kernel(b: MultiPoly, R: float = 0.5, sign_mode: str = "folded",
                   cutoff_shift: Sequence[float] | None = None) -> Kernel:
    if b.is_zero():
        raise ValueError("b is identically zero")
    if any(all(e == 0 for e in exp) for exp, _ in b.terms):
        raise ValueError("b(0) must be 0")
    if R <= 0:
        raise ValueError("R must be positive")
    if sign_mode not in ("folded", "literal", "unsigned"):
        raise ValueError(f"unknown sign_mode {sign_mode!r}")
    np_ = newton_polyhedron(b)
    shift = tuple(float(v) for v in cutoff_shift) if cutoff_shift is not None else None
    return Kernel(b, np_, critical_exponent(np_), float(R), sign_mode, shift)


@dataclass
class KernelPiece:
    """K(y) * prod_l theta(2^j_l |y_l|), living on |y_l| in [2^(-j_l-1), 2^(-j_l+1)].

    ``C1`` is the ratio of the outer to the inner shell radius.
    """

    kernel: Kernel
    j: tuple[int, ...]
    C1: float = 4.0
    measured_bounds: dict | None = None

    @property
    def lower(self) -> np.ndarray:
        return 2.0 ** (-np.asarray(self.j, float) - 1)

    @property
    def upper(self) -> np.ndarray:
        return 2.0 ** (-np.asarray(self.j, float) + 1)

    @property
    def is_zero(self) -> bool:
        """True when the shell box misses the support of the cutoff."""
        K = self.kernel
        c = np.abs(np.asarray(K.cutoff_shift or (0.0,) * K.n, float))
        lo, hi = self.lower, self.upper
        gap = np.where(c < lo, lo - c, np.where(c > hi, c - hi, 0.0))
        return float(np.sqrt(np.sum(gap**2))) >= K.R

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.is_zero:
            return np.zeros(y.shape[:-1])
        prof = np.ones(y.shape[:-1])
        for l, jl in enumerate(self.j):
            prof = prof * theta(2.0**jl * np.abs(y[..., l]))
        out = np.zeros_like(prof)
        m = prof != 0
        out[m] = prof[m] * self.kernel(y[m])
        return out


def dyadic_piece(K: Kernel, j: Sequence[int]) -> KernelPiece:
    j = tuple(int(v) for v in j)
    if len(j) != K.n:
        raise ValueError("index length must equal nvars")
    return KernelPiece(K, j)


def piece_indices(K: Kernel, L: int) -> list[tuple[int, ...]]:
    """All nonzero piece indices with j_min <= j_l < L, ordered by max j then lex."""
    ranges = [range(jm, L) for jm in K.j_min()]
    idx = [j for j in product(*ranges) if not dyadic_piece(K, j).is_zero]
    return sorted(idx, key=lambda j: (max(j), j))


@dataclass
class TruncatedKernel:
    """K_L: the sum of pieces with every j_l < L."""

    kernel: Kernel
    L: int
    pieces: list[tuple[int, ...]] = field(init=False)

    def __post_init__(self):
        self.pieces = piece_indices(self.kernel, self.L)

    def __call__(self, y) -> np.ndarray:
        """Closed form K(y) * prod_l (1 - psi(2^L |y_l|)) of the telescoped sum."""
        y = np.asarray(y, dtype=float)
        if not self.pieces:
            return np.zeros(y.shape[:-1])
        w = np.ones(y.shape[:-1])
        for l in range(self.kernel.n):
            w = w * (1.0 - psi(2.0**self.L * np.abs(y[..., l])))
        out = np.zeros_like(w)
        m = w != 0
        out[m] = w[m] * self.kernel(y[m])
        return out

    def sum_of_pieces(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape[:-1])
        for j in self.pieces:
            out = out + dyadic_piece(self.kernel, j)(y)
        return out


# bounds and cancellation --------------------------------------------------

_CENTRAL = {
    0: {0: 1.0},
    1: {-1: -0.5, 1: 0.5},
    2: {-1: 1.0, 0: -2.0, 1: 1.0},
    3: {-2: -0.5, -1: 1.0, 1: -1.0, 2: 0.5},
    4: {-2: 1.0, -1: -4.0, 0: 6.0, 1: -4.0, 2: 1.0},
}


def finite_difference(f: Callable, y: np.ndarray, alpha: Sequence[int], h: np.ndarray) -> np.ndarray:
    """Tensor central difference for d^alpha f at points y with per-point steps h."""
    stencils = [sorted(_CENTRAL[a].items()) for a in alpha]
    out = np.zeros(y.shape[:-1])
    for combo in product(*stencils):
        shift = np.array([k for k, _ in combo], float)
        coef = math.prod(c for _, c in combo)
        out = out + coef * f(y + shift * h)
    return out / np.prod(h ** np.asarray(alpha, float), axis=-1)


def _shell_grid(piece: KernelPiece, density: int, orthants: bool) -> np.ndarray:
    u = 2.0 ** (np.arange(-density, density + 1) / density)
    axes = [u * 2.0 ** (-jl) for jl in piece.j]
    g = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    if orthants:
        g = np.concatenate([g * np.array(s) for s in product([1.0, -1.0], repeat=len(axes))])
    return g


def verify_piece_bounds(piece: KernelPiece, grid_density: int = 32, rel_step: float = 1e-3,
                        max_points: int = 20000, seed: int = 0) -> dict:
    """Grid sups of the size, first-derivative and higher-derivative bounds.

    Returns ``size_bound`` = sup |piece| |b|^delta0, ``gradient_bound`` = max_l sup
    |d_l piece| |y_l| |b|^(1+delta0) / b*, and ``derivative_bound`` = sup over
    |alpha| <= n+1 of |d^alpha piece| prod |y_l|^alpha_l (b*)^delta0.
    Derivatives use central differences with steps rel_step * |y_l|.
    Grid points where b vanishes are skipped.
    """
    if grid_density < 32:
        raise ValueError("grid_density must be at least 32 points per dyadic length")
    K = piece.kernel
    n = K.n
    y = _shell_grid(piece, grid_density, orthants=not K.is_odd)
    if len(y) > max_points:
        y = y[np.sort(np.random.default_rng(seed).choice(len(y), max_points, replace=False))]
    bv = K.abs_b(y)
    y = y[bv > 0]
    bv = bv[bv > 0]
    d0 = float(K.delta0)
    bstar = b_star_eval(K.np, y)
    h = rel_step * np.abs(y)
    ay = np.abs(y)

    c_size = float(np.max(np.abs(piece(y)) * bv**d0)) if len(y) else 0.0
    c_grad = 0.0
    c_deriv = 0.0
    per_alpha = {}
    for order in range(n + 2):
        for alpha in product(range(order + 1), repeat=n):
            if sum(alpha) != order:
                continue
            der = finite_difference(piece, y, alpha, h)
            val = float(np.max(np.abs(der) * np.prod(ay ** np.asarray(alpha, float), axis=1) * bstar**d0))
            per_alpha["".join(map(str, alpha))] = val
            c_deriv = max(c_deriv, val)
            if order == 1:
                l = alpha.index(1)
                c_grad = max(c_grad, float(np.max(np.abs(der) * ay[:, l] * bv ** (1 + d0) / bstar)))
    bounds = {"size_bound": c_size, "gradient_bound": c_grad, "derivative_bound": c_deriv, "per_alpha": per_alpha,
              "grid_density": grid_density, "points": int(len(y))}
    piece.measured_bounds = bounds
    return bounds


def _axis_rule(piece: KernelPiece, axis: int, q: int, panels: int = 2):
    """Mirrored composite rule covering both signs of the piece's shell on one axis."""
    u, w = panel_rule(shell_edges(panels), q)
    s = 2.0 ** (-piece.j[axis])
    return symmetric(u * s, w * s)


def verify_cancellation(piece: KernelPiece, axis: int, quad_order: int = 16,
                        n_transverse: int = 32, seed: int = 0, relative: bool = False) -> float:
    """Max over sampled transverse points of |integral of piece along ``axis``|.

    ``axis`` is 1-based. With ``relative`` the residual is divided by the
    integral of |piece| along the same lines.
    """
    if quad_order < 16:
        raise ValueError("quad_order must be at least 16")
    n = piece.kernel.n
    k = axis - 1
    rng = np.random.default_rng(seed)
    lo, hi = piece.lower, piece.upper
    trans = np.exp(rng.uniform(np.log(lo), np.log(hi), size=(n_transverse, n)))
    trans *= rng.choice([-1.0, 1.0], size=trans.shape)
    t, w = _axis_rule(piece, k, quad_order)
    pts = np.repeat(trans[:, None, :], len(t), axis=1)
    pts[:, :, k] = t
    vals = piece(pts)
    m = len(t) // 2
    # pair node -y with node y before summing
    paired = (vals[:, :m][:, ::-1] + vals[:, m:]) * w[m:]
    res = np.abs(paired.sum(axis=1))
    if relative:
        scale = np.abs(vals) @ w
        res = res / np.where(scale > 0, scale, 1.0)
    return float(res.max())


# distribution pairing ----------------------------------------------------

def mixed_difference(phi: TestFunction, y, order: Sequence[int] | None = None) -> np.ndarray:
    """Sum over subsets S of (-1)^(n-|S|) phi(y_S), y_S zeroing coordinates outside S.

    With ``order`` (1-based axes) the same quantity is built by peeling one
    variable at a time, phi -> phi - phi|_{y_l = 0}, in that order.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[-1]
    if order is None:
        out = np.zeros(y.shape[:-1])
        for mask in product([0, 1], repeat=n):
            ys = y * np.asarray(mask, float)
            out = out + (-1) ** (n - sum(mask)) * phi(ys)
        return out
    if sorted(order) != list(range(1, n + 1)):
        raise ValueError("order must be a permutation of 1..n")

    def peel(z, axes):
        if not axes:
            return phi(z)
        z0 = z.copy()
        z0[..., axes[0] - 1] = 0.0
        return peel(z, axes[1:]) - peel(z0, axes[1:])

    return peel(y, list(order))


class PairingDivergence(RuntimeError):
    def __init__(self, message: str, partial_sums: list[float]):
        super().__init__(message)
        self.partial_sums = partial_sums


def _piece_integral(piece: KernelPiece, phi: TestFunction, order, q: int) -> tuple[float, float]:
    K = piece.kernel
    if np.linalg.norm(piece.upper) > K.R / 2 or not K.is_odd:
        q = 2 * q  # the cutoff's transition crosses this piece
    rules = [_axis_rule(piece, l, q, panels=1) for l in range(piece.kernel.n)]
    nodes = np.stack(np.meshgrid(*[r[0] for r in rules], indexing="ij"), axis=-1)
    weights = np.ones(nodes.shape[:-1])
    for l, (_, w) in enumerate(rules):
        shape = [1] * len(rules)
        shape[l] = -1
        weights = weights * w.reshape(shape)
    vals = piece(nodes) * mixed_difference(phi, nodes, order)
    return float(np.sum(vals * weights)), float(np.sum(np.abs(vals) * weights))


def pair_with_test_function(K: Kernel, phi: TestFunction, quad_budget: int = 60,
                            order: Sequence[int] | None = None, rtol: float = 1e-12,
                            q: int = 12, return_shells: bool = False):
    """Sum over pieces of the integral of piece * (mixed difference of phi).

    Pieces are visited shell by shell in increasing max j_l. The sum stops
    once two consecutive shells contribute less than ``rtol`` times the
    running absolute sum; ``quad_budget`` caps the largest index visited.
    """
    jmin = K.j_min()
    total = 0.0
    abs_total = 0.0
    partial = []
    shells = []
    quiet = 0
    for M in range(max(jmin), quad_budget + 1):
        ranges = [range(jm, M + 1) for jm in jmin]
        s_val = s_abs = 0.0
        for j in product(*ranges):
            if max(j) != M:
                continue
            piece = dyadic_piece(K, j)
            if piece.is_zero:
                continue
            v, a = _piece_integral(piece, phi, order, q)
            s_val += v
            s_abs += a
        total += s_val
        abs_total += s_abs
        partial.append(total)
        shells.append((M, s_val, s_abs))
        if abs_total > 0 and s_abs < rtol * abs_total:
            quiet += 1
            if quiet >= 2:
                return (total, shells) if return_shells else total
        elif abs_total == 0 and M >= max(jmin) + 2:
            return (0.0, shells) if return_shells else 0.0
        else:
            quiet = 0
    raise PairingDivergence(
        f"pairing did not converge by j = {quad_budget}; last partial sums {partial[-3:]}",
        partial,
    )


def truncated_integral(K: Kernel, L: int, phi: TestFunction, q: int = 8,
                       per_octave: int = 2) -> float:
    """Direct quadrature of the integral of K_L * phi, orthant by orthant.

    Independent of the piece decomposition: each axis is covered by
    geometric panels from 2^(-L-1) to the support extent.
    """
    from .quadrature import log_panels

    TK = TruncatedKernel(K, L)
    if not TK.pieces:
        return 0.0
    ext = K.extent()
    rules = []
    for l in range(K.n):
        edges = log_panels(2.0 ** (-L - 1), float(ext[l]), per_octave)
        t, w = panel_rule(edges, q)
        rules.append(symmetric(t, w))
    nodes = np.stack(np.meshgrid(*[r[0] for r in rules], indexing="ij"), axis=-1)
    weights = np.ones(nodes.shape[:-1])
    for l, (_, w) in enumerate(rules):
        shape = [1] * K.n
        shape[l] = -1
        weights = weights * w.reshape(shape)
    return float(np.sum(TK(nodes) * phi(nodes) * weights))


def gaussian(center: Sequence[float], width: float) -> TestFunction:
    c = np.asarray(center, float)

    def phi(y):
        return np.exp(-np.sum((np.asarray(y) - c) ** 2, axis=-1) / (2 * width**2))

    return phi
