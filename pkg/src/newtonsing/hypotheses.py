"""Numerical screen for zeros of face polynomials away from the coordinate axes.

For every compact face F of N(b) we look for zeros of b_F on
(R minus 0)^n and estimate their order. A face passes when every zero found
has order below the Newton distance d(b). This is a screen, not a proof: a
pass only means no counterexample turned up at the given budget.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from itertools import product

import numpy as np

from .newton import (
    Face,
    NewtonPolyhedron,
    compact_faces,
    face_polynomial,
    newton_distance,
    newton_polyhedron,
)
from .poly import MultiPoly, derivative, evaluate, partial_derivative

ZERO_TOL = 1e-10
DERIV_TOL = 1e-6
COORD_FLOOR = 1e-3
NEWTON_ITERS = 120
MAX_REPORTED_ZEROS = 20


@dataclass
class FaceRecord:
    face_id: int
    vertices: list[list[int]]
    dim: int
    zeros_found: list[list[float]]
    n_zeros: int
    zeros_per_orthant: list[int]
    max_order_estimate: int
    passed: bool
    unresolved_starts: int


@dataclass
class HypothesisReport:
    poly: str
    newton_distance: str
    faces: list[FaceRecord]
    nonvanishing: bool
    line_zero_bound: list[int]
    budget_exhausted: bool
    samples: int
    seed: int
    settings: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(f.passed for f in self.faces)

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["passed"] = self.passed
        return doc


def _face_weight(face: Face, n: int) -> np.ndarray:
    w = np.zeros(n)
    for normal, _ in face.equations:
        w += np.asarray(normal, float)
    return w


def _normalize(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Slide points along the quasi-homogeneous orbit so that max |x_i| = 1."""
    ax = np.abs(x)
    with np.errstate(divide="ignore"):
        logt = np.min(-np.log(ax) / w, axis=-1, keepdims=True)
    return x * np.exp(logt * w)


def _shell_starts(rng: np.random.Generator, count: int, n: int) -> np.ndarray:
    """Points in the positive orthant with max coordinate uniform in [1/2, 1]."""
    x = rng.uniform(0.02, 1.0, size=(count, n))
    top = rng.uniform(0.5, 1.0, size=(count, 1))
    return x / x.max(axis=1, keepdims=True) * top


class _FaceSearch:
    def __init__(self, bF: MultiPoly, w: np.ndarray, floor: float, zero_tol: float):
        self.bF = bF
        self.grad = [partial_derivative(bF, k + 1) for k in range(bF.nvars)]
        self.w = w
        self.floor = floor
        self.zero_tol = zero_tol

    def newton(self, x: np.ndarray, iters: int):
        """Minimum-norm Newton steps for b_F = 0, renormalized to the shell."""
        x = _normalize(x, self.w)
        alive = np.ones(len(x), bool)
        progressing = np.zeros(len(x), bool)
        fprev = np.abs(evaluate(self.bF, x))
        for _ in range(iters):
            f = evaluate(self.bF, x)
            g = np.stack([evaluate(q, x) for q in self.grad], axis=-1)
            gg = np.sum(g * g, axis=-1)
            ok = alive & (gg > 0) & (np.abs(f) >= self.zero_tol * 1e-6)
            step = np.zeros_like(x)
            step[ok] = (f[ok] / gg[ok])[:, None] * g[ok]
            # keep each move within a quarter of the shell size
            big = np.max(np.abs(step), axis=1) > 0.25
            step[big] *= (0.25 / np.max(np.abs(step[big]), axis=1))[:, None]
            x = x - step
            escaped = np.any(np.abs(x) < self.floor * 1e-2, axis=1)
            alive &= ~escaped
            x[escaped] = 1.0
            x = _normalize(x, self.w)
            fcur = np.abs(evaluate(self.bF, x))
            progressing = fcur < 0.9 * fprev
            fprev = fcur
        f = np.abs(evaluate(self.bF, x))
        converged = alive & (f < self.zero_tol)
        unresolved = alive & ~converged & progressing
        return x, converged, unresolved

    def bisect_lines(self, rng: np.random.Generator, orthants: np.ndarray, count: int):
        """Sign-change bisection along random segments, mirrored into each orthant."""
        n = self.bF.nvars
        a0 = _shell_starts(rng, count, n)
        b0 = _shell_starts(rng, count, n)
        a = np.concatenate([a0 * s for s in orthants])
        b = np.concatenate([b0 * s for s in orthants])
        ts = np.linspace(0.0, 1.0, 33)
        pts = a[:, None, :] + ts[None, :, None] * (b - a)[:, None, :]
        vals = evaluate(self.bF, pts)
        change = np.signbit(vals[:, :-1]) != np.signbit(vals[:, 1:])
        rows, cols = np.nonzero(change)
        if rows.size == 0:
            return np.empty((0, n))
        lo = pts[rows, cols].copy()
        hi = pts[rows, cols + 1].copy()
        flo = evaluate(self.bF, lo)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            fm = evaluate(self.bF, mid)
            same = np.signbit(fm) == np.signbit(flo)
            lo[same] = mid[same]
            flo[same] = fm[same]
            hi[~same] = mid[~same]
        return 0.5 * (lo + hi)


def _order_polys(bF: MultiPoly, kmax: int) -> list[list[MultiPoly]]:
    n = bF.nvars
    levels = []
    for k in range(kmax + 1):
        level = []
        for gamma in product(range(k + 1), repeat=n):
            if sum(gamma) == k:
                q = derivative(bF, gamma)
                if not q.is_zero():
                    level.append(q)
        levels.append(level)
    return levels


def _zero_orders(levels, z: np.ndarray, tol: float) -> np.ndarray:
    """Smallest |gamma| with |d^gamma b_F(z)| > tol; len(levels) if none."""
    order = np.full(len(z), len(levels))
    for k in reversed(range(len(levels))):
        hit = np.zeros(len(z), bool)
        for q in levels[k]:
            hit |= np.abs(evaluate(q, z)) > tol
        order[hit] = k
    return order


def _dedupe(z: np.ndarray) -> np.ndarray:
    if len(z) == 0:
        return z
    keys = np.round(z, 5)
    _, idx = np.unique(keys, axis=0, return_index=True)
    return z[np.sort(idx)]


def check_face_zero_orders(
    p: MultiPoly,
    np_: NewtonPolyhedron | None = None,
    samples: int = 1000,
    seed: int = 0,
    zero_tol: float = ZERO_TOL,
    deriv_tol: float = DERIV_TOL,
    coord_floor: float = COORD_FLOOR,
) -> HypothesisReport:
    """Multi-start zero search for each compact face polynomial of ``p``.

    ``samples`` starts per face are split evenly over the 2^n sign orthants;
    the same positive-orthant points are reflected into every orthant.
    """
    if samples < 1000:
        raise ValueError("samples must be at least 1000")
    np_ = np_ if np_ is not None else newton_polyhedron(p)
    n = p.nvars
    d = newton_distance(np_)
    kmax = math.ceil(d)
    orthants = np.array(list(product([1.0, -1.0], repeat=n)))
    per = max(1, samples // len(orthants))
    records = []
    any_exhausted = False
    for fid, face in enumerate(compact_faces(np_)):
        bF = face_polynomial(p, face, np_)
        rec = FaceRecord(fid, [list(v) for v in face.member_vertices], face.dim, [], 0,
                         [0] * len(orthants), 0, True, 0)
        records.append(rec)
        if len(bF.terms) == 1:
            continue  # a monomial has no zeros off the axes
        search = _FaceSearch(bF, _face_weight(face, n), coord_floor, zero_tol)
        rng = np.random.default_rng([seed, fid])
        base = _shell_starts(rng, per, n)
        line_rng_seed = [seed, fid, 1]
        levels = _order_polys(bF, kmax)
        unresolved = 0
        x, conv, unres = search.newton(np.concatenate([base * s for s in orthants]), NEWTON_ITERS)
        unresolved += int(unres.sum())
        cands = [x[conv]]
        lines = search.bisect_lines(np.random.default_rng(line_rng_seed), orthants, max(1, per // 8))
        if len(lines):
            cands.append(search.newton(lines, 20)[0])
        z = _normalize(np.concatenate(cands), search.w)
        z = z[np.all(np.abs(z) > coord_floor, axis=1)]
        z = z[np.abs(evaluate(bF, z)) < zero_tol]
        z = _dedupe(z)
        rec.unresolved_starts = unresolved
        if unresolved > len(orthants) * per // 2:
            any_exhausted = True
        if len(z):
            z = z[np.lexsort(z.T[::-1])]
            orders = _zero_orders(levels, z, deriv_tol)
            for oi, s in enumerate(orthants):
                rec.zeros_per_orthant[oi] = int(np.sum(np.all(np.sign(z) == s, axis=1)))
            rec.n_zeros = len(z)
            rec.zeros_found = [[float(v) for v in row] for row in z[:MAX_REPORTED_ZEROS]]
            rec.max_order_estimate = int(orders.max())
        rec.passed = rec.max_order_estimate < d
    return HypothesisReport(
        poly=str(p),
        newton_distance=f"{d.numerator}/{d.denominator}",
        faces=records,
        nonvanishing=all(r.n_zeros == 0 for r in records),
        line_zero_bound=[derivative_line_zero_bound(p, k) for k in range(1, n + 1)],
        budget_exhausted=any_exhausted,
        samples=samples,
        seed=seed,
        settings={"zero_tol": zero_tol, "deriv_tol": deriv_tol, "coord_floor": coord_floor,
                  "newton_iters": NEWTON_ITERS},
    )


def check_nonvanishing(p: MultiPoly, np_: NewtonPolyhedron | None = None,
                       samples: int = 1000, seed: int = 0) -> bool:
    return check_face_zero_orders(p, np_, samples, seed).nonvanishing


def derivative_line_zero_bound(p: MultiPoly, axis: int) -> int:
    """Degree of the partial derivative in its own variable: bounds its zeros on lines."""
    return partial_derivative(p, axis).degree(axis)
