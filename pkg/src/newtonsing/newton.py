"""Newton polyhedra of polynomials, computed in exact integer arithmetic.

The polyhedron N(b) is the convex hull of the octants ``alpha + R_{>=0}^n``
over the exponents of ``b``. Facets are stored as ``(w, h)`` with integer
primitive ``w >= 0`` meaning the half-space ``w . t >= h``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .poly import MultiPoly

MAX_NVARS = 6

Point = tuple[int, ...]


def pareto_minimal(points: Iterable[Sequence[int]]) -> list[Point]:
    """Points not dominated componentwise by another point, sorted descending."""
    pts = sorted({tuple(int(v) for v in p) for p in points}, reverse=True)
    keep = []
    for p in pts:
        dominated = any(q != p and all(a <= b for a, b in zip(q, p)) for q in pts)
        if not dominated:
            keep.append(p)
    return keep


def _rank(rows: list[list[int]]) -> int:
    """Rank of an integer matrix via fraction-free elimination."""
    m = [list(r) for r in rows if any(r)]
    if not m:
        return 0
    ncols = len(m[0])
    rank = 0
    for col in range(ncols):
        piv = next((i for i in range(rank, len(m)) if m[i][col] != 0), None)
        if piv is None:
            continue
        m[rank], m[piv] = m[piv], m[rank]
        p = m[rank]
        for i in range(rank + 1, len(m)):
            if m[i][col]:
                f = m[i][col]
                m[i] = [p[col] * a - f * b for a, b in zip(m[i], p)]
        rank += 1
        if rank == len(m):
            break
    return rank


def _det(mat: list[list[int]]) -> int:
    """Bareiss determinant of a square integer matrix."""
    n = len(mat)
    if n == 0:
        return 1
    m = [list(r) for r in mat]
    sign = 1
    prev = 1
    for k in range(n - 1):
        if m[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if m[i][k] != 0), None)
            if swap is None:
                return 0
            m[k], m[swap] = m[swap], m[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) // prev
        prev = m[k][k]
    return sign * m[n - 1][n - 1]


def _normal(rows: list[list[int]], n: int) -> tuple[int, ...] | None:
    """Primitive integer vector orthogonal to ``n - 1`` rows (None if rank < n-1)."""
    w = []
    for i in range(n):
        minor = [[r[c] for c in range(n) if c != i] for r in rows]
        w.append((-1) ** i * _det(minor))
    if not any(w):
        return None
    g = 0
    for v in w:
        g = math.gcd(g, v)
    return tuple(v // g for v in w)


def _dot(w, p) -> int:
    return sum(a * b for a, b in zip(w, p))


@dataclass(frozen=True)
class Face:
    """A face of a Newton polyhedron.

    ``active_facets`` holds indices of every facet containing the face, and
    ``equations`` the matching ``(w, h)`` pairs. ``rays`` lists the
    coordinate directions (0-based) in the face's recession cone.
    """

    active_facets: tuple[int, ...]
    equations: tuple[tuple[tuple[int, ...], int], ...]
    member_vertices: tuple[Point, ...]
    rays: tuple[int, ...]
    dim: int

    @property
    def compact(self) -> bool:
        return not self.rays

    def contains(self, exp: Sequence[int]) -> bool:
        return all(_dot(w, exp) == h for w, h in self.equations)


@dataclass(frozen=True)
class NewtonPolyhedron:
    nvars: int
    points: tuple[Point, ...]  # Pareto-minimal exponents
    vertices: tuple[Point, ...]
    facets: tuple[tuple[tuple[int, ...], int], ...]
    faces: tuple[Face, ...] = field(repr=False)

    def facet_fractions(self):
        return [(tuple(Fraction(v) for v in w), Fraction(h)) for w, h in self.facets]


def _facets(points: list[Point], n: int) -> list[tuple[tuple[int, ...], int]]:
    found = {}
    eye = [[1 if i == k else 0 for i in range(n)] for k in range(n)]
    for k in range(1, n + 1):
        for pts in combinations(points, k):
            diffs = [[a - b for a, b in zip(q, pts[0])] for q in pts[1:]]
            for rays in combinations(range(n), n - k):
                w = _normal(diffs + [eye[i] for i in rays], n)
                if w is None:
                    continue
                if all(v <= 0 for v in w):
                    w = tuple(-v for v in w)
                if any(v < 0 for v in w):
                    continue
                h = _dot(w, pts[0])
                if (w, h) in found:
                    continue
                if all(_dot(w, p) >= h for p in points):
                    found[(w, h)] = None
    return sorted(found)


def _make_face(idx: frozenset[int], facets, vertices, n) -> Face | None:
    eqs = [facets[i] for i in sorted(idx)]
    verts = [v for v in vertices if all(_dot(w, v) == h for w, h in eqs)]
    if not verts:
        return None
    rays = [i for i in range(n) if all(w[i] == 0 for w, _ in eqs)]
    closure = tuple(
        k for k, (w, h) in enumerate(facets)
        if all(_dot(w, v) == h for v in verts) and all(w[i] == 0 for i in rays)
    )
    v0 = verts[0]
    rows = [[a - b for a, b in zip(v, v0)] for v in verts[1:]]
    rows += [[1 if c == i else 0 for c in range(n)] for i in rays]
    return Face(
        active_facets=closure,
        equations=tuple(facets[k] for k in closure),
        member_vertices=tuple(verts),
        rays=tuple(rays),
        dim=_rank(rows),
    )


def _all_faces(facets, vertices, n) -> list[Face]:
    seen: dict[tuple[int, ...], Face] = {}
    frontier = []
    for k in range(len(facets)):
        f = _make_face(frozenset([k]), facets, vertices, n)
        if f is not None and f.active_facets not in seen:
            seen[f.active_facets] = f
            frontier.append(f)
    while frontier:
        nxt = []
        for f in frontier:
            for k in range(len(facets)):
                if k in f.active_facets:
                    continue
                g = _make_face(frozenset(f.active_facets) | {k}, facets, vertices, n)
                if g is not None and g.active_facets not in seen:
                    seen[g.active_facets] = g
                    nxt.append(g)
        frontier = nxt
    return sorted(seen.values(), key=lambda f: (f.dim, f.member_vertices, f.rays))


def newton_polyhedron(p: MultiPoly) -> NewtonPolyhedron:
    if p.is_zero():
        raise ValueError("Newton polyhedron of the zero polynomial is empty")
    n = p.nvars
    if n > MAX_NVARS:
        raise ValueError(f"nvars={n} exceeds the supported maximum of {MAX_NVARS}")
    points = pareto_minimal(p.exponents)
    facets = _facets(points, n)
    vertices = []
    for q in points:
        tight = [list(w) for w, h in facets if _dot(w, q) == h]
        if _rank(tight) == n:
            vertices.append(q)
    faces = _all_faces(facets, vertices, n)
    return NewtonPolyhedron(n, tuple(points), tuple(vertices), tuple(facets), tuple(faces))


def newton_distance(np_: NewtonPolyhedron) -> Fraction:
    """Least t with (t, ..., t) in the polyhedron."""
    return max(Fraction(h, sum(w)) for w, h in np_.facets)


def critical_exponent(np_: NewtonPolyhedron) -> Fraction:
    d = newton_distance(np_)
    if d == 0:
        raise ValueError("Newton distance is 0 (b(0) != 0); no critical exponent")
    return 1 / d


def central_face(np_: NewtonPolyhedron) -> Face:
    """Smallest face meeting the diagonal: all facets tight at (d, ..., d)."""
    d = newton_distance(np_)
    active = frozenset(k for k, (w, h) in enumerate(np_.facets) if d * sum(w) == h)
    face = _make_face(active, np_.facets, np_.vertices, np_.nvars)
    assert face is not None
    return face


def multiplicity(np_: NewtonPolyhedron) -> int:
    return np_.nvars - central_face(np_).dim


def compact_faces(np_: NewtonPolyhedron) -> list[Face]:
    return [f for f in np_.faces if f.compact]


def face_polynomial(p: MultiPoly, face: Face, np_: NewtonPolyhedron | None = None) -> MultiPoly:
    """Terms of ``p`` whose exponents lie on ``face``."""
    np_ = np_ if np_ is not None else newton_polyhedron(p)
    if face not in np_.faces:
        raise ValueError("face does not belong to the Newton polyhedron of p")
    return MultiPoly.from_dict(p.nvars, {e: c for e, c in p.terms if face.contains(e)})


def b_star_eval(np_: NewtonPolyhedron, x) -> np.ndarray | float:
    """Sum over vertices v of |x^v|, vectorized over leading axes."""
    arr = np.abs(np.asarray(x, dtype=float))
    out = np.zeros(arr.shape[:-1])
    for v in np_.vertices:
        term = np.ones(arr.shape[:-1])
        for i, e in enumerate(v):
            if e:
                term = term * arr[..., i] ** e
        out = out + term
    return float(out) if arr.ndim == 1 else out


@dataclass(frozen=True)
class InvariantsSummary:
    d: Fraction
    delta0: Fraction
    multiplicity: int
    central_face: Face
    polyhedron: NewtonPolyhedron


def analyze(p: MultiPoly) -> InvariantsSummary:
    np_ = newton_polyhedron(p)
    d = newton_distance(np_)
    cf = central_face(np_)
    return InvariantsSummary(d, critical_exponent(np_), np_.nvars - cf.dim, cf, np_)


def frac_str(q) -> str:
    q = Fraction(q)
    return f"{q.numerator}/{q.denominator}"


def analysis_json(p: MultiPoly) -> dict:
    """JSON-ready summary with rationals written as "p/q" strings."""
    s = analyze(p)
    np_ = s.polyhedron

    def face_doc(f: Face) -> dict:
        return {"dim": f.dim, "vertices": [list(v) for v in f.member_vertices]}

    return {
        "poly": str(p),
        "nvars": p.nvars,
        "vertices": [list(v) for v in np_.vertices],
        "facets": [{"normal": [frac_str(v) for v in w], "offset": frac_str(h)} for w, h in np_.facets],
        "newton_distance": frac_str(s.d),
        "delta0": frac_str(s.delta0),
        "central_face": face_doc(s.central_face),
        "multiplicity": s.multiplicity,
        "compact_faces": [face_doc(f) for f in compact_faces(np_)],
    }
