"""Local Riesz kernel pulled back by the blowup beta_1(x) = (x1, x1 x2, ..., x1 xn).

Fixed demo for b = |x|^2 (delta0 = n/2, multiplicity one). On the cone
piece around the x1-axis the pulled-back kernel k = (w1 L) o beta_1 should
obey |k_j| <~ |x1|^-n, |d_l k_j| <~ |x_l|^-1 |x1|^-n, and cancel along x1
against the Jacobian.
"""

from __future__ import annotations

from fractions import Fraction
from itertools import product

import numpy as np

from .kernels import finite_difference, plateau_cutoff, smooth_step, theta
from .quadrature import panel_rule, shell_edges, symmetric


def cone_weight(t1: np.ndarray, ts: list[np.ndarray], n: int) -> np.ndarray:
    """Smooth partition weight of the x1-cone from squared direction cosines."""

    def g(t):
        return smooth_step((t - 1.0 / (2 * n)) * 2 * n)

    total = sum(g(t) for t in ts)
    return g(t1) / total


def riesz_pullback(x: np.ndarray, R: float = 0.5) -> np.ndarray:
    """k(x) = (w1 * L)(beta_1(x)) for L(y) = cutoff(|y|^2) y1 / |y|^(n+1)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    x1 = x[..., 0]
    rest = np.sum(x[..., 1:] ** 2, axis=-1)
    s = 1.0 + rest
    t1 = 1.0 / s
    ts = [t1] + [x[..., k] ** 2 / s for k in range(1, n)]
    w = cone_weight(t1, ts, n)
    chi = plateau_cutoff(x1**2 * s, R)
    out = np.zeros_like(x1)
    m = x1 != 0
    out[m] = chi[m] * w[m] * np.sign(x1[m]) / (np.abs(x1[m]) ** n * s[m] ** ((n + 1) / 2))
    return out


def _piece(j, R):
    j = np.asarray(j, float)

    def f(x):
        prof = np.ones(np.shape(x)[:-1])
        for l in range(len(j)):
            prof = prof * theta(2.0 ** j[l] * np.abs(x[..., l]))
        return prof * riesz_pullback(x, R)

    return f


def _grid(j, density):
    u = 2.0 ** (np.arange(-density, density + 1) / density)
    axes = [u * 2.0 ** (-jl) for jl in j]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(j))


def _fit_rate(js, vals) -> float:
    """Negative slope of log2 |value| against j."""
    js = np.asarray(js, float)
    lv = np.log2(np.maximum(np.abs(np.asarray(vals)), 1e-300))
    return float(-np.polyfit(js, lv, 1)[0])


def riesz_blowup_check(n: int = 2, grid_density: int = 32, R: float = 0.5,
                       j1_values=None, jt_values=None, rel_step: float = 1e-3,
                       max_points: int = 20000, quad_order: int = 16, seed: int = 0) -> dict:
    """Measure the size, derivative and line-integral conditions on dyadic pieces.

    ``C0_size`` = sup |k_j| |x1|^n and ``C0_deriv`` = max_l sup |d_l k_j| |x_l| |x1|^n
    over the sampled pieces. The x1 line integrals use the Jacobian
    |det D beta_1| = |x1|^(n-1); they vanish by parity, so the report also
    fits the decay of the same integrals against the smooth weight exp(x1),
    and gives the signed-Jacobian variant for comparison.
    """
    if n not in (2, 3):
        raise ValueError("n must be 2 or 3")
    j1_min = int(np.floor(-np.log2(R) - 1.0)) + 1
    j1_values = list(j1_values) if j1_values is not None else list(range(j1_min, j1_min + 6))
    # line fits use shells where the cutoff is identically 1 on the cone piece
    j1_flat = int(np.ceil(np.log2(4 * np.sqrt(2 * n) / R))) + 1
    j1_fit = list(range(max(j1_flat, j1_min), max(j1_flat, j1_min) + 6))
    if jt_values is None:
        jt_values = list(range(-1, 6)) if n == 2 else list(range(-1, 3))
    rng = np.random.default_rng(seed)

    c_size = 0.0
    c_deriv = 0.0
    for j in product(j1_values, *[jt_values] * (n - 1)):
        f = _piece(j, R)
        x = _grid(j, grid_density)
        if len(x) > max_points:
            x = x[np.sort(rng.choice(len(x), max_points, replace=False))]
        vals = f(x)
        if not np.any(vals):
            continue
        w = np.abs(x[:, 0]) ** n
        c_size = max(c_size, float(np.max(np.abs(vals) * w)))
        h = rel_step * np.abs(x)
        for l in range(n):
            alpha = [0] * n
            alpha[l] = 1
            der = finite_difference(f, x, alpha, h)
            c_deriv = max(c_deriv, float(np.max(np.abs(der) * np.abs(x[:, l]) * w)))

    # line integrals along x1 at fixed transverse points x_l = 2^-j_l
    t, wq = symmetric(*panel_rule(shell_edges(2), quad_order))
    lines = []
    for jt in product(*[jt_values] * (n - 1)):
        xt = 2.0 ** (-np.asarray(jt, float))
        row = {"jt": list(jt), "j1": [], "abs_jac": [], "scale": [], "weighted": [], "signed_jac": []}
        for j1 in j1_fit:
            f = _piece((j1, *jt), R)
            s = 2.0 ** (-j1)
            x1 = t * s
            pts = np.column_stack([x1] + [np.full_like(x1, v) for v in xt])
            kv = f(pts)
            ww = wq * s
            jac = np.abs(x1) ** (n - 1)
            m = len(t) // 2
            pair = (kv[:m][::-1] * jac[:m][::-1] + kv[m:] * jac[m:]) * ww[m:]
            row["j1"].append(j1)
            row["abs_jac"].append(float(pair.sum()))
            row["scale"].append(float(np.sum(np.abs(kv) * jac * ww)))
            row["weighted"].append(float(np.sum(kv * jac * np.exp(x1) * ww)))
            row["signed_jac"].append(float(np.sum(kv * x1 ** (n - 1) * ww)))
        if max(row["scale"]) > 0:
            lines.append(row)

    def max_rel(key):
        return max(abs(a) / s for r in lines for a, s in zip(r[key], r["scale"]) if s > 0)

    rel = max_rel("abs_jac")
    rates = [_fit_rate(r["j1"], r["weighted"]) for r in lines]
    if max_rel("signed_jac") <= 1e-12:
        signed_rate = float("inf")
    else:
        signed_rate = float(np.min([_fit_rate(r["j1"], r["signed_jac"]) for r in lines]))
    return {
        "n": n,
        "R": R,
        "grid_density": grid_density,
        "delta0": str(Fraction(n, 2)),
        "monomial": f"|x1|^-{n}",
        "C0_size": c_size,
        "C0_deriv": c_deriv,
        "line_integral_max_relative": rel,
        "exact_cancellation": rel <= 1e-12,
        "epsilon0_fit": float("inf") if rel <= 1e-12 else float(np.min(rates)),
        "weighted_decay_rate": float(np.min(rates)),
        "signed_jacobian_decay_rate": signed_rate,
        "lines": lines,
    }
