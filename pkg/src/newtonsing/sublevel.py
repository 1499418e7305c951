"""Monte Carlo sublevel-set measures and dyadic-rectangle integrals."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .newton import NewtonPolyhedron, b_star_eval, newton_polyhedron
from .poly import MultiPoly, evaluate
from .quadrature import panel_rule

MIN_PER_STRATUM = 256
MAX_SHELLS = 30


@dataclass(frozen=True)
class DyadicRect:
    """{x : 2^-j_l < |x_l| < 2^(-j_l+1)} restricted to one sign orthant."""

    j: tuple[int, ...]
    signs: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.signs is None:
            object.__setattr__(self, "signs", (1,) * len(self.j))

    @property
    def lower(self) -> np.ndarray:
        return 2.0 ** (-np.asarray(self.j, float))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lower))

    def center(self) -> np.ndarray:
        return 1.5 * self.lower * np.asarray(self.signs, float)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        u = rng.uniform(1.0, 2.0, size=(size, len(self.j)))
        return u * self.lower * np.asarray(self.signs, float)


# sublevel measures ---------------------------------------------------------

def _strata(n: int, samples: int) -> int:
    k = int(math.floor((samples / MIN_PER_STRATUM) ** (1.0 / n))) - 1
    return max(0, min(MAX_SHELLS, k))


def _stratified_sample(rng: np.random.Generator, n: int, r: float, samples: int):
    """Points stratified over dyadic shells |x_l| in [r 2^-k-1, r 2^-k] and a core."""
    J = _strata(n, samples)
    per = samples // (J + 1) ** n
    edges = np.r_[r * 2.0 ** -np.arange(J + 1), 0.0]  # r, r/2, ..., r 2^-J, 0
    hi, lo = edges[:-1], edges[1:]
    ids = np.indices((J + 1,) * n).reshape(n, -1).T  # stratum -> shell index per axis
    vol = np.prod(2.0 * (hi[ids] - lo[ids]), axis=1)
    cell = np.repeat(np.arange(len(ids)), per)
    k = ids[cell]
    u = rng.uniform(size=(len(cell), n))
    sgn = rng.choice([-1.0, 1.0], size=(len(cell), n))
    x = sgn * (lo[k] + u * (hi[k] - lo[k]))
    return x, cell, vol, per


def sublevel_curve(b: MultiPoly, r: float, eps, samples: int = 100_000, seed: int = 0,
                   method: str = "stratified") -> tuple[np.ndarray, np.ndarray]:
    """Estimates and standard errors of |{x in [-r, r]^n : |b(x)| < eps}| for each eps.

    One sample set serves every eps. ``stratified`` samples each dyadic
    shell stratum equally and combines per-stratum binomial errors;
    ``uniform`` is plain Monte Carlo on the box.
    """
    if samples < 10_000:
        raise ValueError("samples must be at least 1e4")
    eps = np.atleast_1d(np.asarray(eps, float))
    if np.any(eps <= 0):
        raise ValueError("eps must be positive")
    n = b.nvars
    rng = np.random.default_rng(seed)
    if method == "uniform":
        x = rng.uniform(-r, r, size=(samples, n))
        bv = np.abs(evaluate(b, x))
        box = (2 * r) ** n
        p = np.array([np.mean(bv < e) for e in eps])
        return box * p, box * np.sqrt(p * (1 - p) / samples)
    if method != "stratified":
        raise ValueError(f"unknown method {method!r}")
    x, cell, vol, per = _stratified_sample(rng, n, r, samples)
    bv = np.abs(evaluate(b, x))
    est = np.empty(len(eps))
    err = np.empty(len(eps))
    for i, e in enumerate(eps):
        p = np.bincount(cell, weights=(bv < e).astype(float), minlength=len(vol)) / per
        est[i] = np.sum(vol * p)
        err[i] = math.sqrt(np.sum(vol**2 * p * (1 - p) / per))
    return est, err


def sublevel_measure(b: MultiPoly, r: float, eps: float, samples: int = 100_000, seed: int = 0,
                     method: str = "stratified") -> tuple[float, float]:
    est, err = sublevel_curve(b, r, [eps], samples, seed, method)
    return float(est[0]), float(err[0])


@dataclass
class SublevelFit:
    epsilons: list[float]
    measures: list[float]
    stderrs: list[float]
    delta0_hat: float
    log_power_hat: float
    log_c_hat: float
    ci95: dict
    residuals: list[float]
    dropped: list[float] = field(default_factory=list)
    samples: int = 0
    seed: int = 0
    method: str = "stratified"


def fit_sublevel_asymptotics(b: MultiPoly, r: float = 1.0, eps_grid=None, samples: int = 1_000_000,
                             seed: int = 0, method: str = "stratified") -> SublevelFit:
    """Weighted least squares for log V = log c + delta0 log eps + (m-1) log log(1/eps)."""
    eps = np.sort(np.asarray(eps_grid if eps_grid is not None else np.geomspace(1e-8, 1e-2, 13), float))[::-1]
    if np.any(eps >= 1):
        raise ValueError("eps values must be below 1")
    if eps.max() / eps.min() < 1e3 * (1 - 1e-9):
        raise ValueError("eps grid must span at least three decades")
    V, se = sublevel_curve(b, r, eps, samples, seed, method)
    keep = V > 0
    dropped = [float(e) for e in eps[~keep]]
    if dropped:
        warnings.warn(f"zero measure estimate at eps={dropped}; points dropped", RuntimeWarning)
    e, v, s = eps[keep], V[keep], se[keep]
    if len(e) < 4:
        raise ValueError("too few usable eps values for the fit")
    X = np.column_stack([np.ones_like(e), np.log(e), np.log(np.log(1 / e))])
    y = np.log(v)
    sig = np.maximum(s / v, 1e-6)
    A = X / sig[:, None]
    coef, *_ = np.linalg.lstsq(A, y / sig, rcond=None)
    resid = y - X @ coef
    chi2 = float(np.sum((resid / sig) ** 2) / max(1, len(e) - 3))
    cov = np.linalg.inv(A.T @ A) * max(1.0, chi2)
    half = 1.96 * np.sqrt(np.diag(cov))
    return SublevelFit(
        epsilons=[float(x) for x in eps],
        measures=[float(x) for x in V],
        stderrs=[float(x) for x in se],
        delta0_hat=float(coef[1]),
        log_power_hat=float(coef[2]),
        log_c_hat=float(coef[0]),
        ci95={"delta0": [float(coef[1] - half[1]), float(coef[1] + half[1])],
              "log_power": [float(coef[2] - half[2]), float(coef[2] + half[2])]},
        residuals=[float(x) for x in resid],
        dropped=dropped,
        samples=samples,
        seed=seed,
        method=method,
    )


# dyadic rectangles ----------------------------------------------------------

def lemma41_ratio(b: MultiPoly, np_: NewtonPolyhedron | None, rect: DyadicRect, eps: float,
                  samples: int = 100_000, seed: int = 0) -> tuple[float, float]:
    """Fraction of ``rect`` where |b / b*| < eps, with its binomial standard error."""
    np_ = np_ if np_ is not None else newton_polyhedron(b)
    x = rect.sample(np.random.default_rng(seed), samples)
    ratio = np.abs(evaluate(b, x)) / b_star_eval(np_, x)
    p = float(np.mean(ratio < eps))
    return p, math.sqrt(p * (1 - p) / samples)


@dataclass
class RectIntegral:
    value: float
    stderr: float
    method: str
    budget: int
    seed: int
    variance_flag: bool


def lemma42_integral(b: MultiPoly, delta0, rect: DyadicRect, method: str = "direct-mc",
                     budget: int = 20_000, seed: int = 0, eps: float | None = None,
                     np_: NewtonPolyhedron | None = None, t_panels: int = 64) -> RectIntegral:
    """Integral of |b|^-delta0 over ``rect`` (optionally over |b| < eps b*(x0) only).

    ``direct-mc`` averages the integrand over uniform samples.
    ``distribution-formula`` integrates delta0 t^(delta0-1) |{|b| < min(cap, 1/t)}|
    in t, with the inner measures estimated from an independent sample and
    the t-integral done by Gauss-Legendre panels in log t.
    """
    d0 = float(delta0)
    if eps is not None:
        np_ = np_ if np_ is not None else newton_polyhedron(b)
        cap = eps * float(b_star_eval(np_, rect.center()))
    else:
        cap = math.inf
    vol = rect.volume
    if method == "direct-mc":
        rng = np.random.default_rng([seed, 0, *(jl + 1000 for jl in rect.j)])
        a = np.abs(evaluate(b, rect.sample(rng, budget)))
        vals = np.where((a < cap) & (a > 0), a ** (-d0), 0.0)
        value = vol * float(vals.mean())
        stderr = vol * float(vals.std(ddof=1)) / math.sqrt(budget)
    elif method == "distribution-formula":
        rng = np.random.default_rng([seed, 1, *(jl + 1000 for jl in rect.j)])
        a = np.sort(np.abs(evaluate(b, rect.sample(rng, budget))))
        a = a[a > 0]
        if len(a) == 0:
            return RectIntegral(0.0, 0.0, method, budget, seed, False)

        def measure(s):
            return vol * np.searchsorted(a, s, side="left") / budget

        t0 = max(1.0 / cap if cap < math.inf else 0.0, 1.0 / a[-1])
        head = float(measure(min(cap, np.nextafter(1.0 / t0, np.inf)))) * t0**d0
        t1 = 1.0 / a[0]
        tail = 0.0
        if t1 > t0:
            edges = np.linspace(math.log(t0), math.log(t1), t_panels + 1)
            tau, w = panel_rule(edges, 8)
            t = np.exp(tau)
            tail = float(np.sum(w * d0 * t**d0 * measure(np.minimum(cap, 1.0 / t))))
        value = head + tail
        # the inner estimate is a layer-cake of the same sample; use its spread
        vals = np.where(a < cap, a ** (-d0), 0.0)
        stderr = vol * float(np.sqrt(np.sum((vals - vals.sum() / budget) ** 2) / (budget - 1))) / math.sqrt(budget)
    else:
        raise ValueError(f"unknown method {method!r}")
    flag = value > 0 and stderr / value > 0.10
    return RectIntegral(value, stderr, method, budget, seed, flag)


def amgm_sup(b: MultiPoly, samples: int = 100_000, seed: int = 0,
             np_: NewtonPolyhedron | None = None) -> float:
    """Sampled sup over [-1, 1]^n of |x_1 ... x_n| b*(x)^(-delta0)."""
    from .newton import critical_exponent

    np_ = np_ if np_ is not None else newton_polyhedron(b)
    d0 = float(critical_exponent(np_))
    x = np.random.default_rng(seed).uniform(-1, 1, size=(samples, b.nvars))
    return float(np.max(np.abs(np.prod(x, axis=1)) * b_star_eval(np_, x) ** (-d0)))
