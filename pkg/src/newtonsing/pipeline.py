"""Staged runs: analyze -> hypotheses -> verify-kernel -> verify-estimates.

Each stage writes its own report into the output directory and reads
upstream results only from those files. Reports carry no timings, so an
identical config reproduces them byte for byte; wall times live in the
manifest alone.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
import time
import traceback
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from itertools import product
from pathlib import Path

import numpy as np

from . import __version__
from .fourier import decay_grid, multiplier_sup_bound, piece_fourier_transform, verify_fourier_decay
from .hypotheses import check_face_zero_orders
from .kernels import (
    dyadic_piece,
    example_kernel,
    gaussian,
    pair_with_test_function,
    truncated_integral,
    verify_cancellation,
    verify_piece_bounds,
)
from .newton import analysis_json, newton_polyhedron
from .operator import Grid, gaussian_grid_function, l2_ratio
from .poly import MultiPoly, parse_poly
from .report import SCHEMA_VERSION, CheckResult, VerificationReport, dumps, sha256_file, write_csv, write_json
from .sublevel import DyadicRect, amgm_sup, fit_sublevel_asymptotics, lemma42_integral

EXIT_PASS, EXIT_USAGE, EXIT_HYPOTHESIS, EXIT_BUDGET, EXIT_CHECK = 0, 1, 2, 3, 4

ALL_CHECKS = ("sublevel", "rectangles", "amgm", "fourier", "multiplier", "operator")

DEFAULT_SAMPLES = {"hypotheses": 1000, "sublevel": 1_000_000, "rectangles": 20_000, "amgm": 100_000}

MIN_SAMPLES = {"hypotheses": 1000, "sublevel": 10_000}

DEFAULT_TOLERANCES = {
    "delta0": 0.05,
    "log_power": 0.3,
    "estimator_agreement": 0.05,
    "amgm_stability": 0.05,
    "multiplier_spread": 0.10,
    "cancellation": 1e-12,
    "pairing": 1e-3,
    "peeling": 1e-12,
    "plancherel": 1e-6,
    "operator_spread": 0.10,
}


class ConfigError(ValueError):
    pass


def infer_nvars(text: str) -> int:
    idx = [int(m) for m in re.findall(r"x(\d+)", text)]
    return max(idx) if idx else 1


@dataclass
class RunConfig:
    poly: str
    nvars: int | None = None
    R: float = 0.5
    L_list: list[int] = field(default_factory=lambda: [8, 12, 16])
    pairing_L: int | None = None
    operator_L: list[int] = field(default_factory=lambda: [6, 8])
    samples: dict = field(default_factory=dict)
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    grid_density: int = 32
    checks: list[str] = field(default_factory=lambda: list(ALL_CHECKS))
    output_dir: str = "out"

    def __post_init__(self):
        if self.nvars is None:
            self.nvars = infer_nvars(self.poly)
        if self.pairing_L is None:
            # the shell sum costs grow like L^n
            self.pairing_L = 20 if self.nvars <= 2 else 10
        self.samples = {**DEFAULT_SAMPLES, **(self.samples or {})}
        self.tolerances = {**DEFAULT_TOLERANCES, **(self.tolerances or {})}
        self.L_list = [int(v) for v in self.L_list]
        self.operator_L = [int(v) for v in self.operator_L]
        self.checks = list(self.checks)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "poly" not in doc:
            raise ConfigError("config needs a 'poly' entry")
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        doc = self.to_dict()
        doc.pop("output_dir")
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()

    def validate(self) -> MultiPoly:
        try:
            b = parse_poly(self.poly, self.nvars)
        except ValueError as exc:
            raise ConfigError(f"poly does not parse: {exc}") from exc
        if self.R <= 0:
            raise ConfigError("R must be positive")
        for k, v in self.samples.items():
            if not isinstance(v, int) or v <= 0:
                raise ConfigError(f"sample budget {k!r} must be a positive integer")
        for k, lo in MIN_SAMPLES.items():
            if self.samples.get(k, lo) < lo:
                raise ConfigError(f"sample budget {k!r} must be at least {lo}")
        if not self.L_list or any(L <= 0 for L in self.L_list + self.operator_L + [self.pairing_L]):
            raise ConfigError("L values must be positive")
        bad = set(self.checks) - set(ALL_CHECKS)
        if bad:
            raise ConfigError(f"unknown checks: {sorted(bad)}")
        unknown_tol = set(self.tolerances) - set(DEFAULT_TOLERANCES)
        if unknown_tol:
            raise ConfigError(f"unknown tolerances: {sorted(unknown_tol)}")
        return b


@dataclass
class StageRecord:
    name: str
    status: str  # pass | fail | hypothesis | budget | skipped | error
    reason: str | None = None
    files: list[dict] = field(default_factory=list)
    wall_time: float = 0.0


@dataclass
class RunManifest:
    config_hash: str
    version: str
    schema_version: str
    config: dict
    stages: list[StageRecord]
    passed: bool
    exit_code: int

    def to_json(self) -> dict:
        return asdict(self)


def _timed(check: CheckResult, t0: float) -> CheckResult:
    check.runtime = time.perf_counter() - t0
    return check


# stages ---------------------------------------------------------------------

def stage_analyze(b: MultiPoly) -> dict:
    return analysis_json(b)


def stage_hypotheses(b: MultiPoly, cfg: RunConfig) -> dict:
    rep = check_face_zero_orders(b, samples=cfg.samples["hypotheses"], seed=cfg.seed)
    return rep.to_json()


def _sample_pieces(K, width: int = 3, step: int = 2) -> list[tuple[int, ...]]:
    axes = [[jm + step * k for k in range(width)] for jm in K.j_min()]
    return [j for j in product(*axes) if not dyadic_piece(K, j).is_zero]


def stage_kernel(b: MultiPoly, cfg: RunConfig) -> VerificationReport:
    tol = cfg.tolerances
    K = example_kernel(b, cfg.R)
    rep = VerificationReport("verify-kernel", str(b))
    t0 = time.perf_counter()
    per_piece = []
    worst = 0.0
    for j in _sample_pieces(K):
        piece = dyadic_piece(K, j)
        bounds = verify_piece_bounds(piece, cfg.grid_density, seed=cfg.seed)
        res = [verify_cancellation(piece, axis, seed=cfg.seed) for axis in range(1, K.n + 1)]
        worst = max(worst, max(res))
        per_piece.append({"j": list(j), "size_bound": bounds["size_bound"], "gradient_bound": bounds["gradient_bound"],
                          "derivative_bound": bounds["derivative_bound"], "cancellation_residuals": res})
    c_size = [p["size_bound"] for p in per_piece]
    finite = all(math.isfinite(p[k]) for p in per_piece for k in ("size_bound", "gradient_bound", "derivative_bound"))
    rep.checks.append(_timed(CheckResult(
        "piece_bounds", "finite-difference grid sup", {"grid_density": cfg.grid_density}, cfg.seed,
        {"pieces": per_piece, "size_bound_spread": max(c_size) / min(c_size) if c_size and min(c_size) > 0 else None},
        {"finite": True}, finite), t0))
    rep.checks.append(CheckResult(
        "cancellation", "paired Gauss-Legendre line integrals", {"quad_order": 16, "lines": 32}, cfg.seed,
        {"max_residual": worst}, {"max_residual": tol["cancellation"]}, worst <= tol["cancellation"]))

    t0 = time.perf_counter()
    center = [0.1, -0.07, 0.05, 0.03, -0.02, 0.01][: K.n]
    phi = gaussian(center, 0.2)
    L = cfg.pairing_L
    pairing = pair_with_test_function(K, phi)
    reverse = pair_with_test_function(K, phi, order=list(range(K.n, 0, -1)))
    direct = truncated_integral(K, L, phi)
    ok = abs(pairing - direct) <= tol["pairing"] and abs(pairing - reverse) <= tol["peeling"]
    rep.checks.append(_timed(CheckResult(
        "pairing", "shell sum of piece x mixed difference vs direct truncated quadrature",
        {"L": L, "q": 12}, None,
        {"pairing": pairing, "pairing_reverse_order": reverse, "truncated_integral": direct,
         "difference": abs(pairing - direct), "peeling_difference": abs(pairing - reverse),
         "test_function": {"center": center, "width": 0.2}},
        {"difference": tol["pairing"], "peeling_difference": tol["peeling"]}, ok), t0))
    return rep


def _rectangles(n: int, count: int, seed: int) -> list[DyadicRect]:
    rng = np.random.default_rng([seed, 42])
    return [DyadicRect(tuple(int(v) for v in rng.integers(1, 13, n)),
                       tuple(int(v) for v in rng.choice([-1, 1], n))) for _ in range(count)]


def stage_estimates(b: MultiPoly, cfg: RunConfig, analysis: dict):
    """Returns the report and the CSV series {filename: (header, rows)}."""
    tol = cfg.tolerances
    n = b.nvars
    d0 = Fraction(analysis["delta0"])
    m = int(analysis["multiplicity"])
    rep = VerificationReport("verify-estimates", str(b))
    series: dict[str, tuple[list[str], list]] = {}
    np_ = newton_polyhedron(b)

    if "sublevel" in cfg.checks:
        t0 = time.perf_counter()
        fit = fit_sublevel_asymptotics(b, 1.0, samples=cfg.samples["sublevel"], seed=cfg.seed)
        ok = abs(fit.delta0_hat - float(d0)) <= tol["delta0"] and abs(fit.log_power_hat - (m - 1)) <= tol["log_power"]
        rep.checks.append(_timed(CheckResult(
            "sublevel_fit", "stratified Monte Carlo + weighted least squares",
            {"samples": cfg.samples["sublevel"]}, cfg.seed,
            {"delta0_hat": fit.delta0_hat, "log_power_hat": fit.log_power_hat, "ci95": fit.ci95,
             "dropped_eps": fit.dropped, "box_radius": 1.0},
            {"delta0": d0, "log_power": m - 1, "tol_delta0": tol["delta0"], "tol_log_power": tol["log_power"]},
            ok), t0))
        series["sublevel.csv"] = (["eps", "measure", "stderr"],
                                  list(zip(fit.epsilons, fit.measures, fit.stderrs)))

    if "rectangles" in cfg.checks:
        t0 = time.perf_counter()
        rows = []
        worst = 0.0
        flags = 0
        for rect in _rectangles(n, 20, cfg.seed):
            a = lemma42_integral(b, d0, rect, "direct-mc", cfg.samples["rectangles"], cfg.seed, np_=np_)
            c = lemma42_integral(b, d0, rect, "distribution-formula", cfg.samples["rectangles"], cfg.seed, np_=np_)
            rel = abs(a.value - c.value) / max(abs(c.value), 1e-300)
            worst = max(worst, rel)
            flags += int(a.variance_flag)
            rows.append({"j": list(rect.j), "signs": list(rect.signs), "direct_mc": a.value,
                         "direct_mc_stderr": a.stderr, "distribution_formula": c.value,
                         "relative_difference": rel, "variance_flag": a.variance_flag})
        vals = [r["direct_mc"] for r in rows]
        rep.checks.append(_timed(CheckResult(
            "rectangle_estimators", "direct-mc vs distribution-formula",
            {"samples_per_rectangle": cfg.samples["rectangles"], "rectangles": len(rows)}, cfg.seed,
            {"max_relative_difference": worst, "sup_value": max(vals), "variance_flags": flags,
             "rectangles": rows},
            {"max_relative_difference": tol["estimator_agreement"]}, worst <= tol["estimator_agreement"]), t0))

    if "amgm" in cfg.checks:
        t0 = time.perf_counter()
        s1 = amgm_sup(b, cfg.samples["amgm"], cfg.seed, np_)
        s2 = amgm_sup(b, cfg.samples["amgm"], cfg.seed + 1, np_)
        ok = math.isfinite(s1) and abs(s1 - s2) <= tol["amgm_stability"] * max(s1, s2)
        rep.checks.append(_timed(CheckResult(
            "amgm_sup", "uniform sample sup on [-1,1]^n", {"samples": cfg.samples["amgm"]}, cfg.seed,
            {"sup": s1, "sup_resampled": s2}, {"relative_change": tol["amgm_stability"]}, ok), t0))

    K = example_kernel(b, cfg.R)
    if "fourier" in cfg.checks:
        t0 = time.perf_counter()
        j = tuple(jm + 2 for jm in K.j_min())
        piece = dyadic_piece(K, j)
        grid = decay_grid(piece, per_decade=8, s_hi=128.0 if n > 1 else 1e3)
        r = verify_fourier_decay(piece, grid)
        ok = math.isfinite(r["C_small"]) and r["rho_fit"] > 0
        rep.checks.append(_timed(CheckResult(
            "fourier_decay", "tensor Gauss-Legendre transform, envelope fit", {"xi_points": len(grid)}, None,
            r, {"rho_fit": "> 0"}, ok), t0))
        vals = np.abs(piece_fourier_transform(piece, grid))
        series["fourier.csv"] = ([f"xi{l + 1}" for l in range(n)] + ["abs_transform"],
                                 [list(x) + [v] for x, v in zip(grid, vals)])

    if "multiplier" in cfg.checks:
        t0 = time.perf_counter()
        if n > 2:
            rep.checks.append(CheckResult("multiplier_sup", "piece-sum transform", {}, cfg.seed, {},
                                          skipped="multiplier grid sums are limited to n <= 2"))
        else:
            r = multiplier_sup_bound(K, cfg.L_list, seed=cfg.seed)
            sups = [r.sups[str(L)] for L in r.L_list]
            spread = max(sups) / min(sups) - 1 if min(sups) > 0 else math.inf
            zero = all(v == 0 for v in r.value_at_zero.values())
            rep.checks.append(_timed(CheckResult(
                "multiplier_sup", "piece-sum transform on log-radial grid",
                {"xi_points": r.n_xi, "s_cap": r.s_cap}, cfg.seed,
                {"sups": r.sups, "argmax": r.argmax, "spread": spread, "zero_at_origin": zero,
                 "skipped_pairs": r.skipped_pairs},
                {"spread": tol["multiplier_spread"], "zero_at_origin": True},
                spread <= tol["multiplier_spread"] and zero), t0))
            series["multiplier.csv"] = (["L", "sup"], [[L, r.sups[str(L)]] for L in r.L_list])

    if "operator" in cfg.checks:
        t0 = time.perf_counter()
        if n != 2:
            rep.checks.append(CheckResult("operator_l2", "FFT convolution", {}, None, {},
                                          skipped="operator harness runs for n = 2 only"))
        else:
            step = 2.0 ** (-max(cfg.operator_L))
            N = int(2 ** math.ceil(math.log2(4 * float(np.max(K.extent())) / step)))
            grid = Grid(2, N, step)
            f = gaussian_grid_function(grid, cfg.R / 2)
            rows = [l2_ratio(K, L, f, step) for L in cfg.operator_L]
            ratios = [r["ratio"] for r in rows]
            spread = max(ratios) / min(ratios) - 1 if min(ratios) > 0 else math.inf
            planch = max(r["plancherel_rel"] for r in rows)
            rep.checks.append(_timed(CheckResult(
                "operator_l2", "FFT convolution on a periodic grid", {"N": N, "step": step}, None,
                {"ratios": {str(r["L"]): r["ratio"] for r in rows}, "spread": spread,
                 "plancherel_max_rel": planch, "gaussian_width": cfg.R / 2},
                {"plancherel_max_rel": tol["plancherel"], "spread (reported)": tol["operator_spread"]},
                planch <= tol["plancherel"]), t0))
    return rep, series


# orchestration ----------------------------------------------------------------

def _record(path: Path) -> dict:
    return {"path": path.name, "sha256": sha256_file(path)}


STAGES = ("analyze", "hypotheses", "verify-kernel", "verify-estimates")


def run_pipeline(cfg: RunConfig, stages: tuple[str, ...] | None = None) -> RunManifest:
    """Run the selected stages (all by default) in dependency order.

    Kernel and estimate stages are skipped when a hypothesis report in this
    run failed. The estimate stage reads newton.json from the output
    directory and produces it first if it is missing.
    """
    b = cfg.validate()
    selected = tuple(STAGES if stages is None else stages)
    bad = set(selected) - set(STAGES)
    if bad:
        raise ConfigError(f"unknown stages: {sorted(bad)}")
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    records: list[StageRecord] = []
    blocked: str | None = None

    def guarded(name, fn):
        t0 = time.perf_counter()
        rec = StageRecord(name, "pass")
        try:
            fn(rec)
        except Exception as exc:  # a crashing stage is recorded, later stages still run
            rec.status = "error"
            rec.reason = f"{type(exc).__name__}: {exc}\n{traceback.format_exc(limit=5)}"
        rec.wall_time = time.perf_counter() - t0
        records.append(rec)
        return rec

    def do_analyze(rec):
        path = out / "newton.json"
        write_json(path, stage_analyze(b))
        rec.files.append(_record(path))

    def do_hypotheses(rec):
        path = out / "hypotheses.json"
        doc = stage_hypotheses(b, cfg)
        write_json(path, doc)
        rec.files.append(_record(path))
        if not doc["passed"]:
            rec.status = "hypothesis"
            rec.reason = "a face polynomial has a zero of order >= d(b)"
        elif doc["budget_exhausted"]:
            rec.status = "budget"
            rec.reason = "zero search left more than half of the starts unresolved"

    def do_kernel(rec):
        rep = stage_kernel(b, cfg)
        path = out / "kernel.json"
        write_json(path, rep.to_json())
        rec.files.append(_record(path))
        if not rep.passed:
            rec.status = "fail"
            rec.reason = ", ".join(c.name for c in rep.checks if c.passed is False)

    def do_estimates(rec):
        newton_path = out / "newton.json"
        if "analyze" not in selected or not newton_path.exists():
            write_json(newton_path, stage_analyze(b))
            rec.files.append(_record(newton_path))
        analysis = json.loads(newton_path.read_text())
        rep, series = stage_estimates(b, cfg, analysis)
        path = out / "estimates.json"
        write_json(path, rep.to_json())
        rec.files.append(_record(path))
        for name, (header, rows) in sorted(series.items()):
            write_csv(out / name, header, rows)
            rec.files.append(_record(out / name))
        if not rep.passed:
            rec.status = "fail"
            rec.reason = ", ".join(c.name for c in rep.checks if c.passed is False)

    runners = {"analyze": do_analyze, "hypotheses": do_hypotheses,
               "verify-kernel": do_kernel, "verify-estimates": do_estimates}
    for name in STAGES:
        if name not in selected:
            continue
        if blocked and name in ("hypotheses", "verify-kernel", "verify-estimates"):
            records.append(StageRecord(name, "skipped", blocked))
            continue
        rec = guarded(name, runners[name])
        if name == "analyze" and rec.status != "pass":
            blocked = "analyze stage failed"
        elif name == "hypotheses":
            if rec.status == "error":
                blocked = "hypotheses stage failed"
            elif rec.status == "hypothesis":
                blocked = "hypothesis screen failed: face zero order >= d(b)"

    statuses = [r.status for r in records]
    if "hypothesis" in statuses:
        code = EXIT_HYPOTHESIS
    elif "budget" in statuses:
        code = EXIT_BUDGET
    elif any(s in ("fail", "error") for s in statuses):
        code = EXIT_CHECK
    else:
        code = EXIT_PASS
    manifest = RunManifest(cfg.hash(), __version__, SCHEMA_VERSION, cfg.to_dict(), records,
                           code == EXIT_PASS, code)
    emit_report(manifest, out)
    return manifest


def emit_report(manifest: RunManifest, out) -> Path:
    """Write the manifest last, after every listed file exists."""
    out = Path(out)
    if not out.is_dir():
        raise OSError(f"output directory {out} does not exist")
    path = out / "manifest.json"
    path.write_text(dumps(manifest))
    return path


def verify_manifest(path) -> bool:
    """True when every file listed in the manifest still matches its checksum."""
    path = Path(path)
    doc = json.loads(path.read_text())
    for stage in doc["stages"]:
        for f in stage["files"]:
            p = path.parent / f["path"]
            if not p.exists() or sha256_file(p) != f["sha256"]:
                return False
    return True
