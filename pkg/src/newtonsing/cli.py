"""Command-line entry point: newtonsing {analyze,hypotheses,verify-kernel,verify-estimates,run}."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .pipeline import ALL_CHECKS, EXIT_USAGE, ConfigError, RunConfig, run_pipeline
from .report import dumps

STAGE_OF = {
    "analyze": ("analyze",),
    "hypotheses": ("hypotheses",),
    "verify-kernel": ("verify-kernel",),
    "verify-estimates": ("verify-estimates",),
    "run": None,
}


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON document with RunConfig fields")
    common.add_argument("--poly", help='polynomial, e.g. "x1^2*x2 + x2^3"')
    common.add_argument("--nvars", type=int)
    common.add_argument("--radius", type=float, dest="R", help="cutoff radius R")
    common.add_argument("--L", type=_int_list, dest="L_list", help="truncation levels, e.g. 8,12,16")
    common.add_argument("--pairing-L", type=int, dest="pairing_L")
    common.add_argument("--operator-L", type=_int_list, dest="operator_L")
    common.add_argument("--grid", type=int, dest="grid_density", help="grid density for derivative bounds")
    common.add_argument("--seed", type=int)
    common.add_argument("--samples", type=json.loads, help='JSON object, e.g. {"sublevel": 200000}')
    common.add_argument("--tolerances", type=json.loads, help="JSON object of tolerance overrides")
    common.add_argument("--out-dir", "--out", dest="output_dir", help="output directory")
    common.add_argument("--quiet", action="store_true", help="do not print the manifest")

    p = argparse.ArgumentParser(prog="newtonsing", description="Newton polyhedron analysis and kernel checks")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("analyze", parents=[common], help="Newton polyhedron, delta0 and multiplicity")
    sub.add_parser("hypotheses", parents=[common], help="screen face polynomials for high-order zeros")
    sub.add_parser("verify-kernel", parents=[common], help="piece bounds, cancellation and pairing")
    est = sub.add_parser("verify-estimates", parents=[common], help="sublevel, Fourier and operator checks")
    run = sub.add_parser("run", parents=[common], help="all stages in order")
    for sp in (est, run):
        sp.add_argument("--checks", type=lambda s: [c for c in s.replace(",", " ").split() if c],
                        help=f"subset of {','.join(ALL_CHECKS)}")
    return p


def config_from_args(args: argparse.Namespace) -> RunConfig:
    doc: dict = {}
    if args.config is not None:
        try:
            doc = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
    for key in ("poly", "nvars", "R", "L_list", "pairing_L", "operator_L", "grid_density", "seed",
                "output_dir", "checks"):
        v = getattr(args, key, None)
        if v is not None:
            doc[key] = v
    for key in ("samples", "tolerances"):
        v = getattr(args, key)
        if v is not None:
            doc[key] = {**doc.get(key, {}), **v}
    if "poly" not in doc:
        raise ConfigError("a polynomial is required (--poly or 'poly' in --config)")
    return RunConfig.from_dict(doc)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        manifest = run_pipeline(cfg, STAGE_OF[args.command])
    except (ConfigError, TypeError) as exc:
        print(f"newtonsing: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if not args.quiet:
        sys.stdout.write(dumps(manifest))
    for st in manifest.stages:
        if st.status not in ("pass",):
            print(f"{st.name}: {st.status}: {(st.reason or '').splitlines()[0] if st.reason else ''}",
                  file=sys.stderr)
    return manifest.exit_code


if __name__ == "__main__":
    sys.exit(main())
