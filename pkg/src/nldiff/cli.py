"""Batch front end: config-driven convergence studies and verification.

Exit codes: 0 success, 2 acceptance-band or verification failure,
1 runtime or configuration error.  Flags override the JSON config which
overrides the defaults.  NLN_THREADS caps assembly parallelism.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

from . import harness
from .quadrature import QuadratureConfig
from .solver import Method

_DEFAULTS = {
    "case": "T1_Square",
    "ratio": 4.0,
    "h_levels": [2.0**-3, 2.0**-4, 2.0**-5, 2.0**-6],
    "solver_tol": 1e-11,
    "gauss_order": 24,
    "contour_gauss_order": 32,
    "rel_tol": 1e-10,
    "output_dir": ".",
    "method": None,
}


def _parse_h(token) -> float:
    if isinstance(token, (int, float)):
        return float(token)
    token = token.strip()
    if "^" in token:
        base, exp = token.split("^")
        return float(base) ** float(exp)
    return float(token)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ValueError(f"config {path}: expected a JSON object")
    quad = cfg.pop("quadrature", {})
    if not isinstance(quad, dict):
        raise ValueError(f"config {path}: quadrature must be an object")
    cfg.update(quad)
    unknown = set(cfg) - set(_DEFAULTS)
    if unknown:
        raise ValueError(f"config {path}: unknown fields {sorted(unknown)}")
    return cfg


def _settings(args) -> dict:
    cfg = dict(_DEFAULTS)
    cfg.update(_load_config(args.config))
    for key in ("case", "ratio", "solver_tol", "gauss_order",
                "contour_gauss_order", "output_dir"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if getattr(args, "h_levels", None):
        cfg["h_levels"] = args.h_levels
    cfg["ratio"] = float(cfg["ratio"])
    cfg["h_levels"] = [_parse_h(t) for t in cfg["h_levels"]]
    if cfg["case"] not in harness.CASES:
        raise ValueError(f"unknown case {cfg['case']!r}; "
                         f"shipped: {sorted(harness.CASES)}")
    if not (2.0 < cfg["ratio"] <= 8.0):
        raise ValueError("ratio must lie in (2, 8]")
    for h in cfg["h_levels"]:
        if abs(math.log2(h) - round(math.log2(h))) > 1e-12:
            raise ValueError(f"h level {h} is not dyadic")
    return cfg


def _ratio_token(ratio: float) -> str:
    return f"{ratio:g}"


def cmd_converge(args) -> int:
    try:
        cfg = _settings(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out_dir = Path(cfg["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{cfg['case']}_r{_ratio_token(cfg['ratio'])}.csv"
    json_path = out_dir / "summary.json"
    written = []
    try:
        quad = QuadratureConfig(cfg["gauss_order"], cfg["rel_tol"],
                                cfg["contour_gauss_order"])
        threads = int(os.environ.get("NLN_THREADS", "1"))
        report = harness.run_convergence(
            cfg["case"], cfg["ratio"], cfg["h_levels"], quad,
            solver_tol=cfg["solver_tol"], threads=threads,
        )
        csv_path.write_text(report.to_csv_text())
        written.append(csv_path)
        summary = report.summary()
        json_path.write_text(json.dumps(summary, indent=2) + "\n")
        written.append(json_path)
    except Exception as exc:
        for path in written:
            path.unlink(missing_ok=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(report.to_csv_text(), end="")
    if not summary["pass"]:
        for note in summary["notes"]:
            print(f"band failure: {note}", file=sys.stderr)
        return 2
    return 0


def cmd_verify(args) -> int:
    try:
        checks = harness.run_verification_suite(seeded_fault=args.seeded_fault)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}")
    if args.out is not None:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "verify.json").write_text(harness.suite_to_json(checks))
    return 0 if all(c.passed for c in checks) else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nldiff",
        description="Nonlocal diffusion solver with flux volume constraints",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    conv = sub.add_parser("converge", help="run a manufactured convergence sweep")
    conv.add_argument("--config", help="JSON config file")
    conv.add_argument("--case", help="case name, e.g. T1_Square")
    conv.add_argument("--ratio", type=float, help="delta/h ratio in (2, 8]")
    conv.add_argument("--h-levels", dest="h_levels", nargs="+",
                      help="dyadic levels, e.g. 2^-3 2^-4 or 0.125 0.0625")
    conv.add_argument("--out", dest="output_dir", help="output directory")
    conv.add_argument("--solver-tol", dest="solver_tol", type=float)
    conv.add_argument("--gauss-order", dest="gauss_order", type=int)
    conv.add_argument("--contour-gauss-order", dest="contour_gauss_order", type=int)
    conv.set_defaults(func=cmd_converge)

    ver = sub.add_parser("verify", help="run the property verification suite")
    ver.add_argument("--seeded-fault", action="store_true",
                     help="internal hook: break the kernel moment on purpose")
    ver.add_argument("--out", help="directory for verify.json")
    ver.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
