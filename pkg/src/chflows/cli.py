"""Command-line entry point: ``chflows run | verify | info``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import PRESETS, load_config, preset_config
from .experiment import run_experiment, source_digest
from .verification import SUITES, run_suite


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chflows", description=__doc__)
    sub = ap.add_subparsers(dest="verb", required=True)

    run = sub.add_parser("run", help="solve a configured problem and write artifacts")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", type=Path, help="INI experiment file")
    src.add_argument("--preset", choices=sorted({n for n, _ in PRESETS}), help="built-in experiment")
    run.add_argument("--scale", choices=["reduced", "full"], default="reduced", help="grid size for --preset")
    run.add_argument("--out", type=Path, required=True, help="output directory")
    run.add_argument("--log-domain", choices=["auto", "on", "off"])
    run.add_argument("--seed", type=_seed)
    run.add_argument("-v", "--verbose", action="store_true", help="echo solver progress to stderr")

    ver = sub.add_parser("verify", help="run self-check suites")
    ver.add_argument("--suite", choices=sorted(SUITES) + ["all"], default="all")
    ver.add_argument("--seed", type=_seed, default=0)

    info = sub.add_parser("info", help="show versions, presets or a resolved config")
    info.add_argument("--config", type=Path)
    return ap


def _cmd_run(args) -> int:
    cfg = load_config(args.config) if args.config else preset_config(args.preset, args.scale)
    over = {}
    if args.log_domain:
        over["log_domain"] = args.log_domain
    if args.seed is not None:
        over["seed"] = args.seed
    if over:
        cfg = cfg.with_overrides(**over)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    res = run_experiment(cfg, args.out)
    rep = res.report
    if rep is not None:
        print(
            f"sweeps={rep.iterations} violation={rep.final_violation:.3e} "
            f"converged={rep.converged} time={rep.wall_time:.2f}s"
        )
    if res.determinism:
        for k, v in res.determinism.items():
            print(f"k={k} determinism_index={v:.4f}")
    if res.message:
        print(res.message, file=sys.stderr)
    print(f"artifacts in {args.out}")
    return res.status


def _cmd_verify(args) -> int:
    checks = run_suite(args.suite, args.seed)
    for c in checks:
        print(c.line())
    failed = [f"{c.suite}.{c.name}" for c in checks if not c.passed]
    print(json.dumps({"suite": args.suite, "seed": args.seed, "passed": len(checks) - len(failed), "failed": failed}))
    return 1 if failed else 0


def _cmd_info(args) -> int:
    import scipy

    print(f"numpy {np.__version__}, scipy {scipy.__version__}")
    print(f"source sha256 {source_digest()}")
    if args.config:
        cfg = load_config(args.config)
        print(cfg.to_ini())
        n = cfg.nx * cfg.nr
        print(f"nodes N = {n}, kernel memory ~ {2 * 8 * n * n / 2**20:.1f} MiB")
        return 0
    print("presets (name, scale): nx nr r_lo r_hi K eps; alpha = 40, T = 1")
    for (name, scale), p in sorted(PRESETS.items()):
        print(f"  {name:10s} {scale:7s} {p['nx']} {p['nr']} {p['r_lo']} {p['r_hi']} {p['K']} {p['eps']}")
    print(f"verification suites: {', '.join(sorted(SUITES))}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return {"run": _cmd_run, "verify": _cmd_verify, "info": _cmd_info}[args.verb](args)


if __name__ == "__main__":
    sys.exit(main())
