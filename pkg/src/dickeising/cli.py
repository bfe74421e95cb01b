"""Command-line entry point.

Verbs: scan (barycentric coupling grid), slice (variance-ratio slices over
chain lengths), trajectory (stochastic homodyne ensemble), analyze (peak
location and scaling exponents from existing slice tables). All verbs read
one YAML config and write deterministic files under the output directory.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .io import load_config
from .scan import (analyze_slices, run_simplex_scan, run_slice,
                   run_trajectory_ensemble)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="YAML configuration file")
    p.add_argument("--output-dir", default=None,
                   help="output directory (default: from config, else '.')")
    p.add_argument("--workers", type=int, default=1,
                   help="worker processes for independent grid rows")
    p.add_argument("--resume", action="store_true",
                   help="reuse finished rows/files instead of recomputing")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dickeising",
        description="MPS engine for an Ising chain coupled to one oscillator mode")
    sub = parser.add_subparsers(dest="command", required=True)

    p_scan = sub.add_parser("scan", help="ground-state scan over h + J + g = 1")
    _add_common(p_scan)

    p_slice = sub.add_parser("slice",
                             help="fixed-(g, J) slices across chain lengths")
    _add_common(p_slice)

    p_traj = sub.add_parser("trajectory", help="homodyne trajectory ensemble")
    _add_common(p_traj)
    p_traj.add_argument("--seed-base", type=int, default=None,
                        help="first trajectory seed (overrides config)")

    p_ana = sub.add_parser("analyze",
                           help="peak locations and scaling exponents")
    p_ana.add_argument("--config", required=True)
    p_ana.add_argument("--output-dir", default=None)
    return parser


def _output_dir(args, cfg: dict) -> Path:
    if args.output_dir is not None:
        return Path(args.output_dir)
    return Path(cfg.get("output", {}).get("directory", "."))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = load_config(args.config)
    out = _output_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    if args.command == "scan":
        path = run_simplex_scan(cfg, out, workers=args.workers,
                                resume=args.resume)
        print(f"wrote {path}")
    elif args.command == "slice":
        for path in run_slice(cfg, out, workers=args.workers,
                              resume=args.resume):
            print(f"wrote {path}")
    elif args.command == "trajectory":
        paths = run_trajectory_ensemble(cfg, out, workers=args.workers,
                                        resume=args.resume,
                                        seed_base=args.seed_base)
        for path in paths:
            print(f"wrote {path}")
    elif args.command == "analyze":
        path = analyze_slices(cfg, out)
        print(f"wrote {path}")
    else:  # pragma: no cover - argparse enforces the choices
        raise SystemExit(2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
