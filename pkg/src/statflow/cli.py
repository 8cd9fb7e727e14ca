"""Command-line front end: ``statflow <subcommand> [options]``.

Exit codes: 0 all monitors pass, 1 monitors failed or experiment invalid,
2 usage or configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, load, resolve

EXIT_OK, EXIT_MONITOR, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML configuration file (defaults apply to missing keys)")
    common.add_argument("--out", type=Path, default=Path("statflow_out"), help="output directory")
    common.add_argument("--workers", type=int, default=1, help="parallel worker processes for ensemble atoms")
    common.add_argument("--seed", type=int, help="override ensemble.seed")
    common.add_argument("--tolerance-profile", choices=("strict", "default"), default="default")

    p = _Parser(prog="statflow", description="Statistical solutions of the barotropic Navier-Stokes system.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("simulate", parents=[common], help="integrate one trajectory and archive it")
    sub.add_parser("ensemble", parents=[common], help="sample and propagate an ensemble")
    d = sub.add_parser("distance", parents=[common], help="energy transport distance between two ensemble archives")
    d.add_argument("manifest_a", type=Path)
    d.add_argument("manifest_b", type=Path)
    sub.add_parser("continuity", parents=[common], help="stability of the pushforward under data perturbations")
    sub.add_parser("select", parents=[common], help="select the most dissipative candidate trajectory")
    sub.add_parser("verify", parents=[common], help="run the quick invariant suite")
    return p


def _config(args) -> dict:
    cfg = load(args.config) if args.config else resolve({})
    if args.seed is not None:
        cfg["ensemble"]["seed"] = int(args.seed)
    return cfg


def _report(name: str, summary: dict) -> int:
    status = "PASS" if summary["passed"] else "FAIL"
    print(f"{name}: {status}")
    return EXIT_OK if summary["passed"] else EXIT_MONITOR


def main(argv=None) -> int:
    from . import experiments
    from .verify import run_verify

    args = build_parser().parse_args(argv)
    if args.workers < 1:
        print("statflow: error: --workers must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = _config(args)
    except ConfigError as exc:
        print(f"statflow: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"statflow: cannot read config: {exc}", file=sys.stderr)
        return EXIT_USAGE

    prof = args.tolerance_profile
    try:
        if args.command == "simulate":
            s = experiments.run_simulate(cfg, args.out, prof)
            m = s["monitors"]
            print(f"mass residual {m['mass_residual']:.3e} (tol {m['mass_tolerance']:.1e}), "
                  f"energy residual {m['energy_residual']:.3e} (tol {m['energy_tolerance']:.1e})")
        elif args.command == "ensemble":
            s = experiments.run_ensemble(cfg, args.out, args.workers, prof)
        elif args.command == "distance":
            try:
                s = experiments.run_distance(cfg, args.manifest_a, args.manifest_b, args.out)
            except (ValueError, FileNotFoundError) as exc:
                print(f"statflow: incompatible inputs: {exc}", file=sys.stderr)
                return EXIT_USAGE
            for k in ("A->B", "B->A"):
                print(f"W_E({k}) = {s[k]['value']!r}")
        elif args.command == "continuity":
            s = experiments.run_continuity(cfg, args.out, args.workers)
            if not s["passed"]:
                lo, hi = s["reference_range"]
                print(f"invalid experiment: density range [{lo:.4g}, {hi:.4g}] leaves the band {s['band']}",
                      file=sys.stderr)
        elif args.command == "select":
            s = experiments.run_select(cfg, args.out, args.workers)
            print(f"selected {s['selected_id']}")
        else:
            s = run_verify(cfg, args.out, prof)
        return _report(args.command, s)
    except ConfigError as exc:
        print(f"statflow: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - any solver or I/O failure maps to the runtime exit code
        print(f"statflow: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
