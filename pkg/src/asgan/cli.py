"""Command-line entry point: ``asgan {train,sweep,theory-check,gradcheck,report}``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from typing import List, Optional

from . import __version__
from . import runner as R

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_COLLAPSE = 3
EXIT_FAILED = 4


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", "-c", help="flat key=value config file")
    p.add_argument("--set", "-s", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key (repeatable)")
    p.add_argument("--out", "-o", help=f"output directory (else ${R.OUTPUT_ENV}, else run.output_dir)")
    p.add_argument("--workers", "-j", type=int, help="concurrent runs")
    p.add_argument("--seed", type=int, action="append", help="seed override (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="asgan", description="Adversarially trained discriminator GAN lab")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("train", help="train every configured seed")
    _common(p)
    p = sub.add_parser("sweep", help="run a sweep over one axis with shared seeds")
    _common(p)
    p = sub.add_parser("theory-check", help="expansion-residual check on a saved discriminator")
    _common(p)
    p.add_argument("--checkpoint", help="discriminator checkpoint (else theory.checkpoint)")
    p = sub.add_parser("gradcheck", help="finite-difference check of the G and D architectures")
    _common(p)
    p.add_argument("--sabotage", action="store_true", help="use a tanh with a corrupted adjoint")
    p = sub.add_parser("report", help="print a table from a run, sweep or theory directory")
    p.add_argument("path")
    return ap


def _load(args) -> R.ExperimentConfig:
    cfg = R.load_config(args.config, args.set)
    run = cfg.run
    if args.workers is not None:
        run = replace(run, workers=args.workers)
    if args.seed:
        run = replace(run, seeds=tuple(args.seed))
    cfg = replace(cfg, run=run)
    R.validate(cfg)
    return cfg


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.verb == "report":
            print(R.report(args.path))
            return EXIT_OK
        cfg = _load(args)
        if args.verb == "train":
            summary = R.run(cfg, args.out)
            print(f"{summary['n_ok']} seed(s) ok, {summary['n_collapsed']} collapsed")
            return EXIT_COLLAPSE if summary["n_collapsed"] else EXIT_OK
        if args.verb == "sweep":
            table = R.sweep(cfg, args.out)
            for row in table["rows"]:
                print(f"{table['axis']}={row['value']}: median final mmd2 {row['median_final_mmd2']:.4g}, "
                      f"frechet {row['median_final_frechet2d']:.4g}, overhead {row['overhead']:.3f}")
            return EXIT_COLLAPSE if any(r["n_ok"] < len(cfg.run.seeds) for r in table["rows"]) else EXIT_OK
        if args.verb == "theory-check":
            rep = R.theory_check(cfg, args.checkpoint, args.out)
            ok = all(s["quadratic_window"] for s in rep["sweeps"])
            for s in rep["sweeps"]:
                print(f"p={s['p']} q={s['q']} residual_ratio={s['residual_ratio']} "
                      f"window={'ok' if s['quadratic_window'] else 'violated'}")
            return EXIT_OK if ok else EXIT_FAILED
        if args.verb == "gradcheck":
            rep = R.gradcheck_report(args.seed[0] if args.seed else 0, args.sabotage, cfg)
            for name, net in rep["nets"].items():
                worst = ", ".join(f"{e:.2e}" for e in net["layer_max_rel_error"])
                print(f"{name}: per-layer max rel error [{worst}] -> "
                      f"{'pass' if net['passed'] else 'FAIL'}")
            if args.out:
                from pathlib import Path
                Path(args.out).mkdir(parents=True, exist_ok=True)
                (Path(args.out) / "gradcheck.json").write_text(json.dumps(rep, indent=2) + "\n")
            return EXIT_OK if rep["passed"] else EXIT_FAILED
    except R.ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
