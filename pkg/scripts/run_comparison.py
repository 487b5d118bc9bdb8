"""Tune both GA variants and tabulate all four controllers on the default step.

    python scripts/run_comparison.py [--out DIR] [--seed N] [--workers K]

Equivalent to ``scopectl compare configs/compare.cfg`` but with a worker
pool option and wall-clock timing per controller.
"""

import argparse
import logging
import time
from dataclasses import replace
from pathlib import Path

from scopectl.harness import _resolve, _write_run, load_config
from scopectl.metrics import format_comparison, write_comparison_csv

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "compare.cfg")
    ap.add_argument("--out", type=Path, default=ROOT / "out" / "comparison")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    cfg = load_config(args.config, "compare")
    cfg.ga = replace(cfg.ga, workers=args.workers, **({"seed": args.seed} if args.seed is not None else {}))
    results = {}
    for spec in cfg.controllers:
        start = time.perf_counter()
        res = _resolve(spec, cfg)
        print(f"{res.name:7s} {time.perf_counter() - start:7.1f} s", flush=True)
        _write_run(res, spec, args.out / spec.kind)
        results[res.name] = res.metrics
    write_comparison_csv(results, args.out / "comparison.csv")
    print()
    print(format_comparison(results))


if __name__ == "__main__":
    main()
