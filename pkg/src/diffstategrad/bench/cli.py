"""Command line entry point: ``bench run|ablate|prop1 <config>``.

Output goes to ``--out`` if given, else to the config's ``output`` key, else
to ``$DIFFSTATEGRAD_OUT/<name>_<command>.csv`` (current directory when the
variable is unset).
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import config as cfgmod
from .runner import OUTPUT_ENV, run_experiment, run_prop1, subspace_ablation, summarize

log = logging.getLogger("diffstategrad.bench")


def parse_seeds(text: str) -> tuple:
    """``"0..19"``, ``"1 2 3"`` or ``"1,2,3"``."""
    value = cfgmod.parse_value(text.replace(",", " "))
    return tuple(int(v) for v in cfgmod.as_tuple(value))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bench", description=__doc__.splitlines()[0],
                                 epilog=f"default output directory: ${OUTPUT_ENV}")
    ap.add_argument("command", choices=("run", "ablate", "prop1"))
    ap.add_argument("config", help="experiment config file")
    ap.add_argument("--seeds", type=parse_seeds, help="override seeds, e.g. 0..19")
    ap.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    ap.add_argument("--out", help="output CSV path")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = cfgmod.load(args.config)
        if args.seeds is not None:
            cfg = cfg.replace(seeds=args.seeds)
        if args.command == "prop1":
            path, rows = run_prop1(cfg, args.out)
            print(f"wrote {len(rows)} rows to {path}")
            return 0
        runner = run_experiment if args.command == "run" else subspace_ablation
        path, rows = runner(cfg, args.out, workers=args.workers)
    except (OSError, cfgmod.ConfigError) as exc:
        print(f"bench: error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {len(rows)} rows to {path}")
    for arm, value in summarize(rows).items():
        print(f"  {arm:>10s}  mean nmse {value:.6g}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
