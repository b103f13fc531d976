"""Command-line driver for config-file benchmarks.

    hamlearn run     --config bench.toml [--seed S] [--trials K] [--out-dir DIR] [--threads P]
    hamlearn bcrb    --config bench.toml [--seed S] [--out-dir DIR]
    hamlearn inspect --config bench.toml [--seed S] [--out-dir DIR]
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import bench
from .errors import InvalidArgumentError
from .smc import write_cloud_csv

log = logging.getLogger("hamlearn")


def _parser():
    parser = argparse.ArgumentParser(prog="hamlearn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="TOML or JSON benchmark config")
        p.add_argument("--seed", type=int, help="override base_seed")
        p.add_argument("--out-dir", default="out", help="directory for CSV output (default: out)")
        p.add_argument("-v", "--verbose", action="store_true")

    run = sub.add_parser("run", help="run the benchmark and write trials/summary/cost CSVs")
    common(run)
    run.add_argument("--trials", type=int, help="override n_trials")
    run.add_argument("--threads", type=int, default=1, help="worker processes (default 1)")

    common(sub.add_parser("bcrb", help="bound along the first-guess heuristic schedule"))
    common(sub.add_parser("inspect", help="dump particle clouds for a single seeded trial"))
    return parser


def _load(args):
    cfg = bench.load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["base_seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        changes["n_trials"] = args.trials
    return cfg.replace(**changes) if changes else cfg


def _run(cfg, args, out):
    result = bench.run_benchmark(cfg, out, workers=args.threads)
    final = result.summary[-1] if result.summary else None
    if final is not None:
        print(
            f"N={final.N} mean_loss={final.mean_loss:.6g} median_loss={final.median_loss:.6g} "
            f"collapsed={final.n_collapsed}"
        )
    print(f"wrote {out / 'trials.csv'}, {out / 'summary.csv'}, {out / 'cost.csv'}")


def _bcrb(cfg, args, out):
    rows = bench.bcrb_schedule(cfg)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "bcrb.csv"
    bench._write_csv(path, bench.bcrb_columns(cfg.build_model()), rows)
    print(f"wrote {path}")


def _inspect(cfg, args, out):
    snapshots = []
    record = bench.run_trial(cfg, 0, snapshots=snapshots)
    target = out / "inspect"
    target.mkdir(parents=True, exist_ok=True)
    for n_exp, cloud in enumerate(snapshots):
        write_cloud_csv(cloud, target / f"cloud_{n_exp:04d}.csv")
    bench.write_trials_csv(target / "trial.csv", [record])
    print(f"wrote {len(snapshots)} cloud snapshots to {target}")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
        out = Path(args.out_dir)
        {"run": _run, "bcrb": _bcrb, "inspect": _inspect}[args.command](cfg, args, out)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (bench.ConfigError, InvalidArgumentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
