"""Command line entry point: ``codesign run | grid-search | synth-data | plot-data``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .baselines import grid_search_design
from .config import SCENARIOS, ConfigError, load_config
from .data import DataError, make_split, synthesize_year, write_year_csv
from .experiment import build_env, run_experiment, run_seed_sweep

# overrides the output directory of every subcommand (nothing else)
OUT_ENV = "CODESIGN_OUT"

log = logging.getLogger("codesign")


def _out_path(given: str) -> Path:
    """``given`` with its directory swapped for $CODESIGN_OUT when that is set."""
    p = Path(given)
    root = os.environ.get(OUT_ENV)
    return p if not root else Path(root) / p.name


def _out_dir(given: str) -> Path:
    root = os.environ.get(OUT_ENV)
    return Path(root) if root else Path(given)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.scenario:
        cfg = cfg.replace(scenario=args.scenario)
    out = _out_dir(args.out)
    env = build_env(cfg)

    def progress(rec):
        if rec["iteration"] % 10 == 0 or rec["iteration"] == cfg.iterations - 1:
            log.info("iter %d  weekly %.2f  validation %.2f", rec["iteration"],
                     rec["weekly_mean"], rec["validation_mean"])

    if args.seed is not None:
        run_experiment(cfg, args.seed, out / f"seed_{args.seed}", env=env, progress=progress)
        print(f"wrote {out / f'seed_{args.seed}'}")
        return 0
    res = run_seed_sweep(cfg, out, env=env, progress=progress)
    print(f"wrote {out} ({len(res['per_seed'])} seeds, {len(res['failures'])} failed)")
    return 1 if res["failures"] else 0


def cmd_grid_search(args) -> int:
    from .plotting import grid_heatmap

    cfg = load_config(args.config)
    env = build_env(cfg)
    res = grid_search_design(env, episodes=args.episodes, seed=args.seed)
    path = res.write_csv(_out_path(args.out))
    png = grid_heatmap(res, path.with_suffix(".png"))
    pv, b = res.best
    print(f"best design pv={pv:g} kWp battery={b:g} kWh mean={res.mean[res.best_index]:.3f}")
    print(f"wrote {path} and {png}")
    return 0


def cmd_synth_data(args) -> int:
    from .plotting import dataset_overview

    series = synthesize_year(args.seed)
    path = write_year_csv(series, _out_path(args.out))
    png = dataset_overview(series, make_split(series, 0), path.with_suffix(".png"))
    print(f"wrote {path} and {png}")
    return 0


def cmd_plot_data(args) -> int:
    from .plotting import plot_sweeps

    paths = plot_sweeps(args.inp, _out_dir(args.out))
    for p in paths:
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="codesign", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train one seed or sweep the config's seeds")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--scenario", choices=SCENARIOS, default=None)
    p.add_argument("--out", default="runs")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("grid-search", help="rule-based design grid search")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--episodes", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_grid_search)

    p = sub.add_parser("synth-data", help="write a synthetic year CSV")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("plot-data", help="figure CSVs and PNGs from run directories")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot_data)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DataError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
