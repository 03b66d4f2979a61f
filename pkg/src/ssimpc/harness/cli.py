"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 episode failures present.
"""

import argparse
import logging
import sys

from .config import ConfigError, load_config
from .plots import PLOT_KINDS, emit_plots
from .runner import run_regret, run_scenario

EXIT_OK, EXIT_CONFIG, EXIT_FAILED = 0, 1, 2


def _parser():
    ap = argparse.ArgumentParser(prog="ssimpc", description="Learned-disturbance MPC experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="run the scenario's repeats")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--workers", type=int)

    p = sub.add_parser("sweep", help="run the scenario's (M, eta) grid")
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--workers", type=int)

    p = sub.add_parser("plot", help="write SVG plots from an artifacts directory")
    p.add_argument("--artifacts", required=True)
    p.add_argument("--kinds", default=",".join(PLOT_KINDS))

    p = sub.add_parser("regret", help="paired clairvoyant runs and regret slope fit")
    p.add_argument("--scenario", required=True)
    p.add_argument("--horizons", required=True, help="comma-separated, e.g. 500,1000,2000,4000")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    return ap


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.cmd == "plot":
            kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
            for path in emit_plots(args.artifacts, kinds):
                print(path)
            return EXIT_OK
        cfg = load_config(args.scenario)
        if args.cmd == "regret":
            horizons = [int(h) for h in args.horizons.split(",")]
            d = run_regret(cfg, horizons, out_dir=args.out, seed=args.seed)
            print(f"median exponent {d['median_exponent']} (clairvoyant-mpc proxy), failures {d['failures']}")
            return EXIT_FAILED if d["failures"] else EXIT_OK
        if args.cmd == "sweep" and cfg.sweep is None:
            raise ConfigError("sweep requires a 'sweep' block in the scenario")
        art = run_scenario(cfg, out_dir=args.out, seed=args.seed, workers=args.workers, sweep=args.cmd == "sweep")
        for g in art.digest["groups"]:
            print(f"{g['controller']:16s} M={g['features']:<5d} eta={g['learning_rate']:<8g} "
                  f"cum_sq_err={g['median_cumulative_sq_error']} rmse={g['median_rmse_position']} "
                  f"failures={g['failures']}/{g['repeats']}")
        print(f"artifacts in {art.out_dir}")
        return EXIT_FAILED if art.failures else EXIT_OK
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
