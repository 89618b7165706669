"""Command-line entry point.

Subcommands: train, benchmark, rps-dist, sched, verify.  Exit codes: 0 on
success, 2 on configuration errors, 3 on runtime failures.
"""

import argparse
import os
import sys

from .errors import ConfigError, FluidbeamError
from . import experiments


def _add_common(sub):
    sub.add_argument("--config", help="INI-style config file")
    sub.add_argument("--seed", type=int, help="master seed (overrides config)")
    sub.add_argument("--preset", choices=("paper", "desk"), default="desk",
                     help="default scale: full-size or reduced for quick runs")
    sub.add_argument("--out", help="output directory (default: runs)")
    sub.add_argument("--models", help="directory of per-cell model files")
    sub.add_argument("--set", dest="sets", action="append", default=[],
                     metavar="SECTION.KEY=VALUE", help="override one config value")
    sub.add_argument("--no-plots", action="store_true",
                     help="write CSV reports only, skip figures")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fluidbeam",
        description="Fluid-antenna multi-cell downlink: GNN beamforming, "
                    "port selection, and accelerator latency reports.")
    subs = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("train", "train per-cell GNN beamformers and save model files"),
            ("benchmark", "compare schemes' weighted sum rate over channel draws"),
            ("rps-dist", "distribution of best-of-T random port selection"),
            ("sched", "accelerator latency schedule across task counts"),
            ("verify", "recompute WSRs from a benchmark verify log")):
        sub = subs.add_parser(name, help=help_text)
        _add_common(sub)
        if name == "verify":
            sub.add_argument("--log", help="verify log CSV (default: <out>/verify_log.csv)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        spec = experiments.build_spec(
            config_path=args.config, preset=args.preset, seed=args.seed,
            out=args.out, models=args.models, sets=args.sets,
            make_plots=not args.no_plots)
        os.makedirs(spec.out_dir, exist_ok=True)
        if args.command == "train":
            _, history = experiments.run_train(spec)
            last = history[-1]
            print(f"trained {spec.network.num_cells} cells for {len(history)} epochs; "
                  f"final train WSR {last.train_wsr:.4f}, eval WSR {last.eval_wsr:.4f}")
            print(f"models in {spec.resolved_models_dir()}, history in {spec.out_dir}")
        elif args.command == "benchmark":
            rows = experiments.run_benchmark(spec)
            for row in rows:
                print(f"{row[0]}={row[1]} {row[2]}: mean WSR {row[4]:.4f} "
                      f"(std {row[5]:.4f}, {row[3]} draws)")
            print(f"reports in {spec.out_dir}")
        elif args.command == "rps-dist":
            rows = experiments.run_rps_distribution(spec)
            counts = sorted({r[0] for r in rows})
            for t in counts:
                vals = [r[2] for r in rows if r[0] == t]
                print(f"best-of-{t}: mean WSR {sum(vals) / len(vals):.4f} "
                      f"over {len(vals)} draws")
            print(f"reports in {spec.out_dir}")
        elif args.command == "sched":
            reports, flip = experiments.run_sched(spec)
            for rep in reports:
                print(f"B={rep.task_count}: {rep.total_cycles} cycles "
                      f"({rep.total_ns / 1000.0:.2f} us), {rep.bound}-bound"
                      + (", spilled" if rep.spill else ""))
            if flip is not None:
                print(f"becomes compute-bound at B={flip}")
            print(f"reports in {spec.out_dir}")
        elif args.command == "verify":
            log_path = args.log or os.path.join(spec.out_dir, "verify_log.csv")
            if not os.path.exists(log_path):
                raise ConfigError(f"verify log not found: {log_path}")
            ok, results = experiments.verify_log(spec, log_path)
            bad = [r for r in results if not r[4]]
            print(f"checked {len(results)} logged results: "
                  f"{len(results) - len(bad)} ok, {len(bad)} mismatched")
            for idx, scheme, logged, recomputed, _ in bad[:10]:
                print(f"  row {idx} ({scheme}): logged {logged!r}, "
                      f"recomputed {recomputed!r}")
            if not ok:
                return 3
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (FluidbeamError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
