"""Command-line entry point: ``stokesmg {cavity,cylinder,sweep}``."""

import argparse
import os
import sys

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
    common.add_argument("--levels", type=int, dest="n_levels", help="hierarchy depth")
    common.add_argument("--smoother", nargs="+", choices=["mv", "av", "rav"], dest="smoothers")
    common.add_argument("--pre", type=int, dest="n_pre")
    common.add_argument("--post", type=int, dest="n_post")
    common.add_argument("--damping", type=float)
    common.add_argument("--beta", type=float)
    common.add_argument("--eta", type=float)
    common.add_argument("--tol", type=float, dest="reduction_target")
    common.add_argument("--max-iters", type=int, dest="max_iterations")
    common.add_argument("--out", dest="output", help="report path (default: stdout)")
    common.add_argument("--format", choices=["csv", "json"])
    common.add_argument("--vtk", help="write the finest solution as legacy VTK")
    common.add_argument("--deterministic", action="store_true", default=None,
                        help="single-threaded BLAS and no timestamp in the report")

    parser = argparse.ArgumentParser(prog="stokesmg", description="Vanka-smoothed multigrid for stabilized Stokes")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("cavity", parents=[common], help="lid-driven cavity, depths 2..levels")
    sub.add_parser("cylinder", parents=[common], help="channel with cylinder, depths 2..levels")
    sw = sub.add_parser("sweep", parents=[common], help="smoothing-step sweep at the finest depth")
    sw.add_argument("--benchmark", choices=["cavity", "cylinder"], default=None)
    sw.add_argument("--steps", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    return parser


def _config(args):
    from .bench import RunConfig

    data = {}
    if args.config:
        import json

        with open(args.config) as fh:
            data.update(json.load(fh))
    if args.command in ("cavity", "cylinder"):
        data["benchmark"] = args.command
    elif args.benchmark is not None:
        data["benchmark"] = args.benchmark
    else:
        data.setdefault("benchmark", "cylinder")
    for key in ("n_levels", "smoothers", "n_pre", "n_post", "damping", "beta", "eta",
                "reduction_target", "max_iterations", "output", "format", "vtk", "deterministic"):
        value = getattr(args, key)
        if value is not None:
            data[key] = value
    return RunConfig.from_dict(data)


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.deterministic:
        # must happen before numpy loads its BLAS
        for var in _THREAD_VARS:
            os.environ[var] = "1"
    from . import bench

    try:
        cfg = _config(args)
    except (ValueError, TypeError, OSError) as exc:
        print(f"stokesmg: error: {exc}", file=sys.stderr)
        return 2
    if args.command == "sweep":
        report = bench.sweep_smoothing_steps(cfg, args.steps)
    elif cfg.benchmark == "cavity":
        report = bench.run_cavity(cfg)
    else:
        report = bench.run_cylinder(cfg)
    text = bench.emit_report(report, cfg.format, cfg.output)
    if cfg.output is None:
        sys.stdout.write(text)
    else:
        for row in report.rows:
            rho = "-" if row["reduction_factor"] is None else f"{row['reduction_factor']:.3f}"
            print(f"depth {row['depth']} n_dof {row['n_dof']:>7} {row['smoother']:>3} "
                  f"V({row['n_pre']},{row['n_post']}) iters {row['iterations']:>4} rho {rho} "
                  f"total {row['total_s']:.2f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
