"""Batch command line interface.

Subcommands: ``coverage``, ``estimate``, ``equivalence``, ``qq``,
``realdata``. Options come from flags or a JSON config file (flags win).
Each run writes a CSV into the output directory and prints a one-line JSON
summary with stable key order to standard output. Exit codes: 0 success,
2 configuration error, 3 numerical failure.
"""

import argparse
import json
import os
import sys

from . import bench
from .errors import NumericalError

_DESK_N = 500
_DESK_TRIALS = 100
_FULL_N = 1000
_FULL_TRIALS = 200

_CONFIG_KEYS = {
    "n", "r", "p", "sigma", "trials", "alpha", "lambda", "seed", "estimator",
    "threads", "target", "stat", "i", "j", "input", "format", "p_grid",
}


def _float_list(text):
    try:
        values = [float(tok) for tok in str(text).split(",") if tok != ""]
    except ValueError:
        raise argparse.ArgumentTypeError("expected a comma-separated list of numbers")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _add_common(sp):
    sp.add_argument("--config", help="JSON config file; explicit flags override it")
    sp.add_argument("--n", type=int, help="matrix dimension (default 1000, desk 500)")
    sp.add_argument("--r", type=int, help="rank")
    sp.add_argument("--p", type=float, help="sampling probability")
    sp.add_argument("--trials", type=int, help="Monte Carlo trials (default 200, desk 100)")
    sp.add_argument("--alpha", type=float, help="CI level complement (default 0.05)")
    sp.add_argument("--lambda", dest="lam", type=float, help="explicit regularization value")
    sp.add_argument("--seed", type=int, help="master seed (default 0)")
    sp.add_argument("--estimator", choices=["convex", "nonconvex"], help="base estimator")
    sp.add_argument("--threads", type=int, help="worker threads (default MCUQ_THREADS or CPUs)")
    sp.add_argument("--out", default=".", help="output directory (default current)")
    sp.add_argument("--desk", action="store_true", help="desk preset: n=500, trials=100")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="mcuq",
        description="Noisy low-rank matrix completion benchmarks with "
        "entrywise confidence intervals",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("coverage", help="Monte Carlo CI coverage study")
    _add_common(sp)
    sp.add_argument("--sigma", type=float, help="noise standard deviation")
    sp.add_argument("--target", choices=["entry", "factor"], help="estimand (default entry)")

    sp = sub.add_parser("estimate", help="estimation-error sweep over sigma")
    _add_common(sp)
    sp.add_argument("--sigma", type=_float_list, help="comma-separated noise levels")

    sp = sub.add_parser("equivalence", help="de-biased estimator equivalence gaps")
    _add_common(sp)
    sp.add_argument("--sigma", type=_float_list, help="comma-separated noise levels")

    sp = sub.add_parser("qq", help="export studentized statistics vs normal quantiles")
    _add_common(sp)
    sp.add_argument("--sigma", type=float, help="noise standard deviation")
    sp.add_argument("--stat", choices=["entry", "factor"], help="statistic kind (default entry)")
    sp.add_argument("--i", type=int, help="row index (default 0)")
    sp.add_argument("--j", type=int, help="column index (default 1)")

    sp = sub.add_parser("realdata", help="held-out evaluation on a matrix file")
    _add_common(sp)
    sp.add_argument("--input", help="dense CSV or triplet file")
    sp.add_argument("--format", dest="fmt", choices=["dense", "triplets"],
                    help="input format (default dense)")
    sp.add_argument("--sigma", type=float, help="noise scale for intervals and lambda")
    sp.add_argument("--p-grid", dest="p_grid", type=_float_list,
                    help="comma-separated sampling rates")

    return parser


class _Options:
    """Merged option lookup: flag, then config file, then defaults."""

    def __init__(self, args, parser):
        self._args = args
        self._parser = parser
        self._cfg = {}
        if getattr(args, "config", None):
            try:
                with open(args.config) as fh:
                    self._cfg = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                parser.error("cannot read config file: %s" % exc)
            if not isinstance(self._cfg, dict):
                parser.error("config file must contain a JSON object")
            unknown = set(self._cfg) - _CONFIG_KEYS
            if unknown:
                parser.error("unknown config keys: %s" % ", ".join(sorted(unknown)))

    def get(self, name, default=None, required=False, json_key=None):
        value = getattr(self._args, name, None)
        if value is None:
            value = self._cfg.get(json_key or name)
        if value is None:
            value = default
        if value is None and required:
            self._parser.error("missing required option --%s" % (json_key or name).replace("_", "-"))
        return value

    def scale(self, name):
        # n and trials honor the --desk preset when not given explicitly.
        desk = {"n": _DESK_N, "trials": _DESK_TRIALS}
        full = {"n": _FULL_N, "trials": _FULL_TRIALS}
        default = desk[name] if getattr(self._args, "desk", False) else full[name]
        return self.get(name, default=default)


def _experiment_config(opt):
    return bench.ExperimentConfig(
        n=int(opt.scale("n")),
        r=int(opt.get("r", required=True)),
        p=float(opt.get("p", required=True)),
        sigma=opt.get("sigma", required=True),
        trials=int(opt.scale("trials")),
        alpha=float(opt.get("alpha", default=0.05)),
        lambda_rule=opt.get("lam", json_key="lambda"),
        seed=int(opt.get("seed", default=0)),
        estimator=opt.get("estimator", default="convex"),
        threads=opt.get("threads"),
    )


def _config_echo(config):
    sigma = config.sigmas
    return {
        "n": config.n,
        "r": config.r,
        "p": config.p,
        "sigma": sigma[0] if len(sigma) == 1 else list(sigma),
        "trials": config.trials,
        "alpha": config.alpha,
        "lambda": config.lambda_rule,
        "seed": config.seed,
        "estimator": config.estimator,
    }


def _out_path(opt, filename):
    out = opt.get("out", default=".")
    os.makedirs(out, exist_ok=True)
    return os.path.join(out, filename)


def _cmd_coverage(opt):
    config = _experiment_config(opt)
    target = opt.get("target", default="entry")
    report = bench.run_coverage(config, target=target)
    path = _out_path(opt, "coverage.csv")
    bench.write_coverage_csv(report, path)
    summary = _config_echo(config)
    summary.update(
        command="coverage",
        target=target,
        mean_coverage=report.mean_coverage,
        std_coverage=report.std_coverage,
        mean_ci_length=report.mean_ci_length,
        failures=report.failures,
        wall_time_s=round(report.wall_time, 3),
        csv=path,
    )
    return summary


def _cmd_estimate(opt):
    config = _experiment_config(opt)
    rows = bench.run_estimation(config)
    path = _out_path(opt, "estimation.csv")
    bench.write_estimation_csv(rows, path)
    summary = _config_echo(config)
    summary.update(
        command="estimate",
        rows=[
            {
                "sigma": row.sigma,
                "err_fro_estimate": row.err_fro_estimate,
                "err_fro_debiased": row.err_fro_debiased,
                "oracle_fro": row.oracle_fro,
            }
            for row in rows
        ],
        csv=path,
    )
    return summary


def _cmd_equivalence(opt):
    config = _experiment_config(opt)
    rows = bench.run_equivalence(config)
    path = _out_path(opt, "equivalence.csv")
    bench.write_equivalence_csv(rows, path)
    summary = _config_echo(config)
    summary.update(
        command="equivalence",
        max_norm_gap=max(row.max_norm_gap for row in rows),
        csv=path,
    )
    return summary


def _cmd_qq(opt):
    config = _experiment_config(opt)
    kind = opt.get("stat", default="entry")
    i = int(opt.get("i", default=0))
    j = int(opt.get("j", default=1))
    samples = bench.run_statistic_samples(config, kind, i, j)
    path = _out_path(opt, "qq.csv")
    ks = bench.export_qq(samples, path)
    summary = _config_echo(config)
    summary.update(command="qq", stat=kind, i=i, j=j, ks=ks, n_samples=len(samples), csv=path)
    return summary


def _cmd_realdata(opt):
    path_in = opt.get("input", required=True)
    fmt = opt.get("fmt", default="dense", json_key="format")
    sigma = opt.get("sigma", required=True)
    p_grid = opt.get("p_grid", required=True)
    if isinstance(p_grid, (int, float)):
        p_grid = [float(p_grid)]
    try:
        M, _ = bench._load_matrix(path_in, fmt)
    except OSError as exc:
        raise ValueError("cannot read input file: %s" % exc)
    config = bench.ExperimentConfig(
        n=min(M.shape),
        r=int(opt.get("r", required=True)),
        p=min(1.0, float(max(p_grid))),
        sigma=float(sigma),
        trials=int(opt.get("trials", default=20)),
        alpha=float(opt.get("alpha", default=0.05)),
        lambda_rule=opt.get("lam", json_key="lambda"),
        seed=int(opt.get("seed", default=0)),
        estimator=opt.get("estimator", default="convex"),
        threads=opt.get("threads"),
    )
    rows = bench.run_real_data(path_in, p_grid, float(sigma), config, fmt=fmt)
    path = _out_path(opt, "realdata.csv")
    bench.write_realdata_csv(rows, path)
    return {
        "command": "realdata",
        "input": path_in,
        "format": fmt,
        "r": config.r,
        "sigma": float(sigma),
        "trials": config.trials,
        "alpha": config.alpha,
        "seed": config.seed,
        "estimator": config.estimator,
        "p_grid": [row.p for row in rows],
        "coverage": [row.coverage for row in rows],
        "evaluation": "held-out observed entries; prediction variance v_ij + sigma^2",
        "csv": path,
    }


_COMMANDS = {
    "coverage": _cmd_coverage,
    "estimate": _cmd_estimate,
    "equivalence": _cmd_equivalence,
    "qq": _cmd_qq,
    "realdata": _cmd_realdata,
}


def cli_main(argv=None):
    """Run one subcommand; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        opt = _Options(args, parser)
        summary = _COMMANDS[args.command](opt)
    except SystemExit as exc:
        # argparse already printed usage for config errors
        return int(exc.code or 0)
    except (ValueError, KeyError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except (NumericalError, FloatingPointError) as exc:
        print("numerical failure: %s" % exc, file=sys.stderr)
        return 3
    print(json.dumps(summary, sort_keys=True))
    return 0


def main():
    return cli_main(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
