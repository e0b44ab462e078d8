# cli.py
import argparse
import json
import logging
import math
import sys
from dataclasses import asdict

import numpy as np

from core.choice import SystemParams, beta, beta_prime
from core.ctmc import InitSpec, per_queue_simulate, simulate_path
from core.diffusion import LimitSystemSpec, simulate_limit
from core.fixed_point import classify_regime, drift_residual, mu_log_approx_check, mu_sequence
from core.fluid import cross_check, fluid_init, integrate_explicit, integrate_reflected
from core.paths import uniform_grid, write_long_csv
from core.pipeline import ExperimentConfig, ExperimentPipeline, RegimeMismatchError
from core.report import emit_report
from core.rules import ParameterRule
from utils.config import DEFAULT_DT, DEFAULT_FLOOR

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')


def _json_float(value):
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def _print_json(data):
    def clean(value):
        if isinstance(value, dict):
            return {k: clean(v) for k, v in value.items()}
        if isinstance(value, (list, tuple)):
            return [clean(v) for v in value]
        return _json_float(value)

    print(json.dumps(clean(data), indent=2, sort_keys=True))


def cmd_beta(args):
    params = SystemParams(args.n, args.d, 0.0)
    value = beta_prime(params, args.x) if args.prime else beta(params, args.x)
    print(f"{value:.15g}")
    return 0


def cmd_fixed_point(args):
    params = SystemParams(args.n, args.d, args.lam)
    mu = mu_sequence(params, args.floor)
    _, residual = drift_residual(params, mu.mu)
    out = {"mu": list(mu.mu), "residual": residual}
    if args.k is not None:
        out["approx"] = asdict(mu_log_approx_check(params, args.k))
    _print_json(out)
    return 0


def _rule(args):
    if args.preset:
        return ParameterRule.preset(args.preset)
    if args.rule:
        return ParameterRule.parse(args.rule)
    raise ValueError("classify needs --rule or --preset")


def cmd_classify(args):
    regime = classify_regime(_rule(args), args.n)
    _print_json({"kind": regime.kind, "k": regime.k, "alpha": regime.alpha, "c": regime.c,
                 "describe": regime.describe(), "diagnostics": regime.diagnostics})
    return 0


def cmd_simulate(args):
    params = SystemParams(args.n, args.d, args.lam)
    init = InitSpec.parse(args.init)
    grid = uniform_grid(args.t_end, args.grid_dt)
    paths, logs = [], []
    for rep in range(args.replicates):
        if args.backend == "perqueue":
            paths.append(per_queue_simulate(params, init, args.t_end, grid, args.seed, args.coords, rep))
            continue
        path, log, _ = simulate_path(params, init, args.t_end, grid, args.seed, args.coords, rep)
        paths.append(path)
        logs.append(log)
    write_long_csv(args.out, paths)
    if logs:
        events = {
            "replicates": [{
                "max_level": log.max_level,
                "total_arrivals": int(log.total_arrivals[-1]),
                "total_departures": int(log.total_departures[-1]),
                "gad_residual_max": int(np.max(np.abs(log.gad_residual()))),
                "conservation_residual_max": int(np.max(np.abs(log.conservation_residual()))),
                "tail_max": int(np.max(log.tail)),
            } for log in logs],
        }
        stem = args.out[:-4] if args.out.endswith(".csv") else args.out
        with open(stem + ".events.json", "w") as f:
            json.dump(events, f, indent=2, sort_keys=True)
            f.write("\n")
    return 0


def cmd_fluid(args):
    init = fluid_init(args.init)
    coords = args.coords
    if args.form in ("reflected", "both"):
        write_long_csv(args.out, [integrate_reflected(args.lam, init, args.t_end, args.dt, coords).g])
    if args.form == "explicit":
        write_long_csv(args.out, [integrate_explicit(args.lam, init, args.t_end, args.dt, coords)])
    if args.form == "both":
        stem = args.out[:-4] if args.out.endswith(".csv") else args.out
        write_long_csv(stem + "_explicit.csv", [integrate_explicit(args.lam, init, args.t_end, args.dt, coords)])
        check = cross_check(args.lam, init, args.t_end, args.dt, coords)
        logging.info(f"Reflected vs explicit sup l1 difference: {check.sup_l1_difference:.6g}")
    return 0


def cmd_diffusion(args):
    alpha = math.inf if args.alpha in ("inf", "+inf") else float(args.alpha)
    z = tuple(float(v) for v in args.z.split(",")) if args.z else ()
    spec = LimitSystemSpec(args.regime, r=args.r, z=z, k=args.k, alpha=alpha, c=args.c)
    result = simulate_limit(spec, args.t_end, args.dt, args.seed, args.replicates)
    write_long_csv(args.out, [result.path(rep) for rep in range(args.replicates)])
    if result.clip_events:
        logging.warning(f"Clip rate {result.clip_rate:.3g} over {result.steps} steps")
    return 0


def cmd_compare(args):
    config = ExperimentConfig.from_file(args.config)
    pipeline = ExperimentPipeline(config, workers=args.workers)
    try:
        report = pipeline.run()
    except RegimeMismatchError as e:
        _print_json({"error": str(e), "diagnostics": e.diagnostics})
        return 1
    emit_report(report, args.out or pipeline.output_stem())
    return 0 if report.passed else 1


def build_parser():
    parser = argparse.ArgumentParser(prog="jsq", description="JSQ(d) supermarket model verification toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("beta", help="evaluate beta_n(x) or its derivative")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--prime", action="store_true")
    p.set_defaults(func=cmd_beta)

    p = sub.add_parser("fixed-point", help="near fixed point mu_n and its residual")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--floor", type=float, default=DEFAULT_FLOOR)
    p.add_argument("--k", type=int)
    p.set_defaults(func=cmd_fixed_point)

    p = sub.add_parser("classify", help="limit regime of a parameter-sequence rule at n")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--rule", help="'d = <expr>; lambda = <expr>'")
    p.add_argument("--preset")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("simulate", help="prelimit occupancy paths")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--t-end", type=float, required=True)
    p.add_argument("--grid-dt", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--init", default="empty")
    p.add_argument("--coords", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--backend", choices=("occupancy", "perqueue"), default="occupancy")
    p.add_argument("--replicates", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fluid", help="fluid limit paths")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--t-end", type=float, required=True)
    p.add_argument("--dt", type=float, default=DEFAULT_DT)
    p.add_argument("--coords", type=int)
    p.add_argument("--init", default="zero")
    p.add_argument("--form", choices=("reflected", "explicit", "both"), default="reflected")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fluid)

    p = sub.add_parser("diffusion", help="limit diffusion paths")
    p.add_argument("--regime", choices=("sub", "critical", "super"), required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--alpha", default="0")
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--z", default="")
    p.add_argument("--t-end", type=float, required=True)
    p.add_argument("--dt", type=float, default=DEFAULT_DT)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_diffusion)

    p = sub.add_parser("compare", help="run a prelimit-vs-limit experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="report path stem; defaults to the config's output or JSQ_OUTPUT_DIR")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as e:
        logging.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
