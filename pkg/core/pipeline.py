import configparser
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from core.choice import SystemParams
from core.ctmc import InitSpec, martingale_check, per_queue_simulate, scaled_path, shift_to_y, simulate_path
from core.diffusion import LimitSystemSpec, simulate_limit
from core.fixed_point import RegimeThresholds, classify_regime, mu_sequence
from core.fluid import integrate_reflected, sample_on_grid
from core.paths import uniform_grid
from core.report import ComparisonReport, KsEntry
from core.rules import ParameterRule
from core.stats import bonferroni_level, ks_p_value, ks_two_sample
from utils import config as defaults
from utils.config import load_output_dir, load_worker_count

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')


class RegimeMismatchError(ValueError):
    """The measured regime differs from the one the experiment was written for."""

    def __init__(self, message, diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


def _floats(text):
    return tuple(float(v) for v in str(text).replace(" ", "").split(",") if v)


def _ints(text):
    return tuple(int(v) for v in str(text).replace(" ", "").split(",") if v)


@dataclass
class ExperimentConfig:
    """Flat experiment description; see README.md for the key list."""

    experiment: str
    rule: ParameterRule
    n_list: tuple
    expected_regime: str = "any"
    expected_k: int = 0
    thresholds: RegimeThresholds = field(default_factory=RegimeThresholds)
    init: str = "mu"
    replicates: int = 200
    t_end: float = 2.0
    grid_dt: float = 0.01
    coords: int = 4
    backend: str = "occupancy"
    limit_dt: float = defaults.DEFAULT_DT
    limit_replicates: int = 200
    r: int = 2
    z: str = "auto"
    fluid_dt: float = defaults.DEFAULT_DT
    times: tuple = defaults.COMPARISON_TIMES
    compare_coords: tuple = defaults.COMPARISON_COORDS
    level: float = defaults.KS_LEVEL
    ks_tolerance: float = 0.2
    lln_tolerance: float = 0.05
    lln_quantile: float = 0.9
    trend_slack: float = 1.1
    martingale_horizon: float = 1.0
    seed: int = 1
    output: str = ""

    def __post_init__(self):
        if self.experiment not in ("lln", "fluctuation"):
            raise ValueError(f"experiment must be 'lln' or 'fluctuation', got {self.experiment!r}")
        if self.backend not in ("occupancy", "perqueue"):
            raise ValueError(f"backend must be 'occupancy' or 'perqueue', got {self.backend!r}")
        if not self.n_list:
            raise ValueError("at least one system size n is required")
        if self.replicates < 2 or self.limit_replicates < 2:
            raise ValueError("comparisons need at least two replicates per side")
        InitSpec.parse(self.init)
        grid = uniform_grid(self.t_end, self.grid_dt)
        for t in self.times:
            if t > self.t_end or np.min(np.abs(grid - t)) > 1e-9:
                raise ValueError(f"comparison time {t} is not on the output grid")
            if abs(round(t / self.limit_dt) * self.limit_dt - t) > 1e-9:
                raise ValueError(f"comparison time {t} is not a multiple of the SDE step {self.limit_dt}")
        if self.martingale_horizon > self.t_end:
            raise ValueError("the martingale horizon exceeds t_end")

    @classmethod
    def from_file(cls, path):
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            with open(path) as handle:
                parser.read_file(handle)
        except OSError as e:
            logging.error(f"Error reading experiment config {path}: {e}")
            raise
        for section in ("system", "prelimit", "limit", "comparison"):
            if not parser.has_section(section):
                raise ValueError(f"{path}: missing section [{section}]")
        system, pre, lim, cmp_ = (parser[s] for s in ("system", "prelimit", "limit", "comparison"))

        if "preset" in system:
            rule = ParameterRule.preset(system["preset"])
        elif "rule_d" in system:
            rule = ParameterRule(system["rule_d"], system["rule_lambda"])
        elif "d" in system and "lambda" in system:
            rule = ParameterRule.constant(system.getint("d"), system.getfloat("lambda"))
        else:
            raise ValueError(f"{path}: [system] needs preset, rule_d/rule_lambda or d/lambda")
        n_list = _ints(system["n_list"]) if "n_list" in system else (system.getint("n"),)
        thresholds = RegimeThresholds(
            critical_lower=system.getfloat("critical_lower", defaults.CRITICAL_LOWER),
            critical_upper=system.getfloat("critical_upper", defaults.CRITICAL_UPPER),
            dead_band=system.getfloat("dead_band", defaults.DEAD_BAND),
            k_max=system.getint("k_max", defaults.K_MAX),
            beta_prime_cap=system.getfloat("beta_prime_cap", defaults.SUB_BETA_PRIME_CAP),
            mu_min=system.getfloat("mu_min", defaults.SUB_MU_MIN),
            alpha_infinity=system.getfloat("alpha_infinity", defaults.ALPHA_INFINITY_CUTOFF),
        )
        return cls(
            experiment=cmp_.get("experiment", "fluctuation"),
            rule=rule,
            n_list=n_list,
            expected_regime=system.get("expected_regime", "any"),
            expected_k=system.getint("expected_k", 0),
            thresholds=thresholds,
            init=pre.get("init", "mu"),
            replicates=pre.getint("replicates", 200),
            t_end=pre.getfloat("t_end", 2.0),
            grid_dt=pre.getfloat("grid_dt", 0.01),
            coords=pre.getint("coords", 4),
            backend=pre.get("backend", "occupancy"),
            limit_dt=lim.getfloat("dt", defaults.DEFAULT_DT),
            limit_replicates=lim.getint("replicates", 200),
            r=lim.getint("r", 2),
            z=lim.get("z", "auto"),
            fluid_dt=lim.getfloat("fluid_dt", defaults.DEFAULT_DT),
            times=_floats(cmp_.get("times", "0.5,1,2")),
            compare_coords=_ints(cmp_.get("coords", "1,2")),
            level=cmp_.getfloat("level", defaults.KS_LEVEL),
            ks_tolerance=cmp_.getfloat("ks_tolerance", 0.2),
            lln_tolerance=cmp_.getfloat("lln_tolerance", 0.05),
            lln_quantile=cmp_.getfloat("lln_quantile", 0.9),
            trend_slack=cmp_.getfloat("trend_slack", 1.1),
            martingale_horizon=cmp_.getfloat("martingale_horizon", 1.0),
            seed=cmp_.getint("seed", 1),
            output=cmp_.get("output", ""),
        )


def _prelimit_replicate(job):
    """One prelimit replicate; module level so worker processes can unpickle it."""
    params, init, t_end, grid, seed, coords, replicate, backend = job
    if backend == "perqueue":
        return per_queue_simulate(params, init, t_end, grid, seed, coords, replicate), None, None
    return simulate_path(params, init, t_end, grid, seed, coords, replicate)


class ExperimentPipeline:
    """Runs prelimit replicates, matched limit runs, and the comparisons between them."""

    def __init__(self, config, workers=None):
        self.config = config
        self.workers = workers or load_worker_count()
        self.reports = {}
        logging.info(f"Experiment pipeline initialized: {config.experiment} at n={list(config.n_list)}")

    def _replicates(self, params, init, grid, coords):
        cfg = self.config
        jobs = [(params, init, cfg.t_end, grid, cfg.seed, coords, rep, cfg.backend) for rep in range(cfg.replicates)]
        if self.workers > 1:
            with ProcessPoolExecutor(max_workers=self.workers) as pool:
                # map keeps replicate order whatever order the workers finish in
                return list(pool.map(_prelimit_replicate, jobs))
        return [_prelimit_replicate(job) for job in jobs]

    def _martingale_block(self, runs):
        diags = [diag for _, _, diag in runs if diag is not None]
        if not diags:
            return {}, True
        check = martingale_check(diags, self.config.martingale_horizon)
        block = {
            "horizon": check.horizon,
            "mean_sup_norm": check.mean_sup_norm,
            "standard_error": check.standard_error,
            "bound": check.bound,
            "mean_terminal_qv": check.mean_terminal_qv,
            "qv_bound": check.qv_bound,
            "violated": check.violated,
        }
        gad_ok = all(np.all(log.gad_residual() == 0) and np.all(log.conservation_residual() == 0)
                     for _, log, _ in runs if log is not None)
        block["bookkeeping_exact"] = bool(gad_ok)
        return block, (not check.violated) and gad_ok

    def run_lln_experiment(self, n):
        """sup_t ||G_n - g||_1 per replicate against the reflected fluid solution."""
        cfg = self.config
        params = cfg.rule.params_at(n)
        init = InitSpec.parse(cfg.init)
        grid = uniform_grid(cfg.t_end, cfg.grid_dt)
        coords = cfg.coords
        initial = init.counts(params)
        if len(initial) > coords:
            raise ValueError(f"initial occupancy has {len(initial)} levels, config tracks {coords}")
        logging.info(f"LLN experiment: n={n}, d={params.d}, lambda={params.lam:.6g}, {cfg.replicates} replicates")
        start = np.zeros(coords)
        start[: len(initial)] = initial / n
        fluid = integrate_reflected(params.lam, start, cfg.t_end, cfg.fluid_dt, coords)
        g = sample_on_grid(fluid.g, grid)
        runs = self._replicates(params, init, grid, coords)
        errors = []
        for path, log, _ in runs:
            distance = np.sum(np.abs(path.values - g), axis=0)
            if log is not None:
                distance = distance + log.tail / n
            errors.append(float(np.max(distance)))
        errors = np.array(errors)
        quantile = float(np.quantile(errors, cfg.lln_quantile))
        report = ComparisonReport(experiment="lln", params=_params_dict(params))
        report.lln = {
            "sup_errors": errors.tolist(),
            "median": float(np.median(errors)),
            "quantile_level": cfg.lln_quantile,
            "quantile": quantile,
            "tolerance": cfg.lln_tolerance,
            "fluid_complementarity": fluid.complementarity,
        }
        report.martingale, martingale_ok = self._martingale_block(runs)
        report.criteria = {"lln_quantile": quantile <= cfg.lln_tolerance, "martingale": martingale_ok}
        logging.info(f"LLN n={n}: median sup error {report.lln['median']:.4g}, "
                     f"{cfg.lln_quantile:.0%} quantile {quantile:.4g}")
        return report

    def check_regime(self, n):
        cfg = self.config
        regime = classify_regime(cfg.rule, n, cfg.thresholds)
        expected = cfg.expected_regime
        mismatch = expected != "any" and regime.kind != expected
        if not mismatch and cfg.expected_k and regime.kind == "sub" and regime.k != cfg.expected_k:
            mismatch = True
        if mismatch or regime.kind == "ambiguous":
            message = f"regime at n={n} is {regime.describe()}, expected {expected}"
            logging.error(f"{message}; diagnostics: {regime.diagnostics}")
            raise RegimeMismatchError(message, regime.diagnostics)
        return regime

    def run_fluctuation_experiment(self, n):
        """KS comparison of Z_n (Y_n when k > 1) with the matching limit system."""
        cfg = self.config
        regime = self.check_regime(n)
        params = cfg.rule.params_at(n)
        mu = mu_sequence(params)
        coords = max(cfg.coords, len(mu) + 1)
        init = InitSpec.parse(cfg.init)
        grid = uniform_grid(cfg.t_end, cfg.grid_dt)
        logging.info(f"Fluctuation experiment: n={n}, {regime.describe()}, {cfg.replicates} prelimit replicates")
        runs = self._replicates(params, init, grid, coords)

        root = math.sqrt(n)
        barrier = root * (1.0 - mu.at(1))
        samples, barrier_max = [], -math.inf
        for path, _, _ in runs:
            z = scaled_path(path, mu)
            barrier_max = max(barrier_max, float(np.max(z.values[0])))
            samples.append(shift_to_y(z, regime.k) if regime.kind == "sub" else z)

        k = regime.k if regime.kind == "sub" else 1
        r = max(cfg.r, k + 1)
        if cfg.z == "auto":
            z0 = scaled_path(runs[0][0], mu).values[:, 0]
        else:
            z0 = np.array(_floats(cfg.z))
        z0 = np.pad(z0, (0, max(0, r - z0.size)))[:r]
        if regime.kind == "super":
            z0[0] = min(z0[0], regime.alpha)
        spec = LimitSystemSpec.from_regime(regime, r, tuple(float(v) for v in z0))
        limit_grid = np.array([0.0] + sorted(cfg.times))
        limit = simulate_limit(spec, max(cfg.times), cfg.limit_dt, cfg.seed, cfg.limit_replicates, limit_grid)

        cells = len(cfg.times) * len(cfg.compare_coords)
        threshold = bonferroni_level(cfg.level, cells)
        entries = []
        for coord in cfg.compare_coords:
            if coord > spec.dimension:
                raise ValueError(f"coordinate {coord} is not simulated by the {spec.regime} system")
            for t in cfg.times:
                a = np.array([s.at(t)[coord - 1] for s in samples])
                b = limit.sample(coord, t)
                d_stat = ks_two_sample(a, b)
                p = ks_p_value(a, b)
                entries.append(KsEntry(
                    coord=coord, time=float(t), D=d_stat, nA=a.size, nB=b.size,
                    mean_a=float(a.mean()), var_a=float(a.var(ddof=1)),
                    mean_b=float(b.mean()), var_b=float(b.var(ddof=1)),
                    p_value=p, passed=bool(d_stat <= cfg.ks_tolerance and p >= threshold),
                ))

        report = ComparisonReport(experiment="fluctuation", params=_params_dict(params))
        report.regime = {"kind": regime.kind, "k": regime.k, "alpha": regime.alpha, "c": regime.c,
                         "diagnostics": regime.diagnostics, "limit_clip_rate": limit.clip_rate}
        report.ks = entries
        report.barrier = {"bound": barrier, "max_z1": barrier_max, "holds": barrier_max <= barrier}
        report.martingale, martingale_ok = self._martingale_block(runs)
        report.criteria = {
            "ks": all(e.passed for e in entries),
            "barrier": barrier_max <= barrier,
            "martingale": martingale_ok,
        }
        logging.info(f"Fluctuation n={n}: max KS {max((e.D for e in entries), default=0.0):.4g}, "
                     f"Bonferroni threshold {threshold:.3g}")
        return report

    def run(self):
        """Run the configured experiment for every n and attach the trend check."""
        cfg = self.config
        runner = self.run_lln_experiment if cfg.experiment == "lln" else self.run_fluctuation_experiment
        for n in cfg.n_list:
            self.reports[n] = runner(n)
        final = self.reports[cfg.n_list[-1]]
        if len(cfg.n_list) > 1:
            metric = [_headline(self.reports[n]) for n in cfg.n_list]
            final.trend = [{"n": n, "metric": m} for n, m in zip(cfg.n_list, metric)]
            final.criteria["trend"] = all(b <= cfg.trend_slack * a for a, b in zip(metric, metric[1:]))
        verdict = "passed" if final.passed else "failed"
        logging.info(f"Experiment {verdict}: {final.criteria}")
        return final

    def output_stem(self):
        if self.config.output:
            return self.config.output
        return f"{load_output_dir()}/{self.config.experiment}"


def _headline(report):
    if report.experiment == "lln":
        return report.lln["median"]
    return max((e.D for e in report.ks), default=0.0)


def _params_dict(params: SystemParams):
    return {"n": params.n, "d": params.d, "lambda": params.lam}
