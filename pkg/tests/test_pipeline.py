import functools
import os

import numpy as np
import pytest

from core.pipeline import ExperimentConfig, ExperimentPipeline, RegimeMismatchError
from core.rules import ParameterRule

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")

INI = """
[system]
n_list = 100, 200
d = 10
lambda = 0.8

[prelimit]
init = empty
replicates = 4
t_end = 1
grid_dt = 0.01
coords = 4

[limit]
fluid_dt = 0.001

[comparison]
experiment = lln
times = 0.5, 1
lln_tolerance = 1.0
seed = 7
"""


def lln_config(**overrides):
    values = dict(experiment="lln", rule=ParameterRule.constant(10, 0.8), n_list=(200,), init="empty",
                  replicates=4, t_end=1.0, times=(0.5, 1.0), lln_tolerance=1.0)
    values.update(overrides)
    return ExperimentConfig(**values)


def fluctuation_config(**overrides):
    values = dict(experiment="fluctuation", rule=ParameterRule.preset("critical"), n_list=(400,),
                  expected_regime="critical", replicates=20, limit_replicates=50, t_end=1.0,
                  times=(0.5, 1.0), compare_coords=(1,), limit_dt=0.01, r=3)
    values.update(overrides)
    return ExperimentConfig(**values)


def test_from_file(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text(INI)
    cfg = ExperimentConfig.from_file(str(path))
    assert cfg.experiment == "lln"
    assert cfg.n_list == (100, 200)
    assert cfg.rule.params_at(100).d == 10
    assert cfg.times == (0.5, 1.0)
    assert cfg.replicates == 4
    assert cfg.seed == 7


def test_from_file_missing_section(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text(INI.replace("[limit]", "[other]"))
    with pytest.raises(ValueError):
        ExperimentConfig.from_file(str(path))


def test_from_file_without_rule(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text(INI.replace("d = 10\n", ""))
    with pytest.raises(ValueError):
        ExperimentConfig.from_file(str(path))


def test_shipped_configs_parse():
    for name in sorted(os.listdir(CONFIG_DIR)):
        cfg = ExperimentConfig.from_file(os.path.join(CONFIG_DIR, name))
        assert cfg.n_list


@pytest.mark.parametrize("overrides", [
    dict(experiment="other"),
    dict(backend="gpu"),
    dict(n_list=()),
    dict(replicates=1),
    dict(init="bogus"),
    dict(times=(0.505,)),
    dict(times=(3.0,)),
    dict(martingale_horizon=2.0),
])
def test_config_validation(overrides):
    with pytest.raises(ValueError):
        lln_config(**overrides)


def test_lln_run():
    report = ExperimentPipeline(lln_config(), workers=1).run()
    assert report.experiment == "lln"
    assert len(report.lln["sup_errors"]) == 4
    assert report.lln["quantile"] >= report.lln["median"]
    assert report.lln["fluid_complementarity"] == 0.0
    assert report.criteria["lln_quantile"]
    assert report.martingale["bookkeeping_exact"]
    assert set(report.criteria) == {"lln_quantile", "martingale"}


def test_lln_trend_across_sizes():
    report = ExperimentPipeline(lln_config(n_list=(100, 200)), workers=1).run()
    assert [row["n"] for row in report.trend] == [100, 200]
    assert "trend" in report.criteria


def test_worker_pool_keeps_replicate_order():
    serial = ExperimentPipeline(lln_config(), workers=1).run()
    pooled = ExperimentPipeline(lln_config(), workers=2).run()
    assert serial.lln["sup_errors"] == pooled.lln["sup_errors"]


def test_per_queue_backend_skips_martingale():
    report = ExperimentPipeline(lln_config(backend="perqueue", n_list=(20,)), workers=1).run()
    assert report.martingale == {}
    assert report.criteria["martingale"]


def test_fluctuation_run():
    report = ExperimentPipeline(fluctuation_config(), workers=1).run()
    assert report.regime["kind"] == "critical"
    assert [(e.coord, e.time) for e in report.ks] == [(1, 0.5), (1, 1.0)]
    assert all(e.nA == 20 and e.nB == 50 for e in report.ks)
    assert all(0.0 <= e.D <= 1.0 for e in report.ks)
    assert report.criteria["barrier"]
    assert report.barrier["max_z1"] <= report.barrier["bound"]


def test_regime_mismatch_carries_diagnostics():
    pipeline = ExperimentPipeline(fluctuation_config(expected_regime="super"), workers=1)
    with pytest.raises(RegimeMismatchError) as info:
        pipeline.run()
    assert "d_over_sqrt_n" in info.value.diagnostics


def test_ambiguous_regime_is_refused():
    cfg = fluctuation_config(rule=ParameterRule.constant(10, 0.9), n_list=(10_000,), expected_regime="any")
    with pytest.raises(RegimeMismatchError):
        ExperimentPipeline(cfg, workers=1).check_regime(10_000)


def test_uncovered_coordinate_is_rejected():
    cfg = fluctuation_config(compare_coords=(5,))
    with pytest.raises(ValueError):
        ExperimentPipeline(cfg, workers=1).run()


def test_output_stem(tmp_path, monkeypatch):
    monkeypatch.setenv("JSQ_OUTPUT_DIR", str(tmp_path / "results"))
    assert ExperimentPipeline(lln_config(), workers=1).output_stem() == f"{tmp_path / 'results'}/lln"
    assert ExperimentPipeline(lln_config(output="x/run"), workers=1).output_stem() == "x/run"


@functools.lru_cache(maxsize=None)
def shipped_report(name):
    cfg = ExperimentConfig.from_file(os.path.join(CONFIG_DIR, name))
    return ExperimentPipeline(cfg, workers=1).run()


@pytest.mark.slow
@pytest.mark.parametrize("name", ["lln.ini", "lln_pure_death.ini", "critical.ini", "super.ini", "sub_ou.ini"])
def test_shipped_experiments_pass(name):
    report = shipped_report(name)
    assert report.passed, report.criteria


@pytest.mark.slow
@pytest.mark.parametrize("name", ["critical.ini", "super.ini", "sub_ou.ini"])
def test_fluctuation_error_does_not_grow_with_n(name):
    report = shipped_report(name)
    assert [row["n"] for row in report.trend] == [2500, 10000]
    assert report.criteria["trend"]


@pytest.mark.slow
def test_shipped_critical_limit_is_rarely_clipped():
    report = shipped_report("critical.ini")
    assert report.regime["limit_clip_rate"] < 1e-3


@pytest.mark.slow
def test_ornstein_uhlenbeck_variance_at_scale():
    report = shipped_report("sub_ou.ini")
    assert report.passed, report.criteria
    assert report.regime["kind"] == "sub"
    assert all(e.coord == 1 for e in report.ks)
    entry = next(e for e in report.ks if e.time == 2.0)
    assert 0.7 <= entry.var_a <= 1.3
    assert np.isfinite(entry.var_b)
