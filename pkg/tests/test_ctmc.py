import math

import numpy as np
import pytest

from core.choice import SystemParams
from core.ctmc import (
    InitSpec,
    OccupancyChain,
    brute_force_generator,
    lattice_counts,
    martingale_check,
    occupancy_time_fractions,
    per_queue_simulate,
    relative_to_f1,
    scaled_path,
    shift_to_y,
    simulate_path,
    total_variation,
)
from core.fixed_point import mu_sequence
from core.paths import SampledPath, uniform_grid
from core.stats import ks_p_value, ks_two_sample
from utils.rng import UniformStream, make_generator


def test_init_spec_parse(tmp_path):
    assert InitSpec.parse("empty").kind == "empty"
    assert InitSpec.parse("zero").kind == "empty"
    assert InitSpec.parse("mu").kind == "mu"
    fixed = InitSpec.parse("fixed:2:0.25")
    assert (fixed.kind, fixed.k, fixed.gamma_coeff) == ("fixed", 2, 0.25)
    assert InitSpec.parse("0.5, 0.2").vector == (0.5, 0.2)
    source = tmp_path / "init.txt"
    source.write_text("0.6 0.3\n0.1\n")
    assert InitSpec.parse(f"file:{source}").vector == (0.6, 0.3, 0.1)
    with pytest.raises(ValueError):
        InitSpec.parse("fixed:1:2:3")
    with pytest.raises(ValueError):
        InitSpec.parse("nonsense")


def test_lattice_rounding():
    assert list(lattice_counts([0.5, 0.24, 0.26], 10)) == [5, 3, 3]
    assert list(lattice_counts([0.5, 0.01], 10)) == [5]
    assert list(InitSpec.parse("fixed:1").counts(SystemParams(10, 2, 0.5))) == [10]
    with pytest.raises(ValueError):
        lattice_counts([1.5], 10)


def test_mu_start_is_within_half_a_lattice_step():
    params = SystemParams(10_000, 100, 0.954)
    mu = mu_sequence(params)
    grid = uniform_grid(0.1, 0.1)
    g, _, _ = simulate_path(params, InitSpec.parse("mu"), 0.1, grid, 7, len(mu) + 1)
    z = scaled_path(g, mu)
    assert np.max(np.abs(z.values[:, 0])) <= 0.5 / math.sqrt(params.n) + 1e-12


def test_paths_are_reproducible():
    params = SystemParams(50, 3, 0.9)
    grid = uniform_grid(3.0, 0.05)
    first = simulate_path(params, InitSpec(), 3.0, grid, 11, 5, replicate=2)[0]
    second = simulate_path(params, InitSpec(), 3.0, grid, 11, 5, replicate=2)[0]
    other = simulate_path(params, InitSpec(), 3.0, grid, 11, 5, replicate=3)[0]
    assert np.array_equal(first.values, second.values)
    assert not np.array_equal(first.values, other.values)


def test_bookkeeping_identities_are_exact():
    params = SystemParams(50, 3, 0.9)
    grid = uniform_grid(5.0, 0.01)
    for rep in range(5):
        g, log, _ = simulate_path(params, InitSpec.parse("mu"), 5.0, grid, 3, 8, rep)
        assert np.all(log.gad_residual() == 0)
        assert np.all(log.conservation_residual() == 0)
        assert np.all(np.diff(g.values, axis=0) <= 0.0)
        assert np.all((g.values >= 0.0) & (g.values <= 1.0))


def test_scaled_first_coordinate_never_exceeds_barrier():
    params = SystemParams(100, 100, 0.9)
    mu = mu_sequence(params)
    grid = uniform_grid(2.0, 0.01)
    barrier = math.sqrt(params.n) * (1.0 - params.lam)
    for rep in range(10):
        g, _, _ = simulate_path(params, InitSpec.parse("mu"), 2.0, grid, 5, 4, rep)
        assert np.max(scaled_path(g, mu).values[0]) <= barrier


def test_no_arrivals_without_load():
    params = SystemParams(20, 2, 0.0)
    grid = uniform_grid(1.0, 0.1)
    g, log, _ = simulate_path(params, InitSpec.parse("fixed:1"), 1.0, grid, 1, 3)
    assert np.all(log.total_arrivals == 0)
    assert np.all(np.diff(g.values[0]) <= 0.0)
    q = per_queue_simulate(params, InitSpec.parse("fixed:1"), 1.0, grid, 1, 3)
    assert np.all(np.diff(q.values[0]) <= 0.0)


def test_frozen_chain():
    params = SystemParams(5, 2, 0.0)
    chain = OccupancyChain(params, [], UniformStream(make_generator(0)))
    assert chain.peek() == math.inf
    with pytest.raises(ValueError):
        chain.fire()


def test_chain_events_move_one_level():
    params = SystemParams(10, 2, 0.8)
    chain = OccupancyChain(params, [], UniformStream(make_generator(4)))
    for _ in range(200):
        before = list(chain.counts)
        kind, level = chain.fire()
        delta = 1 if kind == "arrival" else -1
        assert chain.counts[level] == before[level] + delta
        assert all(a >= b for a, b in zip(chain.counts, chain.counts[1:]))


def test_full_sampling_joins_a_globally_shortest_queue():
    params = SystemParams(5, 5, 0.9)
    chain = OccupancyChain(params, [], UniformStream(make_generator(6)))
    arrivals = 0
    for _ in range(5000):
        before = list(chain.counts)
        kind, level = chain.fire()
        if kind == "arrival":
            arrivals += 1
            full = sum(1 for c in before[1:] if c == params.n)
            assert level == full + 1
    assert arrivals > 1000


def test_untouched_levels_have_no_quadratic_variation():
    params = SystemParams(20, 2, 0.5)
    grid = uniform_grid(1.0, 0.1)
    _, log, diag = simulate_path(params, InitSpec(), 1.0, grid, 9, 12)
    assert np.all(diag.quadratic_variation[log.max_level + 1:] == 0.0)
    assert np.all(diag.martingale[log.max_level + 1:] == 0.0)


def test_shift_and_scaling_transforms():
    times = np.array([0.0, 1.0])
    z = SampledPath(times, np.array([[0.3, 0.3], [-0.1, -0.1], [0.05, 0.05]]))
    y = shift_to_y(z, 2)
    np.testing.assert_allclose(y.values[:, 0], [0.2, 0.05])
    assert np.array_equal(shift_to_y(z, 1).values, z.values)
    g = SampledPath(times, np.array([[1.0, 0.9], [0.0, 0.1]]))
    np.testing.assert_allclose(relative_to_f1(g, 100).values, [[0.0, -1.0], [0.0, 1.0]])
    mu = mu_sequence(SystemParams(100, 1, 0.5))
    with pytest.raises(ValueError):
        scaled_path(g, mu)


def test_martingale_check_small_system():
    params = SystemParams(200, 3, 0.9)
    grid = uniform_grid(1.0, 0.01)
    diags = [simulate_path(params, InitSpec(), 1.0, grid, 2, 6, rep)[2] for rep in range(30)]
    report = martingale_check(diags, 1.0)
    assert report.bound == pytest.approx(4 * 1.9 / 200)
    assert not report.violated
    with pytest.raises(ValueError):
        martingale_check([], 1.0)


@pytest.mark.slow
def test_martingale_bound_at_scale():
    params = SystemParams(10_000, 100, 0.9)
    grid = uniform_grid(1.0, 0.01)
    diags = [simulate_path(params, InitSpec(), 1.0, grid, 2, 6, rep)[2] for rep in range(100)]
    report = martingale_check(diags, 1.0)
    assert report.mean_sup_norm <= 7.6e-4
    assert report.mean_terminal_qv <= report.qv_bound


def test_generator_oracle_small_cases():
    mm1 = brute_force_generator(SystemParams(1, 1, 0.5), 30)
    busy = sum(p for s, p in zip(mm1.states, mm1.stationary) if s[0] >= 1)
    assert busy == pytest.approx(0.5, abs=1e-9)

    idle = brute_force_generator(SystemParams(2, 2, 0.0), 3)
    empty = idle.states.index((0, 0, 0))
    assert idle.stationary[empty] == pytest.approx(1.0)

    oracle = brute_force_generator(SystemParams(3, 2, 0.7), 6)
    assert oracle.stationary.sum() == pytest.approx(1.0)
    assert oracle.residual() <= 1e-10
    assert np.allclose(oracle.rates.sum(axis=1), 0.0)


def test_generator_oracle_limits():
    with pytest.raises(ValueError):
        brute_force_generator(SystemParams(5, 2, 0.5), 3)
    with pytest.raises(ValueError):
        brute_force_generator(SystemParams(3, 2, 0.5), 0)


def test_time_fractions_are_a_distribution():
    estimate = occupancy_time_fractions(SystemParams(3, 2, 0.7), InitSpec(), 50.0, 1, 6)
    assert sum(estimate.fractions.values()) + estimate.overflow == pytest.approx(1.0)
    assert 0.0 < estimate.busy_fraction < 1.0


@pytest.mark.slow
def test_stationary_law_matches_generator():
    params = SystemParams(3, 2, 0.7)
    oracle = brute_force_generator(params, 6)
    estimate = occupancy_time_fractions(params, InitSpec(), 10_000.0, 1, 6)
    assert total_variation(estimate, oracle) <= 0.05


@pytest.mark.slow
def test_single_server_utilization():
    estimate = occupancy_time_fractions(SystemParams(1, 1, 0.5), InitSpec(), 100_000.0, 3, 40)
    assert estimate.busy_fraction == pytest.approx(0.5, abs=0.02)


@pytest.mark.slow
def test_random_routing_mean_queue_length():
    estimate = occupancy_time_fractions(SystemParams(10, 1, 0.5), InitSpec(), 100_000.0, 5, 60)
    assert estimate.mean_queue_length == pytest.approx(1.0, rel=0.05)


@pytest.mark.slow
@pytest.mark.parametrize("n", [2, 10])
def test_backends_agree_in_law(n):
    params = SystemParams(n, 2, 0.9)
    grid = np.array([0.0, 2.0])
    a = [simulate_path(params, InitSpec(), 2.0, grid, 8, 4, rep)[0].at(2.0)[0] for rep in range(500)]
    b = [per_queue_simulate(params, InitSpec(), 2.0, grid, 8, 4, rep).at(2.0)[0] for rep in range(500)]
    assert ks_two_sample(a, b) <= 0.1
    assert ks_p_value(a, b) > 0.01 / 2
