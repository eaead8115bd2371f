import math

import numpy as np
import pytest
from scipy import stats

from models import model
from mbpnpi import _kernels, analytic, sampling, simulator
from mbpnpi.laws import ImmigrationLaw, Intensity, ModelSpec, OffspringLaw
from mbpnpi.simulator import SimBudget, monte_carlo, poisson_jumps, simulate_clan, simulate_Y


def within(hits, target, k=4.0):
    hits = np.asarray(hits, dtype=float)
    se = math.sqrt(target * (1.0 - target) / hits.size)
    return abs(hits.mean() - target) <= k * se


def test_poisson_jump_counts():
    rng = np.random.default_rng(1)
    counts = [poisson_jumps(Intensity("Constant", 2.0), 100.0, rng).size for _ in range(10_000)]
    assert abs(np.mean(counts) - 200.0) <= 4 * math.sqrt(200.0 / 10_000)
    fn = Intensity("ExpApproach", 1.0, 1.0, 0.1)
    counts = [poisson_jumps(fn, 50.0, rng).size for _ in range(10_000)]
    mean = fn.cumulative(50.0)
    assert mean == pytest.approx(59.93, abs=0.01)
    assert abs(np.mean(counts) - mean) <= 4 * math.sqrt(mean / 10_000)


def test_poisson_jumps_shape():
    rng = np.random.default_rng(2)
    assert poisson_jumps(Intensity("Constant", 1.0), 0.0, rng).size == 0
    times = poisson_jumps(Intensity("RationalApproach", 3.0), 40.0, rng)
    assert np.all(np.diff(times) > 0) and times.min() >= 0 and times.max() <= 40.0
    with pytest.raises(ValueError):
        poisson_jumps(Intensity("Constant", 1.0), -1.0, rng)


def test_rational_intensity_thinning():
    fn = Intensity("RationalApproach", 1.0)
    rng = np.random.default_rng(3)
    counts = [poisson_jumps(fn, 10.0, rng).size for _ in range(10_000)]
    mean = 10.0 - math.log(11.0)
    assert abs(np.mean(counts) - mean) <= 4 * math.sqrt(mean / 10_000)


@pytest.mark.parametrize("gamma,t,target", [(0.5, 12.0, 1 / 16), (1.0, 10.0, 1 / 6)])
def test_clan_survival_examples(gamma, t, target):
    m = model(0.5, gamma)
    rng = np.random.default_rng(4)
    alive = [simulate_clan(m, t, rng)[0] > 0 for _ in range(100_000)]
    assert within(alive, target)


def test_clan_at_time_zero():
    assert simulate_clan(model(0.5, 0.5), 0.0, np.random.default_rng(5)) == (1, 0, False)
    with pytest.raises(ValueError):
        simulate_clan(model(0.5, 0.5), -1.0, np.random.default_rng(5))


def test_clan_budget_flags_truncation():
    m = model(0.5, 0.5)
    rng = np.random.default_rng(6)
    runs = [simulate_clan(m, 1e6, rng, SimBudget(max_events_per_clan=50)) for _ in range(200)]
    assert all(events <= 50 for _, events, _ in runs)
    # extinct clans stop early; the rest hit the cap with their last state
    hit = [(size, events) for size, events, truncated in runs if truncated]
    assert hit and all(events == 50 and size > 0 for size, events in hit)


def test_y_at_time_zero():
    m = model(0.5, 0.5)
    for method in ("exact", "events"):
        assert simulate_Y(m, 0.0, np.random.default_rng(7), method=method) == (0, False)


def test_void_probability_bernoulli_immigration():
    m = ModelSpec(1.0, OffspringLaw("PurePower", 1.0, 0.5), ImmigrationLaw.bernoulli(1.0), Intensity("Constant", 1.0))
    target = analytic.void_prob(analytic.AnalyticContext(m), 5.0)
    # clans alive with probability 1 / (1 + u/2), so I(5; 0) = 2 log 3.5
    assert target == pytest.approx(3.5**-2, rel=1e-8)
    for method in ("exact", "events"):
        sample = monte_carlo(m, 5.0, 10_000, 8, method=method)
        assert within(sample.as_float() == 0, target)


def test_regime3_survival(regime3):
    sample = monte_carlo(regime3, 1e3, 10_000, 9)
    target = analytic.survival_prob(analytic.AnalyticContext(regime3), 1e3)
    assert within(sample.positive(), target)


@pytest.mark.parametrize("method", ["exact", "events"])
def test_engines_match_generating_function(regime2, method):
    t = 10.0
    sample = monte_carlo(regime2, t, 2000, 10, method=method)
    ctx = analytic.AnalyticContext(regime2)
    y = sample.as_float()
    for s in (0.5, 0.9, 0.99):
        v = s**y
        assert abs(v.mean() - analytic.phi(ctx, t, s)) <= 4 * max(v.std(), 1e-3) / math.sqrt(v.size)


def test_batch_fast_path_matches_naive_path():
    m = model(0.5, 0.5)
    engine = simulator._engine(m, "events")
    args = m.offspring.sampler_args()
    budget = simulator.DEFAULT_BUDGET
    count, age = 1000, 5.0
    rng = np.random.default_rng(11)

    def naive():
        return _kernels.clans_total(rng, count, False, m.mu, age, *args, budget.max_events_per_clan,
                                    budget.max_total_population, budget.max_events_per_replicate)[0]

    def fast():
        alive = sampling.binomial_int(rng, count, float(engine.clan_survival([age])[0]))
        return _kernels.clans_total(rng, alive, True, m.mu, age, *args, budget.max_events_per_clan,
                                    budget.max_total_population, budget.max_events_per_replicate)[0]

    a = [naive() for _ in range(10_000)]
    b = [fast() for _ in range(10_000)]
    assert stats.ks_2samp(a, b).statistic < 0.02


def test_spline_clan_survival(regime2):
    engine = simulator._engine(regime2, "events")
    ages = np.array([0.0, 1e-6, 0.3, 12.0, 5e3, 1e10])
    exact = [1.0] + [1.0 / analytic.w_of_y(engine.ctx, a) for a in ages[1:]]
    assert np.allclose(engine.clan_survival(ages), exact, rtol=1e-8)


def test_determinism_across_workers(regime2):
    one = monte_carlo(regime2, 50.0, 64, 12, workers=1)
    for workers in (4, 16):
        other = monte_carlo(regime2, 50.0, 64, 12, workers=workers)
        assert other.values == one.values
        assert np.array_equal(other.truncated, one.truncated)


def test_replicate_depends_on_seed_and_index_only(regime2):
    full = monte_carlo(regime2, 50.0, 20, 13)
    y, _ = simulate_Y(regime2, 50.0, simulator.replicate_rng(13, 17))
    assert full.values[17] == y


def test_disjoint_seeds_differ(regime1):
    a = monte_carlo(regime1, 50.0, 500, 1)
    b = monte_carlo(regime1, 50.0, 500, 2)
    assert a.values != b.values
    assert np.mean(np.log1p(a.as_float())) != np.mean(np.log1p(b.as_float()))


def test_regime2_truncation_fraction(regime2):
    sample = monte_carlo(regime2, 100.0, 10_000, 14)
    assert sample.n == 10_000 and len(sample.truncated) == 10_000
    assert sample.truncated_fraction < 0.01


def test_huge_values_stay_exact_integers(regime3):
    sample = monte_carlo(regime3, 1e6, 40, 15)
    assert all(isinstance(v, int) and v >= 0 for v in sample.values)


def test_argument_checks(regime2):
    with pytest.raises(ValueError):
        monte_carlo(regime2, 1.0, 0, 1)
    with pytest.raises(ValueError):
        monte_carlo(regime2, 1.0, 5, 1, workers=0)
    with pytest.raises(ValueError):
        simulate_Y(regime2, -1.0, np.random.default_rng(1))
    with pytest.raises(ValueError):
        simulate_Y(regime2, 1.0, np.random.default_rng(1), method="naive")
    with pytest.raises(ValueError):
        SimBudget(batch_threshold=0)
