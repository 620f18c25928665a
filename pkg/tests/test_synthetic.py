import math

import numpy as np
import pytest
from scipy.stats import chisquare

from initiative import (
    MixtureDistribution,
    ReplicaPlan,
    bootstrap_validate,
    extract_initiatives,
    fit_exponential,
    generate_feedback_sequences,
    generate_replica,
    make_grid,
    simulate_population,
    simulate_traits,
    turn_probability_curve,
)
from initiative.synthetic import run_length_cdf, sample_truncated_power_law, stream


def min_side_pmf(total, mu):
    """Exact distribution of min(n, total - n) for n ~ Binomial(total, mu)."""
    pmf = np.zeros(total // 2 + 1)
    for n in range(total + 1):
        pmf[min(n, total - n)] += math.comb(total, n) * mu ** n * (1 - mu) ** (total - n)
    return pmf


def test_point_mass_at_zero_puts_everything_on_one_side():
    plan = ReplicaPlan(MixtureDistribution.point_mass(make_grid(), 0.0), np.arange(1, 2001), 1, seed=3)
    t = generate_replica(plan, 0)
    assert np.all((t.n_a == 0) | (t.n_b == 0))
    side_a = np.mean(t.n_a == t.total)
    assert abs(side_a - 0.5) < 4 * 0.5 / math.sqrt(2000)


def test_point_mass_half_min_fraction_matches_enumeration():
    pmf = min_side_pmf(10, 0.5)
    expected_mean = float(np.arange(pmf.size) @ pmf) / 10
    assert expected_mean == pytest.approx(0.376953125)
    plan = ReplicaPlan(MixtureDistribution.point_mass(make_grid(), 0.5), np.full(100_000, 10), 1, seed=0)
    t = generate_replica(plan, 0)
    lo = np.minimum(t.n_a, t.n_b)
    assert abs(lo.mean() / 10 - expected_mean) < 0.002
    observed = np.bincount(lo, minlength=pmf.size)
    assert chisquare(observed, pmf * lo.size).pvalue > 0.001


def test_replicas_are_deterministic_and_keep_sizes():
    grid = make_grid()
    src = MixtureDistribution.from_atoms(grid, [0.1, 0.3], [0.4, 0.6])
    sizes = np.random.default_rng(0).integers(1, 100, size=500)
    plan = ReplicaPlan(src, sizes, 3, seed=9)
    a, b, c = generate_replica(plan, 1), generate_replica(plan, 1), generate_replica(plan, 2)
    assert np.array_equal(a.n_a, b.n_a) and np.array_equal(a.n_b, b.n_b)
    assert not np.array_equal(a.n_a, c.n_a)
    assert np.array_equal(a.total, sizes)


def test_replica_plan_validation():
    src = MixtureDistribution.point_mass(make_grid(), 0.5)
    with pytest.raises(ValueError):
        ReplicaPlan(src, [10, 0])
    with pytest.raises(ValueError):
        ReplicaPlan(src, [10], replicas=0)


def test_bootstrap_point_mass_half():
    src = MixtureDistribution.point_mass(make_grid(), 0.5)
    rep = bootstrap_validate(src, np.full(1000, 200), replicas=10, seed=0)
    assert not rep.biased
    near = rep.grid >= 0.47
    assert rep.bin_mean[near].sum() > 0.99
    assert np.all(rep.bin_std >= 0)
    assert abs(rep.replica_means.mean() - 0.5) < 0.01


def test_bootstrap_needs_two_replicas():
    src = MixtureDistribution.point_mass(make_grid(), 0.5)
    with pytest.raises(ValueError):
        bootstrap_validate(src, [10, 10], replicas=1)


def test_bootstrap_person_variant():
    src = MixtureDistribution.point_mass(make_grid(upper=1.0), 0.46)
    rep = bootstrap_validate(src, np.full(300, 400), replicas=5, seed=1, folded=False)
    assert abs(rep.replica_means.mean() - src.mean) < 0.01
    d = rep.as_dict()
    assert d["replicas"] == 5 and len(d["bin_mean"]) == 51


def test_feedback_strict_alternation():
    seqs = generate_feedback_sequences(1.0, 1.0, 1000, seed=2)
    for s in seqs:
        assert np.all(np.diff(s.actors.astype(int)) != 0)


def test_feedback_tiny_switch_probability():
    seqs = generate_feedback_sequences(1e-12, 0.5, 1000, seed=2, sequence_length=250)
    assert len(seqs) == 4
    for s in seqs:
        assert np.all(s.actors == s.actors[0])


def test_feedback_parameter_checks():
    for a, b in [(0.0, 0.5), (1.2, 0.9), (0.5, 1.5), (0.5, 0.0)]:
        with pytest.raises(ValueError):
            generate_feedback_sequences(a, b, 100)


def test_feedback_deterministic():
    a = generate_feedback_sequences(0.51, 0.92, 5000, seed=4)
    b = generate_feedback_sequences(0.51, 0.92, 5000, seed=4)
    assert all(np.array_equal(x.actors, y.actors) for x, y in zip(a, b))
    assert sum(len(s) for s in a) == 5000


def test_feedback_turn_curve_per_length():
    seqs = generate_feedback_sequences(0.51, 0.92, 100_000, seed=0)
    curve = turn_probability_curve(seqs)
    x = curve.x[:10]
    assert x.tolist() == list(range(1, 11))
    assert abs(curve.probability[0] - 0.47) < 0.02
    np.testing.assert_allclose(curve.probability[:10], 0.51 * 0.92 ** x, atol=0.02)
    fit = fit_exponential(curve)
    assert abs(fit.a - 0.51) <= 0.02 and abs(fit.b - 0.92) <= 0.02


def test_run_length_cdf():
    cdf = run_length_cdf(0.5, 1.0, 5)
    np.testing.assert_allclose(cdf, 1 - 0.5 ** np.arange(1, 6))
    assert np.all(np.diff(run_length_cdf(0.51, 0.92, 200)) >= 0)


@pytest.mark.parametrize("alpha", [-1.0, -1.26, -2.5])
def test_truncated_power_law_sampler(alpha):
    g = sample_truncated_power_law(alpha, 60.0, 604800.0, 50_000, stream(0, 1))
    assert g.min() >= 60.0 and g.max() <= 604800.0
    # median check against the closed-form inverse CDF at u = 0.5
    beta = alpha + 1.0
    med = 60.0 * (604800 / 60.0) ** 0.5 if beta == 0 else (0.5 * (60.0 ** beta + 604800.0 ** beta)) ** (1 / beta)
    assert abs(np.median(g) / med - 1) < 0.05


def test_population_is_deterministic_and_ghosts_are_recorded():
    a = simulate_population(n_persons=40, n_links=120, horizon_days=120, seed=5)
    b = simulate_population(n_persons=40, n_links=120, horizon_days=120, seed=5)
    assert a.dataset == b.dataset
    assert a.ghosted == b.ghosted
    assert a.ghosted and all(k >= 1 for k in a.ghosted.values())
    inits = extract_initiatives(a.dataset)
    assert len(inits) > 0


def test_simulated_traits():
    mu = {f"p{i}": v for i, v in enumerate(np.linspace(0.2, 0.8, 400))}
    traits = simulate_traits(mu, extraversion_rho=0.5, seed=1)
    x = np.array([mu[p] for p in sorted(mu)])
    e = np.array([traits[p].extraversion for p in sorted(mu)])
    o = np.array([traits[p].openness for p in sorted(mu)])
    assert np.corrcoef(x, e)[0, 1] > 0.35
    assert abs(np.corrcoef(x, o)[0, 1]) < 0.15
