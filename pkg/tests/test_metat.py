import math

import numpy as np
import pytest
from scipy import integrate, stats

from stressscore.distributions import elliptical_params, log_density, meta_t_log_density, sample_meta_t
from stressscore.distributions.metat import MetaTParams, StudentMarginal
from stressscore.errors import ValidationError
from stressscore.marketdata import Factor

from conftest import corr2, make_params, random_corr


def test_one_dimensional_reduction():
    p = make_params(0.3, 2.0, 3.5, np.eye(1), 9.0)
    s = np.linspace(-10, 10, 11)[:, None]
    np.testing.assert_allclose(log_density(p, s), stats.t.logpdf(s[:, 0], 3.5, loc=0.3, scale=2.0), rtol=1e-12)


def test_elliptical_reduction_is_multivariate_t():
    rng = np.random.default_rng(3)
    corr = random_corr(rng, 3)
    p = elliptical_params(corr, 6.0)
    s = rng.normal(size=(20, 3)) * 2
    ref = stats.multivariate_t(loc=np.zeros(3), shape=corr, df=6.0).logpdf(s)
    np.testing.assert_allclose(log_density(p, s), ref, rtol=1e-11)


def test_independent_copula_factorises():
    p = make_params([0.0, 1.0], [1.0, 0.5], [3.0, 8.0], np.eye(2), 1e6)
    s = np.array([[0.5, 2.0], [-4.0, 0.0]])
    ref = stats.t.logpdf(s[:, 0], 3.0) + stats.t.logpdf(s[:, 1], 8.0, loc=1.0, scale=0.5)
    np.testing.assert_allclose(log_density(p, s), ref, atol=1e-5)


def test_two_dimensional_density_integrates_to_one():
    p = make_params([0.0, 0.1], [1.0, 0.7], [4.0, 6.0], corr2(0.6), 3.0)

    def f(y, x):
        return math.exp(float(log_density(p, np.array([x, y]))))

    # substitution u = tan(theta) would be exact; a wide box leaves mass below 1e-3
    val, _ = integrate.dblquad(f, -60, 60, -60, 60, epsabs=1e-6)
    assert abs(val - 1.0) <= 1e-3


def test_gradient_and_vectorised_agree():
    p = make_params([0.0, 0.1], [1.0, 0.7], [4.0, 6.0], corr2(-0.4), 2.5)
    s = np.array([[0.2, -1.0], [3.0, 2.0]])
    batch = log_density(p, s)
    for k in range(2):
        ev = meta_t_log_density(p, s[k], want_gradient=True)
        assert ev.log_density == pytest.approx(batch[k], rel=1e-14)
    assert meta_t_log_density(p, s[0]).gradient is None


def test_serialization_is_bit_exact():
    rng = np.random.default_rng(5)
    p = make_params(rng.normal(size=3), rng.uniform(0.1, 1, 3), rng.uniform(2, 9, 3), random_corr(rng, 3),
                    float(rng.uniform(2, 20)), (Factor("A", "1Y"), Factor("A", "2Y"), Factor("B", "1Y")))
    q = MetaTParams.loads(p.dumps())
    assert q == p
    np.testing.assert_array_equal(q.corr, p.corr)
    assert q.nu_bar == p.nu_bar and q.factor_labels == p.factor_labels
    s = rng.normal(size=(4, 3))
    np.testing.assert_array_equal(log_density(p, s), log_density(q, s))


def test_subset_matches_margin_of_labels():
    rng = np.random.default_rng(6)
    p = make_params(rng.normal(size=3), 1.0, [3, 4, 5], random_corr(rng, 3), 6.0)
    sub = p.subset([p.factor_labels[2], p.factor_labels[0]])
    assert sub.corr[0, 1] == p.corr[2, 0]
    assert sub.nu.tolist() == [5.0, 3.0]


@pytest.mark.parametrize("corr, match", [
    (np.array([[1.0, 0.2], [0.3, 1.0]]), "symmetric"),
    (np.array([[2.0, 0.0], [0.0, 1.0]]), "diagonal"),
    (np.array([[1.0, 1.0], [1.0, 1.0]]), "definite"),
])
def test_invalid_correlation(corr, match):
    with pytest.raises(ValidationError, match=match):
        make_params(0.0, 1.0, 4.0, corr, 4.0)


def test_invalid_marginal():
    with pytest.raises(ValidationError):
        StudentMarginal(0.0, 0.0, 3.0)


def test_sampling_is_seeded_and_has_right_marginals():
    p = make_params([1.0, -1.0], [2.0, 0.5], [5.0, 5.0], corr2(0.5), 4.0)
    a = sample_meta_t(p, 20_000, seed=11)
    b = sample_meta_t(p, 20_000, seed=11)
    np.testing.assert_array_equal(a.rows, b.rows)
    assert a.factor_labels == p.factor_labels
    for k, m in enumerate(p.marginals):
        z = (a.rows[:, k] - m.mu) / m.sigma
        assert stats.kstest(z, stats.t(m.nu).cdf).pvalue > 1e-3
    tau = stats.kendalltau(a.rows[:, 0], a.rows[:, 1]).statistic
    assert math.sin(math.pi * tau / 2) == pytest.approx(0.5, abs=0.03)
