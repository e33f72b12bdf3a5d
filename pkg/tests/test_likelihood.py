import numpy as np
import pytest
from scipy.special import logsumexp

from aisel.likelihood import EstimatorSettings, LikelihoodEstimate, estimate_loglik, glmm_is_loglik, var_log_estimate
from aisel.models import GaussianToy, GlmmModel, GlmmSpec, glmm_loglik_quadrature, simulate_glmm
from aisel.params import ParamVector


@pytest.fixture(scope="module")
def tiny_glmm():
    return simulate_glmm(GlmmSpec(m=3, n_i=6), np.random.default_rng(5))


THETA = np.array([-1.0, 1.0, -1.0, 1.0, 1.5, 0.8])


class TestSettings:
    def test_validation(self):
        with pytest.raises(ValueError):
            EstimatorSettings(0)
        with pytest.raises(ValueError):
            EstimatorSettings(5, "bogus")
        with pytest.raises(ValueError):
            EstimatorSettings(5, "replicate", replicates=1)

    def test_gamma2_derived_from_var(self):
        e = LikelihoodEstimate(np.zeros(2), np.array([10, 20]), np.array([0.5, 0.25]))
        np.testing.assert_allclose(e.gamma2, [5.0, 5.0])
        one = e.item(1)
        assert one.n_particles == 20 and one.gamma2 == pytest.approx(5.0)


class TestVarLog:
    def test_replicate_is_sample_variance(self):
        v = np.array([1.0, 2.0, 3.0, 4.0])
        assert var_log_estimate(v, "replicate") == pytest.approx(np.var(v, ddof=1))

    def test_equal_weights_give_zero(self):
        for m in ("delta", "jackknife"):
            assert var_log_estimate(np.zeros(10), m) == pytest.approx(0.0, abs=1e-12)

    def test_delta_matches_sampling_variance(self):
        # log-normal inner weights: compare delta estimate with the empirical Var(log mean)
        rng = np.random.default_rng(3)
        N = 200
        draws = rng.normal(0, 1, size=(4000, N))
        emp = np.var(logsumexp(draws, axis=1) - np.log(N))
        delta = np.mean([var_log_estimate(d, "delta") for d in draws[:200]])
        jack = np.mean([var_log_estimate(d, "jackknife") for d in draws[:200]])
        assert delta == pytest.approx(emp, rel=0.15)
        assert jack == pytest.approx(emp, rel=0.15)

    def test_leading_axes_add(self):
        rng = np.random.default_rng(4)
        a, b = rng.normal(size=20), rng.normal(size=20)
        assert var_log_estimate(np.stack([a, b]), "delta") == pytest.approx(
            var_log_estimate(a, "delta") + var_log_estimate(b, "delta"))

    def test_needs_two_samples(self):
        with pytest.raises(ValueError):
            var_log_estimate(np.zeros(1), "delta")


class TestGlmmEstimator:
    def test_quadrature_oracle_sane(self, tiny_glmm):
        # zero variances collapse to the plain logistic likelihood
        th = THETA.copy()
        th[4:] = 1e-12
        lin = th[0] + tiny_glmm.x @ th[1:4]
        ll = np.where(tiny_glmm.y > 0.5, -np.log1p(np.exp(-lin)), -np.log1p(np.exp(lin))).sum()
        assert glmm_loglik_quadrature(tiny_glmm, th) == pytest.approx(ll, abs=1e-6)

    def test_zero_variance_is_exact(self, tiny_glmm):
        th = THETA.copy()
        th[4:] = 0.0
        est = glmm_is_loglik(tiny_glmm, th, 3, np.random.default_rng(0))
        assert est.log_value[0] == pytest.approx(glmm_loglik_quadrature(tiny_glmm, th), abs=1e-9)

    @pytest.mark.parametrize("proposal", ["prior", "laplace"])
    def test_unbiased_in_natural_domain(self, tiny_glmm, proposal):
        exact = glmm_loglik_quadrature(tiny_glmm, THETA)
        rng = np.random.default_rng(1)
        est = glmm_is_loglik(tiny_glmm, np.tile(THETA, (20000, 1)), 4, rng, None, proposal)
        ratio = np.exp(est.log_value - exact)
        se = ratio.std(ddof=1) / np.sqrt(ratio.size)
        assert abs(ratio.mean() - 1) < 3 * se + 1e-3

    def test_laplace_has_lower_variance(self, tiny_glmm):
        rng = np.random.default_rng(2)
        th = np.tile(THETA, (2000, 1))
        vp = glmm_is_loglik(tiny_glmm, th, 8, rng, None, "prior").log_value.var()
        vl = glmm_is_loglik(tiny_glmm, th, 8, rng, None, "laplace").log_value.var()
        assert vl < vp

    def test_variance_scales_like_one_over_N(self, tiny_glmm):
        rng = np.random.default_rng(6)
        v = [glmm_is_loglik(tiny_glmm, np.tile(THETA, (3000, 1)), N, rng, None).log_value.var() for N in (20, 80)]
        assert v[0] / v[1] == pytest.approx(4.0, rel=0.2)

    def test_delta_and_jackknife_track_replicate_variance(self, tiny_glmm):
        rng = np.random.default_rng(7)
        N = 50
        emp = glmm_is_loglik(tiny_glmm, np.tile(THETA, (3000, 1)), N, rng, None).log_value.var()
        for m in ("delta", "jackknife"):
            est = glmm_is_loglik(tiny_glmm, np.tile(THETA, (300, 1)), N, rng, m)
            assert np.mean(est.var_log) == pytest.approx(emp, rel=0.25)

    def test_errors(self, tiny_glmm):
        rng = np.random.default_rng()
        bad = THETA.copy()
        bad[4] = -1
        with pytest.raises(ValueError):
            glmm_is_loglik(tiny_glmm, bad, 5, rng)
        with pytest.raises(ValueError):
            glmm_is_loglik(tiny_glmm, THETA[:5], 5, rng)
        with pytest.raises(ValueError):
            glmm_is_loglik(tiny_glmm, THETA, 5, rng, "replicate")
        with pytest.raises(ValueError):
            glmm_is_loglik(tiny_glmm, THETA, 5, rng, proposal="magic")

    def test_single_particle_has_no_variance(self, tiny_glmm):
        est = glmm_is_loglik(tiny_glmm, THETA, 1, np.random.default_rng(), "delta")
        assert np.isnan(est.var_log[0])

    def test_chunking_does_not_change_results(self, tiny_glmm):
        th = np.tile(THETA, (7, 1))
        a = glmm_is_loglik(tiny_glmm, th, 5, np.random.default_rng(9), None, chunk_elements=10**9)
        b = glmm_is_loglik(tiny_glmm, th, 5, np.random.default_rng(9), None, chunk_elements=10**9)
        np.testing.assert_array_equal(a.log_value, b.log_value)


def test_single_point_wrapper():
    toy = GaussianToy([0.1, -0.2])
    est = estimate_loglik(toy, ParamVector([0.3], toy.layout), EstimatorSettings(1), np.random.default_rng())
    assert est.log_value == pytest.approx(float(toy.exact_loglik([[0.3]])[0]))
    with pytest.raises(ValueError):
        estimate_loglik(GlmmModel(simulate_glmm(GlmmSpec(m=2, n_i=2), np.random.default_rng())),
                        ParamVector([0.3], toy.layout), EstimatorSettings(1), np.random.default_rng())
