"""Conjugate normal-normal toy with optional synthetic log-likelihood noise."""
from __future__ import annotations

import numpy as np
from scipy import stats

from ..likelihood import EstimatorSettings, LikelihoodEstimate
from ..params import ParamLayout, Support
from .base import Model


class GaussianToy(Model):
    """``theta ~ N(m0, s0^2)``, ``y_j | theta ~ N(theta, s^2)``.

    The likelihood "estimate" is the exact log-likelihood plus
    ``z ~ N(-v/2, v)``, which is unbiased in the natural domain.  ``v`` is
    ``noise_sigma2`` or, when ``noise_gamma2`` is given, ``noise_gamma2 / N``.
    """

    default_variance_method = "replicate"

    def __init__(self, y, prior_mean=0.0, prior_sd=1.0, obs_sd=1.0, noise_sigma2=0.0, noise_gamma2=None):
        self.y = np.atleast_1d(np.asarray(y, dtype=float))
        self.prior_mean = float(prior_mean)
        self.prior_sd = float(prior_sd)
        self.obs_sd = float(obs_sd)
        if noise_sigma2 < 0 or (noise_gamma2 is not None and noise_gamma2 < 0):
            raise ValueError("noise variance must be nonnegative")
        self.noise_sigma2 = float(noise_sigma2)
        self.noise_gamma2 = None if noise_gamma2 is None else float(noise_gamma2)
        self.layout = ParamLayout(("theta",), (Support.real(),))

    @classmethod
    def simulate(cls, n, rng, theta=0.5, **kw):
        obs_sd = kw.get("obs_sd", 1.0)
        return cls(theta + obs_sd * rng.standard_normal(n), **kw)

    def noise_variance(self, n_particles) -> float:
        if self.noise_gamma2 is not None:
            return self.noise_gamma2 / n_particles
        return self.noise_sigma2

    def log_prior_constrained(self, theta):
        return stats.norm.logpdf(np.atleast_2d(theta)[:, 0], self.prior_mean, self.prior_sd)

    def sample_prior(self, n, rng):
        return (self.prior_mean + self.prior_sd * rng.standard_normal(n))[:, None]

    def exact_loglik(self, theta):
        th = np.atleast_2d(theta)[:, :1]
        return stats.norm.logpdf(self.y[None, :], th, self.obs_sd).sum(axis=1)

    def estimate_loglik(self, u, settings: EstimatorSettings, rng):
        u = np.atleast_2d(u)
        if u.shape[1] != 1:
            raise ValueError("GaussianToy has one parameter")
        exact = self.exact_loglik(u)
        v = self.noise_variance(settings.n_particles)
        P = exact.shape[0]

        def draw():
            if v == 0:
                return exact.copy()
            return exact + (-0.5 * v + np.sqrt(v) * rng.standard_normal(P))

        value = draw()
        var = None
        if settings.variance_method == "replicate":
            reps = np.column_stack([value] + [draw() for _ in range(settings.replicates - 1)])
            var = np.var(reps, axis=1, ddof=1)
        elif settings.variance_method is not None:
            var = np.full(P, v)
        return LikelihoodEstimate(value, np.full(P, settings.n_particles), var)

    # closed forms -----------------------------------------------------------

    def tempered_moments(self, a, start_mean=None, start_sd=None):
        """Mean and sd of ``pi0^(1-a) (prior * lik)^a`` for a normal ``pi0``.

        ``pi0`` defaults to the prior.
        """
        m0 = self.prior_mean if start_mean is None else start_mean
        s0 = self.prior_sd if start_sd is None else start_sd
        a = np.asarray(a, dtype=float)
        n = self.y.size
        prec = (1 - a) / s0**2 + a / self.prior_sd**2 + a * n / self.obs_sd**2
        mean = ((1 - a) * m0 / s0**2 + a * self.prior_mean / self.prior_sd**2 + a * self.y.sum() / self.obs_sd**2) / prec
        return mean, 1.0 / np.sqrt(prec)

    def posterior_moments(self):
        return self.tempered_moments(1.0)

    def log_evidence(self) -> float:
        n = self.y.size
        cov = self.obs_sd**2 * np.eye(n) + self.prior_sd**2 * np.ones((n, n))
        return float(stats.multivariate_normal(np.full(n, self.prior_mean), cov).logpdf(self.y))

    def expected_loglik(self, mean, sd):
        """``E[log p(y|theta)]`` for ``theta ~ N(mean, sd^2)``."""
        n = self.y.size
        mean = np.asarray(mean, dtype=float)
        sq = np.sum((self.y[:, None] - mean.reshape(1, -1)) ** 2, axis=0) + n * np.asarray(sd, float).reshape(-1) ** 2
        out = -0.5 * n * np.log(2 * np.pi * self.obs_sd**2) - sq / (2 * self.obs_sd**2)
        return out if out.size > 1 else float(out[0])
