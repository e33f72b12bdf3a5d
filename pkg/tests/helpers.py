"""Shared test doubles."""
import numpy as np

from aisel.likelihood import LikelihoodEstimate
from aisel.models import GaussianToy
from aisel.models.base import InitialDensity, Model


class CountingModel(Model):
    """Wraps a model and counts rows passed to ``estimate_loglik``."""

    def __init__(self, inner: Model):
        self.inner = inner
        self.layout = inner.layout
        self.default_variance_method = inner.default_variance_method
        self.rows = 0
        self.calls = 0

    def log_prior_constrained(self, theta):
        return self.inner.log_prior_constrained(theta)

    def sample_prior(self, n, rng):
        return self.inner.sample_prior(n, rng)

    def estimate_loglik(self, u, settings, rng):
        self.calls += 1
        self.rows += np.atleast_2d(u).shape[0]
        return self.inner.estimate_loglik(u, settings, rng)


class ZeroLikelihood(GaussianToy):
    """Estimator that always returns zero (log -inf)."""

    def estimate_loglik(self, u, settings, rng):
        P = np.atleast_2d(u).shape[0]
        return LikelihoodEstimate(np.full(P, -np.inf), np.full(P, settings.n_particles))


class ShiftedDensity(InitialDensity):
    """``pi0`` multiplied by the constant ``exp(shift)``."""

    def __init__(self, inner: InitialDensity, shift: float):
        self.inner = inner
        self.layout = inner.layout
        self.shift = shift

    def sample(self, n, rng):
        return self.inner.sample(n, rng)

    def logpdf_constrained(self, theta):
        return self.inner.logpdf_constrained(theta) + self.shift

    def logpdf(self, u):
        return self.inner.logpdf(u) + self.shift
