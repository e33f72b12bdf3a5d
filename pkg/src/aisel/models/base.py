"""Model interface and initial (``pi_0``) densities.

Every density here is evaluated on the *unconstrained* scale and therefore
includes the log-Jacobian of the layout transform.  In a ratio of two such
densities the Jacobian cancels, and in a tempered product
``pi0**(1-a) * (prior * lik)**a`` it appears exactly once.
"""
from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np
from scipy import integrate, stats

from ..likelihood import EstimatorSettings, LikelihoodEstimate
from ..params import ParamLayout


class Model(ABC):
    """A Bayesian model with an unbiased likelihood estimator."""

    layout: ParamLayout
    #: variance method used when the tuner asks for ``Var(log p_hat)``
    default_variance_method: str = "delta"

    @abstractmethod
    def log_prior_constrained(self, theta) -> np.ndarray:
        """Log prior density on the constrained scale; ``-inf`` outside the support."""

    def log_prior(self, u) -> np.ndarray:
        """Log prior on the unconstrained scale (Jacobian included)."""
        u = np.atleast_2d(u)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            theta = self.layout.to_constrained(u)
            out = self.log_prior_constrained(theta) + self.layout.log_jacobian(u)
        return np.where(np.isnan(out), -np.inf, out)

    @abstractmethod
    def estimate_loglik(self, u, settings: EstimatorSettings, rng: np.random.Generator) -> LikelihoodEstimate:
        """Unbiased likelihood estimates for each row of unconstrained ``u``."""

    def sample_prior(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no proper prior to sample")

    def default_pi0(self) -> "InitialDensity":
        return PriorInitial(self)

    def warmup(self, rng: np.random.Generator) -> None:
        """Trigger any JIT compilation before timed work."""
        pi0 = self.default_pi0()
        theta = pi0.sample(8, rng)
        ok = self.layout.in_support(theta)
        if ok.any():
            self.estimate_loglik(self.layout.to_unconstrained(theta[ok][:1]), EstimatorSettings(2), rng)


class InitialDensity(ABC):
    """An easily sampled density ``pi_0`` on the model's parameter space."""

    layout: ParamLayout

    @abstractmethod
    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """``n`` draws on the constrained scale (may fall outside the support)."""

    @abstractmethod
    def logpdf_constrained(self, theta) -> np.ndarray:
        ...

    def logpdf(self, u) -> np.ndarray:
        u = np.atleast_2d(u)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            out = self.logpdf_constrained(self.layout.to_constrained(u)) + self.layout.log_jacobian(u)
        return np.where(np.isnan(out), -np.inf, out)


class PriorInitial(InitialDensity):
    """Use the model prior itself as ``pi_0``."""

    def __init__(self, model: Model):
        self.model = model
        self.layout = model.layout

    def sample(self, n, rng):
        return self.model.sample_prior(n, rng)

    def logpdf_constrained(self, theta):
        return self.model.log_prior_constrained(theta)

    def logpdf(self, u):
        return self.model.log_prior(u)


class MultivariateTInitial(InitialDensity):
    """Multivariate t on the constrained scale, truncated to the model support.

    Out-of-support draws are redrawn, and the density is renormalised by the
    probability the untruncated t assigns to the support box, so it
    integrates to one.  That matters for evidence estimates, which assume a
    normalised ``pi0``.  The mass is computed exactly for a diagonal scale
    matrix and by a fixed-seed Monte Carlo estimate otherwise.
    """

    def __init__(self, layout: ParamLayout, loc, shape, df: float):
        self.layout = layout
        self.dist = stats.multivariate_t(loc=np.asarray(loc, float), shape=np.asarray(shape, float), df=df)
        self.log_support_mass = float(np.log(self._support_mass()))

    def _support_mass(self) -> float:
        lo = np.array([s.lo for s in self.layout.supports])
        hi = np.array([s.hi for s in self.layout.supports])
        if np.all(np.isinf(lo) & np.isinf(hi)):
            return 1.0
        loc, shape, df = self.dist.loc, self.dist.shape, self.dist.df
        if np.count_nonzero(shape - np.diag(np.diag(shape))) == 0:
            sd = np.sqrt(np.diag(shape))
            bounded = ~(np.isinf(lo) & np.isinf(hi))

            def box_prob(w):
                # given the chi-square mixing variable the coordinates are independent normals
                s = sd[bounded] / np.sqrt(w)
                return np.prod(stats.norm.cdf((hi[bounded] - loc[bounded]) / s)
                               - stats.norm.cdf((lo[bounded] - loc[bounded]) / s))

            mix = stats.gamma(df / 2, scale=2 / df)
            return float(integrate.quad(lambda w: box_prob(w) * mix.pdf(w), 0, np.inf, limit=200)[0])
        draws = self.dist.rvs(size=400_000, random_state=np.random.default_rng(0))
        return float(np.mean(self.layout.in_support(draws)))

    def sample(self, n, rng):
        return np.atleast_2d(self.dist.rvs(size=n, random_state=rng)).reshape(n, self.layout.dim)

    def logpdf_constrained(self, theta):
        theta = np.atleast_2d(theta)
        out = np.atleast_1d(self.dist.logpdf(theta)) - self.log_support_mass
        return np.where(self.layout.in_support(theta), out, -np.inf)


class GaussianInitial(InitialDensity):
    """Independent normals on the constrained scale (real-valued layouts)."""

    def __init__(self, layout: ParamLayout, mean, sd):
        self.layout = layout
        self.mean = np.broadcast_to(np.asarray(mean, float), (layout.dim,))
        self.sd = np.broadcast_to(np.asarray(sd, float), (layout.dim,))

    def sample(self, n, rng):
        return self.mean + self.sd * rng.standard_normal((n, self.layout.dim))

    def logpdf_constrained(self, theta):
        return stats.norm.logpdf(np.atleast_2d(theta), self.mean, self.sd).sum(axis=-1)
