"""Stochastic volatility models, with and without leverage.

    y_t = exp(h_t / 2) eps_t
    h_{t+1} = mu + phi (h_t - mu) + sigma_eta eta_t,   corr(eps_t, eta_t) = rho
    h_1 ~ N(mu, sigma_eta^2 / (1 - phi^2))
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..likelihood import EstimatorSettings, LikelihoodEstimate
from ..params import ParamLayout, Support
from ..particle_filter import sv_loglik_batch
from .base import Model

SV_LAYOUT = ParamLayout(
    ("mu", "phi", "sigma_eta"),
    (Support.real(), Support.interval(0.0, 1.0), Support.positive()),
)
SVL_LAYOUT = ParamLayout(SV_LAYOUT.names + ("rho",), SV_LAYOUT.supports + (Support.interval(-1.0, 1.0),))


@dataclass(frozen=True)
class SvSpec:
    mu: float = -0.6
    phi: float = 0.98
    sigma_eta: float = 0.16
    rho: float | None = None

    def __post_init__(self):
        if not 0 < self.phi < 1:
            raise ValueError("phi must lie in (0, 1)")
        if not self.sigma_eta > 0:
            raise ValueError("sigma_eta must be positive")
        if self.rho is not None and not -1 < self.rho < 1:
            raise ValueError("rho must lie in (-1, 1)")

    @property
    def leverage(self) -> bool:
        return self.rho is not None

    @property
    def theta(self) -> np.ndarray:
        base = [self.mu, self.phi, self.sigma_eta]
        return np.array(base + [self.rho] if self.leverage else base)


def simulate_sv(spec: SvSpec, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Returns ``(y, h)``."""
    rho = spec.rho or 0.0
    h = np.empty(n)
    y = np.empty(n)
    h[0] = spec.mu + spec.sigma_eta / np.sqrt(1 - spec.phi**2) * rng.standard_normal()
    for t in range(n):
        eps = rng.standard_normal()
        y[t] = np.exp(0.5 * h[t]) * eps
        if t + 1 < n:
            eta = rho * eps + np.sqrt(1 - rho * rho) * rng.standard_normal()
            h[t + 1] = spec.mu + spec.phi * (h[t] - spec.mu) + spec.sigma_eta * eta
    return y, h


class SvModel(Model):
    """Priors: ``mu ~ N(0, 100)``, ``phi ~ Beta(15, 1.5)``, an inverse gamma
    with shape 10 and scale 0.1 for the state noise and, with leverage,
    ``rho ~ U(-1, 1)``.  ``pi_0`` is the prior.

    ``noise_prior="variance"`` (default) puts the inverse gamma on
    ``sigma_eta**2``; ``"sd"`` puts it on ``sigma_eta`` itself.  The second
    has mean 0.011 and sd 0.004, tight enough to dominate a typical
    likelihood and pull ``sigma_eta`` well below 0.1.
    """

    default_variance_method = "replicate"

    def __init__(self, y, leverage: bool = False, noise_prior: str = "variance"):
        self.y = np.ascontiguousarray(y, dtype=float)
        if self.y.ndim != 1 or self.y.size < 2:
            raise ValueError("SV data must be a 1-d series with at least two returns")
        self.leverage = leverage
        self.layout = SVL_LAYOUT if leverage else SV_LAYOUT
        self._mu = stats.norm(0.0, 10.0)
        self._phi = stats.beta(15.0, 1.5)
        if noise_prior not in ("variance", "sd"):
            raise ValueError("noise_prior must be 'variance' or 'sd'")
        self.noise_prior = noise_prior
        self._sig = stats.invgamma(10.0, scale=0.1)

    def _log_noise_prior(self, s):
        if self.noise_prior == "sd":
            return self._sig.logpdf(s)
        # density of sigma_eta when sigma_eta**2 ~ InvGamma: p(s^2) * 2s
        return self._sig.logpdf(s * s) + np.log(2 * s)

    def log_prior_constrained(self, theta):
        theta = np.atleast_2d(theta)
        with np.errstate(divide="ignore", invalid="ignore"):
            lp = self._mu.logpdf(theta[:, 0]) + self._phi.logpdf(theta[:, 1]) + self._log_noise_prior(theta[:, 2])
            if self.leverage:
                lp = lp + stats.uniform(-1.0, 2.0).logpdf(theta[:, 3])
        ok = self.layout.in_support(theta)
        return np.where(ok, lp, -np.inf)

    def sample_prior(self, n, rng):
        noise = self._sig.rvs(n, random_state=rng)
        if self.noise_prior == "variance":
            noise = np.sqrt(noise)
        cols = [self._mu.rvs(n, random_state=rng), self._phi.rvs(n, random_state=rng), noise]
        if self.leverage:
            cols.append(rng.uniform(-1.0, 1.0, n))
        return np.column_stack(cols)

    def estimate_loglik(self, u, settings: EstimatorSettings, rng) -> LikelihoodEstimate:
        u = np.atleast_2d(u)
        if u.shape[1] != self.layout.dim:
            raise ValueError(f"expected {self.layout.dim} parameters, got {u.shape[1]}")
        method = settings.variance_method
        if method not in (None, "replicate"):
            raise ValueError("the particle filter supports only replicate variance estimates")
        theta = self.layout.to_constrained(u)
        N = settings.n_particles
        value = sv_loglik_batch(self.y, theta, N, rng)
        var = None
        if method == "replicate":
            reps = [value] + [sv_loglik_batch(self.y, theta, N, rng) for _ in range(settings.replicates - 1)]
            reps = np.column_stack(reps)
            with np.errstate(invalid="ignore"):
                var = np.var(reps, axis=1, ddof=1)
        return LikelihoodEstimate(value, np.full(value.shape, N), var)
