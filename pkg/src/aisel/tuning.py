"""Choosing the likelihood-estimator precision that minimises compute time.

With ``Var(log p_hat) = gamma2 / N`` and a cost of ``tau0 + N * tau1`` per
estimate, the compute time needed for a fixed estimator precision is
proportional to

    CT*(sigma2) = exp(tau * sigma2) * (gamma_bar2 * tau1 / sigma2 + tau0)

where ``tau`` is the schedule constant.  ``sigma2_opt`` minimises it and the
matching particle count is ``gamma_bar2 / sigma2_opt``.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .likelihood import EstimatorSettings
from .models.base import InitialDensity, Model


@dataclass(frozen=True)
class TimingModel:
    tau0: float
    tau1: float

    def __post_init__(self):
        if not self.tau1 > 0:
            raise ValueError("tau1 must be positive")
        if self.tau0 < 0:
            raise ValueError("tau0 must be nonnegative")

    def cost(self, N) -> float:
        return self.tau0 + np.asarray(N) * self.tau1


@dataclass(frozen=True)
class TuningEstimates:
    gamma_bar2: float
    sigma2_opt: float
    n_opt: int
    tau: float
    timing: TimingModel | None = None

    def as_dict(self) -> dict:
        out = {"gamma_bar2": self.gamma_bar2, "tau": self.tau, "sigma2_opt": self.sigma2_opt, "n_opt": self.n_opt}
        if self.timing is not None:
            out = {"tau0": self.timing.tau0, "tau1": self.timing.tau1, **out}
        return out


def fit_timing(samples) -> TimingModel:
    """Least-squares fit of ``seconds = tau0 + N * tau1``; a negative intercept is clamped to 0."""
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
        raise ValueError("need a list of (N, seconds) pairs")
    N, t = arr[:, 0], arr[:, 1]
    if np.unique(N).size < 2:
        raise ValueError("need at least two distinct N values")
    slope, intercept = np.polyfit(N, t, 1)
    if intercept < 0:
        # refit through the origin
        slope = float(N @ t / (N @ N))
        intercept = 0.0
    return TimingModel(float(intercept), float(slope))


def measure_timing(model: Model, pi0: InitialDensity, n_values, rng, n_theta: int = 200, repeats: int = 3) -> list:
    """Time likelihood estimation at ``n_theta`` draws from ``pi0`` for each N.

    Returns ``(N, seconds per estimate)`` pairs (best of ``repeats``).
    """
    model.warmup(rng)
    theta = pi0.sample(n_theta, rng)
    theta = theta[model.layout.in_support(theta)]
    if theta.shape[0] == 0:
        raise ValueError("no pi0 draws inside the model support")
    u = model.layout.to_unconstrained(theta)
    out = []
    for N in n_values:
        best = math.inf
        for _ in range(repeats):
            t0 = time.perf_counter()
            model.estimate_loglik(u, EstimatorSettings(int(N)), rng)
            best = min(best, time.perf_counter() - t0)
        out.append((int(N), best / u.shape[0]))
    return out


def estimate_gamma_bar2(model: Model, pi0: InitialDensity, J: int = 20, N0: int = 50, rng=None,
                        variance_method: str | None = None) -> float:
    """``(N0 / J) * sum_j Var_hat(log p_hat_{N0}(theta_j))`` over ``theta_j ~ pi0``."""
    if J < 1 or N0 < 2:
        raise ValueError("need J >= 1 and N0 >= 2")
    rng = np.random.default_rng() if rng is None else rng
    method = variance_method or model.default_variance_method
    theta = np.empty((0, model.layout.dim))
    while theta.shape[0] < J:
        draw = pi0.sample(J, rng)
        theta = np.vstack([theta, draw[model.layout.in_support(draw)]])
    u = model.layout.to_unconstrained(theta[:J])
    est = model.estimate_loglik(u, EstimatorSettings(N0, method), rng)
    v = np.asarray(est.var_log, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        raise ValueError("no finite variance estimates at the pilot draws")
    return float(N0 * v.mean())


def sigma2_opt(tau: float, timing: TimingModel, gamma_bar2: float) -> float:
    """Minimiser of :func:`ct_star`."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    if not gamma_bar2 > 0:
        raise ValueError("gamma_bar2 must be positive")
    t0, t1 = timing.tau0, timing.tau1
    if t0 == 0:
        return 1.0 / tau
    b = gamma_bar2 * tau * t1
    # (sqrt(b^2 + 4 g tau t0 t1) - b) / (2 tau t0), rationalised to stay accurate as t0 -> 0
    return 4.0 * gamma_bar2 * t1 / (math.sqrt(b * b + 4.0 * gamma_bar2 * tau * t0 * t1) + b) / 2.0


def n_opt(tau: float, timing: TimingModel, gamma_bar2: float) -> int:
    """``round(gamma_bar2 / sigma2_opt)``, at least 1.  Exact likelihoods (``gamma_bar2 = 0``) give 1."""
    if gamma_bar2 <= 0:
        return 1
    return max(1, int(round(gamma_bar2 / sigma2_opt(tau, timing, gamma_bar2))))


def n_opt_display(tau: float, timing: TimingModel, gamma_bar2: float) -> float:
    """The alternative closed form sometimes quoted for the optimal N, evaluated literally.

    ``2 tau tau0 / (sqrt((tau tau1)^2 + 4 tau tau0 tau1 / g) - g tau tau1)`` for
    ``tau0 > 0`` and ``tau g`` otherwise.  Kept only for cross-checking; it
    does not agree with ``gamma_bar2 / sigma2_opt`` and can be negative.
    """
    t0, t1, g = timing.tau0, timing.tau1, gamma_bar2
    if t0 == 0:
        return tau * g
    return 2 * tau * t0 / (math.sqrt((tau * t1) ** 2 + 4 * tau * t0 * t1 / g) - g * tau * t1)


def ct_star(sigma2, tau: float, timing: TimingModel, gamma_bar2: float):
    sigma2 = np.asarray(sigma2, dtype=float)
    if np.any(sigma2 <= 0):
        raise ValueError("sigma2 must be positive")
    out = np.exp(tau * sigma2) * (gamma_bar2 * timing.tau1 / sigma2 + timing.tau0)
    return float(out) if out.ndim == 0 else out


def tnv(var_estimator: float, seconds: float) -> float:
    """Time-normalised variance."""
    if var_estimator < 0 or seconds < 0:
        raise ValueError("variance and time must be nonnegative")
    return float(var_estimator) * float(seconds)


def tune(model: Model, pi0: InitialDensity, tau: float, rng, n_values=(10, 20, 50), J: int = 20, N0: int = 50,
         timing: TimingModel | None = None) -> TuningEstimates:
    """Measure timing (unless given) and gamma_bar2, then return the optimum."""
    timing = fit_timing(measure_timing(model, pi0, n_values, rng)) if timing is None else timing
    g2 = estimate_gamma_bar2(model, pi0, J, N0, rng)
    if g2 <= 0:
        return TuningEstimates(g2, math.inf, 1, tau, timing)
    s2 = sigma2_opt(tau, timing, g2)
    return TuningEstimates(g2, s2, n_opt(tau, timing, g2), tau, timing)
