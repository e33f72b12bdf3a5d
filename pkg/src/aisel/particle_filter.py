"""Bootstrap particle filter likelihood estimates for state-space models.

Two paths share the same algorithm (propagate with the transition prior,
weight by the measurement density, multinomial resampling every step):

* :func:`bootstrap_pf` -- generic, driven by Python callables, one theta.
* :func:`sv_loglik_batch` -- compiled kernel for the SV / SV-leverage models,
  many thetas at once.  Used inside the sampler.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, NamedTuple

import numba
import numpy as np
from scipy.special import logsumexp

from .core import multinomial_indices

_LOG_2PI = float(np.log(2 * np.pi))
_FAST = {"nsz", "arcp", "contract", "afn", "reassoc"}


@dataclass(frozen=True)
class StateSpaceModel:
    """Callables defining a scalar-state SSM.

    ``init_sampler(theta, N, rng)`` draws the first state,
    ``transition_sampler(h, y_t, theta, rng)`` draws the next state given the
    current one (``y_t`` lets leverage models condition on the realised
    shock), ``measurement_logdensity(y_t, h, theta)`` is ``log p(y_t | h_t)``.
    """

    init_sampler: Callable
    transition_sampler: Callable
    measurement_logdensity: Callable


@dataclass
class PFResult:
    log_lhat: float
    per_step_log_means: np.ndarray
    degenerate: bool = False


def bootstrap_pf(model: StateSpaceModel, y, theta, N: int, rng: np.random.Generator) -> PFResult:
    """Run a bootstrap filter and return ``log p_hat(y | theta)``.

    ``exp(log_lhat)`` is unbiased for the likelihood.  If every particle has
    zero measurement density at some step the run is flagged degenerate
    and ``log_lhat`` is ``-inf``.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if N < 2:
        raise ValueError("the particle filter needs N >= 2")
    if y.size < 1:
        raise ValueError("need at least one observation")
    n = y.size
    steps = np.full(n, -np.inf)
    h = np.asarray(model.init_sampler(theta, N, rng), dtype=float)
    for t in range(n):
        with np.errstate(over="ignore", invalid="ignore"):
            lw = np.asarray(model.measurement_logdensity(y[t], h, theta), dtype=float)
        lw = np.where(np.isnan(lw), -np.inf, lw)
        if not np.any(np.isfinite(lw)):
            return PFResult(-np.inf, steps, True)
        lse = logsumexp(lw)
        steps[t] = lse - np.log(N)
        if t == n - 1:
            break
        idx = multinomial_indices(np.exp(lw - lse), rng)
        h = model.transition_sampler(h[idx], y[t], theta, rng)
    return PFResult(float(steps.sum()), steps, False)


# ---------------------------------------------------------------------------
# stochastic volatility

class SvParams(NamedTuple):
    mu: float
    phi: float
    sigma_eta: float
    rho: float = 0.0


def sv_transition(h, theta, rng: np.random.Generator):
    """``h' = mu (1 - phi) + phi h + sigma_eta * N(0, 1)``."""
    mu, phi, sig = theta[0], theta[1], theta[2]
    h = np.asarray(h, dtype=float)
    return mu * (1 - phi) + phi * h + sig * rng.standard_normal(h.shape)


def svl_transition(h, y_t, theta, rng: np.random.Generator):
    """Leverage transition conditioned on the realised shock ``eps_t = y_t exp(-h_t/2)``.

    ``eta_t | eps_t ~ N(rho eps_t, 1 - rho^2)``.
    """
    mu, phi, sig, rho = theta[0], theta[1], theta[2], theta[3]
    if not abs(rho) < 1:
        raise ValueError("leverage correlation must satisfy |rho| < 1")
    h = np.asarray(h, dtype=float)
    eps = y_t * np.exp(-0.5 * h)
    xi = rng.standard_normal(h.shape)
    return mu * (1 - phi) + phi * h + sig * (rho * eps + np.sqrt(1 - rho * rho) * xi)


def sv_initial_moments(theta) -> tuple[float, float]:
    """Stationary mean and variance of the log-volatility."""
    mu, phi, sig = theta[0], theta[1], theta[2]
    return mu, sig * sig / (1 - phi * phi)


def sv_state_space(leverage: bool = False) -> StateSpaceModel:
    def init(theta, N, rng):
        m1, v1 = sv_initial_moments(theta)
        return m1 + np.sqrt(v1) * rng.standard_normal(N)

    def trans(h, y_t, theta, rng):
        if leverage:
            return svl_transition(h, y_t, theta, rng)
        return sv_transition(h, theta, rng)

    def meas(y_t, h, theta):
        return -0.5 * (_LOG_2PI + h + y_t * y_t * np.exp(-h))

    return StateSpaceModel(init, trans, meas)


@numba.njit(cache=True, fastmath=_FAST)
def _sv_kernel(y, mu, phi, sig, rho, normals, expo, out):
    """normals (P, n, N): [:, 0] initial state, [:, t+1] transition after step t.
    expo (P, n-1, N+1): exponential spacings giving sorted uniforms for resampling."""
    P = mu.shape[0]
    n = y.shape[0]
    N = normals.shape[2]
    h = np.empty(N)
    hn = np.empty(N)
    ex = np.empty(N)
    lw = np.empty(N)
    cw = np.empty(N)
    for p in range(P):
        sd0 = sig[p] / np.sqrt(1.0 - phi[p] * phi[p])
        r = np.sqrt(1.0 - rho[p] * rho[p])
        c0 = mu[p] * (1.0 - phi[p])
        for k in range(N):
            h[k] = mu[p] + sd0 * normals[p, 0, k]
        tot = 0.0
        for t in range(n):
            yy = 0.5 * y[t] * y[t]
            mx = -np.inf
            for k in range(N):
                e = np.exp(-0.5 * h[k])
                ex[k] = e
                v = -0.5 * h[k] - yy * e * e
                if v != v:
                    v = -np.inf
                lw[k] = v
                if v > mx:
                    mx = v
            if mx == -np.inf:
                tot = -np.inf
                break
            s = 0.0
            for k in range(N):
                s += np.exp(lw[k] - mx)
                cw[k] = s
            tot += np.log(s / N) + mx
            if t == n - 1:
                break
            total = 0.0
            for k in range(N + 1):
                total += expo[p, t, k]
            scale = s / total
            acc = 0.0
            j = 0
            for k in range(N):
                acc += expo[p, t, k]
                target = acc * scale
                while cw[j] < target and j < N - 1:
                    j += 1
                hn[k] = c0 + phi[p] * h[j] + sig[p] * (rho[p] * y[t] * ex[j] + r * normals[p, t + 1, k])
            for k in range(N):
                h[k] = hn[k]
        out[p] = tot - 0.5 * n * _LOG_2PI if tot > -np.inf else -np.inf


def sv_noise(P: int, n: int, N: int, rng: np.random.Generator):
    """Random inputs consumed by :func:`sv_loglik_from_noise` for ``P`` filters."""
    return rng.standard_normal((P, n, N)), rng.standard_exponential((P, max(n - 1, 0), N + 1))


def sv_loglik_from_noise(y, params, normals, expo) -> np.ndarray:
    """Deterministic SV filter given pre-drawn noise; ``params`` is ``(P, 3|4)``."""
    y = np.ascontiguousarray(y, dtype=float)
    params = np.atleast_2d(np.asarray(params, dtype=float))
    P = params.shape[0]
    rho = params[:, 3].copy() if params.shape[1] > 3 else np.zeros(P)
    out = np.empty(P)
    _sv_kernel(y, params[:, 0].copy(), params[:, 1].copy(), params[:, 2].copy(), rho,
               np.ascontiguousarray(normals), np.ascontiguousarray(expo), out)
    return out


def sv_loglik_batch(y, params, N: int, rng: np.random.Generator, chunk_elements: int = 4_000_000) -> np.ndarray:
    """Bootstrap-filter log-likelihood estimates for each row of ``params``.

    Rows are ``(mu, phi, sigma_eta[, rho])`` on the constrained scale.
    """
    if N < 2:
        raise ValueError("the particle filter needs N >= 2")
    y = np.ascontiguousarray(y, dtype=float)
    params = np.atleast_2d(np.asarray(params, dtype=float))
    P, n = params.shape[0], y.size
    out = np.empty(P)
    step = max(1, chunk_elements // (n * (N + 1)))
    for s in range(0, P, step):
        e = min(P, s + step)
        normals, expo = sv_noise(e - s, n, N, rng)
        out[s:e] = sv_loglik_from_noise(y, params[s:e], normals, expo)
    return out


# ---------------------------------------------------------------------------
# linear-Gaussian oracle

class LinearGaussianParams(NamedTuple):
    """``x_1 ~ N(m1, v1)``, ``x_{t+1} = a x_t + q * N(0,1)``, ``y_t = x_t + r * N(0,1)``."""

    a: float = 0.9
    q: float = 0.5
    r: float = 1.0
    m1: float = 0.0
    v1: float = 1.0


def linear_gaussian_state_space() -> StateSpaceModel:
    def init(theta, N, rng):
        return theta.m1 + np.sqrt(theta.v1) * rng.standard_normal(N)

    def trans(h, y_t, theta, rng):
        return theta.a * h + theta.q * rng.standard_normal(h.shape)

    def meas(y_t, h, theta):
        return -0.5 * (_LOG_2PI + 2 * np.log(theta.r) + (y_t - h) ** 2 / theta.r**2)

    return StateSpaceModel(init, trans, meas)


def simulate_linear_gaussian(theta: LinearGaussianParams, n: int, rng: np.random.Generator) -> np.ndarray:
    x = theta.m1 + np.sqrt(theta.v1) * rng.standard_normal()
    y = np.empty(n)
    for t in range(n):
        y[t] = x + theta.r * rng.standard_normal()
        x = theta.a * x + theta.q * rng.standard_normal()
    return y


def kalman_loglik(y, theta: LinearGaussianParams) -> float:
    """Exact log-likelihood of the scalar linear-Gaussian model."""
    m, v = theta.m1, theta.v1
    total = 0.0
    for yt in np.atleast_1d(y):
        s = v + theta.r**2
        total += -0.5 * (_LOG_2PI + np.log(s) + (yt - m) ** 2 / s)
        k = v / s
        m, v = m + k * (yt - m), (1 - k) * v
        m, v = theta.a * m, theta.a**2 * v + theta.q**2
    return float(total)


def load_returns(path, demean: bool = True) -> np.ndarray:
    """Read one return per line (blank lines and ``#`` comments skipped)."""
    vals = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            vals.append(float(line))
    y = np.array(vals, dtype=float)
    if y.size == 0:
        raise ValueError(f"no observations in {path}")
    return y - y.mean() if demean else y
