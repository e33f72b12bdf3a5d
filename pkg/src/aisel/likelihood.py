"""Unbiased likelihood estimators and the variance of their logarithm.

An estimator returns ``log p_hat`` such that ``E[p_hat] = p(y | theta)``.
``var_log`` estimates ``Var(log p_hat)`` and ``gamma2 = N * var_log``
is the per-particle variance constant consumed by the particle-count tuner.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numba
import numpy as np
from scipy.special import expit

from .params import ParamVector

if TYPE_CHECKING:
    from .models.glmm import GlmmData

VARIANCE_METHODS = ("delta", "jackknife", "replicate")

# no 'nnan'/'ninf': overflow to inf is handled explicitly below
_FAST = {"nsz", "arcp", "contract", "afn", "reassoc"}


@dataclass(frozen=True)
class EstimatorSettings:
    """Particle count and how (if at all) to estimate ``Var(log p_hat)``."""

    n_particles: int
    variance_method: str | None = None
    replicates: int = 20

    def __post_init__(self):
        if int(self.n_particles) != self.n_particles or self.n_particles < 1:
            raise ValueError("n_particles must be a positive integer")
        if self.variance_method is not None and self.variance_method not in VARIANCE_METHODS:
            raise ValueError(f"variance_method must be one of {VARIANCE_METHODS} or None")
        if self.variance_method == "replicate" and self.replicates < 2:
            raise ValueError("replicate variance needs k >= 2")


@dataclass
class LikelihoodEstimate:
    """Log-domain likelihood estimate(s); fields may be scalars or ``(M,)`` arrays."""

    log_value: np.ndarray | float
    n_particles: np.ndarray | int
    var_log: np.ndarray | float | None = None
    gamma2: np.ndarray | float | None = None

    def __post_init__(self):
        if self.var_log is not None and self.gamma2 is None:
            self.gamma2 = np.asarray(self.n_particles) * np.asarray(self.var_log)

    def __len__(self):
        return np.size(self.log_value)

    def item(self, i: int) -> "LikelihoodEstimate":
        def pick(v):
            return None if v is None else np.asarray(v).reshape(-1)[i] if np.ndim(v) else v

        return LikelihoodEstimate(
            float(np.asarray(self.log_value).reshape(-1)[i]),
            int(pick(self.n_particles)),
            None if self.var_log is None else float(pick(self.var_log)),
            None if self.gamma2 is None else float(pick(self.gamma2)),
        )


def var_log_estimate(values, method: str = "delta", axis: int = -1) -> float | np.ndarray:
    """Estimate ``Var(log p_hat)``.

    Parameters
    ----------
    values
        For ``delta`` and ``jackknife``: inner log-weights ``log u_j`` of an IS
        estimate ``p_hat = mean(u)``, along ``axis``.  Leading axes are treated
        as independent factors (e.g. GLMM clusters) whose variances add.
        For ``replicate``: ``k`` independent values of ``log p_hat``.
    method
        ``delta``, ``jackknife`` or ``replicate``.
    """
    v = np.moveaxis(np.asarray(values, dtype=float), axis, -1)
    n = v.shape[-1]
    if n < 2:
        raise ValueError("variance estimation needs at least two samples")
    if method == "replicate":
        out = np.var(v, axis=-1, ddof=1)
    elif method == "delta":
        mx = np.max(v, axis=-1, keepdims=True)
        u = np.exp(v - mx)
        out = np.sum(u * u, axis=-1) / np.sum(u, axis=-1) ** 2 - 1.0 / n
    elif method == "jackknife":
        mx = np.max(v, axis=-1, keepdims=True)
        u = np.exp(v - mx)
        total = np.sum(u, axis=-1, keepdims=True)
        with np.errstate(divide="ignore"):
            loo = np.log((total - u) / (n - 1))
        out = (n - 1) / n * np.sum((loo - loo.mean(axis=-1, keepdims=True)) ** 2, axis=-1)
    else:
        raise ValueError(f"unknown variance method {method!r}")
    out = np.maximum(out, 0.0)
    if method != "replicate":
        out = out.sum()  # independent factors: variances add
    return float(out) if np.ndim(out) == 0 else out


def estimate_loglik(model, theta: ParamVector, settings: EstimatorSettings, rng: np.random.Generator) -> LikelihoodEstimate:
    """Single-point wrapper around ``model.estimate_loglik``."""
    if not isinstance(theta, ParamVector):
        theta = ParamVector(theta, model.layout)
    if theta.layout.dim != model.layout.dim:
        raise ValueError(f"theta has {theta.layout.dim} parameters, model expects {model.layout.dim}")
    est = model.estimate_loglik(theta.values[None, :], settings, rng)
    return est.item(0)


# ---------------------------------------------------------------------------
# mixed logistic GLMM: per-cluster importance sampling over random effects

@numba.njit(cache=True, fastmath=_FAST)
def _glmm_kernel(base, z, sgn, counts, eta_mean, eta_chol, eps, use_correction, log_prior_var, out_ll, out_var, inner):
    """Per-cluster IS estimates.

    base   (P, m, n)  fixed-effect linear predictor
    sgn    (m, n)     -1 where y = 1, +1 where y = 0, so p(y|l) = 1 / (1 + exp(sgn * l))
    eta_*  (P, m, 2) / (P, m, 3)  proposal mean and lower Cholesky (l00, l10, l11)
    eps    (P, m, N, 2) standard normals
    log_prior_var (P, 2) log of random-effect variances, used when use_correction
    """
    P, m, n = base.shape
    N = eps.shape[2]
    store = inner.shape[0] > 0
    lw = np.empty(N)
    for p in range(P):
        tot = 0.0
        vtot = 0.0
        if use_correction:
            v0 = np.exp(log_prior_var[p, 0])
            v1 = np.exp(log_prior_var[p, 1])
            lnorm = -np.log(2.0 * np.pi) - 0.5 * (log_prior_var[p, 0] + log_prior_var[p, 1])
        for i in range(m):
            l00 = eta_chol[p, i, 0]
            l10 = eta_chol[p, i, 1]
            l11 = eta_chol[p, i, 2]
            mx = -np.inf
            for k in range(N):
                e0 = eps[p, i, k, 0]
                e1 = eps[p, i, k, 1]
                a = eta_mean[p, i, 0] + l00 * e0
                b = eta_mean[p, i, 1] + l10 * e0 + l11 * e1
                prod = 1.0
                for j in range(counts[i]):
                    prod *= 1.0 + np.exp(sgn[i, j] * (base[p, i, j] + a + z[i, j] * b))
                if prod < 1e300:
                    ll = -np.log(prod)
                else:
                    ll = 0.0
                    for j in range(counts[i]):
                        s = sgn[i, j] * (base[p, i, j] + a + z[i, j] * b)
                        if s > 0:
                            ll -= s + np.log1p(np.exp(-s))
                        else:
                            ll -= np.log1p(np.exp(s))
                if use_correction:
                    # log N(eta; 0, Sigma) - log q(eta)
                    lq = -np.log(2.0 * np.pi) - np.log(abs(l00 * l11)) - 0.5 * (e0 * e0 + e1 * e1)
                    lp = lnorm - 0.5 * (a * a / v0 + b * b / v1)
                    ll += lp - lq
                lw[k] = ll
                if ll > mx:
                    mx = ll
                if store:
                    inner[p, i, k] = ll
            if mx == -np.inf:
                tot = -np.inf
                continue
            s1 = 0.0
            s2 = 0.0
            for k in range(N):
                u = np.exp(lw[k] - mx)
                s1 += u
                s2 += u * u
            tot += np.log(s1 / N) + mx
            vtot += max(s2 / (s1 * s1) - 1.0 / N, 0.0)
        out_ll[p] = tot
        out_var[p] = vtot


def _laplace_proposal(base, data, sigma2, iters=20):
    """Per-cluster Gaussian approximation to p(y_i | eta) N(eta; 0, Sigma)."""
    P, m, n = base.shape
    y = data.y
    mask = data.mask
    zz = data.z
    prec = 1.0 / sigma2  # (P, 2)
    eta = np.zeros((P, m, 2))
    for _ in range(iters):
        lin = base + eta[..., :1] + zz[None] * eta[..., 1:]
        p = expit(lin)
        r = (y[None] - p) * mask[None]
        wgt = p * (1 - p) * mask[None]
        g = np.stack([r.sum(-1), (r * zz[None]).sum(-1)], -1) - eta * prec[:, None, :]
        h00 = wgt.sum(-1) + prec[:, None, 0]
        h01 = (wgt * zz[None]).sum(-1)
        h11 = (wgt * zz[None] ** 2).sum(-1) + prec[:, None, 1]
        det = h00 * h11 - h01 * h01
        step0 = (h11 * g[..., 0] - h01 * g[..., 1]) / det
        step1 = (h00 * g[..., 1] - h01 * g[..., 0]) / det
        eta = eta + np.stack([step0, step1], -1)
    lin = base + eta[..., :1] + zz[None] * eta[..., 1:]
    p = expit(lin)
    wgt = p * (1 - p) * mask[None]
    h00 = wgt.sum(-1) + prec[:, None, 0]
    h01 = (wgt * zz[None]).sum(-1)
    h11 = (wgt * zz[None] ** 2).sum(-1) + prec[:, None, 1]
    det = h00 * h11 - h01 * h01
    # covariance = H^-1; Cholesky of a 2x2
    c00, c01, c11 = h11 / det, -h01 / det, h00 / det
    l00 = np.sqrt(c00)
    l10 = c01 / l00
    l11 = np.sqrt(np.maximum(c11 - l10 * l10, 1e-300))
    return eta, np.stack([l00, l10, l11], -1)


def glmm_is_loglik(
    data: "GlmmData",
    theta,
    n_particles: int,
    rng: np.random.Generator,
    variance_method: str | None = "delta",
    proposal: str = "prior",
    chunk_elements: int = 2_000_000,
) -> LikelihoodEstimate:
    """Importance-sampling estimate of the GLMM likelihood for each row of ``theta``.

    ``theta`` is ``(P, 6)`` on the constrained scale:
    ``(beta0, beta1, beta2, beta3, sigma2_1, sigma2_2)``.  For every cluster
    ``p_hat(y_i) = mean_k p(y_i | eta_k)`` with ``eta_k`` drawn from the
    random-effects prior (or a Laplace-fitted Gaussian, reweighted), and the
    total log-likelihood is the sum over clusters.
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    if theta.shape[1] != 6:
        raise ValueError("GLMM theta must have 6 columns")
    N = int(n_particles)
    if N < 1:
        raise ValueError("n_particles must be >= 1")
    sigma2 = theta[:, 4:6]
    if np.any(~np.isfinite(sigma2)) or np.any(sigma2 < 0):
        raise ValueError("random-effects covariance must be positive semi-definite")
    if variance_method == "replicate":
        raise ValueError("use delta or jackknife for the GLMM estimator")
    if proposal not in ("prior", "laplace"):
        raise ValueError(f"unknown proposal {proposal!r}")
    P = theta.shape[0]
    m, n = data.y.shape
    sgn = np.where(data.y > 0.5, -1.0, 1.0)
    out_ll = np.empty(P)
    out_var = np.empty(P)
    store = variance_method == "jackknife"
    inner_all = np.empty((P, m, N)) if store else None
    step = max(1, chunk_elements // (m * N * 2))
    for s in range(0, P, step):
        th = theta[s:s + step]
        Pc = th.shape[0]
        base = th[:, :1, None] + np.einsum("mnk,pk->pmn", data.x, th[:, 1:4])
        eps = rng.standard_normal((Pc, m, N, 2))
        if proposal == "prior":
            mean = np.zeros((Pc, m, 2))
            chol = np.zeros((Pc, m, 3))
            chol[..., 0] = np.sqrt(th[:, None, 4])
            chol[..., 2] = np.sqrt(th[:, None, 5])
            correction = False
            logv = np.zeros((Pc, 2))
        else:
            if np.any(th[:, 4:6] <= 0):
                raise ValueError("the Laplace proposal needs strictly positive variances")
            mean, chol = _laplace_proposal(base, data, th[:, 4:6])
            correction = True
            logv = np.log(th[:, 4:6])
        inner = np.empty((Pc, m, N)) if store else np.empty((0, 0, 0))
        _glmm_kernel(base, data.z, sgn, data.counts, mean, chol, eps, correction, logv,
                     out_ll[s:s + Pc], out_var[s:s + Pc], inner)
        if store:
            inner_all[s:s + Pc] = inner
    if variance_method is None:
        var = None
    elif N == 1:
        var = np.full(P, np.nan)  # a single draw carries no variance information
    elif variance_method == "delta":
        var = out_var
    else:
        var = np.array([var_log_estimate(inner_all[p], "jackknife") for p in range(P)])
    return LikelihoodEstimate(out_ll, np.full(P, N), var)
