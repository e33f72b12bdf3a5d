"""Tempered SMC sweep with an estimated likelihood.

Each particle carries a stored likelihood estimate.  At every temperature
the ensemble is reweighted with the stored estimates, resampled when the ESS
drops below ``ess_fraction * M``, then moved by pseudo-marginal random-walk
Metropolis-Hastings: a proposal gets a fresh estimate, the current point keeps
its stored one, and a rejected particle is never re-estimated.

All densities are evaluated on the unconstrained scale (Jacobians included),
so the random-walk proposal is symmetric there.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field, replace

import numpy as np

from .core import (
    AnnealingSchedule,
    ContractViolation,
    DegenerateWeightsError,
    Ensemble,
    Particle,
    normalize,
    resample,
)
from .likelihood import EstimatorSettings
from .marglik import EvidenceTrace, f_hat
from .models.base import InitialDensity, Model
from .params import ParamVector


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class FixedN:
    """The same number of inner particles at every theta."""

    N: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be a positive integer")


@dataclass(frozen=True)
class AdaptiveN:
    """Choose ``N(theta) = ceil(gamma2(theta) / sigma2_target)``.

    ``gamma2(theta)`` comes from an independent pilot estimate with ``n0``
    particles, so the chosen N does not depend on the estimate it feeds and
    unbiasedness is preserved.  Pilot calls are counted separately.
    """

    sigma2_target: float
    n0: int = 50
    n_min: int = 2
    n_max: int = 2000

    def __post_init__(self):
        if not self.sigma2_target > 0:
            raise ValueError("sigma2_target must be positive")
        if not 2 <= self.n_min <= self.n_max or self.n0 < 2:
            raise ValueError("need 2 <= n_min <= n_max and n0 >= 2")


@dataclass(frozen=True)
class SamplerConfig:
    M: int
    schedule: AnnealingSchedule
    ess_fraction: float = 0.5
    mh_reps: int = 5
    initial_scale: float | None = None
    n_policy: FixedN | AdaptiveN = FixedN(10)
    resampler: str = "systematic"
    max_init_retries: int = 100

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 2:
            raise ValueError("M must be an integer >= 2")
        if not 0 < self.ess_fraction < 1:
            raise ValueError("ess_fraction must lie in (0, 1)")
        if int(self.mh_reps) != self.mh_reps or self.mh_reps < 1:
            raise ValueError("mh_reps must be a positive integer")
        if self.initial_scale is not None and not self.initial_scale > 0:
            raise ValueError("initial_scale must be positive")

    def scale0(self, d: int) -> float:
        return self.initial_scale if self.initial_scale is not None else 2.38**2 / d


@dataclass(frozen=True)
class MoveState:
    """Random-walk scale ``alpha`` and the ensemble covariance it multiplies."""

    scale: float
    proposal_covariance: np.ndarray
    last_acceptance_rate: float = float("nan")

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.proposal_covariance, dtype=float))
        if c.shape[0] != c.shape[1] or not np.allclose(c, c.T, atol=1e-10, rtol=0):
            raise ValueError("proposal covariance must be square and symmetric")
        if np.any(np.diag(c) < 0):
            raise ValueError("proposal covariance has a negative diagonal")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "proposal_covariance", c)

    def cholesky(self) -> np.ndarray:
        c = self.scale * self.proposal_covariance
        try:
            return np.linalg.cholesky(c)
        except np.linalg.LinAlgError:
            vals, vecs = np.linalg.eigh(c)
            floor = max(1e-12, 1e-10 * float(vals.max(initial=0.0)))
            return np.linalg.cholesky((vecs * np.maximum(vals, floor)) @ vecs.T)


@dataclass
class SweepRecord:
    t: int
    a: float
    ess_before: float
    ess_after: float
    resampled: bool
    acceptance_rate: float
    scale: float
    f_hat: float
    loglhat_mean: float
    loglhat_var: float
    estimator_calls: int
    auto_rejected: int


@dataclass
class SweepTrace:
    records: list[SweepRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    @property
    def any_resampled(self) -> bool:
        return any(r.resampled for r in self.records)


@dataclass
class RunReport:
    names: tuple[str, ...]
    posterior_mean: np.ndarray
    posterior_sd: np.ndarray
    log_ml: float
    log_ml_is: float
    final_ess: float
    n_resamples: int
    estimator_calls: int
    pilot_calls: int
    evidence: EvidenceTrace
    seconds: float = float("nan")

    def as_dict(self) -> dict:
        out = {
            "log_ml": self.log_ml,
            "log_ml_is": self.log_ml_is,
            "final_ess": self.final_ess,
            "n_resamples": self.n_resamples,
            "estimator_calls": self.estimator_calls,
            "pilot_calls": self.pilot_calls,
            "seconds": self.seconds,
        }
        for n, m, s in zip(self.names, self.posterior_mean, self.posterior_sd):
            out[f"mean.{n}"] = float(m)
            out[f"sd.{n}"] = float(s)
        return out


# ---------------------------------------------------------------------------
# likelihood evaluation under an N policy

def estimate(model: Model, u, policy, rng, variance_method=None):
    """Estimate ``log p_hat`` at each row of ``u``.

    Returns ``(log_lhat, N_used, pilot_rows)``.
    """
    u = np.atleast_2d(u)
    if isinstance(policy, FixedN):
        est = model.estimate_loglik(u, EstimatorSettings(policy.N, variance_method), rng)
        return np.asarray(est.log_value, dtype=float).reshape(-1), np.full(u.shape[0], policy.N), 0
    pilot = model.estimate_loglik(u, EstimatorSettings(policy.n0, model.default_variance_method), rng)
    g2 = np.nan_to_num(np.asarray(pilot.gamma2, dtype=float).reshape(-1), nan=policy.n_max * policy.sigma2_target)
    n_used = np.clip(np.ceil(g2 / policy.sigma2_target), policy.n_min, policy.n_max).astype(np.int64)
    out = np.empty(u.shape[0])
    for n in np.unique(n_used):
        rows = n_used == n
        est = model.estimate_loglik(u[rows], EstimatorSettings(int(n), variance_method), rng)
        out[rows] = np.asarray(est.log_value, dtype=float).reshape(-1)
    return out, n_used, u.shape[0]


# ---------------------------------------------------------------------------
# steps

def init_ensemble(model: Model, pi0: InitialDensity, M: int, n_policy, rng, max_retries: int = 100):
    """Draw ``M`` particles from ``pi0`` (redrawing any outside the model
    support) and estimate the likelihood once at each.

    Returns ``(ensemble, pilot_rows)``.
    """
    layout = model.layout
    theta = np.empty((M, layout.dim))
    need = np.arange(M)
    for _ in range(max_retries + 1):
        draws = np.atleast_2d(pi0.sample(need.size, rng)).reshape(need.size, layout.dim)
        ok = layout.in_support(draws)
        theta[need[ok]] = draws[ok]
        need = need[~ok]
        if need.size == 0:
            break
    else:
        raise ContractViolation(f"{need.size} initial draws still outside the support after {max_retries} retries")
    u = layout.to_unconstrained(theta)
    lhat, n_used, pilots = estimate(model, u, n_policy, rng)
    return Ensemble.uniform(u, lhat, layout, n_used), pilots


def log_weight_increment(log_prior, log_lhat, log_pi0, a_prev: float, a_curr: float) -> np.ndarray:
    """``(a_curr - a_prev) * (log p + log_lhat - log pi0)``."""
    log_lhat = np.asarray(log_lhat, dtype=float)
    if np.any(np.isnan(log_lhat)):
        raise ContractViolation("reweighting needs a stored likelihood estimate for every particle")
    with np.errstate(invalid="ignore"):
        g = np.asarray(log_prior, float) + log_lhat - np.asarray(log_pi0, float)
    g = np.where(np.isnan(g), -np.inf, g)
    return (a_curr - a_prev) * g


def reweight(ensemble: Ensemble, model: Model, pi0: InitialDensity, a_prev: float, a_curr: float):
    """Reweight with the stored estimates.  Returns ``(ensemble, log_mean_increment)``.

    The second value is ``log sum_i W_i w_inc_i`` (the incremental
    normalising-constant estimate).
    """
    if not a_curr > a_prev:
        raise ContractViolation("temperatures must increase")
    inc = log_weight_increment(model.log_prior(ensemble.theta), ensemble.log_lhat, pi0.logpdf(ensemble.theta), a_prev, a_curr)
    raw = ensemble.log_weights + inc
    w, log_sum = normalize(raw)
    with np.errstate(divide="ignore"):
        lw = np.log(w)
    return replace(ensemble, log_weights=lw), log_sum


def maybe_resample(ensemble: Ensemble, alpha: float, rng, method: str = "systematic"):
    """Resample iff ``ESS < alpha * M`` (strict)."""
    w = ensemble.weights
    ess_val = 1.0 / np.sum(w * w)
    if ess_val < alpha * ensemble.M:
        return resample(ensemble, method, rng), True
    return ensemble, False


def multiplication_factor(acceptance_rate: float) -> float:
    """Step-size multiplier for the observed acceptance rate."""
    if not 0.0 <= acceptance_rate <= 1.0:
        raise ValueError("acceptance rate must lie in [0, 1]")
    i = bisect.bisect_right(_MF_EDGES, acceptance_rate) - 1
    return _MF_VALUES[i]


_MF_EDGES = (0.0, 0.01, 0.1, 0.15, 0.2, 0.23, 0.25, 0.5, 0.85, 0.99)
_MF_VALUES = (0.2, 0.5, 0.7, 0.9, 0.99, 1.0, 1 / 0.97, 1 / 0.8, 1 / 0.7, 1 / 0.5)


def adapt_scale(state: MoveState, acceptance_rate: float) -> MoveState:
    return replace(state, scale=state.scale * multiplication_factor(acceptance_rate), last_acceptance_rate=acceptance_rate)


def weighted_covariance(theta, weights) -> np.ndarray:
    theta = np.atleast_2d(theta)
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    mu = w @ theta
    c = theta - mu
    cov = (c * w[:, None]).T @ c
    return 0.5 * (cov + cov.T)


def tempered_log_target(a: float, log_pi0, log_prior, log_lhat) -> np.ndarray:
    """``(1 - a) log pi0 + a (log p + log_lhat)`` with the ``a in {0, 1}`` ends exact."""
    with np.errstate(invalid="ignore"):
        if a == 0.0:
            out = np.asarray(log_pi0, float)
        elif a == 1.0:
            out = np.asarray(log_prior, float) + log_lhat
        else:
            out = (1 - a) * np.asarray(log_pi0, float) + a * (np.asarray(log_prior, float) + log_lhat)
    return np.where(np.isnan(out), -np.inf, out)


@dataclass
class MoveStats:
    accepted: int = 0
    proposals: int = 0
    estimator_calls: int = 0
    auto_rejected: int = 0
    pilot_calls: int = 0

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposals if self.proposals else 0.0


def mh_move_ensemble(ensemble: Ensemble, a: float, state: MoveState, model: Model, pi0: InitialDensity,
                     n_policy, mh_reps: int, rng) -> tuple[Ensemble, MoveStats]:
    """``mh_reps`` pseudo-marginal RWMH steps applied to every particle at temperature ``a``.

    At ``a = 0`` the likelihood is never evaluated and accepted particles get
    a NaN stored estimate (they need one before the next reweight).
    """
    theta = ensemble.theta.copy()
    lhat = ensemble.log_lhat.copy()
    n_used = None if ensemble.n_particles is None else np.asarray(ensemble.n_particles).copy()
    M, d = theta.shape
    chol = state.cholesky()
    stats = MoveStats()
    lp_c = model.log_prior(theta)
    lpi_c = pi0.logpdf(theta)
    need_lik = a > 0.0
    if need_lik and np.any(np.isnan(lhat)):
        raise ContractViolation("moving at a > 0 needs a stored likelihood estimate for every particle")
    tgt_c = tempered_log_target(a, lpi_c, lp_c, lhat if need_lik else 0.0)
    for _ in range(mh_reps):
        prop = theta + rng.standard_normal((M, d)) @ chol.T
        lp_p = model.log_prior(prop)
        lpi_p = pi0.logpdf(prop)
        ok = np.isfinite(lp_p) & np.isfinite(lpi_p) & np.all(np.isfinite(prop), axis=1)
        stats.proposals += M
        stats.auto_rejected += int(M - ok.sum())
        lhat_p = np.full(M, np.nan)
        n_p = np.zeros(M, dtype=np.int64)
        if need_lik and ok.any():
            est, n_est, pilots = estimate(model, prop[ok], n_policy, rng)
            lhat_p[ok] = est
            n_p[ok] = n_est
            stats.estimator_calls += int(ok.sum())
            stats.pilot_calls += pilots
        tgt_p = np.full(M, -np.inf)
        tgt_p[ok] = tempered_log_target(a, lpi_p[ok], lp_p[ok], lhat_p[ok] if need_lik else 0.0)
        log_u = np.log(rng.random(M))
        with np.errstate(invalid="ignore"):
            acc = ok & (log_u < tgt_p - tgt_c)
        theta[acc] = prop[acc]
        lhat[acc] = lhat_p[acc]
        tgt_c[acc] = tgt_p[acc]
        if n_used is not None:
            n_used[acc] = n_p[acc]
        stats.accepted += int(acc.sum())
    return replace(ensemble, theta=theta, log_lhat=lhat, n_particles=n_used), stats


def mh_move(particle: Particle, a: float, state: MoveState, model: Model, pi0: InitialDensity,
            n_policy, mh_reps: int, rng) -> tuple[Particle, int]:
    """Single-particle form of :func:`mh_move_ensemble`."""
    ens = Ensemble([particle.theta.values], [particle.log_lhat], [particle.log_weight], model.layout)
    out, stats = mh_move_ensemble(ens, a, state, model, pi0, n_policy, mh_reps, rng)
    return Particle(ParamVector(out.theta[0], model.layout), float(out.log_lhat[0]), particle.log_weight), stats.accepted


# ---------------------------------------------------------------------------
# full sweep

def _summary(ens: Ensemble) -> tuple[np.ndarray, np.ndarray]:
    w = ens.weights / ens.weights.sum()
    th = ens.constrained
    mean = w @ th
    var = w @ (th - mean) ** 2
    return mean, np.sqrt(np.maximum(var, 0.0))


def aisel_run(model: Model, config: SamplerConfig, rng: np.random.Generator, pi0: InitialDensity | None = None):
    """Run the full annealing sweep.  Returns ``(ensemble, trace, report)``.

    Raises :class:`DegenerateWeightsError` (with ``temperature_index``) if
    every weight vanishes at some temperature.
    """
    pi0 = model.default_pi0() if pi0 is None else pi0
    sched = config.schedule
    ens, pilot_calls = init_ensemble(model, pi0, config.M, config.n_policy, rng, config.max_init_retries)
    calls = config.M
    lp = model.log_prior(ens.theta)
    lpi = pi0.logpdf(ens.theta)
    f_values = [f_hat(ens.log_weights, lp, ens.log_lhat, lpi)]
    state = MoveState(config.scale0(model.layout.dim), np.eye(model.layout.dim))
    trace = SweepTrace()
    log_z = 0.0
    for t in range(1, sched.T + 1):
        a_prev, a = float(sched[t - 1]), float(sched[t])
        try:
            ens, log_inc = reweight(ens, model, pi0, a_prev, a)
        except DegenerateWeightsError as exc:
            raise DegenerateWeightsError(f"all weights vanished at temperature index {t} (a={a:.6g})", t) from exc
        log_z += log_inc
        w = ens.weights
        ess_before = float(1.0 / np.sum(w * w))
        f_values.append(f_hat(ens.log_weights, model.log_prior(ens.theta), ens.log_lhat, pi0.logpdf(ens.theta)))
        resampled = False
        if t < sched.T:
            ens, resampled = maybe_resample(ens, config.ess_fraction, rng, config.resampler)
        w = ens.weights
        ess_after = float(1.0 / np.sum(w * w))
        state = replace(state, proposal_covariance=weighted_covariance(ens.theta, w))
        ens, st = mh_move_ensemble(ens, a, state, model, pi0, config.n_policy, config.mh_reps, rng)
        calls += st.estimator_calls
        pilot_calls += st.pilot_calls
        fin = ens.log_lhat[np.isfinite(ens.log_lhat)]
        trace.records.append(SweepRecord(
            t, a, ess_before, ess_after, resampled, st.acceptance_rate, state.scale, f_values[-1],
            float(fin.mean()) if fin.size else float("nan"),
            float(fin.var()) if fin.size else float("nan"),
            st.estimator_calls, st.auto_rejected,
        ))
        state = adapt_scale(state, st.acceptance_rate)
    evidence = EvidenceTrace.from_schedule(sched, f_values)
    mean, sd = _summary(ens)
    w = ens.weights
    report = RunReport(
        names=model.layout.names,
        posterior_mean=mean,
        posterior_sd=sd,
        log_ml=evidence.log_ml,
        log_ml_is=float(log_z),
        final_ess=float(1.0 / np.sum(w * w)),
        n_resamples=sum(r.resampled for r in trace.records),
        estimator_calls=calls,
        pilot_calls=pilot_calls,
        evidence=evidence,
    )
    return ens, trace, report


def posterior_expectation(ensemble: Ensemble, phi=None) -> np.ndarray:
    """``sum_i W_i phi(theta_i)``; ``phi`` maps an ``(M, d)`` constrained array to ``(M, ...)``."""
    th = ensemble.constrained
    vals = th if phi is None else np.asarray(phi(th), dtype=float)
    w = ensemble.weights / ensemble.weights.sum()
    return np.tensordot(w, vals, axes=(0, 0))


__all__ = [
    "AdaptiveN", "FixedN", "MoveState", "MoveStats", "RunReport", "SamplerConfig", "SweepRecord", "SweepTrace",
    "adapt_scale", "aisel_run", "estimate", "init_ensemble", "log_weight_increment", "maybe_resample",
    "mh_move", "mh_move_ensemble", "multiplication_factor", "posterior_expectation", "reweight",
    "tempered_log_target", "weighted_covariance",
]
