"""Numerical checks of the ESS penalty from likelihood noise.

Under perfect mixing (exact draws from every interpolation density) and
Gaussian log-likelihood noise of variance ``sigma2``, the noisy-weight ESS is
smaller than the exact-weight ESS by the factor ``exp(-tau * sigma2)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import AnnealingSchedule, ContractViolation, Ensemble, ess_from_log_weights, tau
from .models.toy import GaussianToy


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian log-likelihood noise ``z ~ N(-sigma2/2, sigma2)``, so ``E[exp(z)] = 1``."""

    sigma2: float

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")

    def sample(self, size, rng, tilt: float = 0.0) -> np.ndarray:
        """Draw from the noise law tilted by ``exp(tilt * z)``: mean ``(tilt - 1/2) sigma2``."""
        if self.sigma2 == 0:
            return np.zeros(size)
        return (tilt - 0.5) * self.sigma2 + np.sqrt(self.sigma2) * rng.standard_normal(size)


@dataclass
class PerfectMixingResult:
    log_w: np.ndarray
    log_w_noisy: np.ndarray
    ess_exact: float
    ess_noisy: float

    @property
    def ess_ratio(self) -> float:
        return self.ess_noisy / self.ess_exact


def perfect_mixing_ais(toy: GaussianToy, schedule: AnnealingSchedule, M: int, noise: NoiseSpec, rng,
                       tilted: bool = True) -> PerfectMixingResult:
    """AIS weights with and without noise, drawing every theta exactly.

    ``pi0`` is the toy's prior.  At step ``t`` each trajectory draws
    ``theta ~ xi_{a_{t-1}}`` and a fresh noise value ``z``; both weight
    versions share the theta draws.  With ``tilted=True`` the noise is drawn
    from its law under the extended target at ``a_{t-1}``, which is the
    ``exp(a_{t-1} z)``-tilted normal.  This keeps ``E[w_noisy] = E[w]``.
    ``tilted=False`` uses the untilted ``N(-sigma2/2, sigma2)``.  The ESS
    ratio is the same either way but the weights are then biased.
    """
    a = schedule.points
    log_w = np.zeros(M)
    log_z = np.zeros(M)
    for t in range(1, a.size):
        m, s = toy.tempered_moments(a[t - 1])
        theta = m + s * rng.standard_normal(M)
        # log prior + log lik - log pi0 reduces to log lik when pi0 is the prior
        log_w += (a[t] - a[t - 1]) * toy.exact_loglik(theta[:, None])
        log_z += (a[t] - a[t - 1]) * noise.sample(M, rng, tilt=a[t - 1] if tilted else 0.0)
    noisy = log_w + log_z
    return PerfectMixingResult(log_w, noisy, ess_from_log_weights(log_w), ess_from_log_weights(noisy))


def closed_form_variance(ensemble: Ensemble, phi=None, resampled: bool = False) -> np.ndarray:
    """``M * sum_i (phi_i - phi_hat)^2 W_i^2``: asymptotic variance of the weighted mean.

    Only valid when the producing run never resampled; pass ``resampled`` (or
    ``trace.any_resampled``) and it refuses otherwise.  Divide by ``M`` to get
    the variance of the estimate itself.
    """
    if resampled:
        raise ContractViolation("the closed-form variance is invalid after resampling")
    vals = ensemble.constrained if phi is None else np.asarray(phi(ensemble.constrained), dtype=float)
    w = ensemble.weights / ensemble.weights.sum()
    mean = np.tensordot(w, vals, axes=(0, 0))
    dev2 = (vals - mean) ** 2
    return ensemble.M * np.tensordot(w * w, dev2, axes=(0, 0))


@dataclass
class TheoryRow:
    ladder: str
    sigma2: float
    tau: float
    ess_ratio_measured: float
    ess_ratio_theory: float

    @property
    def rel_error(self) -> float:
        return abs(self.ess_ratio_measured / self.ess_ratio_theory - 1.0)


def default_theory_toy(rng=None) -> GaussianToy:
    """Ten observations from ``N(0.5, 1)`` with a standard normal prior; fixed data."""
    rng = np.random.default_rng(20240601) if rng is None else rng
    return GaussianToy.simulate(10, rng, theta=0.5)


def validate_theory(sigma2_list, ladders: dict[str, AnnealingSchedule], M: int, rng, toy: GaussianToy | None = None):
    """Measured vs predicted ESS ratio for every (ladder, sigma2) pair."""
    toy = default_theory_toy() if toy is None else toy
    rows = []
    for name, sched in ladders.items():
        tv = tau(sched)
        for s2 in sigma2_list:
            res = perfect_mixing_ais(toy, sched, M, NoiseSpec(float(s2)), rng)
            rows.append(TheoryRow(name, float(s2), tv, res.ess_ratio, float(np.exp(-tv * s2))))
    return rows


def write_theory_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ladder", "sigma2", "tau", "ess_ratio_measured", "ess_ratio_theory"])
        for r in rows:
            w.writerow([r.ladder, r.sigma2, repr(r.tau), repr(r.ess_ratio_measured), repr(r.ess_ratio_theory)])
