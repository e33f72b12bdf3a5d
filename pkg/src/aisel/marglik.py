"""Power-posterior (thermodynamic) evidence along the annealing ladder.

``log p(y) = int_0^1 E_{xi_s}[log p(theta) + log p_hat(y|theta) - log pi0(theta)] ds``,
with the integrand ``f(a_t)`` estimated from the weighted ensemble at each
temperature and the integral taken by the trapezoid rule.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import AnnealingSchedule, ContractViolation, normalize


def f_hat(log_weights, log_prior, log_lhat, log_pi0) -> float:
    """Weighted mean of ``log p + log_lhat - log pi0`` under (self-normalised) weights.

    Particles with zero weight are ignored, so a ``-inf`` integrand on a
    zero-weight particle does not poison the sum.
    """
    w, _ = normalize(np.asarray(log_weights, dtype=float))
    g = np.asarray(log_prior, float) + np.asarray(log_lhat, float) - np.asarray(log_pi0, float)
    if np.any(np.isnan(g[w > 0])):
        raise ContractViolation("f_hat needs a stored likelihood estimate for every weighted particle")
    live = w > 0
    return float(np.dot(w[live], g[live]))


def log_ml_trapezoid(temperatures, f_values) -> float:
    """``sum_t (a_{t+1} - a_t) (f_{t+1} + f_t) / 2``."""
    a = np.asarray(temperatures, dtype=float)
    f = np.asarray(f_values, dtype=float)
    if a.ndim != 1 or a.shape != f.shape:
        raise ValueError(f"need one f value per temperature, got {f.shape} for {a.shape}")
    if a.size < 2:
        raise ValueError("need at least two temperatures")
    return float(np.sum(np.diff(a) * (f[1:] + f[:-1]) / 2.0))


@dataclass(frozen=True)
class EvidenceTrace:
    temperatures: np.ndarray
    f_hat: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.temperatures, dtype=float)
        f = np.asarray(self.f_hat, dtype=float)
        if a.shape != f.shape:
            raise ValueError("f_hat must have one entry per temperature")
        object.__setattr__(self, "temperatures", a)
        object.__setattr__(self, "f_hat", f)

    @classmethod
    def from_schedule(cls, schedule: AnnealingSchedule, f_values) -> "EvidenceTrace":
        return cls(schedule.points, f_values)

    @property
    def log_ml(self) -> float:
        return log_ml_trapezoid(self.temperatures, self.f_hat)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "a_t", "f_hat"])
            for t, (a, f) in enumerate(zip(self.temperatures, self.f_hat)):
                w.writerow([t, repr(float(a)), repr(float(f))])

    @classmethod
    def read_csv(cls, path) -> "EvidenceTrace":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls([float(r["a_t"]) for r in rows], [float(r["f_hat"]) for r in rows])
