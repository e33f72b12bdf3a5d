"""Temperature ladders, log-domain weights, ESS and resampling."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .params import ParamLayout, ParamVector


class AiselError(Exception):
    """Base class for errors raised by this package."""


class DegenerateWeightsError(AiselError, FloatingPointError):
    """Every importance weight is zero (all log-weights are -inf)."""

    def __init__(self, message: str, temperature_index: int | None = None):
        super().__init__(message)
        self.temperature_index = temperature_index


class ContractViolation(AiselError, ValueError):
    """An input violates a documented precondition."""


@dataclass(frozen=True)
class AnnealingSchedule:
    """Strictly increasing temperatures ``0 = a_0 < ... < a_T = 1``."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1)
        if pts.size < 2:
            raise ValueError("a schedule needs at least two temperatures")
        if pts[0] != 0.0 or pts[-1] != 1.0:
            raise ValueError("a schedule must start at 0 and end at 1")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("temperatures must be strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def T(self) -> int:
        return self.points.size - 1

    @property
    def deltas(self) -> np.ndarray:
        return np.diff(self.points)

    def __len__(self):
        return self.points.size

    def __getitem__(self, t):
        return self.points[t]

    def __iter__(self):
        return iter(self.points.tolist())


def make_schedule(kind: str = "power", T: int = 10, exponent: float = 1.0) -> AnnealingSchedule:
    """Power ladder ``a_t = (t/T)**exponent`` for ``t = 0..T``."""
    if kind != "power":
        raise ValueError(f"unsupported schedule kind {kind!r}")
    if int(T) != T or T < 1:
        raise ValueError("T must be a positive integer")
    if not exponent > 0:
        raise ValueError("exponent must be positive")
    pts = (np.arange(int(T) + 1) / int(T)) ** float(exponent)
    pts[-1] = 1.0
    return AnnealingSchedule(pts)


def parse_ladder(text: str) -> AnnealingSchedule:
    """Parse ``linear:T``, ``cubic:T`` or ``power<k>:T`` (e.g. ``power3:15``)."""
    try:
        kind, T = text.strip().split(":")
        T = int(T)
    except ValueError:
        raise ValueError(f"ladder must look like 'linear:10' or 'power3:15', got {text!r}") from None
    kind = kind.lower()
    if kind == "linear":
        exponent = 1.0
    elif kind == "cubic":
        exponent = 3.0
    elif kind.startswith("power"):
        try:
            exponent = float(kind[5:])
        except ValueError:
            raise ValueError(f"bad power exponent in {text!r}") from None
    else:
        raise ValueError(f"unknown ladder kind {kind!r}")
    return make_schedule("power", T, exponent)


def tau(schedule: AnnealingSchedule) -> float:
    """ESS degradation exponent ``sum_t (a_t - a_{t-1}) (2 a_t - 1)``.

    Telescoping shows it equals ``sum_t (a_t - a_{t-1})**2``.
    """
    a = schedule.points
    return float(np.sum(np.diff(a) * (2.0 * a[1:] - 1.0)))


def normalize(log_weights) -> tuple[np.ndarray, float]:
    """Normalise log-weights stably.

    Returns
    -------
    weights : ndarray
        Natural-domain weights summing to one.
    log_sum : float
        ``log(sum(exp(log_weights)))``.
    """
    lw = np.asarray(log_weights, dtype=float)
    if lw.size == 0 or not np.any(np.isfinite(lw)):
        raise DegenerateWeightsError("all log-weights are -inf; the weight estimator collapsed")
    if np.any(np.isnan(lw)) or np.any(lw == np.inf):
        raise ValueError("log-weights must be finite or -inf")
    log_sum = float(logsumexp(lw))
    w = np.exp(lw - log_sum)
    return w / w.sum(), log_sum


def ess(weights) -> float:
    """Effective sample size ``1 / sum(W_i**2)`` of normalised weights.

    Accepts an :class:`Ensemble` or an array of normalised weights.
    """
    if isinstance(weights, Ensemble):
        if not weights.normalized:
            raise ContractViolation("ess() needs a normalised ensemble")
        w = weights.weights
    else:
        w = np.asarray(weights, dtype=float)
        if abs(w.sum() - 1.0) > 1e-10:
            raise ContractViolation("ess() needs normalised weights")
    return float(1.0 / np.sum(w * w))


def ess_from_log_weights(log_weights) -> float:
    """ESS of unnormalised log-weights, ``(sum w)^2 / sum w^2``."""
    w, _ = normalize(log_weights)
    return float(1.0 / np.sum(w * w))


def systematic_indices(weights, rng: np.random.Generator) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    M = w.size
    positions = (rng.random() + np.arange(M)) / M
    cs = np.cumsum(w)
    cs[-1] = 1.0
    return np.searchsorted(cs, positions, side="right").clip(max=M - 1)


def multinomial_indices(weights, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    M = w.size if size is None else size
    cs = np.cumsum(w)
    cs[-1] = 1.0
    return np.searchsorted(cs, rng.random(M), side="right").clip(max=w.size - 1)


RESAMPLERS = {"systematic": systematic_indices, "multinomial": multinomial_indices}


def resample_indices(weights, method: str, rng: np.random.Generator) -> np.ndarray:
    try:
        fn = RESAMPLERS[method]
    except KeyError:
        raise ValueError(f"unknown resampling method {method!r}") from None
    return fn(weights, rng)


@dataclass(frozen=True)
class Particle:
    """One weighted particle: theta, its stored log-likelihood estimate, log-weight."""

    theta: ParamVector
    log_lhat: float
    log_weight: float


@dataclass
class Ensemble:
    """Weighted particle system held as arrays.

    ``theta`` is ``(M, d)`` on the unconstrained scale; ``log_lhat`` holds the
    stored likelihood estimate of each particle (NaN marks "not estimated");
    ``log_weights`` are kept normalised (log-sum-exp zero) unless built raw.
    """

    theta: np.ndarray
    log_lhat: np.ndarray
    log_weights: np.ndarray
    layout: ParamLayout
    n_particles: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.theta = np.atleast_2d(np.asarray(self.theta, dtype=float))
        M = self.theta.shape[0]
        self.log_lhat = np.asarray(self.log_lhat, dtype=float).reshape(M)
        self.log_weights = np.asarray(self.log_weights, dtype=float).reshape(M)
        if self.theta.shape[1] != self.layout.dim:
            raise ValueError("theta columns do not match the layout")

    @classmethod
    def uniform(cls, theta, log_lhat, layout, n_particles=None) -> "Ensemble":
        M = np.atleast_2d(theta).shape[0]
        return cls(theta, log_lhat, np.full(M, -np.log(M)), layout, n_particles)

    @property
    def M(self) -> int:
        return self.theta.shape[0]

    def __len__(self):
        return self.M

    def __getitem__(self, i) -> Particle:
        return Particle(ParamVector(self.theta[i], self.layout), float(self.log_lhat[i]), float(self.log_weights[i]))

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @property
    def normalized(self) -> bool:
        return bool(abs(self.weights.sum() - 1.0) <= 1e-10)

    @property
    def constrained(self) -> np.ndarray:
        return self.layout.to_constrained(self.theta)

    def normalize(self) -> "Ensemble":
        w, log_sum = normalize(self.log_weights)
        with np.errstate(divide="ignore"):
            lw = np.log(w)
        return replace(self, log_weights=lw)

    def take(self, idx) -> "Ensemble":
        idx = np.asarray(idx)
        n = None if self.n_particles is None else self.n_particles[idx]
        return Ensemble(self.theta[idx].copy(), self.log_lhat[idx].copy(), self.log_weights[idx].copy(), self.layout, n)

    def mean(self, values=None) -> np.ndarray:
        """Weighted mean of ``values`` (default: constrained theta)."""
        v = self.constrained if values is None else np.asarray(values, dtype=float)
        w = self.weights / self.weights.sum()
        return np.tensordot(w, v, axes=(0, 0))


def resample(ensemble: Ensemble, method: str = "systematic", rng: np.random.Generator | None = None) -> Ensemble:
    """Resample a normalised ensemble; output weights are uniform.

    Stored likelihood estimates travel with their theta.
    """
    if not ensemble.normalized:
        raise ContractViolation("resample() needs a normalised ensemble")
    rng = np.random.default_rng() if rng is None else rng
    idx = resample_indices(ensemble.weights, method, rng)
    out = ensemble.take(idx)
    out.log_weights = np.full(out.M, -np.log(out.M))
    return out
