"""Mixed logistic regression with a random intercept and random slope.

    P(y_ij = 1 | beta, eta_i) = logistic(beta0 + x_ij' beta + eta_i0 + z_ij eta_i1)
    eta_i ~ N(0, diag(sigma2_1, sigma2_2))
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats
from scipy.special import log_expit, roots_hermite

from ..likelihood import EstimatorSettings, LikelihoodEstimate, glmm_is_loglik
from ..params import ParamLayout, Support
from .base import Model, MultivariateTInitial

GLMM_LAYOUT = ParamLayout(
    ("beta0", "beta1", "beta2", "beta3", "sigma2_1", "sigma2_2"),
    (Support.real(),) * 4 + (Support.positive(),) * 2,
)


@dataclass(frozen=True)
class GlmmSpec:
    m: int = 50
    n_i: int = 10
    beta0: float = -3.0
    beta: tuple[float, float, float] = (2.0, -2.0, 2.0)
    sigma2: tuple[float, float] = (2.0, 1.0)

    def __post_init__(self):
        if self.m < 1 or self.n_i < 1:
            raise ValueError("need at least one cluster and one observation per cluster")
        if len(self.beta) != 3:
            raise ValueError("beta must have three components")
        if any(s < 0 for s in self.sigma2):
            raise ValueError("random-effect variances must be nonnegative")

    @property
    def theta(self) -> np.ndarray:
        return np.array([self.beta0, *self.beta, *self.sigma2])


@dataclass
class GlmmData:
    """Cluster-padded arrays: ``y``, ``z`` are ``(m, n_max)``, ``x`` is ``(m, n_max, 3)``."""

    y: np.ndarray
    x: np.ndarray
    z: np.ndarray
    counts: np.ndarray
    cluster_ids: list = field(default_factory=list)

    def __post_init__(self):
        self.y = np.ascontiguousarray(self.y, dtype=float)
        self.x = np.ascontiguousarray(self.x, dtype=float)
        self.z = np.ascontiguousarray(self.z, dtype=float)
        self.counts = np.ascontiguousarray(self.counts, dtype=np.int64)
        m, n = self.y.shape
        if self.x.shape != (m, n, 3) or self.z.shape != (m, n) or self.counts.shape != (m,):
            raise ValueError("inconsistent GLMM design dimensions")
        if not self.cluster_ids:
            self.cluster_ids = list(range(m))

    @property
    def mask(self) -> np.ndarray:
        return (np.arange(self.y.shape[1])[None, :] < self.counts[:, None]).astype(float)

    @property
    def n_obs(self) -> int:
        return int(self.counts.sum())

    @property
    def m(self) -> int:
        return self.y.shape[0]

    def subset(self, clusters) -> "GlmmData":
        c = np.asarray(clusters)
        return GlmmData(self.y[c], self.x[c], self.z[c], self.counts[c], [self.cluster_ids[i] for i in c])


def simulate_glmm(spec: GlmmSpec, rng: np.random.Generator) -> GlmmData:
    """Draw covariates from U(0,1), random effects from N(0, Sigma), then responses."""
    m, n = spec.m, spec.n_i
    x = rng.random((m, n, 3))
    z = rng.random((m, n))
    eta = rng.standard_normal((m, 2)) * np.sqrt(np.asarray(spec.sigma2))
    lin = spec.beta0 + x @ np.asarray(spec.beta) + eta[:, :1] + z * eta[:, 1:]
    y = (rng.random((m, n)) < 1.0 / (1.0 + np.exp(-lin))).astype(float)
    return GlmmData(y, x, z, np.full(m, n))


def write_glmm_csv(data: GlmmData, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cluster_id", "y", "x1", "x2", "x3", "z"])
        for i, cid in enumerate(data.cluster_ids):
            for j in range(data.counts[i]):
                w.writerow([cid, int(data.y[i, j]), *(repr(float(v)) for v in data.x[i, j]), repr(float(data.z[i, j]))])


def read_glmm_csv(path) -> GlmmData:
    rows: dict = {}
    with open(Path(path), newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"cluster_id", "y", "x1", "x2", "x3", "z"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"GLMM CSV is missing columns {sorted(missing)}")
        for r in reader:
            y = float(r["y"])
            if y not in (0.0, 1.0):
                raise ValueError(f"responses must be 0/1, got {r['y']!r}")
            rows.setdefault(r["cluster_id"], []).append((y, float(r["x1"]), float(r["x2"]), float(r["x3"]), float(r["z"])))
    if not rows:
        raise ValueError("GLMM CSV has no rows")
    ids = list(rows)
    counts = np.array([len(rows[c]) for c in ids])
    m, n = len(ids), counts.max()
    y = np.zeros((m, n))
    x = np.zeros((m, n, 3))
    z = np.zeros((m, n))
    for i, c in enumerate(ids):
        arr = np.array(rows[c])
        k = arr.shape[0]
        y[i, :k], x[i, :k], z[i, :k] = arr[:, 0], arr[:, 1:4], arr[:, 4]
    return GlmmData(y, x, z, counts, ids)


def glmm_loglik_quadrature(data: GlmmData, theta, n_nodes: int = 32) -> float:
    """Exact-likelihood oracle by tensor Gauss-Hermite quadrature (small problems only)."""
    theta = np.asarray(theta, dtype=float)
    x, w = roots_hermite(n_nodes)
    sd = np.sqrt(theta[4:6])
    e0 = np.sqrt(2.0) * sd[0] * x[:, None]
    e1 = np.sqrt(2.0) * sd[1] * x[None, :]
    ww = np.log(w[:, None] * w[None, :] / np.pi)
    total = 0.0
    for i in range(data.m):
        k = data.counts[i]
        base = theta[0] + data.x[i, :k] @ theta[1:4]
        lin = base[:, None, None] + e0[None] + data.z[i, :k, None, None] * e1[None]
        yy = data.y[i, :k, None, None]
        ll = np.sum(np.where(yy > 0.5, log_expit(lin), log_expit(-lin)), axis=0)
        total += float(np.logaddexp.reduce((ll + ww).ravel()))
    return total


class GlmmModel(Model):
    """Priors: ``beta ~ N(0, 100 I)`` and ``p(sigma2_k) ∝ 1 / sigma2_k`` (improper)."""

    default_variance_method = "delta"

    def __init__(self, data: GlmmData, proposal: str = "prior"):
        self.data = data
        self.proposal = proposal
        self.layout = GLMM_LAYOUT

    def log_prior_constrained(self, theta):
        theta = np.atleast_2d(theta)
        lp = stats.norm.logpdf(theta[:, :4], 0.0, 10.0).sum(axis=1)
        s = theta[:, 4:6]
        ok = np.all(s > 0, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            lv = -np.log(s).sum(axis=1)
        return np.where(ok, lp + lv, -np.inf)

    def default_pi0(self):
        return MultivariateTInitial(self.layout, loc=[0, 0, 0, 0, 1, 2], shape=3.0 * np.eye(6), df=10)

    def estimate_loglik(self, u, settings: EstimatorSettings, rng) -> LikelihoodEstimate:
        u = np.atleast_2d(u)
        if u.shape[1] != self.layout.dim:
            raise ValueError(f"expected {self.layout.dim} parameters, got {u.shape[1]}")
        theta = self.layout.to_constrained(u)
        return glmm_is_loglik(self.data, theta, settings.n_particles, rng, settings.variance_method, self.proposal)
