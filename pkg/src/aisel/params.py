"""Parameter layouts and the constrained <-> unconstrained transforms.

Samplers work on an unconstrained copy of theta.  Positive parameters use a
log transform and interval parameters a scaled logit; the log-Jacobian of the
inverse map is exposed so densities can be expressed on either scale.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit, log_expit, logit


@dataclass(frozen=True)
class Support:
    """Support of a single scalar parameter: ``real``, ``positive`` or ``interval``."""

    kind: str = "real"
    lo: float = -np.inf
    hi: float = np.inf

    def __post_init__(self):
        if self.kind not in ("real", "positive", "interval"):
            raise ValueError(f"unknown support kind {self.kind!r}")
        if self.kind == "interval" and not (np.isfinite(self.lo) and np.isfinite(self.hi) and self.lo < self.hi):
            raise ValueError("interval support needs finite lo < hi")

    @classmethod
    def real(cls) -> "Support":
        return cls("real")

    @classmethod
    def positive(cls) -> "Support":
        return cls("positive", 0.0, np.inf)

    @classmethod
    def interval(cls, lo: float, hi: float) -> "Support":
        return cls("interval", float(lo), float(hi))

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "real":
            return np.isfinite(x)
        if self.kind == "positive":
            return np.isfinite(x) & (x > 0)
        return (x > self.lo) & (x < self.hi)

    def to_constrained(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "real":
            return u
        if self.kind == "positive":
            return np.exp(u)
        return self.lo + (self.hi - self.lo) * expit(u)

    def to_unconstrained(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "real":
            return x
        if self.kind == "positive":
            return np.log(x)
        return logit((x - self.lo) / (self.hi - self.lo))

    def log_jacobian(self, u):
        """log |d theta / d u| evaluated at the unconstrained value ``u``."""
        u = np.asarray(u, dtype=float)
        if self.kind == "real":
            return np.zeros_like(u)
        if self.kind == "positive":
            return u
        return np.log(self.hi - self.lo) + log_expit(u) + log_expit(-u)


@dataclass(frozen=True)
class ParamLayout:
    """Ordered ``(name, support)`` pairs describing a parameter vector."""

    names: tuple[str, ...]
    supports: tuple[Support, ...]

    def __post_init__(self):
        if len(self.names) != len(self.supports):
            raise ValueError("names and supports differ in length")
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate parameter names")

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[str, Support]]) -> "ParamLayout":
        names, supports = zip(*pairs) if pairs else ((), ())
        return cls(tuple(names), tuple(supports))

    @property
    def dim(self) -> int:
        return len(self.names)

    def __len__(self) -> int:
        return self.dim

    def _columns(self, arr, fn):
        arr = np.asarray(arr, dtype=float)
        if arr.shape[-1] != self.dim:
            raise ValueError(f"expected trailing dimension {self.dim}, got {arr.shape}")
        out = np.empty_like(arr)
        for j, s in enumerate(self.supports):
            out[..., j] = fn(s, arr[..., j])
        return out

    def to_constrained(self, u):
        return self._columns(u, Support.to_constrained)

    def to_unconstrained(self, theta):
        return self._columns(theta, Support.to_unconstrained)

    def log_jacobian(self, u):
        """Summed log-Jacobian over the trailing axis."""
        return self._columns(u, Support.log_jacobian).sum(axis=-1)

    def in_support(self, theta):
        theta = np.asarray(theta, dtype=float)
        ok = np.ones(theta.shape[:-1], dtype=bool)
        for j, s in enumerate(self.supports):
            ok &= s.contains(theta[..., j])
        return ok


@dataclass(frozen=True)
class ParamVector:
    """A single parameter point, stored on the unconstrained scale."""

    values: np.ndarray
    layout: ParamLayout

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if values.shape[0] != self.layout.dim:
            raise ValueError(f"got {values.shape[0]} values for a {self.layout.dim}-parameter layout")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_constrained(cls, theta, layout: ParamLayout) -> "ParamVector":
        theta = np.asarray(theta, dtype=float)
        if theta.shape[-1:] != (layout.dim,):
            raise ValueError(f"got {theta.shape[-1:]} values for a {layout.dim}-parameter layout")
        if not layout.in_support(theta):
            raise ValueError(f"theta={theta} is outside the parameter support")
        return cls(layout.to_unconstrained(theta), layout)

    @property
    def constrained(self) -> np.ndarray:
        return self.layout.to_constrained(self.values)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.layout.names, map(float, self.constrained)))
