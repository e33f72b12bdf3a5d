"""Independent batches of the annealing sweep, their pooled summary and TNV sweeps.

The total particle budget ``config.M`` is split evenly across the ``R``
batches.  Each batch gets its own child seed of one root
:class:`numpy.random.SeedSequence`, so the report is reproducible for a
fixed root seed regardless of how many worker processes run the batches.
"""
from __future__ import annotations

import csv
import logging
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .core import AiselError
from .models.base import InitialDensity, Model
from .sampler import FixedN, SamplerConfig, aisel_run
from .tuning import tnv

log = logging.getLogger(__name__)


@dataclass
class BatchReport:
    names: tuple[str, ...]
    estimates: np.ndarray  # (R_done, d) posterior means per completed batch
    log_ml: np.ndarray
    seconds: np.ndarray  # CPU seconds per completed batch
    batch_ids: list[int]
    failures: list[tuple[int, str]] = field(default_factory=list)
    root_seed: int | None = None
    M_per_batch: int = 0
    N: int | None = None
    runs: list = field(default_factory=list, repr=False)  # (RunReport, SweepTrace) per completed batch

    @property
    def R(self) -> int:
        return self.estimates.shape[0]

    @property
    def mean(self) -> np.ndarray:
        return self.estimates.mean(axis=0)

    @property
    def var(self) -> np.ndarray | None:
        """``(1/R) sum_r (phi_r - phi_bar)^2`` per parameter; ``None`` for fewer than two batches."""
        if self.R < 2:
            return None
        return np.mean((self.estimates - self.mean) ** 2, axis=0)

    @property
    def se(self) -> np.ndarray | None:
        """Standard error of the pooled mean (unbiased batch variance / R)."""
        if self.R < 2:
            return None
        return np.sqrt(self.estimates.var(axis=0, ddof=1) / self.R)

    @property
    def posterior_sd(self) -> np.ndarray:
        """Posterior SD of the pooled sample, each batch weighted 1/R.

        Within-batch variance plus the spread of the batch means, so small
        batches that under-disperse do not shrink the reported SD.
        """
        sd = np.array([rep.posterior_sd for rep, _ in self.runs])
        means = np.array([rep.posterior_mean for rep, _ in self.runs])
        return np.sqrt(np.mean(sd**2, axis=0) + means.var(axis=0))

    @property
    def total_seconds(self) -> float:
        return float(self.seconds.sum())

    @property
    def tnv(self) -> np.ndarray | None:
        v = self.var
        return None if v is None else np.array([tnv(x, self.total_seconds) for x in v])

    @property
    def mean_tnv(self) -> float | None:
        t = self.tnv
        return None if t is None else float(t.mean())

    def as_dict(self, include_timing: bool = True) -> dict:
        out: dict = {"R": self.R, "M_per_batch": self.M_per_batch, "failures": len(self.failures)}
        if self.root_seed is not None:
            out["root_seed"] = self.root_seed
        if self.N is not None:
            out["N"] = self.N
        var = self.var
        for j, n in enumerate(self.names):
            out[f"mean.{n}"] = float(self.mean[j])
            if var is not None:
                out[f"var.{n}"] = float(var[j])
                out[f"se.{n}"] = float(self.se[j])
        out["log_ml.mean"] = float(np.mean(self.log_ml)) if self.log_ml.size else float("nan")
        for r, est in zip(self.batch_ids, self.estimates):
            for n, v in zip(self.names, est):
                out[f"batch{r}.{n}"] = float(v)
        for r, msg in self.failures:
            out[f"failure{r}"] = msg
        if include_timing:
            out["seconds.total"] = self.total_seconds
            if var is not None:
                out["tnv.mean"] = self.mean_tnv
        return out


def split_config(config: SamplerConfig, R: int) -> SamplerConfig:
    M_r = config.M // R
    if M_r < 2:
        raise ValueError(f"M={config.M} is too small for {R} batches")
    return replace(config, M=M_r)


def _one_batch(model: Model, config: SamplerConfig, seed: np.random.SeedSequence, pi0: InitialDensity | None):
    rng = np.random.default_rng(seed)
    t0 = time.process_time()
    try:
        _, trace, report = aisel_run(model, config, rng, pi0)
    except (AiselError, FloatingPointError, ValueError) as exc:
        return None, f"{type(exc).__name__}: {exc}", time.process_time() - t0
    return (report, trace), None, time.process_time() - t0


def run_batches(model: Model, config: SamplerConfig, R: int, seed: int = 0, pi0: InitialDensity | None = None,
                workers: int | None = None, split: bool = True) -> BatchReport:
    """Run ``R`` independent sweeps.

    With ``split=True`` each batch uses ``config.M // R`` particles, so the
    total budget is ``config.M``.  Failed batches are listed in
    ``failures`` and excluded from the pooled statistics.
    """
    if R < 1:
        raise ValueError("R must be at least 1")
    cfg = split_config(config, R) if split else config
    seeds = np.random.SeedSequence(seed).spawn(R)
    model.warmup(np.random.default_rng(np.random.SeedSequence(seed).spawn(R + 1)[-1]))
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_one_batch, [model] * R, [cfg] * R, seeds, [pi0] * R))
    else:
        results = [_one_batch(model, cfg, s, pi0) for s in seeds]
    est, lml, secs, ids, fails, runs = [], [], [], [], [], []
    for r, (run, err, sec) in enumerate(results):
        if run is None:
            fails.append((r, err))
            log.warning("batch %d failed: %s", r, err)
            continue
        rep = run[0]
        rep.seconds = sec
        runs.append(run)
        est.append(rep.posterior_mean)
        lml.append(rep.log_ml)
        secs.append(sec)
        ids.append(r)
    if fails:
        warnings.warn(f"{len(fails)} of {R} batches failed; pooled statistics use the rest", RuntimeWarning)
    d = model.layout.dim
    N = cfg.n_policy.N if isinstance(cfg.n_policy, FixedN) else None
    return BatchReport(
        model.layout.names,
        np.array(est).reshape(-1, d),
        np.array(lml),
        np.array(secs),
        ids,
        fails,
        seed,
        cfg.M,
        N,
        runs,
    )


@dataclass
class SweepRow:
    N: int
    tnv: float
    var: float
    seconds: float
    report: BatchReport


def tnv_sweep(model: Model, config: SamplerConfig, n_values, R: int, seed: int = 0,
              pi0: InitialDensity | None = None, workers: int | None = None, params=None) -> list[SweepRow]:
    """Time-normalised variance for each N, averaged over the monitored parameters.

    Every N reuses the same root seed (common random numbers), which makes
    the comparison across N less noisy.  ``params`` selects parameter
    columns (default: all).
    """
    n_values = list(n_values)
    if not n_values:
        raise ValueError("n_values must be nonempty")
    rows = []
    for N in n_values:
        rep = run_batches(model, replace(config, n_policy=FixedN(int(N))), R, seed, pi0, workers)
        v = rep.var
        if v is None:
            raise ValueError("a TNV sweep needs R >= 2 completed batches")
        cols = slice(None) if params is None else list(params)
        var = float(np.mean(v[cols]))
        rows.append(SweepRow(int(N), float(np.mean(rep.tnv[cols])), var, rep.total_seconds, rep))
        log.info("N=%d var=%.4g seconds=%.2f tnv=%.4g", N, var, rep.total_seconds, rows[-1].tnv)
    return rows


def write_sweep_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "tnv", "var", "seconds"])
        for r in rows:
            w.writerow([r.N, repr(r.tnv), repr(r.var), repr(r.seconds)])

