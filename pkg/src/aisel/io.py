"""Key-value text files and small CSV writers used by the command line."""
from __future__ import annotations

import csv
from dataclasses import fields
from pathlib import Path

import numpy as np

from .sampler import SweepRecord


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_kv(mapping: dict, path) -> None:
    """One ``key = value`` line per entry, in insertion order."""
    lines = [f"{k} = {_fmt(v)}" for k, v in mapping.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def parse_kv(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment, blank lines are skipped."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {n}: expected 'key = value', got {raw!r}")
        k, v = (p.strip() for p in line.split("=", 1))
        if not k:
            raise ValueError(f"line {n}: empty key")
        out[k] = v
    return out


def read_kv(path) -> dict[str, str]:
    return parse_kv(Path(path).read_text())


def write_posterior_csv(names, mean, sd, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["parameter", "mean", "sd"])
        for n, m, s in zip(names, mean, sd):
            w.writerow([n, repr(float(m)), repr(float(s))])


def write_trace_csv(trace, path) -> None:
    """One row per temperature of a :class:`~aisel.sampler.SweepTrace`."""
    cols = [f.name for f in fields(SweepRecord)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for rec in trace.records:
            w.writerow([_fmt(getattr(rec, c)) for c in cols])
