"""Annealed importance sampling with an unbiasedly estimated likelihood."""
from .core import (
    AiselError,
    AnnealingSchedule,
    ContractViolation,
    DegenerateWeightsError,
    Ensemble,
    ess,
    make_schedule,
    parse_ladder,
    tau,
)
from .marglik import EvidenceTrace, f_hat, log_ml_trapezoid
from .runner import BatchReport, run_batches, tnv_sweep
from .sampler import AdaptiveN, FixedN, SamplerConfig, aisel_run

__all__ = [
    "AdaptiveN",
    "AiselError",
    "AnnealingSchedule",
    "BatchReport",
    "ContractViolation",
    "DegenerateWeightsError",
    "Ensemble",
    "EvidenceTrace",
    "FixedN",
    "SamplerConfig",
    "aisel_run",
    "ess",
    "f_hat",
    "log_ml_trapezoid",
    "make_schedule",
    "parse_ladder",
    "run_batches",
    "tau",
    "tnv_sweep",
]
