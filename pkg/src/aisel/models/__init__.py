from .base import GaussianInitial, InitialDensity, Model, MultivariateTInitial, PriorInitial
from .glmm import (
    GLMM_LAYOUT,
    GlmmData,
    GlmmModel,
    GlmmSpec,
    glmm_loglik_quadrature,
    read_glmm_csv,
    simulate_glmm,
    write_glmm_csv,
)
from .sv import SV_LAYOUT, SVL_LAYOUT, SvModel, SvSpec, simulate_sv
from .toy import GaussianToy

__all__ = [
    "GLMM_LAYOUT",
    "SV_LAYOUT",
    "SVL_LAYOUT",
    "GaussianInitial",
    "GaussianToy",
    "GlmmData",
    "GlmmModel",
    "GlmmSpec",
    "InitialDensity",
    "Model",
    "MultivariateTInitial",
    "PriorInitial",
    "SvModel",
    "SvSpec",
    "glmm_loglik_quadrature",
    "read_glmm_csv",
    "simulate_glmm",
    "simulate_sv",
    "write_glmm_csv",
]
