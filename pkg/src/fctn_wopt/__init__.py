"""Tensor completion by fully-connected tensor network weighted optimization."""
from .completion import CompletionConfig, CompletionResult, complete, decompose, observed_rel_residual
from .io import gen_mask, read_tensor, write_tensor
from .lbfgs import LbfgsOptions, minimize
from .metrics import psnr, rel_error, ssim
from .network import FactorSet, RankMatrix, compose_excluding, fctn_compose, init_factors
from .objective import Problem, full_gradient, grad_factor, loss

__all__ = [
    "CompletionConfig",
    "CompletionResult",
    "FactorSet",
    "LbfgsOptions",
    "Problem",
    "RankMatrix",
    "complete",
    "compose_excluding",
    "decompose",
    "fctn_compose",
    "full_gradient",
    "gen_mask",
    "grad_factor",
    "init_factors",
    "loss",
    "minimize",
    "observed_rel_residual",
    "psnr",
    "read_tensor",
    "rel_error",
    "ssim",
    "write_tensor",
]

__version__ = "0.1.0"
