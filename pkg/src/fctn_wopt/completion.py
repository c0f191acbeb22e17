"""End-to-end completion: initialize, fit by L-BFGS, merge with the observations."""
from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .lbfgs import STOPPED, LbfgsOptions, minimize
from .metrics import rel_error
from .network import FactorSet, RankMatrix, fctn_compose, init_factors
from .objective import Problem, make_eval, pack, unpack

OUTER_CONVERGED = "outer-tol-converged"


class EmptyMaskError(ValueError):
    pass


@dataclass
class CompletionConfig:
    """Solver settings.

    ``outer_max_iters`` caps the total number of L-BFGS iterations, probes
    included. The run stops early once the observed relative residual changes
    by less than ``outer_tol`` between two iterations. With ``n_starts > 1``,
    that many random starts are each run for ``probe_iters`` iterations and
    the one with the lowest loss is continued.
    """

    ranks: RankMatrix
    seed: int = 0
    lbfgs: LbfgsOptions = field(default_factory=LbfgsOptions)
    outer_tol: float = 1e-5
    outer_max_iters: int = 200
    n_starts: int = 1
    probe_iters: int = 0
    init_mean: float = 0.0
    init_std: float = 0.1

    def __post_init__(self):
        if self.outer_tol <= 0 or self.outer_max_iters < 1:
            raise ValueError("outer_tol and outer_max_iters must be positive")
        if self.n_starts < 1 or self.probe_iters < 0:
            raise ValueError("n_starts must be >= 1 and probe_iters >= 0")
        if self.n_starts > 1 and (self.probe_iters < 1 or self.n_starts * self.probe_iters >= self.outer_max_iters):
            raise ValueError("multi-start needs 1 <= n_starts * probe_iters < outer_max_iters")
        if self.init_std <= 0:
            raise ValueError("init_std must be positive")


@dataclass
class SolveReport:
    status: str
    iterations: list[dict]
    observed_rel_residual: float
    wall_ms: float
    n_params: int
    n_evals: int
    lbfgs_history_bytes: int
    probe_losses: list[float] = field(default_factory=list)
    probe_iterations: int = 0
    rel_error: Optional[float] = None

    @property
    def total_iterations(self) -> int:
        return self.probe_iterations + len(self.iterations) - 1

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class CompletionResult:
    recovered: np.ndarray
    factors: FactorSet
    report: SolveReport


def observed_rel_residual(p: Problem, fs: FactorSet) -> float:
    """``||W * (T - compose(fs))||_F / ||W * T||_F``."""
    num = np.linalg.norm(p.mask * (p.observed - fctn_compose(fs)))
    return float(num / max(np.linalg.norm(p.mask * p.observed), 1e-300))


def _start(p: Problem, cfg: CompletionConfig, seed: int) -> np.ndarray:
    fs = init_factors(p.dims, p.ranks, seed, observed=p.observed, mask=p.mask,
                      std=cfg.init_std, mean=cfg.init_mean)
    return pack(fs)


def complete(p: Problem, cfg: CompletionConfig, truth: Optional[np.ndarray] = None) -> CompletionResult:
    """Fit the network to the observed entries and fill in the rest.

    Observed positions of the result are copied from ``p.observed``; the
    others come from the fitted composition. When ``truth`` is given the
    report also carries the relative error of the recovered tensor.
    """
    if not np.any(p.mask):
        raise EmptyMaskError("mask has no observed entries")
    t0 = time.perf_counter()
    evaluate, layout = make_eval(p)
    obs_norm = max(float(np.linalg.norm(p.observed)), 1e-300)

    def resid_of(f: float) -> float:
        return float(np.sqrt(2.0 * max(f, 0.0))) / obs_norm

    n_evals = 0
    probe_losses: list[float] = []
    budget = cfg.outer_max_iters
    if cfg.n_starts > 1:
        probe_opts = dataclasses.replace(cfg.lbfgs, max_iters=cfg.probe_iters)
        best = None
        for j in range(cfg.n_starts):
            r = minimize(evaluate, _start(p, cfg, cfg.seed + j), probe_opts)
            n_evals += r.n_evals
            probe_losses.append(r.f)
            if best is None or r.f < best.f:
                best = r
        x0 = best.x
        budget -= cfg.n_starts * cfg.probe_iters
    else:
        x0 = _start(p, cfg, cfg.seed)

    iterations: list[dict] = []
    last = [None]

    def on_iter(entry, x, f):
        r = resid_of(f)
        iterations.append({
            "iter": entry.iter,
            "loss": f,
            "grad_norm": entry.grad_inf_norm,
            "step_length": entry.step_length,
            "observed_rel_residual": r,
            "elapsed_ms": entry.elapsed * 1e3,
        })
        stop = last[0] is not None and abs(last[0] - r) < cfg.outer_tol
        last[0] = r
        return stop

    opts = dataclasses.replace(cfg.lbfgs, max_iters=budget)
    res = minimize(evaluate, x0, opts, callback=on_iter)
    n_evals += res.n_evals
    head = res.trace[0]
    iterations.insert(0, {
        "iter": 0, "loss": head.objective, "grad_norm": head.grad_inf_norm, "step_length": 0.0,
        "observed_rel_residual": resid_of(head.objective), "elapsed_ms": head.elapsed * 1e3,
    })
    # the callback does not see a step that ends the run by convergence
    if len(iterations) < len(res.trace):
        on_iter(res.trace[-1], res.x, res.f)

    fs = unpack(res.x, layout)
    recovered = np.where(p.mask == 1.0, p.observed, fctn_compose(fs))
    report = SolveReport(
        status=OUTER_CONVERGED if res.status == STOPPED else res.status,
        iterations=iterations,
        observed_rel_residual=observed_rel_residual(p, fs),
        wall_ms=(time.perf_counter() - t0) * 1e3,
        n_params=layout.size,
        n_evals=n_evals,
        lbfgs_history_bytes=2 * opts.memory * layout.size * 8,
        probe_losses=probe_losses,
        probe_iterations=cfg.n_starts * cfg.probe_iters if cfg.n_starts > 1 else 0,
        rel_error=None if truth is None else rel_error(truth, recovered),
    )
    return CompletionResult(recovered, fs, report)


def decompose_full(x: np.ndarray, cfg: CompletionConfig) -> CompletionResult:
    """Completion with every entry observed; the recovered tensor is ``x`` itself."""
    x = np.asarray(x, dtype=np.float64)
    return complete(Problem(x, np.ones(x.shape), cfg.ranks), cfg)


def decompose(x: np.ndarray, cfg: CompletionConfig) -> FactorSet:
    """Fit the network to a fully observed tensor and return the factors."""
    return decompose_full(x, cfg).factors
