"""Masked least-squares objective and its per-factor gradients."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .network import (
    FactorSet,
    RankMatrix,
    ValidationError,
    compose_excluding,
    factor_shape,
    fctn_compose,
    unfold_excluding,
    validate,
)
from .tensor import ShapeMismatchError, mode_fold, mode_unfold


@dataclass
class Problem:
    """Observed tensor, binary mask and rank matrix of a completion problem.

    Unobserved entries of ``observed`` are zeroed on construction, so values
    stored there never influence the loss.
    """

    observed: np.ndarray
    mask: np.ndarray
    ranks: RankMatrix

    def __post_init__(self):
        obs = np.asarray(self.observed, dtype=np.float64)
        mask = np.asarray(self.mask, dtype=np.float64)
        if obs.shape != mask.shape:
            raise ShapeMismatchError(f"observed {obs.shape} vs mask {mask.shape}")
        if not np.all((mask == 0.0) | (mask == 1.0)):
            raise ValueError("mask entries must be exactly 0 or 1")
        problems = validate(obs.shape, self.ranks)
        if problems:
            raise ValidationError(problems)
        self.observed = np.where(mask == 1.0, obs, 0.0)
        self.mask = np.ascontiguousarray(mask)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.observed.shape


def _check(p: Problem, fs: FactorSet) -> None:
    if fs.dims != p.dims or fs.ranks != p.ranks:
        raise ShapeMismatchError(f"factor set {fs.dims} does not match problem {p.dims}")


def loss(p: Problem, fs: FactorSet) -> float:
    """``0.5 * ||W * (T - compose(fs))||_F**2``."""
    _check(p, fs)
    r = p.mask * (p.observed - fctn_compose(fs))
    v = r.ravel()
    return 0.5 * float(np.dot(v, v))


def grad_factor(p: Problem, fs: FactorSet, t: int) -> np.ndarray:
    """Gradient of :func:`loss` with respect to factor ``t`` (1-based), shaped like it.

    The mask multiplies the mode-t residual before the right product with the
    transposed composite unfolding.
    """
    _check(p, fs)
    g = fs.factors[t - 1]
    m = unfold_excluding(compose_excluding(fs, t))
    resid = mode_unfold(p.mask, t) * (mode_unfold(g, t) @ m - mode_unfold(p.observed, t))
    return mode_fold(resid @ m.T, t, g.shape)


@dataclass(frozen=True)
class Layout:
    """Factor shapes of a packed parameter vector, factor-major, row-major inside."""

    dims: tuple[int, ...]
    ranks: RankMatrix
    shapes: tuple[tuple[int, ...], ...]

    @classmethod
    def of(cls, dims: Sequence[int], ranks: RankMatrix) -> "Layout":
        dims = tuple(int(d) for d in dims)
        shapes = tuple(factor_shape(dims, ranks, k) for k in range(1, len(dims) + 1))
        return cls(dims, ranks, shapes)

    @property
    def size(self) -> int:
        return sum(int(np.prod(s)) for s in self.shapes)


def pack(fs: FactorSet) -> np.ndarray:
    return np.concatenate([g.ravel() for g in fs.factors])


def unpack(v: np.ndarray, layout: Layout) -> FactorSet:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (layout.size,):
        raise ShapeMismatchError(f"vector of length {v.size} does not match layout size {layout.size}")
    factors, start = [], 0
    for shape in layout.shapes:
        stop = start + int(np.prod(shape))
        factors.append(v[start:stop].reshape(shape).copy())
        start = stop
    return FactorSet(factors, layout.dims, layout.ranks)


def full_gradient(p: Problem, fs: FactorSet) -> np.ndarray:
    return np.concatenate([grad_factor(p, fs, t).ravel() for t in range(1, fs.order + 1)])


def make_eval(p: Problem):
    """Objective-and-gradient callback on packed vectors, for :func:`fctn_wopt.lbfgs.minimize`."""
    layout = Layout.of(p.dims, p.ranks)

    def evaluate(x: np.ndarray) -> tuple[float, np.ndarray]:
        fs = unpack(x, layout)
        return loss(p, fs), full_gradient(p, fs)

    return evaluate, layout
