"""Index algebra for dense N-order tensors.

Tensors are plain ``numpy.ndarray`` objects of dtype float64 in C (row-major)
order. Mode indices at this API boundary are 1-based, matching the usual
``X_(k)`` notation; everything is 0-based internally.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class InvalidModeError(ValueError):
    """A mode index or mode partition does not fit the tensor."""


class ShapeMismatchError(ValueError):
    """Two operands that must share dims do not."""


def as_tensor(values, dims: Sequence[int] | None = None) -> np.ndarray:
    """Return ``values`` as a C-contiguous float64 array, optionally reshaped to ``dims``."""
    x = np.ascontiguousarray(values, dtype=np.float64)
    if dims is not None:
        dims = tuple(int(d) for d in dims)
        if any(d < 1 for d in dims):
            raise ValueError(f"dims must be positive, got {dims}")
        if x.size != int(np.prod(dims, dtype=np.int64)):
            raise ShapeMismatchError(f"{x.size} values cannot fill dims {dims}")
        x = x.reshape(dims)
    return x


def offset_of(index: Sequence[int], dims: Sequence[int]) -> int:
    """Row-major flat offset of a 1-based multi-index."""
    off = 0
    for i, d in zip(index, dims):
        if not 1 <= i <= d:
            raise IndexError(f"index {tuple(index)} out of range for dims {tuple(dims)}")
        off = off * d + (i - 1)
    return off


def index_of(offset: int, dims: Sequence[int]) -> tuple[int, ...]:
    """Inverse of :func:`offset_of`."""
    out = []
    for d in reversed(dims):
        offset, r = divmod(offset, d)
        out.append(r + 1)
    if offset:
        raise IndexError("offset out of range")
    return tuple(reversed(out))


@dataclass(frozen=True)
class UnfoldSpec:
    """Partition of the modes ``1..N`` into a row group and a column group.

    Row (column) indices are decoded row-major over the listed mode order, so
    the first listed mode varies slowest.
    """

    row_modes: tuple[int, ...]
    col_modes: tuple[int, ...]

    def __init__(self, row_modes: Sequence[int], col_modes: Sequence[int]):
        object.__setattr__(self, "row_modes", tuple(int(m) for m in row_modes))
        object.__setattr__(self, "col_modes", tuple(int(m) for m in col_modes))

    @property
    def order(self) -> int:
        return len(self.row_modes) + len(self.col_modes)

    def check(self, ndim: int) -> None:
        modes = self.row_modes + self.col_modes
        if sorted(modes) != list(range(1, ndim + 1)):
            raise InvalidModeError(
                f"rows {self.row_modes} + cols {self.col_modes} is not a partition of 1..{ndim}"
            )

    def axes(self) -> tuple[int, ...]:
        return tuple(m - 1 for m in self.row_modes + self.col_modes)


def _check_mode(k: int, ndim: int) -> None:
    if not 1 <= k <= ndim:
        raise InvalidModeError(f"mode {k} out of range for an order-{ndim} tensor")


def generalized_unfold(x: np.ndarray, spec: UnfoldSpec) -> np.ndarray:
    """Matricize ``x`` with rows over ``spec.row_modes`` and columns over ``spec.col_modes``."""
    spec.check(x.ndim)
    nrows = int(np.prod([x.shape[m - 1] for m in spec.row_modes], dtype=np.int64))
    return np.ascontiguousarray(x.transpose(spec.axes())).reshape(nrows, -1)


def generalized_fold(mat: np.ndarray, spec: UnfoldSpec, dims: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`generalized_unfold` for a tensor of shape ``dims``."""
    dims = tuple(dims)
    spec.check(len(dims))
    axes = spec.axes()
    permuted = tuple(dims[a] for a in axes)
    if mat.size != int(np.prod(dims, dtype=np.int64)):
        raise ShapeMismatchError(f"matrix of size {mat.size} does not fold into {dims}")
    y = np.asarray(mat, dtype=np.float64).reshape(permuted)
    return np.ascontiguousarray(y.transpose(np.argsort(axes)))


def _mode_spec(k: int, ndim: int) -> UnfoldSpec:
    _check_mode(k, ndim)
    return UnfoldSpec([k], [m for m in range(1, ndim + 1) if m != k])


def mode_unfold(x: np.ndarray, k: int) -> np.ndarray:
    """Mode-``k`` unfolding, shape ``I_k x prod(I_j, j != k)``, remaining modes ascending."""
    return generalized_unfold(x, _mode_spec(k, x.ndim))


def mode_fold(mat: np.ndarray, k: int, dims: Sequence[int]) -> np.ndarray:
    return generalized_fold(mat, _mode_spec(k, len(dims)), dims)


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"hadamard of {a.shape} and {b.shape}")
    return np.multiply(a, b)


def frobenius_norm(x: np.ndarray) -> float:
    v = np.ravel(x)
    return float(np.sqrt(np.dot(v, v)))


def permute(x: np.ndarray, order: Sequence[int]) -> np.ndarray:
    """Reorder modes; ``order`` is a 1-based permutation (output mode i is input mode order[i])."""
    order = [int(o) for o in order]
    if sorted(order) != list(range(1, x.ndim + 1)):
        raise InvalidModeError(f"{order} is not a permutation of 1..{x.ndim}")
    return np.ascontiguousarray(x.transpose([o - 1 for o in order]))


def inverse_permutation(order: Sequence[int]) -> list[int]:
    inv = [0] * len(order)
    for pos, o in enumerate(order, start=1):
        inv[o - 1] = pos
    return inv


def reshape(x: np.ndarray, new_dims: Sequence[int]) -> np.ndarray:
    return as_tensor(np.ascontiguousarray(x), new_dims)
