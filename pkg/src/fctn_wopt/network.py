"""Fully-connected tensor network (FCTN) structure and contractions.

Factor ``k`` (1-based) of an order-N network has N modes: mode ``k`` is the
physical mode of size ``I_k`` and mode ``j != k`` is the bond shared with
factor ``j``, of size ``R[j, k]``. Every pair of factors shares exactly one
bond, so composing the network sums each bond index once.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tensor import ShapeMismatchError, UnfoldSpec, generalized_unfold


class ValidationError(ValueError):
    """Raised when a factor set does not match its dims and rank matrix."""

    def __init__(self, diagnostics: list[str]):
        super().__init__("; ".join(diagnostics))
        self.diagnostics = diagnostics


class RankMatrix:
    """Symmetric N x N matrix of bond dimensions. The diagonal is stored but ignored."""

    def __init__(self, r):
        r = np.array(r, dtype=np.int64)
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise ValueError(f"rank matrix must be square, got shape {r.shape}")
        if r.shape[0] < 2:
            raise ValueError("rank matrix needs N >= 2")
        off = ~np.eye(r.shape[0], dtype=bool)
        if not np.array_equal(r, r.T):
            raise ValueError("rank matrix is not symmetric")
        if np.any(r[off] < 1):
            raise ValueError("off-diagonal ranks must be >= 1")
        r.setflags(write=False)
        self.r = r

    @classmethod
    def full(cls, n: int, rank: int) -> "RankMatrix":
        """Every bond set to ``rank``."""
        r = np.full((n, n), rank, dtype=np.int64)
        np.fill_diagonal(r, 0)
        return cls(r)

    @classmethod
    def tensor_ring(cls, n: int, rank: int) -> "RankMatrix":
        """Ring pattern: adjacent bonds (cyclically) get ``rank``, all others 1."""
        r = np.ones((n, n), dtype=np.int64)
        for k in range(n):
            r[k, (k + 1) % n] = r[(k + 1) % n, k] = rank
        np.fill_diagonal(r, 0)
        return cls(r)

    @property
    def n(self) -> int:
        return self.r.shape[0]

    def __getitem__(self, jk) -> int:
        """1-based bond lookup, ``ranks[j, k]``."""
        j, k = jk
        return int(self.r[j - 1, k - 1])

    def __eq__(self, other) -> bool:
        if not isinstance(other, RankMatrix):
            return NotImplemented
        off = ~np.eye(self.n, dtype=bool)
        return self.n == other.n and np.array_equal(self.r[off], other.r[off])

    def __repr__(self) -> str:
        return f"RankMatrix({self.r.tolist()})"

    def tolist(self) -> list[list[int]]:
        return self.r.tolist()


def factor_shape(dims: Sequence[int], ranks: RankMatrix, k: int) -> tuple[int, ...]:
    """Shape of factor ``k`` (1-based): bonds to every other factor, physical mode in slot k."""
    n = len(dims)
    return tuple(int(dims[k - 1]) if j == k else ranks[j, k] for j in range(1, n + 1))


@dataclass
class FactorSet:
    factors: list[np.ndarray]
    dims: tuple[int, ...]
    ranks: RankMatrix

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        self.factors = [np.ascontiguousarray(g, dtype=np.float64) for g in self.factors]
        problems = validate(self.dims, self.ranks, self.factors)
        if problems:
            raise ValidationError(problems)

    @property
    def order(self) -> int:
        return len(self.dims)

    def n_params(self) -> int:
        return sum(g.size for g in self.factors)

    def copy(self) -> "FactorSet":
        return FactorSet([g.copy() for g in self.factors], self.dims, self.ranks)


def validate(dims: Sequence[int], ranks: RankMatrix, factors: Sequence[np.ndarray] | None = None) -> list[str]:
    """Check dims, ranks and (optionally) factor shapes.

    Returns a list of human-readable diagnostics; an empty list means the
    inputs are consistent. Nothing here raises.
    """
    out = []
    n = len(dims)
    if n < 2:
        out.append(f"order must be >= 2, got {n}")
    if any(int(d) < 1 for d in dims):
        out.append(f"dims must be positive, got {tuple(dims)}")
    if not isinstance(ranks, RankMatrix):
        try:
            ranks = RankMatrix(ranks)
        except ValueError as exc:
            out.append(f"rank matrix rejected: {exc}")
            return out
    if ranks.n != n:
        out.append(f"rank matrix is {ranks.n}x{ranks.n} but tensor has order {n}")
        return out
    if factors is None or out:
        return out
    if len(factors) != n:
        out.append(f"expected {n} factors, got {len(factors)}")
        return out
    for k, g in enumerate(factors, start=1):
        want = factor_shape(dims, ranks, k)
        got = tuple(np.shape(g))
        if got != want:
            bad = [m + 1 for m in range(max(len(want), len(got)))
                   if m >= len(want) or m >= len(got) or want[m] != got[m]]
            out.append(f"factor {k}: expected dims {want}, got {got} (mismatched modes {bad})")
    return out


def _labels(n: int, k: int) -> list[tuple]:
    # 0-based factor k; physical label ("i", k), bond label ("r", lo, hi)
    return [("i", k) if j == k else ("r", min(j, k), max(j, k)) for j in range(n)]


def _contract(a: np.ndarray, la: list, b: np.ndarray, lb: list) -> tuple[np.ndarray, list]:
    """Sum over every label the two operands share; free labels keep operand order (a then b)."""
    shared = [lab for lab in la if lab in lb]
    out = np.tensordot(a, b, axes=([la.index(s) for s in shared], [lb.index(s) for s in shared]))
    return out, [lab for lab in la if lab not in shared] + [lab for lab in lb if lab not in shared]


def _contract_sequence(fs: FactorSet, order: Sequence[int]) -> tuple[np.ndarray, list]:
    n = fs.order
    first = order[0]
    acc, labels = fs.factors[first], _labels(n, first)
    for k in order[1:]:
        acc, labels = _contract(acc, labels, fs.factors[k], _labels(n, k))
    return acc, labels


def _arrange(acc: np.ndarray, labels: list, want: list) -> np.ndarray:
    return np.ascontiguousarray(acc.transpose([labels.index(w) for w in want]))


def fctn_compose(fs: FactorSet, order: Sequence[int] | None = None) -> np.ndarray:
    """Contract the whole network into a tensor of shape ``fs.dims``.

    Factors are folded in left to right (``order`` may override this, as
    1-based factor indices, for associativity checks).
    """
    n = fs.order
    seq = list(range(n)) if order is None else [k - 1 for k in order]
    if sorted(seq) != list(range(n)):
        raise ValueError(f"{order} is not an ordering of the factors")
    acc, labels = _contract_sequence(fs, seq)
    return _arrange(acc, labels, [("i", k) for k in range(n)])


@dataclass
class CompositeExcluding:
    """Contraction of every factor except ``t`` (1-based).

    Modes come in pairs, one pair per remaining factor ``k`` in ascending
    order: ``(I_k, R[k, t])`` when ``k < t`` and ``(R[t, k], I_k)`` when
    ``k > t``.
    """

    t: int
    tensor: np.ndarray


def composite_labels(n: int, t: int) -> list[tuple]:
    """Canonical mode labels of the composite that leaves out factor ``t`` (0-based t)."""
    want = []
    for k in range(n):
        if k < t:
            want += [("i", k), ("r", k, t)]
        elif k > t:
            want += [("r", t, k), ("i", k)]
    return want


def compose_excluding(fs: FactorSet, t: int) -> CompositeExcluding:
    n = fs.order
    if not 1 <= t <= n:
        raise ValueError(f"factor index {t} out of range 1..{n}")
    rest = [k for k in range(n) if k != t - 1]
    acc, labels = _contract_sequence(fs, rest)
    return CompositeExcluding(t, _arrange(acc, labels, composite_labels(n, t - 1)))


def excluding_spec(n: int, t: int) -> UnfoldSpec:
    """Row/column modes of the composite unfolding for order ``n``, excluded factor ``t``.

    Rows take the bond modes, columns the physical modes, both ascending by
    the factor they belong to.
    """
    rows = [2 * i if i < t else 2 * i - 1 for i in range(1, n)]
    cols = [2 * i - 1 if i < t else 2 * i for i in range(1, n)]
    return UnfoldSpec(rows, cols)


def unfold_excluding(m: CompositeExcluding) -> np.ndarray:
    n = m.tensor.ndim // 2 + 1
    return generalized_unfold(m.tensor, excluding_spec(n, m.t))


def init_factors(
    dims: Sequence[int],
    ranks: RankMatrix,
    seed: int,
    observed: np.ndarray | None = None,
    mask: np.ndarray | None = None,
    std: float = 0.1,
    mean: float = 0.0,
) -> FactorSet:
    """Random factors with i.i.d. ``N(mean, std**2)`` entries, optionally rescaled
    to the observed data's magnitude.

    When ``observed`` is given the factors are multiplied by a common
    ``s ** (1/N)`` so that the masked composition matches the masked data in
    Frobenius norm.
    """
    dims = tuple(int(d) for d in dims)
    problems = validate(dims, ranks)
    if problems:
        raise ValidationError(problems)
    rng = np.random.default_rng(seed)
    n = len(dims)
    factors = [rng.normal(mean, std, size=factor_shape(dims, ranks, k)) for k in range(1, n + 1)]
    fs = FactorSet(factors, dims, ranks)
    if observed is not None:
        if observed.shape != dims:
            raise ShapeMismatchError(f"observed data {observed.shape} vs dims {dims}")
        w = np.ones(dims) if mask is None else mask
        denom = np.linalg.norm(w * fctn_compose(fs))
        if denom >= 1e-12:
            scale = (np.linalg.norm(w * observed) / denom) ** (1.0 / n)
            fs = FactorSet([g * scale for g in fs.factors], dims, ranks)
    return fs
