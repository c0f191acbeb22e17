"""Binary tensor files, rank-matrix JSON and observation masks.

File layout (all little-endian)::

    b"DTEN"  u16 version=1  u16 order  order x u64 dims  prod(dims) x f64 values

Values are row-major.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .network import RankMatrix

MAGIC = b"DTEN"
VERSION = 1
_HEADER = struct.Struct("<4sHH")
MASK_RNG = "numpy.PCG64/permutation"


class TensorFileError(ValueError):
    code = "tensor-file"


class BadMagicError(TensorFileError):
    code = "bad-magic"


class UnsupportedVersionError(TensorFileError):
    code = "bad-version"


class TruncatedPayloadError(TensorFileError):
    code = "truncated"


class DimOverflowError(TensorFileError):
    code = "dim-overflow"


def encode_tensor(x: np.ndarray) -> bytes:
    x = np.ascontiguousarray(x, dtype="<f8")
    if x.ndim > 0xFFFF:
        raise DimOverflowError("order does not fit in u16")
    head = _HEADER.pack(MAGIC, VERSION, x.ndim) + struct.pack(f"<{x.ndim}Q", *x.shape)
    return head + x.tobytes()


def decode_tensor(buf: bytes) -> np.ndarray:
    if len(buf) < _HEADER.size:
        raise TruncatedPayloadError(f"file is {len(buf)} bytes, shorter than the header")
    magic, version, order = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported version {version}")
    dims_end = _HEADER.size + 8 * order
    if len(buf) < dims_end:
        raise TruncatedPayloadError("file ends inside the dims block")
    dims = struct.unpack_from(f"<{order}Q", buf, _HEADER.size)
    count = 1
    for d in dims:
        count *= d
    if any(d == 0 for d in dims) or count * 8 > 2**62:
        raise DimOverflowError(f"unusable dims {dims}")
    expected = dims_end + 8 * count
    if len(buf) != expected:
        raise TruncatedPayloadError(f"payload is {len(buf) - dims_end} bytes, dims {dims} need {8 * count}")
    values = np.frombuffer(buf, dtype="<f8", count=count, offset=dims_end)
    return values.astype(np.float64).reshape(dims)


def write_tensor(path, x: np.ndarray) -> None:
    Path(path).write_bytes(encode_tensor(x))


def read_tensor(path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes())


def parse_ranks(spec, order: int) -> RankMatrix:
    """Rank matrix from a full N x N list, a scalar (every bond) or ``{"tr": r}`` (ring pattern)."""
    if isinstance(spec, bool):
        raise ValueError("ranks must be an integer, a matrix or {'tr': r}")
    if isinstance(spec, int):
        return RankMatrix.full(order, spec)
    if isinstance(spec, dict):
        if set(spec) == {"tr"}:
            return RankMatrix.tensor_ring(order, int(spec["tr"]))
        if set(spec) == {"full"}:
            return RankMatrix.full(order, int(spec["full"]))
        raise ValueError(f"unknown rank spec {spec}")
    r = RankMatrix(spec)
    if r.n != order:
        raise ValueError(f"rank matrix is {r.n}x{r.n} but the tensor has order {order}")
    return r


def load_ranks(path, order: int) -> RankMatrix:
    return parse_ranks(json.loads(Path(path).read_text()), order)


@dataclass
class ObservationMask:
    mask: np.ndarray
    rate: float
    seed: int
    rng: str = MASK_RNG

    @property
    def n_observed(self) -> int:
        return int(self.mask.sum())


def gen_mask(dims: Sequence[int], rate: float, seed: int) -> ObservationMask:
    """Observe exactly ``round(rate * prod(dims))`` entries drawn uniformly without replacement."""
    if not 0.0 < rate <= 1.0:
        raise ValueError(f"sampling rate must be in (0, 1], got {rate}")
    dims = tuple(int(d) for d in dims)
    total = int(np.prod(dims, dtype=np.int64))
    k = int(round(rate * total))
    flat = np.zeros(total)
    flat[np.random.default_rng(seed).permutation(total)[:k]] = 1.0
    return ObservationMask(flat.reshape(dims), rate, seed)


def read_csv_tensor(path, dims: Sequence[int] | None = None) -> np.ndarray:
    """Flat CSV of values; dims come from the argument or a ``# dims: a,b,c`` first line."""
    text = Path(path).read_text().splitlines()
    if text and text[0].lstrip().startswith("#"):
        head = text.pop(0).lstrip("# ").strip()
        if dims is None and head.lower().startswith("dims"):
            dims = [int(v) for v in head.split(":", 1)[1].replace(",", " ").split()]
    if dims is None:
        raise ValueError("dims not given and no '# dims:' header in the CSV")
    values = [float(v) for line in text for v in line.replace(";", ",").split(",") if v.strip()]
    x = np.asarray(values, dtype=np.float64)
    if x.size != int(np.prod(dims)):
        raise ValueError(f"{x.size} values do not fill dims {tuple(dims)}")
    return x.reshape(tuple(dims))
