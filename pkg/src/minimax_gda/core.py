"""Vector arithmetic, counter-based random streams and mini-batch draws.

Vectors are float64 numpy arrays whose last axis is the coordinate axis.
Any leading axes are independent "lanes" (typically one lane per seed), so
a seed sweep can advance in a single vectorized loop. Every reduction here
accumulates strictly left to right along the coordinate axis (via
``np.cumsum``), which makes the result of a lane independent of how many
other lanes are computed alongside it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

__all__ = [
    "ContractError",
    "UnsupportedCapability",
    "as_vector",
    "check_finite",
    "dot",
    "sqnorm",
    "norm",
    "matvec",
    "batch_mean",
    "RngStream",
    "MiniBatch",
    "draw_batch",
]

_MASK64 = (1 << 64) - 1
_BLOCK = 4  # Philox emits four 64-bit words per counter increment
_CHUNK_WORDS = 1 << 14


class ContractError(ValueError):
    """An argument violates a documented precondition."""


class UnsupportedCapability(NotImplementedError):
    """The object does not provide the requested capability."""


def as_vector(x, dim: int | None = None, name: str = "vector") -> np.ndarray:
    """Convert ``x`` to a finite float64 array, optionally checking its dimension."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        raise ContractError(f"{name} must have at least one axis")
    if dim is not None and arr.shape[-1] != dim:
        raise ContractError(f"{name} has dimension {arr.shape[-1]}, expected {dim}")
    if arr.shape[-1] == 0:
        raise ContractError(f"{name} must have positive dimension")
    check_finite(arr, name)
    return arr


def check_finite(arr: np.ndarray, name: str = "vector") -> None:
    if not np.all(np.isfinite(arr)):
        raise ContractError(f"{name} contains non-finite entries")


def _same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[-1] != b.shape[-1]:
        raise ContractError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")


def dot(a, b) -> np.ndarray | float:
    """Inner product over the last axis, summed left to right."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _same_dim(a, b)
    out = np.cumsum(a * b, axis=-1)[..., -1]
    return float(out) if out.ndim == 0 else out


def sqnorm(a) -> np.ndarray | float:
    return dot(a, a)


def norm(a) -> np.ndarray | float:
    return np.sqrt(sqnorm(a))


def matvec(m: np.ndarray, x) -> np.ndarray:
    """``m @ x`` for a 2-D matrix and a (possibly laned) vector.

    Each output entry is a row dot product accumulated left to right.
    """
    x = np.asarray(x, dtype=np.float64)
    if m.shape[1] != x.shape[-1]:
        raise ContractError(f"dimension mismatch: matrix has {m.shape[1]} columns, vector {x.shape[-1]}")
    return np.cumsum(m * x[..., None, :], axis=-1)[..., -1]


def batch_mean(samples: np.ndarray, axis: int = -2) -> np.ndarray:
    """Mean over the sample axis, accumulated in sample order."""
    n = samples.shape[axis]
    if n == 0:
        raise ContractError("empty batch")
    if n == 1:
        return np.take(samples, 0, axis=axis)
    return np.take(np.cumsum(samples, axis=axis), -1, axis=axis) / n


class RngStream:
    """Counter-addressed stream of 64-bit words.

    The word sequence is fixed by ``(seed, stream_id)``: it is Philox4x64
    keyed with ``seed | stream_id << 64``. ``counter`` is the number of words
    consumed so far, so two streams built with the same triple produce the
    same draws and distinct stream ids never share key material.
    """

    __slots__ = ("seed", "stream_id", "counter", "_key", "_buf", "_buf_start")

    def __init__(self, seed: int, stream_id: int = 0, counter: int = 0):
        for name, val in (("seed", seed), ("stream_id", stream_id), ("counter", counter)):
            if not 0 <= int(val) <= _MASK64:
                raise ContractError(f"{name} must be a 64-bit unsigned integer, got {val}")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.counter = int(counter)
        self._key = self.seed | (self.stream_id << 64)
        self._buf: np.ndarray | None = None
        self._buf_start = 0

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, counter={self.counter})"

    def copy(self) -> RngStream:
        return RngStream(self.seed, self.stream_id, self.counter)

    def words(self, n: int) -> np.ndarray:
        """Next ``n`` raw words; advances ``counter`` by exactly ``n``."""
        start, stop = self.counter, self.counter + n
        buf = self._buf
        if buf is None or start < self._buf_start or stop > self._buf_start + buf.size:
            block = start // _BLOCK
            need = stop - block * _BLOCK
            nwords = -(-max(need, _CHUNK_WORDS) // _BLOCK) * _BLOCK
            buf = np.random.Philox(key=self._key, counter=block).random_raw(nwords)
            self._buf, self._buf_start = buf, block * _BLOCK
        self.counter = stop
        return buf[start - self._buf_start : stop - self._buf_start].copy()

    def uniforms(self, n: int) -> np.ndarray:
        """``n`` doubles in the open interval (0, 1), one word each."""
        w = self.words(n)
        return ((w >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53

    def normals(self, n: int) -> np.ndarray:
        """``n`` standard normals by inverse CDF, one word each."""
        return ndtri(self.uniforms(n))


@dataclass(frozen=True)
class MiniBatch:
    """A batch of ``q`` i.i.d. draws.

    ``draws`` has shape ``(..., q, width)``: leading lane axes, then one row
    per sample. Rows hold raw noise (expectation problems) or integer sample
    identifiers (finite-sum problems).
    """

    draws: np.ndarray

    def __post_init__(self):
        if self.draws.ndim < 2 or self.draws.shape[-2] < 1:
            raise ContractError("a mini-batch needs at least one draw")

    @property
    def size(self) -> int:
        return self.draws.shape[-2]

    @property
    def width(self) -> int:
        return self.draws.shape[-1]


def draw_batch(rng: RngStream, q: int, width: int = 1, kind: str = "normal") -> MiniBatch:
    """Draw ``q`` samples of ``width`` values each from ``rng``.

    Consumes exactly ``q * width`` words, so the counter advance depends
    only on the arguments.
    """
    if q < 1:
        raise ContractError(f"batch size must be >= 1, got {q}")
    if width < 1:
        raise ContractError(f"draw width must be >= 1, got {width}")
    if kind == "normal":
        raw = rng.normals(q * width)
    elif kind == "uniform":
        raw = rng.uniforms(q * width)
    else:
        raise ContractError(f"unknown draw kind {kind!r}")
    return MiniBatch(raw.reshape(q, width))
