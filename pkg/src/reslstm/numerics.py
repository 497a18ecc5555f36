"""Dense double-precision primitives and the seeded random stream.

Everything numeric in the package goes through numpy ``float64`` arrays.
Randomness comes from :class:`SeededStream`, a thin wrapper over the raw
PCG64 bit stream: doubles are built from the top 53 bits of each 64-bit
word and Gaussians are produced with Box-Muller, so no distribution
algorithm of the host library is involved and streams are reproducible
across platforms and numpy releases.
"""
from __future__ import annotations

import numpy as np

DTYPE = np.float64

# Sub-seed slots. Child streams are derived as SeedSequence(seed, spawn_key=(slot,)).
SEED_INIT = 0
SEED_DATA = 1
SEED_SPLIT = 2
SEED_SHUFFLE = 3


class DimensionError(ValueError):
    """Operand shapes do not conform."""


class SeededStream:
    """Deterministic uniform/normal/integer source built on raw PCG64 output."""

    def __init__(self, seed: int, slot: int | None = None):
        key = () if slot is None else (int(slot),)
        self.seed = int(seed)
        self.slot = slot
        self._bits = np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=key))

    def uniform(self, size) -> np.ndarray:
        """Doubles in [0, 1) from the top 53 bits of each raw 64-bit word."""
        n = int(np.prod(size, dtype=np.int64))
        raw = self._bits.random_raw(n)
        out = (raw >> np.uint64(11)).astype(DTYPE) * (1.0 / 9007199254740992.0)
        return out.reshape(size)

    def normal(self, size) -> np.ndarray:
        """Standard normals via the Box-Muller transform (cosine branch only)."""
        n = int(np.prod(size, dtype=np.int64))
        u1 = self.uniform(n)
        u2 = self.uniform(n)
        # 1 - u1 lies in (0, 1], keeping the log finite
        radius = np.sqrt(-2.0 * np.log1p(-u1))
        return (radius * np.cos(2.0 * np.pi * u2)).reshape(size)

    def integers(self, high: int, size) -> np.ndarray:
        """Integers in [0, high) by scaling uniforms (bias below 2**-40 for small high)."""
        u = self.uniform(size)
        return np.minimum((u * high).astype(np.int64), high - 1)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of range(n)."""
        perm = np.arange(n)
        u = self.uniform(max(n - 1, 0))
        for k, i in enumerate(range(n - 1, 0, -1)):
            j = min(int(u[k] * (i + 1)), i)
            perm[i], perm[j] = perm[j], perm[i]
        return perm


def _check_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"{name} contains non-finite values")


def matrix(rows: int, cols: int, data=None) -> np.ndarray:
    """Build a validated ``rows x cols`` float64 matrix (zeros when ``data`` is None)."""
    if rows <= 0 or cols <= 0:
        raise DimensionError(f"matrix dims must be positive, got {rows}x{cols}")
    if data is None:
        return np.zeros((rows, cols), dtype=DTYPE)
    out = np.array(data, dtype=DTYPE).reshape(rows, cols)
    _check_finite("matrix", out)
    return out


def vector(data) -> np.ndarray:
    out = np.array(data, dtype=DTYPE).reshape(-1)
    if out.size == 0:
        raise DimensionError("vector length must be positive")
    _check_finite("vector", out)
    return out


def affine(W: np.ndarray, x: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``W @ x + b`` with explicit shape checks."""
    if W.ndim != 2 or x.ndim != 1 or b.ndim != 1:
        raise DimensionError(f"affine expects matrix, vector, vector; got ndim {W.ndim}, {x.ndim}, {b.ndim}")
    if W.shape[1] != x.shape[0]:
        raise DimensionError(f"affine: W has {W.shape[1]} columns but x has length {x.shape[0]}")
    if W.shape[0] != b.shape[0]:
        raise DimensionError(f"affine: W has {W.shape[0]} rows but b has length {b.shape[0]}")
    return W @ x + b


def sigmoid(v: np.ndarray) -> np.ndarray:
    # tanh form never overflows and keeps sigmoid(v) + sigmoid(-v) == 1 to rounding
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def tanh_elem(v: np.ndarray) -> np.ndarray:
    return np.tanh(v)


def init_uniform(rows: int, cols: int, scale: float, rng: SeededStream) -> np.ndarray:
    """I.i.d. samples from U[-scale, scale]."""
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    return (2.0 * rng.uniform((rows, cols)) - 1.0) * scale


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise log-softmax with max subtraction."""
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))
