"""Count-Sketch: the L2 heavy-hitter building block of a universal sketch."""

from __future__ import annotations

import numpy as np

from .errors import CounterOverflowError, IncompatibleSketchError
from .hashing import MASK64, mix_bytes

I64_MIN = -(1 << 63)
I64_MAX = (1 << 63) - 1


def lower_median(values):
    s = sorted(values)
    return s[(len(s) - 1) // 2]


def checked_add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Element-wise int64 sum that raises instead of wrapping."""
    out = a + b
    if np.any(((a ^ out) & (b ^ out)) < 0):
        raise CounterOverflowError("int64 counter overflow while merging")
    return out


class CountSketch:
    """``rows x cols`` signed counters with per-row sign and column hashes.

    For row ``i`` the slot of a key is cut from ``mix(digest, salt ^ i)``:
    the sign from bit 0 and the column from the upper 64 bits. Estimates
    are the lower median over rows of the signed counters.

    ``counters`` may be a view into a larger array (the hydra grid keeps
    every count sketch in one contiguous block).
    """

    __slots__ = ("rows", "cols", "salt", "counters", "_flat", "_seeds")

    def __init__(self, rows: int, cols: int, salt: int = 0, counters: np.ndarray | None = None):
        if rows < 1 or cols < 1:
            raise ValueError(f"rows and cols must be positive, got {rows}x{cols}")
        self.rows = rows
        self.cols = cols
        self.salt = salt & MASK64
        if counters is None:
            counters = np.zeros((rows, cols), dtype=np.int64)
        elif counters.shape != (rows, cols) or counters.dtype != np.int64:
            raise ValueError("counters must be an int64 array of shape (rows, cols)")
        self.counters = counters
        self._flat = counters.reshape(-1)
        self._seeds = [(self.salt ^ i) & MASK64 for i in range(rows)]

    def _slots(self, material: bytes):
        cols = self.cols
        for i, seed in enumerate(self._seeds):
            m = mix_bytes(material, seed)
            yield i * cols + ((((m >> 64) * cols) >> 64)), (1 if m & 1 else -1)

    def add(self, material: bytes, delta: int = 1) -> int:
        """Add ``delta`` for the key hashed as ``material``; return its new estimate.

        ``material`` is the 16-byte little-endian digest (one-hash mode) or
        the raw key bytes (naive hashing).
        """
        flat = self._flat
        ests = []
        for idx, sign in self._slots(material):
            v = int(flat[idx]) + sign * delta
            if v > I64_MAX or v < I64_MIN:
                raise CounterOverflowError(f"counter overflow at flat index {idx}")
            flat[idx] = v
            ests.append(sign * v)
        return lower_median(ests)

    def query(self, material: bytes) -> int:
        flat = self._flat
        return lower_median([sign * int(flat[idx]) for idx, sign in self._slots(material)])

    def update(self, key_digest: int, delta: int = 1) -> None:
        self.add(key_digest.to_bytes(16, "little"), delta)

    def estimate(self, key_digest: int) -> int:
        return self.query(key_digest.to_bytes(16, "little"))

    def compatible(self, other: "CountSketch") -> bool:
        return (self.rows, self.cols, self.salt) == (other.rows, other.cols, other.salt)

    def merge(self, other: "CountSketch") -> "CountSketch":
        if not self.compatible(other):
            raise IncompatibleSketchError(
                f"cannot merge count sketches {self.rows}x{self.cols}/{self.salt:#x} "
                f"and {other.rows}x{other.cols}/{other.salt:#x}"
            )
        return CountSketch(self.rows, self.cols, self.salt, checked_add(self.counters, other.counters))

    def copy(self) -> "CountSketch":
        return CountSketch(self.rows, self.cols, self.salt, self.counters.copy())

    def __eq__(self, other):
        if not isinstance(other, CountSketch):
            return NotImplemented
        return self.compatible(other) and np.array_equal(self.counters, other.counters)

    def __repr__(self):
        return f"CountSketch(rows={self.rows}, cols={self.cols}, salt={self.salt:#x})"
