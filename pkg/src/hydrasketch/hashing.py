"""Single-digest hashing and bit-field splitting.

Every update is hashed once into a 128-bit digest. Row placement, layer
sampling and count-sketch slots are all cut from that digest:

    bits [0, 64)    layer-sampling field; also the input to ``mix`` for
                    count-sketch sign/column derivation
    bits [64, 128)  sliced into ``r`` equal-width fields for row placement

Fields map onto ``[0, w)`` with multiply-shift reduction, which is exact
for power-of-two ``w``.
"""

from __future__ import annotations

import xxhash

from .errors import HashBudgetExceeded

MASK64 = (1 << 64) - 1

HASH_FAMILY = "xxh3-128"
HASH_FAMILY_VERSION = xxhash.XXHASH_VERSION

_xxh128 = xxhash.xxh3_128_intdigest
_xxh64 = xxhash.xxh3_64_intdigest


def digest128(data: bytes, seed: int = 0) -> int:
    """Return the 128-bit digest of ``data`` under ``seed``."""
    return _xxh128(data, seed & MASK64)


def bits_needed(w: int) -> int:
    """ceil(log2(w)) for w >= 1."""
    return (w - 1).bit_length()


def row_budget_ok(r: int, w: int) -> bool:
    return r * bits_needed(w) <= 64


def split_row_indices(d: int, r: int, w: int) -> list[int]:
    """Cut ``r`` column indices in ``[0, w)`` from the upper half of ``d``.

    Raises HashBudgetExceeded when ``r * ceil(log2 w)`` exceeds the 64 bits
    reserved for placement; callers then switch to one digest per row.
    """
    if r < 1 or w < 1:
        raise ValueError(f"r and w must be positive, got r={r}, w={w}")
    if not row_budget_ok(r, w):
        raise HashBudgetExceeded(
            f"r={r} rows of {bits_needed(w)} bits exceed the 64-bit placement field"
        )
    width = 64 // r
    fmask = (1 << width) - 1
    upper = d >> 64
    return [(((upper >> (i * width)) & fmask) * w) >> width for i in range(r)]


def per_row_indices(data: bytes, seed: int, r: int, w: int) -> list[int]:
    """Fallback placement: one independent digest per row."""
    out = []
    for i in range(r):
        hi = digest128(data, (seed + i + 1) & MASK64) >> 64
        out.append((hi * w) >> 64)
    return out


def sample_level(d: int, L: int) -> int:
    """Leading zeros of the 64-bit sampling field, capped at ``L - 1``."""
    field = d & MASK64
    lz = 64 - field.bit_length()
    return lz if lz < L else L - 1


def mix(d: int, salt: int) -> int:
    """Re-hash a digest under a 64-bit instance salt.

    Gives every universal-sketch instance independent inner hashes without
    touching the input bytes again.
    """
    return _xxh128(d.to_bytes(16, "little"), salt & MASK64)


def mix_bytes(d_bytes: bytes, salt: int) -> int:
    # hot-path variant of mix() for callers that already hold the digest bytes
    return _xxh128(d_bytes, salt)


def derive_salt(*parts: int) -> int:
    """Deterministic 64-bit salt from a tuple of non-negative integers."""
    buf = b"".join((p & MASK64).to_bytes(8, "little") for p in parts)
    return _xxh64(buf, 0x9E3779B97F4A7C15)


# Naive hashing, used when the one-large-hash optimisation is disabled.
# Each logical hash function is an independent digest of the key bytes.

def naive_level(data: bytes, seed: int, L: int) -> int:
    """Level from ``L - 1`` independent 0-1 hashes, one per layer boundary."""
    level = 0
    while level < L - 1:
        if not digest128(data, derive_salt(seed, 0x4C41594552, level)) & 1:
            break
        level += 1
    return level
