"""Records, canonical subpopulation keys and fan-out.

A subpopulation is a conjunction of ``dimension == value`` predicates. Its
canonical encoding is::

    0x00                                       (empty predicate set)
    0x01 (varint dim, varint len, value)...    (dims strictly increasing)

Composite keys prefix the metric bytes with the varint length of the
subpopulation encoding, so the pair decodes unambiguously.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import DimensionalityError, MalformedKeyError, SchemaError

MAX_DIMS = 20
MISSING = "∅"

_EMPTY = b"\x00"
_TAG = b"\x01"


def encode_varint(n: int) -> bytes:
    if n < 0:
        raise ValueError("varint must be non-negative")
    out = bytearray()
    while True:
        b = n & 0x7F
        n >>= 7
        if n:
            out.append(b | 0x80)
        else:
            out.append(b)
            return bytes(out)


def decode_varint(buf: bytes, pos: int) -> tuple[int, int]:
    """Return ``(value, next_pos)``."""
    n = shift = 0
    while True:
        if pos >= len(buf):
            raise MalformedKeyError("truncated varint")
        b = buf[pos]
        pos += 1
        n |= (b & 0x7F) << shift
        if not b & 0x80:
            if b == 0 and shift:
                raise MalformedKeyError("non-canonical varint")
            return n, pos
        shift += 7
        if shift > 63:
            raise MalformedKeyError("varint too long")


def _as_bytes(v) -> bytes:
    if isinstance(v, bytes):
        return v
    if isinstance(v, str):
        return v.encode("utf-8")
    if isinstance(v, int):
        return str(v).encode("ascii")
    raise TypeError(f"cannot encode {type(v).__name__} as a key component")


@dataclass(frozen=True)
class SubpopulationKey:
    """Sorted ``(dimension index, value bytes)`` predicates."""

    predicates: tuple[tuple[int, bytes], ...] = ()

    @classmethod
    def of(cls, predicates: Iterable[tuple[int, object]] = ()) -> "SubpopulationKey":
        preds = sorted((int(d), _as_bytes(v)) for d, v in predicates)
        for (a, _), (b, _) in zip(preds, preds[1:]):
            if a == b:
                raise ValueError(f"dimension {a} bound twice")
        if preds and preds[0][0] < 0:
            raise ValueError("dimension indices must be non-negative")
        return cls(tuple(preds))

    def encode(self) -> bytes:
        return encode_key(self)

    def __str__(self):
        if not self.predicates:
            return "*"
        return ",".join(f"{d}={v.decode('utf-8', 'replace')}" for d, v in self.predicates)


def encode_key(sp: SubpopulationKey) -> bytes:
    if not sp.predicates:
        return _EMPTY
    parts = [_TAG]
    for d, v in sp.predicates:
        parts.append(encode_varint(d))
        parts.append(encode_varint(len(v)))
        parts.append(v)
    return b"".join(parts)


def decode_key(buf: bytes) -> SubpopulationKey:
    if buf == _EMPTY:
        return SubpopulationKey()
    if not buf or buf[:1] != _TAG or len(buf) == 1:
        raise MalformedKeyError(f"bad subpopulation key prefix: {buf[:4]!r}")
    preds = []
    pos, prev = 1, -1
    while pos < len(buf):
        d, pos = decode_varint(buf, pos)
        n, pos = decode_varint(buf, pos)
        if d <= prev:
            raise MalformedKeyError("dimension indices must be strictly increasing")
        if pos + n > len(buf):
            raise MalformedKeyError("value runs past end of key")
        preds.append((d, bytes(buf[pos:pos + n])))
        pos += n
        prev = d
    return SubpopulationKey(tuple(preds))


def composite_key(sp_bytes: bytes, metric: bytes) -> bytes:
    return encode_varint(len(sp_bytes)) + sp_bytes + metric


def composite_prefix(sp_bytes: bytes) -> bytes:
    """All composite keys of ``sp_bytes`` start with this prefix, and only they do."""
    return encode_varint(len(sp_bytes)) + sp_bytes


def split_composite(key: bytes) -> tuple[bytes, bytes]:
    n, pos = decode_varint(key, 0)
    if pos + n > len(key):
        raise MalformedKeyError("composite key shorter than its subpopulation length")
    return key[pos:pos + n], key[pos + n:]


@dataclass(frozen=True)
class Schema:
    dims: tuple[str, ...]
    metric: str

    def __post_init__(self):
        if not self.dims:
            raise SchemaError("a schema needs at least one dimension")
        names = list(self.dims) + [self.metric]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate column names in {names}")
        if len(self.dims) > MAX_DIMS:
            raise DimensionalityError(f"{len(self.dims)} dimensions exceed the cap of {MAX_DIMS}")

    @property
    def D(self) -> int:
        return len(self.dims)

    def key(self, **bindings) -> SubpopulationKey:
        """Subpopulation from named bindings, e.g. ``schema.key(city="NYC")``."""
        idx = {name: i for i, name in enumerate(self.dims)}
        try:
            return SubpopulationKey.of((idx[name], v) for name, v in bindings.items())
        except KeyError as e:
            raise SchemaError(f"unknown dimension {e.args[0]!r}") from None


@dataclass(frozen=True)
class DataRecord:
    dims: tuple[str, ...]
    metric: bytes

    @classmethod
    def of(cls, dims: Sequence[object], metric) -> "DataRecord":
        return cls(tuple(MISSING if d is None else str(d) for d in dims), _as_bytes(metric))


def fanout(rec: DataRecord) -> list[SubpopulationKey]:
    """All 2^D subpopulations ``rec`` belongs to, ordered by subset bitmask."""
    D = len(rec.dims)
    if D > MAX_DIMS:
        raise DimensionalityError(f"{D} dimensions exceed the cap of {MAX_DIMS}")
    vals = [v.encode("utf-8") for v in rec.dims]
    out = []
    for mask in range(1 << D):
        out.append(SubpopulationKey(tuple((i, vals[i]) for i in range(D) if mask >> i & 1)))
    return out


def fanout_encoded(dims: Sequence[str]) -> list[bytes]:
    """Encoded fan-out of raw dimension strings (ingestion hot path)."""
    D = len(dims)
    if D > MAX_DIMS:
        raise DimensionalityError(f"{D} dimensions exceed the cap of {MAX_DIMS}")
    parts = []
    for i, v in enumerate(dims):
        b = v.encode("utf-8")
        parts.append(encode_varint(i) + encode_varint(len(b)) + b)
    out = [_EMPTY]
    for mask in range(1, 1 << D):
        out.append(_TAG + b"".join(parts[i] for i in range(D) if mask >> i & 1))
    return out
