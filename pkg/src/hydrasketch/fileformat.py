"""Binary ``.hsk`` sketch files.

Layout (all integers little-endian, strings u16-length-prefixed UTF-8)::

    "HYDR" u16 version
    str hash family, str hash family version
    u32 n + n bytes of config JSON
    u64 stream_seed, u64 total_updates
    r*w cell records, row-major:
        u32 L, u32 k, u64 salt, u64 n_updates, u8 heap_only
        L * r_cs * w_cs i64 counters
        L heap blocks: u32 count, then k fixed slots of
            u16 key length, key_bytes key (zero padded), i64 estimate
    u32 crc32 of everything above

Every block has a fixed size, so the file size depends on the
configuration only.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .config import HEAP_SLOT_OVERHEAD, HydraConfig
from .errors import CorruptFileError, HashFamilyMismatchError, UnsupportedVersionError
from .hashing import HASH_FAMILY, HASH_FAMILY_VERSION
from .hydra import HydraSketch
from .universal import TopK

MAGIC = b"HYDR"
VERSION = 1

_CELL_HEAD = struct.Struct("<IIQQB")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_U64x2 = struct.Struct("<QQ")
_I64 = struct.Struct("<q")


def _str(s: str) -> bytes:
    b = s.encode("utf-8")
    return _U16.pack(len(b)) + b


def _heap_block(heap: TopK | None, k: int, key_bytes: int) -> bytes:
    slot = HEAP_SLOT_OVERHEAD + key_bytes
    buf = bytearray(4 + k * slot)
    if heap is None or not len(heap):
        return bytes(buf)
    entries = heap.snapshot()
    _U32.pack_into(buf, 0, len(entries))
    off = 4
    for key, est in entries:
        _U16.pack_into(buf, off, len(key))
        buf[off + 2: off + 2 + len(key)] = key
        _I64.pack_into(buf, off + 2 + key_bytes, est)
        off += slot
    return bytes(buf)


def serialize(hs: HydraSketch) -> bytes:
    cfg = hs.cfg
    parts = [MAGIC, _U16.pack(VERSION), _str(HASH_FAMILY), _str(HASH_FAMILY_VERSION)]
    cj = cfg.to_json().encode("utf-8")
    parts += [_U32.pack(len(cj)), cj, _U64x2.pack(cfg.stream_seed, hs.total_updates)]
    empty_heaps = _heap_block(None, cfg.k, cfg.key_bytes) * cfg.L
    grid = hs.grid.astype("<i8", copy=False)
    for i in range(cfg.r):
        for j in range(cfg.w):
            us = hs._cells.get((i, j))
            if us is None:
                parts.append(_CELL_HEAD.pack(cfg.L, cfg.k, hs.cell_salt(i, j), 0, 0))
                parts.append(grid[i, j].tobytes())
                parts.append(empty_heaps)
            else:
                parts.append(_CELL_HEAD.pack(cfg.L, cfg.k, us.salt, us.n_updates, int(us.heap_only)))
                parts.append(grid[i, j].tobytes())
                parts.extend(_heap_block(h, cfg.k, cfg.key_bytes) for h in us.heaps)
    body = b"".join(parts)
    return body + _U32.pack(zlib.crc32(body))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CorruptFileError("unexpected end of sketch file")
        b = self.buf[self.pos:self.pos + n]
        self.pos += n
        return b

    def unpack(self, st: struct.Struct):
        return st.unpack(self.take(st.size))

    def string(self) -> str:
        (n,) = self.unpack(_U16)
        return self.take(n).decode("utf-8")


def deserialize(buf: bytes) -> HydraSketch:
    if len(buf) < 10 or buf[:4] != MAGIC:
        raise CorruptFileError("not a hydra sketch file (bad magic)")
    body, (crc,) = buf[:-4], _U32.unpack(buf[-4:])
    if zlib.crc32(body) != crc:
        raise CorruptFileError("checksum mismatch")
    rd = _Reader(body)
    rd.take(4)
    (version,) = rd.unpack(_U16)
    if version != VERSION:
        raise UnsupportedVersionError(f"sketch file version {version}, this library reads {VERSION}")
    family, family_version = rd.string(), rd.string()
    if (family, family_version) != (HASH_FAMILY, HASH_FAMILY_VERSION):
        raise HashFamilyMismatchError(
            f"file hashed with {family} {family_version}, library uses {HASH_FAMILY} {HASH_FAMILY_VERSION}"
        )
    (n,) = rd.unpack(_U32)
    cfg = HydraConfig.from_json(rd.take(n).decode("utf-8"))
    seed, total = rd.unpack(_U64x2)
    if seed != cfg.stream_seed:
        raise CorruptFileError("stream seed disagrees with config block")

    hs = HydraSketch(cfg)
    hs.total_updates = total
    n_counters = cfg.L * cfg.r_cs * cfg.w_cs
    slot = HEAP_SLOT_OVERHEAD + cfg.key_bytes
    for i in range(cfg.r):
        for j in range(cfg.w):
            L, k, salt, n_updates, heap_only = rd.unpack(_CELL_HEAD)
            if (L, k) != (cfg.L, cfg.k) or salt != hs.cell_salt(i, j):
                raise CorruptFileError(f"cell ({i}, {j}) header disagrees with config")
            block = np.frombuffer(rd.take(8 * n_counters), dtype="<i8")
            heaps = []
            for _ in range(L):
                hb = rd.take(4 + k * slot)
                (count,) = _U32.unpack_from(hb, 0)
                if count > k:
                    raise CorruptFileError("heap count exceeds capacity")
                pairs = []
                off = 4
                for _ in range(count):
                    (klen,) = _U16.unpack_from(hb, off)
                    if klen > cfg.key_bytes:
                        raise CorruptFileError("heap key longer than key_bytes")
                    key = bytes(hb[off + 2: off + 2 + klen])
                    (est,) = _I64.unpack_from(hb, off + 2 + cfg.key_bytes)
                    pairs.append((key, est))
                    off += slot
                heaps.append(pairs)
            if n_updates or heap_only or any(heaps) or block.any():
                hs.grid[i, j] = block.reshape(cfg.L, cfg.r_cs, cfg.w_cs)
                us = hs.cell(i, j)
                us.n_updates = n_updates
                us.heap_only = bool(heap_only)
                us.heaps = [TopK.from_items(k, pairs) for pairs in heaps]
    if rd.pos != len(body):
        raise CorruptFileError("trailing bytes after last cell")
    return hs


def save(hs: HydraSketch, path) -> int:
    data = serialize(hs)
    Path(path).write_bytes(data)
    return len(data)


def load(path) -> HydraSketch:
    return deserialize(Path(path).read_bytes())


def file_size(cfg: HydraConfig) -> int:
    """Exact serialized size for ``cfg``."""
    head = 4 + 2 + len(_str(HASH_FAMILY)) + len(_str(HASH_FAMILY_VERSION))
    head += 4 + len(cfg.to_json().encode("utf-8")) + 16
    cell = _CELL_HEAD.size + 8 * cfg.L * cfg.r_cs * cfg.w_cs + cfg.L * (4 + cfg.k * (HEAP_SLOT_OVERHEAD + cfg.key_bytes))
    return head + cfg.r * cfg.w * cell + 4
