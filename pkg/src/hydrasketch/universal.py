"""Universal sketch: L count-sketch layers with per-layer top-k heaps.

Keys are sampled geometrically: a key's level is the number of leading
zeros of its sampling field (capped at L - 1). Two storage modes exist:

* physical (default): all occurrences of a key update only the layer equal
  to its level. Logical layer j, i.e. every key sampled at least j times, is
  recovered at query time as the union of physical layers j..L-1.
* logical: the textbook layout where a key of level l updates layers 0..l.
  Kept as a reference implementation and for benchmarking.

The G-sum estimator walks the layers bottom-up::

    Y[L-1] = sum(g(f_x) for x in HH[L-1])
    Y[j]   = 2 * Y[j+1] + sum((1 - 2 * [level(x) > j]) * g(f_x) for x in HH[j])

where HH[j] is the top-k of logical layer j by estimate. All sums use
``math.fsum`` so results do not depend on iteration order.
"""

from __future__ import annotations

import heapq
import math
from enum import Enum
from typing import Callable, Iterable

import numpy as np

from .count_sketch import CountSketch, checked_add
from .errors import IncompatibleSketchError
from .hashing import derive_salt, digest128, naive_level, sample_level
from .statistics import L1_G, GSum


class MergeMode(str, Enum):
    FULL = "full"
    HEAP_ONLY = "heap_only"


class TopK:
    """Bounded set of the ``k`` largest ``(estimate, key)`` pairs.

    Backed by a dict plus a lazily-invalidated min-heap. Eviction removes
    the minimum pair, so equal estimates are broken by key order.
    """

    __slots__ = ("k", "_est", "_heap")

    def __init__(self, k: int):
        if k < 1:
            raise ValueError(f"heap capacity must be >= 1, got {k}")
        self.k = k
        self._est: dict[bytes, int] = {}
        self._heap: list[tuple[int, bytes]] = []

    def __len__(self):
        return len(self._est)

    def __contains__(self, key):
        return key in self._est

    def items(self):
        return self._est.items()

    def keys(self):
        return self._est.keys()

    def get(self, key, default=None):
        return self._est.get(key, default)

    def _min(self) -> tuple[int, bytes]:
        heap, est = self._heap, self._est
        while True:
            e, key = heap[0]
            if est.get(key) == e:
                return e, key
            heapq.heappop(heap)

    def offer(self, key: bytes, estimate: int) -> bool:
        """Insert or refresh ``key``; returns False if it was not admitted."""
        est = self._est
        if key in est:
            est[key] = estimate
        elif len(est) < self.k:
            est[key] = estimate
        else:
            lo = self._min()
            if (estimate, key) <= lo:
                return False
            heapq.heappop(self._heap)
            del est[lo[1]]
            est[key] = estimate
        heapq.heappush(self._heap, (estimate, key))
        if len(self._heap) > 4 * self.k + 64:
            self._heap = [(e, k) for k, e in est.items()]
            heapq.heapify(self._heap)
        return True

    @classmethod
    def from_items(cls, k: int, pairs: Iterable[tuple[bytes, int]]) -> "TopK":
        """Keep the top-k of ``(key, estimate)`` pairs."""
        top = heapq.nlargest(k, ((e, key) for key, e in pairs))
        t = cls(k)
        t._est = {key: e for e, key in top}
        t._heap = list(top)
        heapq.heapify(t._heap)
        return t

    def snapshot(self) -> list[tuple[bytes, int]]:
        """Entries sorted by (estimate, key) descending."""
        return sorted(self._est.items(), key=lambda kv: (kv[1], kv[0]), reverse=True)

    def __eq__(self, other):
        if not isinstance(other, TopK):
            return NotImplemented
        return self.k == other.k and self._est == other._est

    def __repr__(self):
        return f"TopK(k={self.k}, size={len(self)})"


class UniversalSketch:
    """One universal sketch instance.

    ``counters``, when given, is an int64 array of shape ``(L, r_cs, w_cs)``
    (typically a view into a hydra grid); each layer's count sketch is a
    view onto one slice of it.
    """

    def __init__(
        self,
        L: int,
        k: int,
        r_cs: int,
        w_cs: int,
        salt: int = 0,
        seed: int = 0,
        counters: np.ndarray | None = None,
        one_layer: bool = True,
        one_hash: bool = True,
    ):
        if L < 1 or k < 1:
            raise ValueError(f"L and k must be >= 1, got L={L}, k={k}")
        self.L = L
        self.k = k
        self.r_cs = r_cs
        self.w_cs = w_cs
        self.salt = salt
        self.seed = seed
        self.one_layer = one_layer
        self.one_hash = one_hash
        if counters is None:
            counters = np.zeros((L, r_cs, w_cs), dtype=np.int64)
        self.counters = counters
        self.layers = [
            CountSketch(r_cs, w_cs, derive_salt(salt, j), counters[j]) for j in range(L)
        ]
        self.heaps = [TopK(k) for _ in range(L)]
        self.n_updates = 0
        # set by a HEAP_ONLY merge: counters no longer describe the heaps,
        # so queries fall back to the cached heap estimates
        self.heap_only = False
        self._hh: list[list[tuple[int, bytes, int]]] | None = None

    # -- hashing -----------------------------------------------------------

    def level_of(self, key: bytes, digest: int | None = None) -> int:
        if self.one_hash:
            if digest is None:
                digest = digest128(key, self.seed)
            return sample_level(digest, self.L)
        return naive_level(key, self.seed, self.L)

    def material(self, key: bytes, digest: int | None = None) -> bytes:
        """Bytes fed to the count-sketch row hashes for ``key``."""
        if not self.one_hash:
            return key
        if digest is None:
            digest = digest128(key, self.seed)
        return digest.to_bytes(16, "little")

    # -- ingestion ---------------------------------------------------------

    def update(self, key: bytes, digest: int | None = None, level: int | None = None,
               material: bytes | None = None) -> None:
        """Count one occurrence of ``key``.

        ``digest``, ``level`` and ``material`` may be precomputed by the
        caller (the hydra sketch hashes once and updates r cells).
        """
        if level is None:
            level = self.level_of(key, digest)
        if material is None:
            material = self.material(key, digest)
        if self.one_layer:
            self.heaps[level].offer(key, self.layers[level].add(material))
        else:
            for j in range(level + 1):
                self.heaps[j].offer(key, self.layers[j].add(material))
        self.n_updates += 1
        self._hh = None

    # -- queries -----------------------------------------------------------

    def _fresh(self, j: int, key: bytes, cached: int) -> int:
        if self.heap_only:
            return cached
        return self.layers[j].query(self.material(key))

    def heavy_layers(self) -> list[list[tuple[int, bytes, int]]]:
        """HH[j] for every layer as ``(estimate, key, level)``, sorted descending."""
        if self._hh is not None:
            return self._hh
        L, k = self.L, self.k
        if self.one_layer:
            cands = []
            for j, heap in enumerate(self.heaps):
                for key, cached in heap.items():
                    cands.append((self._fresh(j, key, cached), key, j))
            cands.sort(reverse=True)
            hh = []
            for j in range(L):
                sel = []
                for c in cands:
                    if c[2] >= j:
                        sel.append(c)
                        if len(sel) == k:
                            break
                hh.append(sel)
        else:
            hh = []
            for j, heap in enumerate(self.heaps):
                sel = [(self._fresh(j, key, cached), key, self.level_of(key)) for key, cached in heap.items()]
                sel.sort(reverse=True)
                hh.append(sel[:k])
        self._hh = hh
        return hh

    def logical_candidates(self, j: int) -> dict[bytes, int]:
        """Keys of logical layer ``j`` with their estimates.

        In physical mode this is the union of heaps j..L-1, each key paired
        with the estimate from its own layer.
        """
        if not 0 <= j < self.L:
            raise IndexError(f"layer {j} out of range [0, {self.L})")
        if self.one_layer:
            out = {}
            for lj in range(j, self.L):
                for key, cached in self.heaps[lj].items():
                    out[key] = self._fresh(lj, key, cached)
            return out
        return {key: self._fresh(j, key, cached) for key, cached in self.heaps[j].items()}

    def estimate_gsums(self, gsums: Iterable[GSum], key_filter: Callable[[bytes], bool] | None = None
                       ) -> dict[str, float]:
        """Run the layered recursion for several G-sums over one candidate pass."""
        gsums = list(gsums)
        hh = self.heavy_layers()
        ys = [0.0] * len(gsums)
        for j in range(self.L - 1, -1, -1):
            layer = hh[j] if key_filter is None else [c for c in hh[j] if key_filter(c[1])]
            for n, g in enumerate(gsums):
                terms = [2.0 * ys[n]]
                for est, _key, lvl in layer:
                    v = g(est)
                    if v:
                        terms.append(-v if lvl > j else v)
                ys[n] = math.fsum(terms)
        return {g.name: max(y, 0.0) for g, y in zip(gsums, ys)}

    def estimate_gsum(self, g: GSum, key_filter: Callable[[bytes], bool] | None = None) -> float:
        return self.estimate_gsums([g], key_filter)[g.name]

    def heavy_hitters(self, alpha: float) -> list[tuple[bytes, int]]:
        """Keys whose estimate is at least ``alpha`` times the L1 estimate."""
        if not 0 < alpha < 1:
            raise ValueError(f"alpha must be in (0, 1), got {alpha}")
        l1 = self.estimate_gsum(L1_G)
        hits = [(key, est) for key, est in self.logical_candidates(0).items() if est > 0 and est >= alpha * l1]
        hits.sort(key=lambda kv: (-kv[1], kv[0]))
        return hits

    # -- merging -----------------------------------------------------------

    def config_tuple(self):
        return (self.L, self.k, self.r_cs, self.w_cs, self.salt, self.seed, self.one_layer, self.one_hash)

    def check_compatible(self, other: "UniversalSketch") -> None:
        if self.config_tuple() != other.config_tuple():
            raise IncompatibleSketchError("universal sketches differ in configuration or salt")

    def merge(self, other: "UniversalSketch", mode: MergeMode = MergeMode.FULL) -> "UniversalSketch":
        self.check_compatible(other)
        mode = MergeMode(mode)
        if mode is MergeMode.FULL:
            counters = checked_add(self.counters, other.counters)
        else:
            counters = heavier(self, other).counters.copy()
        return self.merged_with(other, mode, counters)

    def merged_with(self, other: "UniversalSketch", mode: MergeMode, counters: np.ndarray) -> "UniversalSketch":
        """Build the merge result on an already-combined counter block.

        FULL: ``counters`` holds the element-wise sum; each heap is rebuilt
        from the union of both heaps re-estimated against it.
        HEAP_ONLY: ``counters`` holds the heavier operand's counters; heaps
        are merged by summing cached estimates of shared keys.
        """
        self.check_compatible(other)
        if mode is MergeMode.FULL and (self.heap_only or other.heap_only):
            raise IncompatibleSketchError("a heap-only merge result cannot be FULL-merged")
        out = UniversalSketch(self.L, self.k, self.r_cs, self.w_cs, self.salt, self.seed,
                              counters, self.one_layer, self.one_hash)
        out.n_updates = self.n_updates + other.n_updates
        for j in range(self.L):
            ha, hb = self.heaps[j], other.heaps[j]
            if not len(ha) and not len(hb):
                continue
            if mode is MergeMode.FULL:
                layer = out.layers[j]
                keys = set(ha.keys()) | set(hb.keys())
                pairs = [(key, layer.query(out.material(key))) for key in keys]
            else:
                summed = dict(ha.items())
                for key, e in hb.items():
                    summed[key] = summed.get(key, 0) + e
                pairs = summed.items()
            out.heaps[j] = TopK.from_items(self.k, pairs)
        out.heap_only = mode is MergeMode.HEAP_ONLY or self.heap_only or other.heap_only
        return out

    def copy(self) -> "UniversalSketch":
        out = UniversalSketch(self.L, self.k, self.r_cs, self.w_cs, self.salt, self.seed,
                              self.counters.copy(), self.one_layer, self.one_hash)
        out.n_updates = self.n_updates
        out.heap_only = self.heap_only
        out.heaps = [TopK.from_items(self.k, h.items()) for h in self.heaps]
        return out

    def __repr__(self):
        return (f"UniversalSketch(L={self.L}, k={self.k}, r_cs={self.r_cs}, w_cs={self.w_cs}, "
                f"n_updates={self.n_updates})")


def heavier(a: UniversalSketch, b: UniversalSketch) -> UniversalSketch:
    """Operand whose counters survive a HEAP_ONLY merge (ties keep ``a``)."""
    return b if b.n_updates > a.n_updates else a
