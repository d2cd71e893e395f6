"""The sketch of universal sketches.

An ``r x w`` grid of universal sketches. A subpopulation is hashed to one
column per row; its ``(subpopulation, metric)`` composite key updates the
universal sketch in each of those ``r`` cells. Queries evaluate the G-sum
recursion in each cell over the candidates that belong to the queried
subpopulation and return the lower median over rows.

All counters live in one int64 array of shape ``(r, w, L, r_cs, w_cs)``;
universal-sketch objects are created lazily as views onto it.
"""

from __future__ import annotations

import math
from typing import Iterable, Mapping

import numpy as np

from .config import HydraConfig
from .count_sketch import checked_add, lower_median
from .data_model import (
    DataRecord,
    SubpopulationKey,
    _as_bytes,
    composite_key,
    composite_prefix,
    encode_key,
    fanout_encoded,
)
from .errors import IncompatibleSketchError, KeyTooLongError, UnsupportedStatisticError
from .hashing import (
    derive_salt,
    digest128,
    naive_level,
    per_row_indices,
    row_budget_ok,
    sample_level,
    split_row_indices,
)
from .statistics import (
    CARDINALITY_G,
    COMPONENTS,
    FLOGF_G,
    L1_G,
    L2_G,
    Statistic,
    StatSpec,
    entropy_from,
    parse_statistic,
)
from .universal import MergeMode, UniversalSketch, heavier

_ALL_GSUMS = (L1_G, L2_G, FLOGF_G, CARDINALITY_G)


def _sp_bytes(subpop) -> bytes:
    if isinstance(subpop, SubpopulationKey):
        return encode_key(subpop)
    if isinstance(subpop, (bytes, bytearray)):
        return bytes(subpop)
    raise TypeError(f"expected SubpopulationKey or encoded bytes, got {type(subpop).__name__}")


def _spec(stat) -> StatSpec:
    if isinstance(stat, StatSpec):
        return stat
    if isinstance(stat, Statistic):
        if stat is Statistic.HEAVY_HITTERS:
            raise UnsupportedStatisticError("heavy_hitters needs a threshold")
        return StatSpec(stat)
    return parse_statistic(stat)


def stat_from_components(stat: Statistic, comp: Mapping[str, float]) -> float:
    """Scalar statistic from one cell's (or one exact vector's) G-sums."""
    if stat is Statistic.ENTROPY:
        if comp["l1"] <= 0:
            return 0.0
        return entropy_from(comp["l1"], comp["flogf"], comp["cardinality"])
    return float(comp[COMPONENTS[stat][0].name])


class HydraSketch:
    def __init__(self, cfg: HydraConfig, grid: np.ndarray | None = None):
        self.cfg = cfg
        shape = (cfg.r, cfg.w, cfg.L, cfg.r_cs, cfg.w_cs)
        if grid is None:
            grid = np.zeros(shape, dtype=np.int64)
        elif grid.shape != shape or grid.dtype != np.int64:
            raise ValueError(f"grid must be int64 with shape {shape}")
        self.grid = grid
        self.total_updates = 0
        self._cells: dict[tuple[int, int], UniversalSketch] = {}
        self._split = cfg.one_hash and row_budget_ok(cfg.r, cfg.w)

    # -- structure ---------------------------------------------------------

    def cell_salt(self, i: int, j: int) -> int:
        return derive_salt(self.cfg.stream_seed, i, j)

    def _new_cell(self, i: int, j: int) -> UniversalSketch:
        c = self.cfg
        return UniversalSketch(c.L, c.k, c.r_cs, c.w_cs, self.cell_salt(i, j), c.stream_seed,
                               self.grid[i, j], c.one_layer, c.one_hash)

    def cell(self, i: int, j: int) -> UniversalSketch:
        us = self._cells.get((i, j))
        if us is None:
            us = self._cells[(i, j)] = self._new_cell(i, j)
        return us

    def cells(self):
        """Materialised cells as ``((row, col), UniversalSketch)``."""
        return sorted(self._cells.items())

    def columns(self, subpop) -> list[int]:
        """Column of ``subpop`` in each row."""
        sp = _sp_bytes(subpop)
        c = self.cfg
        if self._split:
            return split_row_indices(digest128(sp, c.stream_seed), c.r, c.w)
        return per_row_indices(sp, c.stream_seed, c.r, c.w)

    # -- ingestion ---------------------------------------------------------

    def update(self, subpop, metric) -> None:
        """Add one ``(subpopulation, metric value)`` occurrence."""
        sp = _sp_bytes(subpop)
        key = composite_key(sp, _as_bytes(metric))
        c = self.cfg
        if len(key) > c.key_bytes:
            raise KeyTooLongError(f"composite key of {len(key)} bytes exceeds key_bytes={c.key_bytes}")
        if c.one_hash:
            d = digest128(key, c.stream_seed)
            level = sample_level(d, c.L)
            material = d.to_bytes(16, "little")
        else:
            d = None
            level = naive_level(key, c.stream_seed, c.L)
            material = key
        cells = self._cells
        for i, j in enumerate(self.columns(sp)):
            us = cells.get((i, j))
            if us is None:
                us = cells[(i, j)] = self._new_cell(i, j)
            us.update(key, d, level, material)
        self.total_updates += 1

    def ingest(self, rec: DataRecord) -> None:
        """Fan a record out to its 2^D subpopulations and update each."""
        for sp in fanout_encoded(rec.dims):
            self.update(sp, rec.metric)

    def ingest_many(self, records: Iterable[DataRecord]) -> "HydraSketch":
        for rec in records:
            self.ingest(rec)
        return self

    # -- queries -----------------------------------------------------------

    def _row_components(self, sp: bytes, gsums) -> list[dict[str, float] | None]:
        prefix = composite_prefix(sp)
        out = []
        for i, j in enumerate(self.columns(sp)):
            us = self._cells.get((i, j))
            if us is None:
                out.append(None)
            else:
                out.append(us.estimate_gsums(gsums, lambda key: key.startswith(prefix)))
        return out

    def query_many(self, subpop, stats: Iterable) -> dict[str, float]:
        """Several scalar statistics for one subpopulation from a single pass."""
        sp = _sp_bytes(subpop)
        specs = [_spec(s) for s in stats]
        for s in specs:
            if s.stat is Statistic.HEAVY_HITTERS:
                raise UnsupportedStatisticError("use heavy_hitters() for heavy-hitter queries")
        rows = self._row_components(sp, _ALL_GSUMS)
        zero = {g.name: 0.0 for g in _ALL_GSUMS}
        out = {}
        for s in specs:
            per_row = [stat_from_components(s.stat, comp or zero) for comp in rows]
            out[str(s)] = lower_median(per_row)
        return out

    def query(self, subpop, stat):
        """Estimate ``stat`` for ``subpop``; heavy hitters return a list."""
        spec = _spec(stat)
        if spec.stat is Statistic.HEAVY_HITTERS:
            return self.heavy_hitters(subpop, spec.alpha)
        return self.query_many(subpop, [spec])[str(spec)]

    def heavy_hitters(self, subpop, alpha: float) -> list[tuple[bytes, float]]:
        """Metric values holding at least ``alpha`` of the subpopulation's L1.

        Per-key estimates and the L1 are lower medians over the ``r`` cells
        (a key missing from a cell counts as 0 there).
        """
        if not 0 < alpha < 1:
            raise ValueError(f"alpha must be in (0, 1), got {alpha}")
        sp = _sp_bytes(subpop)
        prefix = composite_prefix(sp)
        n = len(prefix)
        l1s, per_key = [], {}
        for row, (i, j) in enumerate(enumerate(self.columns(sp))):
            us = self._cells.get((i, j))
            if us is None:
                l1s.append(0.0)
                continue
            l1s.append(us.estimate_gsum(L1_G, lambda key: key.startswith(prefix)))
            for key, est in us.logical_candidates(0).items():
                if key.startswith(prefix):
                    per_key.setdefault(key[n:], [0] * self.cfg.r)[row] = est
        l1 = lower_median(l1s)
        hits = []
        for metric, ests in per_key.items():
            est = lower_median(ests)
            if est > 0 and est >= alpha * l1:
                hits.append((metric, est))
        hits.sort(key=lambda kv: (-kv[1], kv[0]))
        return hits

    def stream_gsum(self, stat) -> float:
        """G_S used for bound reporting.

        Exact for L1 (the update count); otherwise the sum of unfiltered
        estimates over row 0, which is an estimate, not a guarantee.
        Entropy uses its f*log2(f) component.
        """
        stat = _spec(stat).stat
        if stat in (Statistic.L1, Statistic.HEAVY_HITTERS):
            return float(self.total_updates)
        g = FLOGF_G if stat is Statistic.ENTROPY else COMPONENTS[stat][0]
        return math.fsum(us.estimate_gsum(g) for (i, _), us in self._cells.items() if i == 0)

    def error_bound(self, g_ratio: float):
        return self.cfg.error_bound(g_ratio)

    # -- merging -----------------------------------------------------------

    def merge(self, other: "HydraSketch", mode: MergeMode = MergeMode.FULL) -> "HydraSketch":
        """Cell-wise merge; ``self`` and ``other`` are left untouched."""
        if self.cfg != other.cfg:
            raise IncompatibleSketchError("hydra sketches differ in configuration or seed")
        mode = MergeMode(mode)
        keys = set(self._cells) | set(other._cells)
        if mode is MergeMode.FULL:
            grid = checked_add(self.grid, other.grid)
        else:
            grid = self.grid.copy()
        out = HydraSketch(self.cfg, grid)
        out.total_updates = self.total_updates + other.total_updates
        for i, j in sorted(keys):
            a = self._cells.get((i, j)) or self._new_cell(i, j)
            b = other._cells.get((i, j)) or other._new_cell(i, j)
            if mode is MergeMode.HEAP_ONLY and heavier(a, b) is b:
                grid[i, j] = b.counters
            out._cells[(i, j)] = a.merged_with(b, mode, grid[i, j])
        return out

    # -- misc --------------------------------------------------------------

    @property
    def nbytes(self) -> int:
        return self.grid.nbytes

    def state_equal(self, other: "HydraSketch") -> bool:
        """Identical counters, heap memberships and bookkeeping.

        Cached heap estimates are not compared: queries re-read estimates
        from the counters, and a merge refreshes them while streaming leaves
        them as of each key's last update.
        """
        if self.cfg != other.cfg or self.total_updates != other.total_updates:
            return False
        if not np.array_equal(self.grid, other.grid):
            return False
        keys = {k for k, us in self._cells.items() if us.n_updates} | \
               {k for k, us in other._cells.items() if us.n_updates}
        for key in keys:
            a, b = self._cells.get(key), other._cells.get(key)
            if a is None or b is None:
                return False
            if a.n_updates != b.n_updates or a.heap_only != b.heap_only:
                return False
            if any(set(ha.keys()) != set(hb.keys()) for ha, hb in zip(a.heaps, b.heaps)):
                return False
        return True

    def __reduce__(self):
        # cells are views onto the grid; pickling them individually would break that
        from .fileformat import deserialize, serialize
        return deserialize, (serialize(self),)

    def __repr__(self):
        c = self.cfg
        return (f"HydraSketch(r={c.r}, w={c.w}, L={c.L}, k={c.k}, r_cs={c.r_cs}, w_cs={c.w_cs}, "
                f"updates={self.total_updates})")


def merge_tree(sketches: list[HydraSketch], mode: MergeMode = MergeMode.FULL) -> HydraSketch:
    """Pairwise balanced-tree merge of a list of sketches."""
    if not sketches:
        raise ValueError("nothing to merge")
    level = list(sketches)
    while len(level) > 1:
        nxt = [level[i].merge(level[i + 1], mode) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]
