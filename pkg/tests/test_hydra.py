import pickle
import random

import pytest

from hydrasketch import DataRecord, HydraSketch, MergeMode, SubpopulationKey, encode_key, merge_tree
from hydrasketch.data_model import composite_prefix, fanout_encoded
from hydrasketch.errors import IncompatibleSketchError, KeyTooLongError
from hydrasketch.hydra import stat_from_components
from hydrasketch.oracle import ExactStore
from hydrasketch.statistics import L1_G, Statistic

from .conftest import random_records, small_cfg

SCALARS = ["l1", "l2", "entropy", "cardinality"]
ROOT = encode_key(SubpopulationKey())


def observed(records):
    return sorted({sp for r in records for sp in fanout_encoded(r.dims)})


def all_answers(hs, subpops):
    return {sp: (hs.query_many(sp, SCALARS), hs.heavy_hitters(sp, 0.1)) for sp in subpops}


def test_single_column_replicates_stream():
    hs = HydraSketch(small_cfg(w=1))
    assert hs.columns(ROOT) == [0, 0, 0]
    hs.ingest_many(random_records(200))
    cells = [us for _, us in hs.cells()]
    assert len(cells) == 3 and all(us.n_updates == hs.total_updates for us in cells)


def test_same_pair_same_cells():
    hs = HydraSketch(small_cfg())
    sp = encode_key(SubpopulationKey.of([(0, "NYC")]))
    hs.update(sp, b"m")
    first = {k: us.n_updates for k, us in hs.cells()}
    hs.update(sp, b"m")
    assert {k: us.n_updates for k, us in hs.cells()} == {k: 2 * v for k, v in first.items()}
    assert sorted(first) == sorted(enumerate(hs.columns(sp)))


def test_row_bookkeeping():
    recs = random_records(10_000, n_sp=10)
    hs = HydraSketch(small_cfg()).ingest_many(recs)
    for row in range(hs.cfg.r):
        assert sum(us.n_updates for (i, _), us in hs.cells() if i == row) == hs.total_updates


def test_unseen_subpopulation_is_zero(sketch):
    sp = SubpopulationKey.of([(0, "never")])
    assert sketch.query(sp, "l1") == 0
    assert sketch.query(sp, "entropy") == 0
    assert sketch.heavy_hitters(sp, 0.1) == []


def test_two_key_subpopulation():
    hs = HydraSketch(small_cfg())
    sp = SubpopulationKey.of([(0, "x")])
    for m in [b"a", b"a", b"b", b"b", b"b"]:
        hs.update(sp, m)
    assert hs.query(sp, "l1") == 5
    assert hs.query(sp, "entropy") == pytest.approx(0.9710, abs=1e-4)
    assert hs.query(sp, "cardinality") == 2
    assert hs.query(sp, "heavy_hitters:0.5") == [(b"b", 3)]


def test_exact_when_sized_generously(records):
    hs = HydraSketch(small_cfg(w=64)).ingest_many(records)
    store = ExactStore().ingest_many(records)
    for sp in observed(records)[:50]:
        got = hs.query_many(sp, SCALARS)
        for s in SCALARS:
            assert got[s] == pytest.approx(stat_from_components(Statistic(s), store.components(sp)))


def test_error_bound():
    cfg = small_cfg(eps_us=0.1, eps=1e-4)
    assert cfg.error_bound(1000) == pytest.approx((-0.1, 0.2, cfg.confidence))
    lo1, hi1, _ = cfg.error_bound(1e6)
    lo2, hi2, _ = cfg.error_bound(2e6)
    assert hi2 - 0.1 == pytest.approx(2 * (hi1 - 0.1))
    assert small_cfg(eps_us=0.1, eps=0.0).error_bound(1e9)[:2] == (-0.1, 0.1)
    with pytest.raises(ValueError):
        cfg.error_bound(0.5)


def split(records, parts, seed):
    rng = random.Random(seed)
    out = [[] for _ in range(parts)]
    for r in records:
        out[rng.randrange(parts)].append(r)
    return out


def test_merge_with_fresh(sketch, records):
    m = sketch.merge(HydraSketch(sketch.cfg))
    assert m.state_equal(sketch)
    subs = observed(records)
    assert all_answers(m, subs) == all_answers(sketch, subs)


def test_two_way_split_exact(cfg, records, sketch):
    a, b = split(records, 2, 1)
    m = HydraSketch(cfg).ingest_many(a).merge(HydraSketch(cfg).ingest_many(b))
    assert m.state_equal(sketch)
    subs = observed(records)
    assert all_answers(m, subs) == all_answers(sketch, subs)


def test_balanced_tree_equals_left_deep(cfg, records):
    parts = [HydraSketch(cfg).ingest_many(p) for p in split(records, 8, 2)]
    tree = merge_tree(parts)
    chain = parts[0]
    for p in parts[1:]:
        chain = chain.merge(p)
    assert tree.state_equal(chain)
    subs = observed(records)
    assert all_answers(tree, subs) == all_answers(chain, subs)


def test_heap_only_merge(cfg, records, sketch):
    a, b = split(records, 2, 3)
    m = HydraSketch(cfg).ingest_many(a).merge(HydraSketch(cfg).ingest_many(b), MergeMode.HEAP_ONLY)
    assert m.total_updates == sketch.total_updates
    assert m.query(ROOT, "l1") == pytest.approx(sketch.query(ROOT, "l1"), rel=0.1)
    with pytest.raises(IncompatibleSketchError):
        m.merge(sketch)


def test_incompatible(cfg):
    with pytest.raises(IncompatibleSketchError):
        HydraSketch(cfg).merge(HydraSketch(cfg.replace(stream_seed=8)))


def test_median_of_rows(records):
    hs1 = HydraSketch(small_cfg(r=1)).ingest_many(records)
    sp = observed(records)[3]
    (col,) = hs1.columns(sp)
    cell = hs1.cell(0, col)
    pre = composite_prefix(sp)
    assert hs1.query(sp, "l1") == cell.estimate_gsum(L1_G, lambda k: k.startswith(pre))

    hs3 = HydraSketch(small_cfg(w=2, k=4)).ingest_many(records)
    per_row = [c or {"l1": 0.0} for c in hs3._row_components(sp, [L1_G])]
    assert hs3.query(sp, "l1") in [c["l1"] for c in per_row]


def test_key_too_long():
    hs = HydraSketch(small_cfg(key_bytes=8))
    with pytest.raises(KeyTooLongError):
        hs.update(ROOT, b"x" * 20)


def test_stream_gsum_l1(sketch):
    assert sketch.stream_gsum("l1") == sketch.total_updates
    assert sketch.stream_gsum("cardinality") > 0


def test_pickle_round_trip(sketch, records):
    clone = pickle.loads(pickle.dumps(sketch))
    assert clone.state_equal(sketch)
    clone.ingest(DataRecord(("v1", "v2"), b"m1"))
    assert clone.total_updates == sketch.total_updates + 4


def test_naive_paths_agree_on_exact_sizes(records):
    subs = observed(records)[:30]
    ref = HydraSketch(small_cfg(w=64)).ingest_many(records)
    for flags in ({"one_layer": False}, {"one_hash": False}):
        other = HydraSketch(small_cfg(w=64, k=256, **flags)).ingest_many(records)
        for sp in subs:
            assert other.query_many(sp, SCALARS) == pytest.approx(ref.query_many(sp, SCALARS))
