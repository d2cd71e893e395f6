"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line (printed in the terminal summary under
"acceptance criteria") before asserting. Run alone with::

    pytest tests/test_acceptance.py -v
"""

import math
import random
import time
from collections import Counter

import pytest

from hydrasketch import DataRecord, HydraConfig, HydraSketch, UniversalSketch, plan, serialize
from hydrasketch.data_model import fanout_encoded
from hydrasketch.experiments import accuracy_run, bench, pareto_sweep, plan_for, skew_comparison
from hydrasketch.fileformat import file_size
from hydrasketch.ingest import WorkloadSpec, generate_records
from hydrasketch.oracle import SCALAR_STATS, ExactStore
from hydrasketch.statistics import CARDINALITY_G, FLOGF_G, L1_G, L2_G

from .conftest import random_records, record_criterion

SCALARS = [s.value for s in SCALAR_STATS]
GMIN = 2e-3


@pytest.fixture(scope="module")
def zipf_corpus():
    spec = WorkloadSpec(records=100_000, subpopulations=1000, zipf=0.99, dims=2, metric_domain=128, seed=1)
    t = time.perf_counter()
    records, _ = generate_records(spec)
    store = ExactStore().ingest_many(records)
    return records, store, time.perf_counter() - t


@pytest.fixture(scope="module")
def planner_run(zipf_corpus):
    records, store, prep = zipf_corpus
    cfg = plan_for(store, delta=0.1, eps_us=0.1, gmin_ratio=GMIN)
    t = time.perf_counter()
    run = accuracy_run(records, store, cfg, GMIN)
    return run, prep + time.perf_counter() - t


def test_criterion_01_band_coverage(planner_run):
    run, secs = planner_run
    lo, hi, conf = run.cfg.error_bound(1 / GMIN)
    cov = {s: run.report.stats[s].coverage for s in SCALARS}
    counts = {s: run.report.stats[s].n for s in SCALARS}
    ok = all(c >= 0.85 for c in cov.values()) and all(counts.values()) and secs <= 300
    detail = (f"band [{lo:+.2f}, {hi:+.2f}] at G_min/G_S={GMIN:g} w.p. {conf:.2f}; coverage "
              + " ".join(f"{s}={cov[s]:.1%}(n={counts[s]})" for s in SCALARS) + f"; need >=85%; {secs:.0f}s")
    record_criterion(1, ok, detail)
    assert ok, detail


def test_criterion_02_accuracy_magnitude(planner_run):
    run, _ = planner_run
    med_abs = {s: run.report.stats[s].median_abs_error for s in SCALARS}
    med = {s: run.report.stats[s].median_error for s in SCALARS}
    ok = all(v <= 0.10 for v in med_abs.values()) and all(abs(v) <= 0.10 for v in med.values())
    detail = "median |err| " + " ".join(f"{s}={med_abs[s]:.2%}" for s in SCALARS) + \
             "; median err " + " ".join(f"{s}={med[s]:+.2%}" for s in SCALARS) + "; need <=10%"
    record_criterion(2, ok, detail)
    assert ok, detail


def _answers(hs, subpops):
    return [(hs.query_many(sp, SCALARS), hs.heavy_hitters(sp, 0.2)) for sp in subpops]


def test_criterion_03_merge_linearity():
    t = time.perf_counter()
    cfg = HydraConfig(r=3, w=16, r_cs=3, w_cs=1024, L=4, k=256, stream_seed=3)
    records = random_records(1000, n_sp=10, n_metric=8, seed=11)
    single = HydraSketch(cfg).ingest_many(records)
    # exactness needs heaps that never evict; confirm the stream respects that
    assert all(len(h) < cfg.k for _, us in single.cells() for h in us.heaps)
    subpops = sorted({sp for r in records for sp in fanout_encoded(r.dims)})
    expected = _answers(single, subpops)
    rng = random.Random(2024)
    mismatches = 0
    for _ in range(100):
        n_parts = rng.randint(2, 10)
        parts = [[] for _ in range(n_parts)]
        for rec in records:
            parts[rng.randrange(n_parts)].append(rec)
        pool = [HydraSketch(cfg).ingest_many(p) for p in parts]
        while len(pool) > 1:
            a = pool.pop(rng.randrange(len(pool)))
            b = pool.pop(rng.randrange(len(pool)))
            pool.append(a.merge(b))
        mismatches += _answers(pool[0], subpops) != expected
    secs = time.perf_counter() - t
    ok = mismatches == 0 and secs <= 120
    detail = f"{mismatches}/100 random partitions differ from single pass over {len(subpops)} subpopulations; {secs:.0f}s"
    record_criterion(3, ok, detail)
    assert ok, detail


def test_criterion_04_one_layer_equivalence():
    rng = random.Random(7)
    gsums = (L1_G, L2_G, FLOGF_G, CARDINALITY_G)
    diffs = 0
    for trial in range(50):
        L = rng.randint(1, 6)
        n_keys = rng.randint(1, 80)
        stream = [f"k{rng.randrange(n_keys)}".encode() for _ in range(rng.randint(1, 600))]
        sketches = [UniversalSketch(L, 128, 3, 1 << 16, salt=trial, one_layer=flag) for flag in (True, False)]
        for us in sketches:
            for key in stream:
                us.update(key)
        # precondition: both structures count every key exactly
        truth = Counter(stream)
        assert all(dict(us.logical_candidates(0)) == truth for us in sketches)
        a, b = (us.estimate_gsums(gsums) for us in sketches)
        diffs += a != b
        diffs += any(sketches[0].logical_candidates(j) != sketches[1].logical_candidates(j) for j in range(L))
    ok = diffs == 0
    detail = f"{diffs} differing G-sum estimates or logical layers across 50 streams (zero tolerance)"
    record_criterion(4, ok, detail)
    assert ok, detail


def test_criterion_05_flat_memory(tmp_path):
    cfg = HydraConfig(r=3, w=256, r_cs=3, w_cs=256, L=4, k=32, stream_seed=5)
    sizes = {}
    for n_sub in (1_000, 100_000):
        # D = 1: n_sub - 1 distinct values plus the whole-stream subpopulation
        recs = [DataRecord((f"s{i}",), f"m{i % 17}".encode()) for i in range(n_sub - 1)]
        hs = HydraSketch(cfg).ingest_many(recs)
        assert len({sp for r in recs for sp in fanout_encoded(r.dims)}) == n_sub
        path = tmp_path / f"{n_sub}.hsk"
        path.write_bytes(serialize(hs))
        sizes[n_sub] = path.stat().st_size
    ok = sizes[1_000] == sizes[100_000] == file_size(cfg)
    detail = f".hsk bytes: 10^3 subpops={sizes[1_000]:,}, 10^5 subpops={sizes[100_000]:,}"
    record_criterion(5, ok, detail)
    assert ok, detail


def test_criterion_06_planner_fidelity():
    cfg = plan(delta=0.1, eps_us=0.1, gmin_ratio=1e-3)
    ok = (cfg.r, cfg.r_cs, cfg.k) == (3, 3, 100) and round(math.log10(cfg.M)) == 6
    detail = f"r={cfg.r} r_cs={cfg.r_cs} k={cfg.k} M=w*w_cs={cfg.w}*{cfg.w_cs}={cfg.M:,} (closed form {cfg.m_target:,.0f})"
    record_criterion(6, ok, detail)
    assert ok, detail


def test_criterion_07_near_pareto(zipf_corpus, planner_run):
    records, store, _ = zipf_corpus
    run, _ = planner_run
    t = time.perf_counter()
    res = pareto_sweep(records, store, run.cfg, GMIN)
    secs = time.perf_counter() - t
    base = res.planner
    ok = len(res.points) == 30 and not res.dominators and secs <= 900
    doms = ", ".join(f"(w={p.w}, w_cs={p.w_cs})" for p in res.dominators) or "none"
    detail = (f"planner (w={base.w}, w_cs={base.w_cs}) mem={base.memory / 2**20:.0f}MiB mean|L1 err|="
              f"{base.mean_l1_error:.2%}; {len(res.points)} points; >20%-better-in-both: {doms}; {secs:.0f}s")
    record_criterion(7, ok, detail)
    assert ok, detail


def test_criterion_08_skew_direction():
    runs = skew_comparison(alphas=(0.7, 0.99), records=100_000, subpopulations=1000, seed=1, gmin_ratio=GMIN)
    e07, e99 = runs[0.7].pooled_mean_abs_error(), runs[0.99].pooled_mean_abs_error()
    ok = e99 < e07
    detail = f"mean |rel err| at equal memory: alpha=0.7 {e07:.3%}, alpha=0.99 {e99:.3%}"
    record_criterion(8, ok, detail)
    assert ok, detail


def test_criterion_09_optimization_speedups():
    records, _ = generate_records(WorkloadSpec(records=1_000_000, subpopulations=1000, zipf=0.99, dims=1,
                                               metric_domain=128, seed=9))
    cfg = HydraConfig(r=3, w=512, r_cs=3, w_cs=256, L=4, k=100, stream_seed=9)
    res = bench(records, cfg, toggles=("optimized", "naive"), shards=8)
    ing, mrg = res.ingest_seconds, res.merge_seconds
    ok = ing["optimized"] < ing["naive"] and mrg["heap_only"] < mrg["full"]
    detail = (f"ingest 10^6 records: optimized {ing['optimized']:.1f}s vs naive {ing['naive']:.1f}s "
              f"({ing['optimized'] / ing['naive']:.0%}); 8-shard merge: heap-only {mrg['heap_only']:.2f}s "
              f"vs full {mrg['full']:.2f}s")
    record_criterion(9, ok, detail)
    assert ok, detail


def test_criterion_10_oracle_identities():
    rng = random.Random(10)
    violations = checked = 0
    for trial in range(100):
        recs = random_records(rng.randint(1, 3000), n_sp=rng.randint(1, 30), n_metric=rng.randint(1, 200),
                              D=rng.randint(1, 3), seed=trial)
        store = ExactStore().ingest_many(recs)
        for sp in store.subpopulations():
            freqs = list(store.freqs[sp].values())
            l1, l2, h, card = (store.stat(sp, s) for s in ("l1", "l2", "entropy", "cardinality"))
            raw = math.log2(l1) - math.fsum(f * math.log2(f) for f in freqs) / l1
            bad = (
                not 0 <= h <= math.log2(card)
                or l2 * card < l1 * l1
                or l1 != sum(freqs)
                or abs(raw - h) > 1e-9
            )
            violations += bad
            checked += 1
        violations += store.stat(b"\x00", "l1") != len(recs)
    ok = violations == 0
    detail = f"{violations} identity violations over {checked:,} subpopulations in 100 corpora"
    record_criterion(10, ok, detail)
    assert ok, detail
