"""Evaluation drivers: accuracy runs, the planner sweep, skew comparison and
the optimization benchmark. Shared by the CLI, the demos and the tests."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .config import HydraConfig, memory_bytes, plan
from .hydra import HydraSketch, merge_tree
from .ingest import WorkloadSpec, generate_records
from .oracle import SCALAR_STATS, ErrorReport, ExactStore, oracle_report
from .universal import MergeMode


def distinct_keys(store: ExactStore) -> int:
    return sum(len(c) for c in store.freqs.values())


def plan_for(store: ExactStore, delta=0.1, eps_us=0.1, gmin_ratio=2e-3, stream_seed=0) -> HydraConfig:
    """Planner config with ``n_us`` derived from the corpus's key count."""
    return plan(delta, eps_us, gmin_ratio, n_keys=distinct_keys(store), stream_seed=stream_seed)


@dataclass
class AccuracyRun:
    cfg: HydraConfig
    report: ErrorReport
    ingest_seconds: float
    sketch: HydraSketch | None = None

    def mean_abs_error(self, stat: str) -> float:
        return self.report.stats[stat].mean_abs_error

    def pooled_mean_abs_error(self) -> float:
        errs = [abs(row[5]) for row in self.report.rows]
        return float(np.mean(errs)) if errs else float("nan")


def accuracy_run(records, store: ExactStore, cfg: HydraConfig, gmin_ratio: float = 2e-3,
                 stats=SCALAR_STATS, keep_sketch: bool = False) -> AccuracyRun:
    t = time.perf_counter()
    hs = HydraSketch(cfg).ingest_many(records)
    elapsed = time.perf_counter() - t
    rep = oracle_report(store, hs, stats, gmin_ratio, cfg)
    return AccuracyRun(cfg, rep, elapsed, hs if keep_sketch else None)


# -- planner sweep -------------------------------------------------------

W_FACTORS = (1 / 16, 1 / 8, 1 / 4, 1 / 2, 1, 2)
WCS_FACTORS = (1 / 8, 1 / 4, 1 / 2, 1, 2)


@dataclass
class SweepPoint:
    w: int
    w_cs: int
    memory: int
    mean_l1_error: float
    planner: bool = False


@dataclass
class SweepResult:
    points: list[SweepPoint]
    margin: float = 0.2
    dominators: list[SweepPoint] = field(default_factory=list)

    @property
    def planner(self) -> SweepPoint:
        return next(p for p in self.points if p.planner)


def pareto_sweep(records, store: ExactStore, cfg: HydraConfig, gmin_ratio: float = 2e-3,
                 w_factors=W_FACTORS, wcs_factors=WCS_FACTORS, margin: float = 0.2,
                 progress=None) -> SweepResult:
    """Sweep ``(w, w_cs)`` on a grid of power-of-two multiples of the planner point.

    A point dominates the planner when it is more than ``margin`` better in
    both memory and mean |relative error| of L1.
    """
    points = []
    for fw in w_factors:
        for fc in wcs_factors:
            w = max(1, int(cfg.w * fw))
            w_cs = max(1, int(cfg.w_cs * fc))
            c = cfg.replace(w=w, w_cs=w_cs)
            run = accuracy_run(records, store, c, gmin_ratio, stats=("l1",))
            pt = SweepPoint(w, w_cs, memory_bytes(c), run.mean_abs_error("l1"), fw == 1 and fc == 1)
            points.append(pt)
            if progress:
                progress(pt)
    res = SweepResult(points, margin)
    base = res.planner
    res.dominators = [
        p for p in points
        if p.memory < (1 - margin) * base.memory and p.mean_l1_error < (1 - margin) * base.mean_l1_error
    ]
    return res


# -- skew ------------------------------------------------------------------


def skew_comparison(alphas=(0.7, 0.99), records=100_000, subpopulations=1000, dims=2, metric_domain=128,
                    seed=0, gmin_ratio=2e-3, cfg: HydraConfig | None = None) -> dict[float, AccuracyRun]:
    """Equal-memory accuracy runs on corpora differing only in Zipf skew.

    Without an explicit ``cfg`` the config is planned from the most skewed
    corpus and reused for every alpha.
    """
    corpora = {}
    for a in alphas:
        spec = WorkloadSpec(records, subpopulations, a, dims, metric_domain, seed)
        recs, _ = generate_records(spec)
        corpora[a] = (recs, ExactStore().ingest_many(recs))
    if cfg is None:
        cfg = plan_for(corpora[max(alphas)][1], gmin_ratio=gmin_ratio)
    return {a: accuracy_run(recs, store, cfg, gmin_ratio) for a, (recs, store) in corpora.items()}


# -- optimization benchmark ---------------------------------------------------

TOGGLES = {
    "optimized": dict(one_hash=True, one_layer=True),
    "no-one-hash": dict(one_hash=False, one_layer=True),
    "no-one-layer": dict(one_hash=True, one_layer=False),
    "naive": dict(one_hash=False, one_layer=False),
}


@dataclass
class BenchResult:
    ingest_seconds: dict[str, float]
    merge_seconds: dict[str, float]
    mean_abs_error: dict[str, float]

    def rows(self):
        base = self.mean_abs_error.get("optimized")
        for name, secs in self.ingest_seconds.items():
            err = self.mean_abs_error.get(name, math.nan)
            yield {"variant": name, "phase": "ingest", "seconds": secs, "mean_abs_error": err,
                   "error_delta": err - base if base is not None else math.nan}
        for name, secs in self.merge_seconds.items():
            err = self.mean_abs_error.get(f"merge-{name}", math.nan)
            yield {"variant": f"merge-{name}", "phase": "merge", "seconds": secs, "mean_abs_error": err,
                   "error_delta": err - base if base is not None else math.nan}


def _split(records, shards):
    n = len(records)
    return [records[n * s // shards: n * (s + 1) // shards] for s in range(shards)]


def bench(records, cfg: HydraConfig, toggles=("optimized", "naive"), shards: int = 8,
          store: ExactStore | None = None, gmin_ratio: float = 2e-3, progress=None) -> BenchResult:
    """Time ingestion per toggle set and FULL vs HEAP_ONLY merging.

    The optimized variant is built as ``shards`` independent shard sketches
    (timed together as its ingestion) that then feed both merge modes.
    Accuracy is measured against ``store`` when one is given.
    """
    ingest, merge, errs = {}, {}, {}

    def score(name, hs):
        if store is not None:
            rep = oracle_report(store, hs, SCALAR_STATS, gmin_ratio, hs.cfg)
            vals = [abs(r[5]) for r in rep.rows]
            errs[name] = float(np.mean(vals)) if vals else math.nan

    for name in toggles:
        c = cfg.replace(**TOGGLES[name])
        t = time.perf_counter()
        if name == "optimized" and shards > 1:
            parts = [HydraSketch(c).ingest_many(chunk) for chunk in _split(records, shards)]
            ingest[name] = time.perf_counter() - t
            for mode in (MergeMode.FULL, MergeMode.HEAP_ONLY):
                t = time.perf_counter()
                merged = merge_tree(parts, mode)
                merge[mode.value] = time.perf_counter() - t
                score(f"merge-{mode.value}", merged)
                if mode is MergeMode.FULL:
                    score(name, merged)
                del merged
            del parts
        else:
            hs = HydraSketch(c).ingest_many(records)
            ingest[name] = time.perf_counter() - t
            score(name, hs)
            del hs
        if progress:
            progress(name, ingest[name])
    return BenchResult(ingest, merge, errs)
