"""Exact per-subpopulation frequencies and error reporting.

The oracle keeps every ``(subpopulation, metric)`` count in memory. It is
for evaluation only and never sits on the query path.
"""

from __future__ import annotations

import csv
import io
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np

from .config import HydraConfig
from .data_model import DataRecord, SubpopulationKey, decode_key, encode_key, fanout_encoded
from .errors import UndefinedEntropyError
from .hydra import stat_from_components
from .statistics import Statistic, StatSpec, exact_components, parse_statistic

SCALAR_STATS = (Statistic.L1, Statistic.L2, Statistic.ENTROPY, Statistic.CARDINALITY)


def _key(subpop) -> bytes:
    return encode_key(subpop) if isinstance(subpop, SubpopulationKey) else bytes(subpop)


class ExactStore:
    def __init__(self):
        self.freqs: dict[bytes, Counter] = defaultdict(Counter)
        self.records = 0

    def ingest(self, rec: DataRecord) -> None:
        for sp in fanout_encoded(rec.dims):
            self.freqs[sp][rec.metric] += 1
        self.records += 1

    def ingest_many(self, records) -> "ExactStore":
        for rec in records:
            self.ingest(rec)
        return self

    def update(self, subpop, metric: bytes) -> None:
        self.freqs[_key(subpop)][metric] += 1

    def subpopulations(self) -> list[bytes]:
        return sorted(self.freqs)

    @property
    def total_updates(self) -> int:
        return sum(sum(c.values()) for c in self.freqs.values())

    def components(self, subpop) -> dict[str, float]:
        c = self.freqs.get(_key(subpop))
        return exact_components(c.values() if c else ())

    def stat(self, subpop, stat):
        """Exact statistic; heavy hitters return ``[(metric, count), ...]``."""
        spec = stat if isinstance(stat, StatSpec) else parse_statistic(stat.value if isinstance(stat, Statistic) else stat)
        if spec.stat is Statistic.HEAVY_HITTERS:
            c = self.freqs.get(_key(subpop), Counter())
            total = sum(c.values())
            hits = [(m, n) for m, n in c.items() if n >= spec.alpha * total]
            return sorted(hits, key=lambda kv: (-kv[1], kv[0]))
        comp = self.components(subpop)
        if spec.stat is Statistic.ENTROPY and comp["l1"] == 0:
            raise UndefinedEntropyError("entropy of an empty subpopulation")
        return stat_from_components(spec.stat, comp)

    def query_many(self, subpop, stats) -> dict[str, float]:
        comp = self.components(subpop)
        out = {}
        for s in stats:
            spec = s if isinstance(s, StatSpec) else parse_statistic(s.value if isinstance(s, Statistic) else s)
            out[str(spec)] = stat_from_components(spec.stat, comp)
        return out

    def query(self, subpop, stat):
        return self.stat(subpop, stat)

    def stream_gsum(self, stat) -> float:
        """Exact G-sum over all (subpopulation, metric) pairs of the stream."""
        stat = parse_statistic(stat).stat if isinstance(stat, str) else stat
        name = gsum_name(stat)
        return math.fsum(exact_components(c.values())[name] for c in self.freqs.values())


def gsum_name(stat: Statistic) -> str:
    """G-sum that decides qualification and the band for ``stat``."""
    return {
        Statistic.L1: "l1",
        Statistic.L2: "l2",
        Statistic.CARDINALITY: "cardinality",
        # entropy is not itself a G-sum; subpopulations qualify by their L1 share
        Statistic.ENTROPY: "l1",
    }[stat]


@dataclass
class StatReport:
    stat: str
    n: int
    percentiles: dict[str, float]
    coverage: float
    mean_abs_error: float
    median_abs_error: float
    median_error: float


@dataclass
class ErrorReport:
    gmin_ratio: float
    stats: dict[str, StatReport]
    rows: list[tuple[str, float, str, float, float, float, bool]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "gmin_ratio": self.gmin_ratio,
            "stats": {k: vars(v) for k, v in self.stats.items()},
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["subpopulation", "g_ratio", "statistic", "exact", "estimate", "relative_error", "in_band"])
        for row in self.rows:
            w.writerow(row)
        return buf.getvalue()

    def table(self) -> str:
        head = f"{'statistic':<12}{'n':>6}{'p5':>9}{'p25':>9}{'p50':>9}{'p75':>9}{'p95':>9}{'coverage':>10}"
        lines = [head]
        for name, s in self.stats.items():
            if not s.n:
                lines.append(f"{name:<12}{0:>6}  no qualifying subpopulations")
                continue
            p = s.percentiles
            lines.append(
                f"{name:<12}{s.n:>6}" + "".join(f"{p[q]:>+9.3f}" for q in ("p5", "p25", "p50", "p75", "p95"))
                + f"{s.coverage:>10.1%}"
            )
        return "\n".join(lines)


def oracle_report(store: ExactStore, sketch, stats=SCALAR_STATS, gmin_ratio: float = 2e-3,
                  cfg: HydraConfig | None = None, dim_names=None) -> ErrorReport:
    """Signed relative errors of ``sketch`` against ``store`` on every
    subpopulation with ``G_i >= gmin_ratio * G_S``.

    ``sketch`` is anything with ``query_many(subpop, stats)`` (a
    HydraSketch, or the store itself for a self-check). The band for a
    subpopulation is ``[-eps_us, eps_us + eps * G_S / G_i]`` from ``cfg``
    (defaults to the sketch's config, else a zero-width band). ``dim_names``
    only affects how subpopulations are labelled in the CSV rows.
    """
    stats = [s if isinstance(s, Statistic) else parse_statistic(s).stat for s in stats]
    cfg = cfg or getattr(sketch, "cfg", None)
    subpops = store.subpopulations()
    comps = {sp: store.components(sp) for sp in subpops}
    g_s = {}
    for s in stats:
        name = gsum_name(s)
        g_s[s] = math.fsum(c[name] for c in comps.values())

    per_stat: dict[Statistic, list[tuple[bytes, float, float, float]]] = {s: [] for s in stats}
    for sp in subpops:
        qualifying = [s for s in stats if g_s[s] > 0 and comps[sp][gsum_name(s)] >= gmin_ratio * g_s[s]]
        if not qualifying:
            continue
        est = sketch.query_many(sp, qualifying)
        for s in qualifying:
            exact = stat_from_components(s, comps[sp])
            if exact == 0:
                continue
            ratio = g_s[s] / comps[sp][gsum_name(s)]
            per_stat[s].append((sp, ratio, exact, est[s.value]))

    report = ErrorReport(gmin_ratio, {})
    for s in stats:
        entries = per_stat[s]
        errs, inside = [], []
        for sp, ratio, exact, e in entries:
            rel = (e - exact) / exact
            if cfg is not None:
                lo, hi, _ = cfg.error_bound(ratio)
            else:
                lo = hi = 0.0
            ok = lo - 1e-12 <= rel <= hi + 1e-12
            errs.append(rel)
            inside.append(ok)
            report.rows.append((_display(sp, dim_names), 1.0 / ratio, s.value, exact, e, rel, ok))
        a = np.asarray(errs, dtype=float)
        if len(a):
            pct = dict(zip(("p5", "p25", "p50", "p75", "p95"), np.percentile(a, [5, 25, 50, 75, 95]).tolist()))
            report.stats[s.value] = StatReport(
                s.value, len(a), pct, float(np.mean(inside)), float(np.mean(np.abs(a))),
                float(np.median(np.abs(a))), float(np.median(a)),
            )
        else:
            report.stats[s.value] = StatReport(s.value, 0, {q: 0.0 for q in ("p5", "p25", "p50", "p75", "p95")},
                                               float("nan"), float("nan"), float("nan"), float("nan"))
    return report


def _display(sp: bytes, names=None) -> str:
    key = decode_key(sp)
    if not names or not key.predicates:
        return str(key)
    return ",".join(f"{names[d]}={v.decode('utf-8', 'replace')}" for d, v in key.predicates)
