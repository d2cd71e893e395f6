"""CSV ingestion (optionally sharded) and the synthetic workload generator."""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .config import HydraConfig
from .data_model import MISSING, DataRecord, Schema
from .errors import SchemaError
from .hydra import HydraSketch, merge_tree
from .universal import MergeMode


@dataclass
class IngestResult:
    sketch: HydraSketch
    records: int
    skipped: int
    malformed_lines: list[int] = field(default_factory=list)


def _header(path: Path) -> tuple[list[str], int]:
    with open(path, "rb") as f:
        first = f.readline()
    if not first:
        raise SchemaError(f"{path} is empty")
    cols = next(csv.reader([first.decode("utf-8").rstrip("\r\n")]))
    return cols, len(first)


def _column_index(cols: list[str], schema: Schema) -> list[int]:
    missing = [c for c in (*schema.dims, schema.metric) if c not in cols]
    if missing:
        raise SchemaError(f"CSV header lacks columns {missing}; found {cols}")
    return [cols.index(c) for c in (*schema.dims, schema.metric)]


def shard_ranges(path, shards: int) -> list[tuple[int, int, int]]:
    """Split the body of a CSV into ``shards`` newline-aligned byte ranges.

    Returns ``(start, end, first_line_number)`` triples; line numbers are
    1-based and count the header as line 1.
    """
    path = Path(path)
    _, body = _header(path)
    size = path.stat().st_size
    cuts = [body]
    with open(path, "rb") as f:
        for s in range(1, shards):
            pos = body + (size - body) * s // shards
            f.seek(max(pos - 1, body))
            if pos > body:
                f.readline()  # finish the line that straddles the cut
            cuts.append(max(f.tell(), cuts[-1]))
        cuts.append(size)
        out, line = [], 2
        for a, b in zip(cuts, cuts[1:]):
            out.append((a, b, line))
            f.seek(a)
            line += f.read(b - a).count(b"\n")
    return out


def iter_rows(path, start: int, end: int, first_line: int, idx: list[int]):
    """Yield ``(line_number, DataRecord | None)``; None marks a malformed row."""
    with open(path, "rb") as f:
        f.seek(start)
        chunk = f.read(end - start)
    ncols = max(idx) + 1
    nd = len(idx) - 1
    for n, line in enumerate(chunk.decode("utf-8", "replace").split("\n"), first_line):
        line = line.rstrip("\r")
        if not line:
            continue
        try:
            row = next(csv.reader([line]))
        except csv.Error:
            yield n, None
            continue
        if len(row) < ncols:
            yield n, None
            continue
        dims = tuple(row[i] if row[i] != "" else MISSING for i in idx[:nd])
        yield n, DataRecord(dims, row[idx[-1]].encode("utf-8"))


def _ingest_range(args) -> tuple[HydraSketch, int, list[int]]:
    path, start, end, first_line, idx, cfg = args
    hs = HydraSketch(cfg)
    n, bad = 0, []
    for line, rec in iter_rows(path, start, end, first_line, idx):
        if rec is None:
            bad.append(line)
        else:
            hs.ingest(rec)
            n += 1
    return hs, n, bad


def ingest_csv(path, schema: Schema, cfg: HydraConfig, shards: int = 1, workers: int = 1) -> IngestResult:
    """Build a sketch from a CSV file.

    With ``shards > 1`` the body is cut into newline-aligned byte ranges,
    each range is sketched separately (in ``workers`` processes) and the
    shard sketches are merged in a balanced tree. The result is the same as
    a single pass whenever no heap eviction happens.
    """
    if shards < 1 or workers < 1:
        raise ValueError("shards and workers must be >= 1")
    path = Path(path)
    cols, _ = _header(path)
    idx = _column_index(cols, schema)
    jobs = [(str(path), a, b, line, idx, cfg) for a, b, line in shard_ranges(path, shards)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
            parts = list(ex.map(_ingest_range, jobs))
    else:
        parts = [_ingest_range(j) for j in jobs]
    sketch = merge_tree([p[0] for p in parts], MergeMode.FULL)
    bad = sorted(line for p in parts for line in p[2])
    return IngestResult(sketch, sum(p[1] for p in parts), len(bad), bad)


def read_records(path, schema: Schema) -> tuple[list[DataRecord], list[int]]:
    """All well-formed records of a CSV plus the malformed line numbers."""
    cols, body = _header(path)
    idx = _column_index(cols, schema)
    recs, bad = [], []
    for line, rec in iter_rows(path, body, Path(path).stat().st_size, 2, idx):
        (bad.append(line) if rec is None else recs.append(rec))
    return recs, bad


# -- synthetic workloads --------------------------------------------------


@dataclass(frozen=True)
class WorkloadSpec:
    """Zipf-distributed leaf subpopulations with uniform metric values.

    ``subpopulations`` leaves (full D-dimensional tuples) receive record
    counts drawn from a multinomial with weights ``rank ** -zipf``.
    """

    records: int = 100_000
    subpopulations: int = 1000
    zipf: float = 0.99
    dims: int = 2
    metric_domain: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.subpopulations < 1 or self.records < 1 or self.metric_domain < 1:
            raise ValueError("records, subpopulations and metric_domain must be positive")
        if self.zipf < 0:
            raise ValueError("zipf skew must be >= 0")
        if not 1 <= self.dims <= 20:
            raise ValueError("dims must be in 1..20")

    @property
    def schema(self) -> Schema:
        return Schema(tuple(f"dim{i}" for i in range(self.dims)), "metric")


def _leaves(spec: WorkloadSpec, rng: np.random.Generator) -> list[tuple[str, ...]]:
    card = max(2, math.ceil(spec.subpopulations ** (1.0 / spec.dims)))
    while card ** spec.dims < spec.subpopulations:
        card += 1
    picks = rng.choice(card ** spec.dims, size=spec.subpopulations, replace=False)
    leaves = []
    for p in picks.tolist():
        vals = []
        for d in range(spec.dims):
            p, v = divmod(p, card)
            vals.append(f"d{d}v{v}")
        leaves.append(tuple(vals))
    return leaves


def generate_records(spec: WorkloadSpec) -> tuple[list[DataRecord], dict]:
    """Deterministic records for ``spec`` plus a manifest of exact leaf counts."""
    rng = np.random.default_rng(spec.seed)
    leaves = _leaves(spec, rng)
    weights = np.arange(1, spec.subpopulations + 1, dtype=float) ** -spec.zipf
    counts = rng.multinomial(spec.records, weights / weights.sum())
    leaf_of = np.repeat(np.arange(spec.subpopulations), counts)
    rng.shuffle(leaf_of)
    metrics = rng.integers(0, spec.metric_domain, size=spec.records)
    names = [f"m{v}".encode() for v in range(spec.metric_domain)]
    records = [DataRecord(leaves[l], names[m]) for l, m in zip(leaf_of.tolist(), metrics.tolist())]
    manifest = {
        "spec": asdict(spec),
        "schema": {"dims": list(spec.schema.dims), "metric": spec.schema.metric},
        "records": spec.records,
        "leaves": [{"dims": list(leaf), "count": int(c)} for leaf, c in zip(leaves, counts.tolist())],
    }
    return records, manifest


def manifest_path(csv_path) -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + ".manifest.json")


def generate(spec: WorkloadSpec, out_path) -> dict:
    """Write the workload CSV and its ``.manifest.json`` sidecar."""
    records, manifest = generate_records(spec)
    out_path = Path(out_path)
    with open(out_path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow([*spec.schema.dims, spec.schema.metric])
        for rec in records:
            w.writerow([*rec.dims, rec.metric.decode()])
    manifest["csv"] = os.path.basename(out_path)
    manifest_path(out_path).write_text(json.dumps(manifest, indent=1))
    return manifest
