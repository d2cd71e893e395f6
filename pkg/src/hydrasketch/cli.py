"""``hydrasketch`` command line: plan, generate, ingest, merge, query, eval, bench.

Results go to stdout as JSON (lines); diagnostics go to stderr.
Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

from . import experiments
from .config import HydraConfig, describe, plan
from .data_model import MISSING, Schema, SubpopulationKey, decode_key, encode_key, fanout_encoded
from .errors import (
    ConfigError,
    CorruptFileError,
    CounterOverflowError,
    HashFamilyMismatchError,
    HydraError,
    IncompatibleSketchError,
    KeyTooLongError,
    MalformedKeyError,
    SchemaError,
    UnsupportedStatisticError,
    UnsupportedVersionError,
)
from .fileformat import load, save
from .hydra import merge_tree
from .ingest import WorkloadSpec, generate, ingest_csv, read_records
from .oracle import SCALAR_STATS, ExactStore, oracle_report
from .statistics import Statistic, parse_statistic
from .universal import MergeMode

SEED_ENV = "HYDRASKETCH_SEED"

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV, "0")
    try:
        return int(raw, 0)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={raw!r} is not an integer") from None


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _finite(o):
    # strict JSON has no NaN; undefined values (e.g. no qualifying rows) become null
    if isinstance(o, float) and not math.isfinite(o):
        return None
    if isinstance(o, dict):
        return {k: _finite(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_finite(v) for v in o]
    return o


def _emit(obj) -> None:
    print(json.dumps(_finite(obj), sort_keys=False, default=_jsonable, allow_nan=False))


def _jsonable(o):
    if isinstance(o, bytes):
        return o.decode("utf-8", "replace")
    raise TypeError(type(o).__name__)


def _schema(args) -> Schema:
    if not args.dims or not args.metric:
        raise UsageError("--dims and --metric are required")
    return Schema(tuple(d.strip() for d in args.dims.split(",") if d.strip()), args.metric)


def _add_plan_flags(p, required: bool):
    p.add_argument("--delta", type=float, required=required, help="failure probability")
    p.add_argument("--eps-us", type=float, required=required, help="per-universal-sketch relative error")
    p.add_argument("--gmin-ratio", type=float, required=required, help="G_min / G_S")
    p.add_argument("--n-us", type=float, help="expected distinct keys per universal sketch")
    p.add_argument("--n-keys", type=float, help="expected distinct (subpopulation, metric) keys")
    p.add_argument("--seed", type=int, default=None, help=f"stream seed (default ${SEED_ENV} or 0)")
    p.add_argument("--key-bytes", type=int, default=64)


def _plan_from(args) -> HydraConfig:
    seed = args.seed if args.seed is not None else _default_seed()
    try:
        return plan(args.delta, args.eps_us, args.gmin_ratio, n_us=args.n_us, n_keys=args.n_keys,
                    stream_seed=seed, key_bytes=args.key_bytes)
    except ConfigError as e:
        raise UsageError(str(e)) from None


def _config_from(args) -> HydraConfig:
    if getattr(args, "config", None):
        try:
            return HydraConfig.from_json(Path(args.config).read_text())
        except (ValueError, TypeError) as e:
            raise DataError(f"bad config file {args.config}: {e}") from None
    if args.delta is None or args.eps_us is None or args.gmin_ratio is None:
        raise UsageError("give --config, or all of --delta, --eps-us and --gmin-ratio")
    return _plan_from(args)


# -- commands -------------------------------------------------------------


def cmd_plan(args) -> int:
    cfg = _plan_from(args)
    text = cfg.to_json()
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    _log(describe(cfg))
    return EXIT_OK


def cmd_generate(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    try:
        spec = WorkloadSpec(args.records, args.subpopulations, args.zipf, args.dims, args.metric_domain, seed)
    except ValueError as e:
        raise UsageError(str(e)) from None
    man = generate(spec, args.out)
    _log(f"wrote {man['records']} records over {len(man['leaves'])} leaf subpopulations to {args.out}")
    _emit({"csv": str(args.out), "records": man["records"], "leaves": len(man["leaves"])})
    return EXIT_OK


def cmd_ingest(args) -> int:
    schema = _schema(args)
    cfg = _config_from(args)
    t = time.perf_counter()
    res = ingest_csv(args.csv, schema, cfg, shards=args.shards, workers=args.workers)
    secs = time.perf_counter() - t
    size = save(res.sketch, args.out)
    if res.skipped:
        shown = ", ".join(map(str, res.malformed_lines[:20]))
        _log(f"skipped {res.skipped} malformed row(s) at line(s) {shown}{' ...' if res.skipped > 20 else ''}")
    _log(f"ingested {res.records} records in {secs:.2f}s; wrote {size:,} bytes to {args.out}")
    _emit({"sketch": str(args.out), "records": res.records, "skipped": res.skipped,
           "malformed_lines": res.malformed_lines, "bytes": size, "seconds": secs})
    return EXIT_OK


def cmd_merge(args) -> int:
    sketches = [load(p) for p in args.inputs]
    mode = MergeMode.HEAP_ONLY if args.heap_only else MergeMode.FULL
    t = time.perf_counter()
    merged = merge_tree(sketches, mode)
    secs = time.perf_counter() - t
    size = save(merged, args.out)
    _log(f"{mode.value} merge of {len(sketches)} sketches in {secs:.3f}s")
    _emit({"sketch": str(args.out), "inputs": len(sketches), "mode": mode.value, "bytes": size, "seconds": secs})
    return EXIT_OK


def parse_selector(text: str, schema: Schema | None) -> SubpopulationKey:
    """``*`` or ``dim=value[,dim=value...]``; dims by name (needs a schema) or index."""
    text = text.strip()
    if text in ("*", ""):
        return SubpopulationKey()
    preds = []
    for part in text.split(","):
        if "=" not in part:
            raise UsageError(f"bad predicate {part!r}; expected dim=value")
        d, v = part.split("=", 1)
        d = d.strip()
        if d.isdigit():
            idx = int(d)
        elif schema is not None and d in schema.dims:
            idx = schema.dims.index(d)
        else:
            raise UsageError(f"unknown dimension {d!r} (pass --dims to use names)")
        preds.append((idx, v))
    try:
        return SubpopulationKey.of(preds)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _observed(path: str, schema: Schema | None) -> list[bytes]:
    """Every subpopulation observed in a manifest or CSV corpus, sorted."""
    p = Path(path)
    if p.suffix == ".json":
        man = json.loads(p.read_text())
        seen = set()
        for leaf in man["leaves"]:
            if leaf["count"]:
                seen.update(fanout_encoded([v if v != "" else MISSING for v in leaf["dims"]]))
        return sorted(seen)
    if schema is None:
        raise UsageError("--all-observed with a CSV needs --dims and --metric")
    recs, _ = read_records(p, schema)
    seen = set()
    for r in recs:
        seen.update(fanout_encoded(r.dims))
    return sorted(seen)


def _specs(text: str):
    try:
        return [parse_statistic(s.strip()) for s in text.split(",") if s.strip()]
    except UnsupportedStatisticError as e:
        raise UsageError(str(e)) from None


def cmd_query(args) -> int:
    specs = _specs(args.stats)
    if not specs:
        raise UsageError("at least one statistic is required")
    schema = _schema(args) if args.dims or args.metric else None
    hs = load(args.sketch)
    selectors: list[bytes] = [encode_key(parse_selector(s, schema)) for s in args.subpop or ()]
    if args.keys_file:
        for line in Path(args.keys_file).read_text().splitlines():
            if line.strip():
                selectors.append(encode_key(parse_selector(line, schema)))
    if args.all_observed:
        selectors.extend(_observed(args.all_observed, schema))
    gmin = args.gmin_ratio or hs.cfg.gmin_ratio or 2e-3
    lo, hi, conf = hs.cfg.error_bound(1.0 / gmin)
    scalars = [s for s in specs if s.stat is not Statistic.HEAVY_HITTERS]
    for sp in selectors:
        vals = hs.query_many(sp, scalars) if scalars else {}
        for s in specs:
            est = hs.heavy_hitters(sp, s.alpha) if s.stat is Statistic.HEAVY_HITTERS else vals[str(s)]
            if isinstance(est, list):
                est = [[m, e] for m, e in est]
            _emit({"subpopulation": _display(decode_key(sp), schema), "statistic": str(s), "estimate": est,
                   "gmin_ratio": gmin, "lower_bound": lo, "upper_bound": hi, "confidence": conf})
    return EXIT_OK


def _display(sp: SubpopulationKey, schema: Schema | None) -> str:
    if not sp.predicates:
        return "*"
    name = (lambda i: schema.dims[i]) if schema else str
    return ",".join(f"{name(d)}={v.decode('utf-8', 'replace')}" for d, v in sp.predicates)


def cmd_eval(args) -> int:
    schema = _schema(args)
    if args.sweep:
        return _eval_sweep(args, schema)
    if not args.sketch:
        raise UsageError("eval needs a sketch file (or --sweep)")
    recs, bad = read_records(args.corpus, schema)
    store = ExactStore().ingest_many(recs)
    hs = load(args.sketch)
    expected = len(recs) * (1 << schema.D)
    if hs.total_updates != expected:
        msg = f"sketch holds {hs.total_updates} updates but the corpus implies {expected}"
        if not args.force:
            raise DataError(msg + " (pass --force to evaluate anyway)")
        _log("warning: " + msg)
    stats = [s.stat for s in _specs(args.stats)]
    gmin = args.gmin_ratio or hs.cfg.gmin_ratio or 2e-3
    rep = oracle_report(store, hs, stats, gmin, hs.cfg, schema.dims)
    _log(rep.table())
    if args.csv_out:
        Path(args.csv_out).write_text(rep.to_csv())
    _emit(rep.to_dict())
    return EXIT_OK


def _eval_sweep(args, schema) -> int:
    recs, _ = read_records(args.corpus, schema)
    store = ExactStore().ingest_many(recs)
    gmin = args.gmin_ratio or 2e-3
    cfg = experiments.plan_for(store, gmin_ratio=gmin, stream_seed=_default_seed())
    _log(f"planner point w={cfg.w} w_cs={cfg.w_cs}; sweeping 30 configurations")
    res = experiments.pareto_sweep(recs, store, cfg, gmin, progress=lambda p: _emit({"sweep": vars(p)}))
    _emit({"pareto": {"planner": vars(res.planner), "dominators": [vars(p) for p in res.dominators]}})
    sk = experiments.skew_comparison(seed=_default_seed(), gmin_ratio=gmin)
    _emit({"skew": {str(a): r.pooled_mean_abs_error() for a, r in sk.items()}})
    return EXIT_OK


def cmd_bench(args) -> int:
    schema = _schema(args)
    recs, _ = read_records(args.corpus, schema)
    store = ExactStore().ingest_many(recs) if args.accuracy else None
    if getattr(args, "config", None) or args.delta is not None:
        cfg = _config_from(args)
    else:
        cfg = experiments.plan_for(store or ExactStore().ingest_many(recs), stream_seed=_default_seed())
    toggles = [t.strip() for t in args.toggles.split(",") if t.strip()]
    unknown = set(toggles) - set(experiments.TOGGLES)
    if unknown:
        raise UsageError(f"unknown toggles {sorted(unknown)}; choose from {sorted(experiments.TOGGLES)}")
    res = experiments.bench(recs, cfg, toggles, args.shards, store,
                            progress=lambda n, s: _log(f"{n}: {s:.2f}s"))
    for row in res.rows():
        _emit(row)
    return EXIT_OK


# -- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="hydrasketch", description="Per-subpopulation stream statistics from mergeable sketches.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("plan", help="size a sketch for error targets")
    _add_plan_flags(p, required=True)
    p.add_argument("--out", help="also write the config JSON here")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("generate", help="write a synthetic Zipf corpus and manifest")
    p.add_argument("--records", type=int, default=100_000)
    p.add_argument("--subpopulations", type=int, default=1000)
    p.add_argument("--zipf", type=float, default=0.99)
    p.add_argument("--dims", type=int, default=2)
    p.add_argument("--metric-domain", type=int, default=256)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    def schema_flags(p):
        p.add_argument("--dims", help="comma-separated dimension columns")
        p.add_argument("--metric", help="metric column")

    p = sub.add_parser("ingest", help="sketch a CSV file")
    p.add_argument("csv")
    schema_flags(p)
    p.add_argument("--config", help="config JSON from `plan --out`")
    _add_plan_flags(p, required=False)
    p.add_argument("--shards", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("merge", help="merge sketch files")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--heap-only", action="store_true", help="merge heaps only (faster, less accurate)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("query", help="estimate statistics for subpopulations")
    p.add_argument("sketch")
    p.add_argument("--stats", required=True, help="e.g. l1,entropy,heavy_hitters:0.1")
    p.add_argument("--subpop", action="append", help="`*` or dim=value[,dim=value]; repeatable")
    p.add_argument("--keys-file", help="file with one selector per line")
    p.add_argument("--all-observed", metavar="MANIFEST_OR_CSV", help="every subpopulation in a corpus")
    p.add_argument("--gmin-ratio", type=float, help="G_min/G_S for the reported band")
    schema_flags(p)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("eval", help="compare a sketch with exact answers over its corpus")
    p.add_argument("sketch", nargs="?")
    p.add_argument("--corpus", required=True)
    schema_flags(p)
    p.add_argument("--stats", default=",".join(s.value for s in SCALAR_STATS))
    p.add_argument("--gmin-ratio", type=float)
    p.add_argument("--csv-out", help="write per-subpopulation errors here")
    p.add_argument("--force", action="store_true", help="proceed on record-count mismatch")
    p.add_argument("--sweep", action="store_true", help="run the (w, w_cs) sweep and skew comparison")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="time ingestion and merging with optimizations toggled")
    p.add_argument("corpus")
    schema_flags(p)
    p.add_argument("--config")
    _add_plan_flags(p, required=False)
    p.add_argument("--toggles", default="optimized,naive",
                   help=f"comma list from {','.join(experiments.TOGGLES)}")
    p.add_argument("--shards", type=int, default=8)
    p.add_argument("--accuracy", action="store_true", help="also report error against exact answers")
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        _log(f"error: {e}")
        return EXIT_USAGE
    except (DataError, SchemaError, MalformedKeyError, KeyTooLongError, CorruptFileError,
            UnsupportedVersionError, HashFamilyMismatchError, IncompatibleSketchError, OSError,
            json.JSONDecodeError) as e:
        _log(f"error: {e}")
        return EXIT_DATA
    except (ConfigError, UnsupportedStatisticError, ValueError) as e:
        _log(f"error: {e}")
        return EXIT_USAGE
    except (CounterOverflowError, HydraError, AssertionError) as e:
        _log(f"internal error: {e}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
