"""Mergeable sketches answering per-subpopulation stream statistics."""

from .config import HydraConfig, describe, memory_bytes, plan
from .count_sketch import CountSketch
from .data_model import DataRecord, Schema, SubpopulationKey, decode_key, encode_key, fanout
from .errors import *  # noqa: F401,F403
from .fileformat import deserialize, load, save, serialize
from .hydra import HydraSketch, merge_tree
from .ingest import IngestResult, WorkloadSpec, generate, generate_records, ingest_csv, read_records
from .oracle import ExactStore, oracle_report
from .statistics import Statistic, StatSpec, parse_statistic
from .universal import MergeMode, UniversalSketch

__version__ = "0.1.0"
