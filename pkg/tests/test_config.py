import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hydrasketch import HydraConfig, HydraSketch, describe, memory_bytes, plan, serialize
from hydrasketch.config import pow2ceil
from hydrasketch.errors import ConfigError

from .conftest import random_records


def test_worked_example():
    cfg = plan(delta=0.1, eps_us=0.1, gmin_ratio=1e-3)
    assert (cfg.r, cfg.r_cs, cfg.k) == (3, 3, 100)
    assert 1e6 <= cfg.M < 1e7 and round(math.log10(cfg.m_target)) == 6
    assert round(math.log10(cfg.w_cs)) == 2
    assert cfg.w * cfg.w_cs == cfg.M
    lo, hi, conf = cfg.error_bound(1 / cfg.gmin_ratio)
    assert (lo, hi, conf) == pytest.approx((-0.1, 0.2, 0.9))


def test_single_row():
    assert plan(0.5, 0.1, 1e-3).r == 1


def test_halving_gmin_doubles_m():
    a, b = plan(0.1, 0.1, 2e-3), plan(0.1, 0.1, 1e-3)
    assert b.m_target == pytest.approx(2 * a.m_target)


@given(st.floats(0.001, 0.9), st.floats(0.001, 0.9), st.floats(0.02, 0.5), st.floats(1e-4, 0.5))
def test_monotone(d1, d2, e1, g):
    lo_d, hi_d = sorted((d1, d2))
    assert plan(lo_d, 0.2, g).r >= plan(hi_d, 0.2, g).r
    try:
        small, big = plan(0.1, e1 / 2, g), plan(0.1, e1, g)
    except ConfigError:
        return
    assert small.m_target >= big.m_target


@pytest.mark.parametrize("kw", [
    dict(delta=0, eps_us=0.1, gmin_ratio=1e-3),
    dict(delta=0.1, eps_us=1.5, gmin_ratio=1e-3),
    dict(delta=0.1, eps_us=0.1, gmin_ratio=0),
    dict(delta=0.1, eps_us=0.1, gmin_ratio=1e-3, n_us=0),
])
def test_rejects(kw):
    with pytest.raises(ConfigError):
        plan(**kw)


def test_layers_from_workload():
    assert plan(0.1, 0.1, 1e-3, n_us=1).L == 1
    assert plan(0.1, 0.1, 1e-3, n_us=100).L == 7
    cfg = plan(0.1, 0.1, 1e-3, n_keys=8192 * 32)
    assert cfg.L == 5


def test_describe_reports_bound():
    text = describe(plan(0.1, 0.1, 1e-3))
    assert "[-0.1, +0.2]" in text and "probability 0.9" in text


def test_memory_estimate_matches_file():
    cfg = HydraConfig(r=3, w=32, r_cs=3, w_cs=64, L=3, k=20)
    hs = HydraSketch(cfg).ingest_many(random_records(300))
    size = len(serialize(hs))
    assert abs(size - memory_bytes(cfg)) <= 0.05 * size


def test_json_round_trip():
    cfg = plan(0.1, 0.1, 1e-3, stream_seed=99)
    assert HydraConfig.from_json(cfg.to_json()) == cfg
    with pytest.raises(ConfigError):
        HydraConfig.from_dict({**cfg.to_dict(), "bogus": 1})


def test_validation_and_defaults():
    with pytest.raises(ConfigError):
        HydraConfig(r=0, w=1, r_cs=1, w_cs=1, L=1, k=1)
    with pytest.raises(ConfigError):
        HydraConfig(r=1, w=1, r_cs=1, w_cs=1, L=1, k=1, stream_seed=-1)
    cfg = HydraConfig(r=2, w=100, r_cs=3, w_cs=400, L=1, k=1)
    assert cfg.eps == 0.01 and cfg.eps_us == 0.05 and cfg.delta == pytest.approx(math.exp(-2))


def test_pow2ceil():
    assert [pow2ceil(x) for x in (0.5, 1, 2, 3, 100, 1024, 1025)] == [1, 1, 2, 4, 128, 1024, 2048]
