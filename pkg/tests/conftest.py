import random

import pytest

from hydrasketch import DataRecord, HydraConfig, HydraSketch, UniversalSketch


def small_cfg(**kw) -> HydraConfig:
    base = dict(r=3, w=16, r_cs=3, w_cs=1024, L=4, k=512, stream_seed=7)
    base.update(kw)
    return HydraConfig(**base)


def exact_us(**kw) -> UniversalSketch:
    """Universal sketch large enough that small streams are counted exactly."""
    base = dict(L=4, k=256, r_cs=3, w_cs=4096, salt=11)
    base.update(kw)
    return UniversalSketch(**base)


def random_records(n, n_sp=20, n_metric=10, D=2, seed=0):
    rng = random.Random(seed)
    return [
        DataRecord(tuple(f"v{rng.randrange(n_sp)}" for _ in range(D)), f"m{rng.randrange(n_metric)}".encode())
        for _ in range(n)
    ]


@pytest.fixture
def cfg():
    return small_cfg()


@pytest.fixture
def records():
    return random_records(2000)


@pytest.fixture
def sketch(cfg, records):
    return HydraSketch(cfg).ingest_many(records)


# -- acceptance summary ------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
