import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hydrasketch import CountSketch
from hydrasketch.count_sketch import I64_MAX, checked_add, lower_median
from hydrasketch.errors import CounterOverflowError, IncompatibleSketchError
from hydrasketch.hashing import digest128


def d(key) -> int:
    return digest128(str(key).encode(), 0)


def zipf_stream(n, n_keys, a, seed):
    rng = np.random.default_rng(seed)
    w = np.arange(1, n_keys + 1, dtype=float) ** -a
    return rng.choice(n_keys, size=n, p=w / w.sum()).tolist()


def test_single_update_delta():
    cs = CountSketch(3, 256, salt=1)
    cs.update(d("k"), 5)
    assert cs.estimate(d("k")) == 5


def test_inverse_updates_cancel():
    cs = CountSketch(3, 256)
    cs.update(d("k"), 1)
    cs.update(d("k"), -1)
    assert not cs.counters.any()


def test_empty_and_exact():
    cs = CountSketch(3, 64)
    assert cs.estimate(d("x")) == 0
    for _ in range(7):
        cs.update(d("x"))
    assert cs.estimate(d("x")) == 7


def test_zipf_top_key():
    stream = zipf_stream(1000, 50, 1.0, 3)
    cs = CountSketch(3, 256, salt=4)
    for k in stream:
        cs.update(d(k))
    top = max(set(stream), key=stream.count)
    assert abs(cs.estimate(d(top)) - stream.count(top)) <= 2


def test_near_unbiased_small_streams():
    rng = random.Random(5)
    errs = []
    for trial in range(100):
        n_keys = rng.randint(1, 100)
        stream = [rng.randrange(n_keys) for _ in range(rng.randint(1, 1000))]
        cs = CountSketch(3, 512, salt=trial)
        for k in stream:
            cs.update(d(k))
        errs += [cs.estimate(d(k)) - stream.count(k) for k in set(stream)]
    assert abs(np.mean(errs)) <= 0.5


def test_merge_identity_commutative_linear():
    rng = random.Random(6)
    stream = [rng.randrange(300) for _ in range(10_000)]
    cut = rng.randrange(len(stream))
    whole, a, b = CountSketch(3, 128, 9), CountSketch(3, 128, 9), CountSketch(3, 128, 9)
    for i, k in enumerate(stream):
        whole.update(d(k))
        (a if i < cut else b).update(d(k))
    assert a.merge(CountSketch(3, 128, 9)) == a
    assert a.merge(b) == b.merge(a)
    assert a.merge(b).counters.tobytes() == whole.counters.tobytes()


def test_merge_incompatible():
    with pytest.raises(IncompatibleSketchError):
        CountSketch(3, 128, 1).merge(CountSketch(3, 128, 2))
    with pytest.raises(IncompatibleSketchError):
        CountSketch(3, 128).merge(CountSketch(2, 128))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 50), max_size=300))
def test_row_abs_sum_bounded_by_n(stream):
    cs = CountSketch(3, 32, salt=2)
    for k in stream:
        cs.update(d(k))
    assert (np.abs(cs.counters).sum(axis=1) <= len(stream)).all()


def test_overflow_detected():
    cs = CountSketch(1, 1)
    cs.counters[0, 0] = I64_MAX
    with pytest.raises(CounterOverflowError):
        cs.add(b"\x00" * 16, 1 if cs.query(b"\x00" * 16) > 0 else -1)
    a = np.array([I64_MAX], dtype=np.int64)
    with pytest.raises(CounterOverflowError):
        checked_add(a, np.array([1], dtype=np.int64))


def test_lower_median():
    assert lower_median([3, 1, 2]) == 2
    assert lower_median([4, 1, 3, 2]) == 2


def test_l2_guarantee_shape():
    w_cs = 256
    eps_us, delta_us = 1 / np.sqrt(w_cs), np.exp(-3)
    stream = zipf_stream(20_000, 2000, 0.9, 8)
    cs = CountSketch(3, w_cs, salt=3)
    for k in stream:
        cs.update(d(k))
    freq = np.bincount(stream)
    l2norm = np.sqrt((freq.astype(float) ** 2).sum())
    keys = np.nonzero(freq)[0]
    ok = [abs(cs.estimate(d(k)) - freq[k]) <= eps_us * l2norm for k in keys]
    assert np.mean(ok) >= 1 - delta_us
