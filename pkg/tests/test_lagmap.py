import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from gaitprint.exceptions import DataError
from gaitprint.ingest import SecondFrame
from gaitprint.lagmap import ALL, LagTriple, build_lagmap, dump_lagmaps_csv, lag_slice


def _frame(S, seed=0):
    return SecondFrame("19", 1, np.random.default_rng(seed).uniform(0.2, 2.5, S))


def test_lag_one_has_s_minus_one_triples():
    m = build_lagmap(_frame(100), [1])
    assert len(m) == 99


def test_longest_lag_is_single_triple():
    f = _frame(100)
    m = build_lagmap(f, [99])
    assert list(m.triples) == [LagTriple(f.v[0], f.v[99], 99)]


def test_all_lags_count():
    assert len(build_lagmap(_frame(100))) == 4950


def test_slices():
    m = build_lagmap(_frame(100))
    assert len(lag_slice(m, 15)) == 85
    assert len(lag_slice(m, 99)) == 1
    with pytest.raises(DataError):
        lag_slice(build_lagmap(_frame(100), [15]), 30)


def test_canonical_order():
    f = _frame(6)
    m = build_lagmap(f)
    expected = [(u, s) for u in range(1, 6) for s in range(u + 1, 7)]
    assert list(zip(m.u.tolist(), m.s.tolist())) == expected
    for d, v, u, s in zip(m.d, m.v, m.u, m.s):
        assert d == f.v[s - u - 1] and v == f.v[s - 1]


def test_lag_out_of_range_rejected():
    with pytest.raises(Exception):
        build_lagmap(_frame(10), [10])


@given(arrays(np.float64, st.integers(2, 60), elements=st.floats(0, 4)))
@settings(max_examples=60, deadline=None)
def test_cardinality_property(v):
    S = len(v)
    m = build_lagmap(SecondFrame("a", 1, v))
    assert len(m) == S * (S - 1) // 2
    u, cnt = np.unique(m.u, return_counts=True)
    assert np.array_equal(cnt, S - u)


def test_dump_csv(tmp_path):
    dump_lagmaps_csv(tmp_path / "m.csv", [_frame(4)], ALL)
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "subject,j,u,s,d,v"
    assert len(lines) == 1 + 6
