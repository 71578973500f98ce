import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gaitprint.exceptions import ConfigError, DataError, IngestionError
from gaitprint.ingest import (RawSample, RawStream, Schema, SecondFrame, SplitSpec, SubjectSeries,
                              load_accelerometry, load_series, load_zju, save_series, segment_seconds,
                              series_from_signal, stratified_split, subject_sort_key, vector_magnitude)


def _write(path, text):
    path.write_text(text)
    return path


# -- parsing ---------------------------------------------------------------------

def test_row_parses_to_sample(tmp_path):
    f = _write(tmp_path / "a.csv", "subject,t,x,y,z\ns1, 0, 3, 4, 0\n")
    streams, rep = load_accelerometry(f)
    assert list(streams["s1"].samples()) == [RawSample("s1", 0, 3.0, 4.0, 0.0)]
    assert rep.rows == 1 and rep.rejected == 0


def test_permuted_columns_with_remapped_schema(tmp_path):
    a = _write(tmp_path / "a.csv", "subject,t,x,y,z\ns1,0,3,4,0\ns1,1,1,2,2\n")
    b = _write(tmp_path / "b.csv", "AZ,id,AX,time,AY\n0,s1,3,0,4\n2,s1,1,1,2\n")
    sa, _ = load_accelerometry(a)
    sb, _ = load_accelerometry(b, Schema(time="time", x="AX", y="AY", z="AZ", subject="id"))
    assert list(sa["s1"].samples()) == list(sb["s1"].samples())


def test_malformed_row_rejected(tmp_path):
    f = _write(tmp_path / "a.csv", "subject,t,x,y,z\ns1, 0, a, 4, 0\n")
    streams, rep = load_accelerometry(f)
    assert streams == {}
    assert rep.rejected == 1 and rep.rejected_examples == ["a.csv:2"]


def test_duplicate_key_raises(tmp_path):
    f = _write(tmp_path / "a.csv", "subject,t,x,y,z\ns1,0,1,1,1\ns1,0,2,2,2\n")
    with pytest.raises(IngestionError, match="duplicate"):
        load_accelerometry(f)


def test_same_time_in_different_sessions_is_not_duplicate(tmp_path):
    f = _write(tmp_path / "a.csv", "subject,session,t,x,y,z\ns1,1,0,1,1,1\ns1,2,0,2,2,2\n")
    streams, _ = load_accelerometry(f, Schema(session="session"))
    assert len(streams["s1"]) == 2


def test_subject_from_file_name_and_seconds_time(tmp_path):
    d = tmp_path / "raw"
    d.mkdir()
    _write(d / "id07.csv", "time_s,ax,ay,az,act\n0.00,1,0,0,1\n0.01,0,1,0,1\n0.02,0,0,1,2\n")
    schema = Schema(time="time_s", x="ax", y="ay", z="az", subject=None, activity="act",
                    keep_activities=("1",), time_unit="seconds")
    streams, rep = load_accelerometry(d, schema)
    assert list(streams) == ["id07"]
    assert streams["id07"].t.tolist() == [0, 1]
    assert rep.files == 1 and rep.rows == 3


def test_empty_directory_is_ingestion_error(tmp_path):
    with pytest.raises(IngestionError):
        load_accelerometry(tmp_path)


def test_missing_column_is_ingestion_error(tmp_path):
    f = _write(tmp_path / "a.csv", "subject,t,x,y\ns1,0,1,1\n")
    with pytest.raises(IngestionError, match="columns"):
        load_accelerometry(f)


def test_bad_schema_is_config_error():
    with pytest.raises(ConfigError):
        Schema(time_unit="minutes")


def test_zju_layout(tmp_path):
    rng = np.random.default_rng(0)
    for sess in ("1", "2"):
        for subj in ("001", "002"):
            for rec in (1, 2):
                d = tmp_path / f"session_{sess}" / f"subj_{subj}" / f"rec_{rec}"
                d.mkdir(parents=True)
                xyz = rng.normal(1, 0.1, size=(3, 250))
                (d / "1.txt").write_text("\n".join(",".join(f"{v:.4f}" for v in row) for row in xyz))
                (d / "useful.txt").write_text("10,230")
    streams, rep = load_zju(tmp_path, "1", ("1", "2"))
    assert list(streams) == ["1", "2"]
    assert rep.files == 8 and rep.rows == 8 * 220
    series = segment_seconds(streams["1"], S=100)
    # each 220-sample record is its own bout: 2 frames per record, 4 records
    assert series.J == 8
    assert series.sessions() == ["1"] * 4 + ["2"] * 4


# -- vector magnitude ------------------------------------------------------------

@pytest.mark.parametrize("xyz,expected", [((3, 4, 0), 5.0), ((0, 0, 0), 0.0), ((1, 1, 1), math.sqrt(3))])
def test_vector_magnitude_examples(xyz, expected):
    assert vector_magnitude(*xyz) == pytest.approx(expected, abs=1e-15)


@given(st.tuples(*[st.floats(-50, 50, allow_nan=False)] * 3), st.floats(-math.pi, math.pi))
def test_vector_magnitude_rotation_invariant(xyz, theta):
    x, y, z = xyz
    c, s = math.cos(theta), math.sin(theta)
    assert vector_magnitude(c * x - s * y, s * x + c * y, z) == pytest.approx(vector_magnitude(x, y, z), abs=1e-9)


def test_vector_magnitude_rejects_nan():
    with pytest.raises(DataError):
        vector_magnitude(np.nan, 0, 0)


# -- segmentation ----------------------------------------------------------------

def _stream(n, sid="s1", session=None):
    t = np.arange(n)
    x = np.linspace(0.5, 1.5, n)
    return RawStream(sid, t, x, np.zeros(n), np.zeros(n),
                     session=None if session is None else np.full(n, session))


@pytest.mark.parametrize("n,S,J", [(650, 100, 6), (8, 4, 2), (99, 100, 0)])
def test_segment_counts(n, S, J):
    ser = segment_seconds(_stream(n), S=S)
    assert ser.J == J
    assert [f.j for f in ser.frames] == list(range(1, J + 1))
    if J:
        np.testing.assert_array_equal(ser.frames[-1].v, np.linspace(0.5, 1.5, n)[(J - 1) * S:J * S])


def test_segment_respects_time_gaps():
    a, b = _stream(150), _stream(150)
    stream = RawStream("s1", np.r_[a.t, b.t + 1000], np.r_[a.x, b.x], np.r_[a.y, b.y], np.r_[a.z, b.z])
    assert segment_seconds(stream, S=100).J == 2  # 150 + 150 does not make 3 frames across the gap


def test_segment_trim():
    assert segment_seconds(_stream(650), S=100, trim=30).J == 5


@given(st.integers(0, 1200), st.integers(2, 120))
@settings(max_examples=40, deadline=None)
def test_segment_frame_count_property(n, S):
    ser = segment_seconds(_stream(n), S=S)
    assert ser.J == n // S
    assert all(f.S == S for f in ser.frames)


def test_frame_validation():
    with pytest.raises(DataError):
        SecondFrame("a", 1, np.array([1.0, -1.0]))
    with pytest.raises(DataError):
        SecondFrame("a", 0, np.array([1.0, 1.0]))


def test_subject_sort_key():
    assert sorted(["10", "2", "b", "1", "a"], key=subject_sort_key) == ["1", "2", "10", "a", "b"]


# -- splits ----------------------------------------------------------------------

def _series(J, sid="1", session=None):
    return series_from_signal(sid, np.abs(np.random.default_rng(1).normal(1, 0.2, J * 10)), S=10, session=session)


def test_split_counts():
    tr, te = stratified_split([_series(100)], SplitSpec(0.75, seed=4))
    assert tr[0].J == 75 and te[0].J == 25
    assert sorted(f.j for f in tr[0].frames + te[0].frames) == list(range(1, 101))


def test_split_deterministic_and_seed_dependent():
    s = [_series(40, "1"), _series(40, "2")]
    a = stratified_split(s, SplitSpec(0.75, seed=9))
    b = stratified_split(s, SplitSpec(0.75, seed=9))
    c = stratified_split(s, SplitSpec(0.75, seed=10))
    js = lambda parts: [[f.j for f in x.frames] for x in parts[0]]
    assert js(a) == js(b)
    assert js(a) != js(c)


def test_split_independent_of_subject_order():
    s = [_series(40, "1"), _series(40, "2")]
    a = stratified_split(s, SplitSpec(seed=2))[0]
    b = stratified_split(s[::-1], SplitSpec(seed=2))[0]
    assert [f.j for f in a[0].frames] == [f.j for f in b[1].frames]


def test_cross_session_split():
    s1, s2 = _series(66, session="1"), _series(65, session="2")
    frames = s1.frames + [SecondFrame("1", f.j + 66, f.v, "2") for f in s2.frames]
    tr, te = stratified_split([SubjectSeries("1", frames)], SplitSpec(mode="cross-session"))
    assert (tr[0].J, te[0].J) == (66, 65)


def test_split_needs_two_seconds():
    with pytest.raises(DataError):
        stratified_split([_series(1)], SplitSpec())


# -- canonical store -------------------------------------------------------------

@pytest.mark.parametrize("suffix", [".gprt", ".csv"])
def test_store_round_trip(tmp_path, suffix, sim_series):
    path = tmp_path / f"store{suffix}"
    save_series(path, sim_series)
    back = load_series(path)
    assert [s.subject_id for s in back] == [s.subject_id for s in sim_series]
    for a, b in zip(sim_series, back):
        assert [f.j for f in a.frames] == [f.j for f in b.frames]
        np.testing.assert_array_equal(a.matrix(), b.matrix())


def test_binary_store_is_byte_stable(tmp_path, sim_series):
    save_series(tmp_path / "a.gprt", sim_series)
    save_series(tmp_path / "b.gprt", load_series(tmp_path / "a.gprt"))
    assert (tmp_path / "a.gprt").read_bytes() == (tmp_path / "b.gprt").read_bytes()


def test_store_rejects_foreign_file(tmp_path):
    (tmp_path / "x.gprt").write_bytes(b"nope")
    with pytest.raises(DataError):
        load_series(tmp_path / "x.gprt")
