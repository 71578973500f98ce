import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from gaitprint.exceptions import DataError
from gaitprint.identify import (ALL, average_probs, normalize_per_second, prob_matrix, rank_k_accuracy,
                                read_sensitivity_csv, seconds_sensitivity, true_rank, write_sensitivity_csv)


def test_normalize_examples(caplog):
    np.testing.assert_allclose(normalize_per_second([[0.2, 0.2]]), [[0.5, 0.5]])
    np.testing.assert_array_equal(normalize_per_second([[1.0, 0.0, 0.0]]), [[1.0, 0.0, 0.0]])
    np.testing.assert_array_equal(normalize_per_second([[0.0] * 4]), [[0.25] * 4])
    assert "uniform" in caplog.text


@given(arrays(np.float64, (5, 4), elements=st.floats(0, 1)))
def test_normalized_rows_sum_to_one(raw):
    np.testing.assert_allclose(normalize_per_second(raw).sum(axis=1), 1.0, rtol=1e-12)


def test_normalize_rejects_negative():
    with pytest.raises(DataError):
        normalize_per_second([[-0.1, 1.0]])


def _pm(probs, index, candidates=("a", "b")):
    return prob_matrix(np.asarray(probs, float), list(candidates), index)


def test_average_two_seconds():
    av = average_probs(_pm([[0.2, 0.8], [0.6, 0.4]], [("a", 1), ("a", 2)]))
    np.testing.assert_allclose(av.probs, [[0.4, 0.6]])


def test_window_one_is_identity_and_full_window_is_all():
    rng = np.random.default_rng(0)
    P = rng.uniform(size=(7, 2))
    pm = _pm(P, [("a", j) for j in range(1, 8)])
    np.testing.assert_allclose(average_probs(pm, 1).probs, pm.probs)
    np.testing.assert_array_equal(average_probs(pm, 7).probs, average_probs(pm, ALL).probs)


def test_window_blocks_keep_partial_tail():
    pm = _pm(np.ones((5, 2)), [("a", j) for j in (5, 1, 3, 2, 4)])
    assert average_probs(pm, 2).sizes == [2, 2, 1]


def test_true_rank_ties_go_to_lower_index():
    vec = np.array([0.3, 0.3, 0.4])
    assert true_rank(vec, 0) == 2 and true_rank(vec, 1) == 3 and true_rank(vec, 2) == 1


def test_perfect_oracle():
    N = 6
    subjects = [str(i) for i in range(N)]
    pm = prob_matrix(np.eye(N), subjects, [(s, 1) for s in subjects])
    rep = rank_k_accuracy(average_probs(pm), ks=(1, 5))
    assert rep.accuracy(1) == rep.accuracy(5) == 1.0
    for row in seconds_sensitivity(pm, (1, 2)):
        assert row["accuracy"] == 1.0


def test_window_one_equals_per_second_accuracy():
    rng = np.random.default_rng(1)
    P = rng.uniform(size=(20, 3))
    index = [("abc"[i % 3], i // 3 + 1) for i in range(20)]
    pm = prob_matrix(P, list("abc"), index)
    rows = seconds_sensitivity(pm, (1,), ks=(1,))
    per_second = np.mean([list("abc")[np.argmax(p)] == s for p, (s, _) in zip(pm.probs, index)])
    assert rows[0]["accuracy"] == pytest.approx(per_second) and rows[0]["blocks"] == 20


@given(arrays(np.float64, (8, 8), elements=st.floats(0, 1)))
@settings(max_examples=50)
def test_rank_five_at_least_rank_one(raw):
    subjects = [str(i) for i in range(8)]
    pm = prob_matrix(raw, subjects, [(s, 1) for s in subjects])
    rep = rank_k_accuracy(average_probs(pm), ks=(1, 5))
    assert rep.accuracy(5) >= rep.accuracy(1)
    assert all(1 <= r <= 8 for r in rep.ranks)


def test_unknown_truth_rejected():
    pm = _pm([[0.5, 0.5]], [("z", 1)])
    with pytest.raises(DataError):
        rank_k_accuracy(average_probs(pm))


def test_report_outputs(tmp_path):
    pm = _pm([[0.9, 0.1], [0.3, 0.7]], [("a", 1), ("b", 1)])
    rep = rank_k_accuracy(average_probs(pm), ks=(1,))
    rep.write_csv(tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().splitlines() == ["subject,predicted,rank,rank1", "a,a,1,1", "b,b,1,1"]
    rep.write_json(tmp_path / "r.json", {"config_hash": "x"})
    assert '"rank1_accuracy": 1.0' in (tmp_path / "r.json").read_text()
    rows = seconds_sensitivity(pm, (1,), (1,))
    write_sensitivity_csv(tmp_path / "s.csv", rows)
    assert read_sensitivity_csv(tmp_path / "s.csv") == rows
