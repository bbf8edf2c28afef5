import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from envaff.errors import LengthMismatch, NoPositives
from envaff.harness.metrics import average_precision, confusion, f_score
from references import brute_average_precision, brute_f_score


class TestFScore:
    def test_examples(self):
        assert f_score([1, 1, 0, 0], [1, 0, 1, 0]) == 0.5
        assert f_score([1, 0, 1], [1, 0, 1]) == 1.0
        assert f_score([0, 0, 0], [1, 0, 1]) == 0.0

    def test_threshold_inclusive(self):
        assert confusion([0.5, 0.49], [1, 1]) == {"tp": 1, "fp": 0, "fn": 1, "tn": 0}

    def test_errors(self):
        with pytest.raises(LengthMismatch):
            f_score([0.2], [1, 0])
        with pytest.raises(ValueError):
            f_score([0.2], [2])
        with pytest.raises(ValueError):
            f_score([0.2], [1], threshold=0)


class TestAveragePrecision:
    def test_examples(self):
        assert average_precision([0.9, 0.1], [1, 0]) == 1.0
        assert average_precision([0.1, 0.9], [1, 0]) == 0.5

    def test_ties_by_index(self):
        # positive first among equals ranks first
        assert average_precision([0.5, 0.5], [1, 0]) == 1.0
        assert average_precision([0.5, 0.5], [0, 1]) == 0.5

    def test_no_positives(self):
        with pytest.raises(NoPositives):
            average_precision([0.3, 0.2], [0, 0])

    def test_length(self):
        with pytest.raises(LengthMismatch):
            average_precision([0.3], [0, 1])


@given(st.lists(st.tuples(st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0, 0.3, 0.9]), st.integers(0, 1)),
                min_size=1, max_size=40))
def test_match_brute_force(pairs):
    scores = [s for s, _ in pairs]
    labels = [y for _, y in pairs]
    assert f_score(scores, labels) == brute_f_score(scores, labels)
    if any(labels):
        assert abs(average_precision(scores, labels) - brute_average_precision(scores, labels)) <= 1e-12
