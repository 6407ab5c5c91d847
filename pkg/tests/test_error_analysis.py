import math

import numpy as np
import pytest

from stagerbench.core import SleepStage as S
from stagerbench.error_analysis import (
    HISTOGRAM_BUCKETS,
    NO_TRANSITION,
    RAPID,
    Equidistant,
    classify_errors,
    distance_bucket,
    distance_histogram,
    error_stage_distribution,
    pattern_counts,
    transition_distance,
    transition_pattern,
)
from stagerbench.exceptions import IndexOutOfRange, LengthMismatch, SingleStager


def walk_distance(t, i):
    """Reference by walking outward from i until the stage changes."""
    ahead = behind = None
    for j in range(i, len(t) - 1):
        if t[j] != t[j + 1]:
            ahead = j - i + 1
            break
    for j in range(i - 1, -1, -1):
        if t[j] != t[j + 1]:
            behind = i - j
            break
    if ahead is None and behind is None:
        return math.inf
    if ahead is not None and ahead == behind:
        return Equidistant(ahead)
    if behind is None or (ahead is not None and ahead < behind):
        return -ahead
    return behind


class TestTransitionDistance:
    def test_examples(self):
        assert transition_distance([S.N2, S.N2, S.N2, S.REM, S.REM], 2) == -1
        assert transition_distance([S.N2, S.N2, S.N2, S.REM, S.REM], 3) == 1
        assert transition_distance([S.N2, S.N2, S.N2, S.REM, S.REM], 0) == -3
        assert transition_distance([S.N2, S.REM, S.N2], 1) is not None
        assert transition_distance([S.N2, S.REM, S.N2], 1) == RAPID
        assert transition_distance([S.N2] * 7, 4) == NO_TRANSITION

    def test_edges_never_rapid(self):
        h = [S.W, S.N1, S.W]
        assert transition_distance(h, 0) == -1
        assert transition_distance(h, 2) == 1

    def test_equidistant(self):
        assert transition_distance([0, 1, 1, 1, 2], 2) == Equidistant(2)

    def test_against_walk(self, rng):
        for _ in range(300):
            t = rng.integers(0, 2 + int(rng.integers(0, 4)), int(rng.integers(1, 30)))
            t = np.repeat(t, rng.integers(1, 4, t.size))
            for i in range(t.size):
                assert transition_distance(t, i) == walk_distance(t.tolist(), i)

    def test_reversal_symmetry(self, rng):
        for _ in range(200):
            t = rng.integers(0, 3, int(rng.integers(1, 25)))
            for i in range(t.size):
                d, r = transition_distance(t, i), transition_distance(t[::-1], t.size - 1 - i)
                if d == NO_TRANSITION:
                    assert r == NO_TRANSITION
                else:
                    assert r == -d
                if d != NO_TRANSITION and not isinstance(d, Equidistant):
                    assert abs(d) >= 1

    def test_index_out_of_range(self):
        with pytest.raises(IndexOutOfRange):
            transition_distance([0, 1], 2)
        with pytest.raises(IndexError):
            transition_distance([0, 1], -1)


class TestPattern:
    def test_examples(self):
        assert transition_pattern([S.W, S.N1, S.N2], 1) == (S.W, S.N1, S.N2)
        assert transition_pattern([S.W, S.N1, S.N2], 0) == (S.W, S.W, S.N1)
        assert transition_pattern([S.N2, S.REM], 1) == (S.N2, S.REM, S.REM)

    def test_out_of_range(self):
        with pytest.raises(IndexOutOfRange):
            transition_pattern([0], 1)


class TestBuckets:
    def test_mapping(self):
        assert distance_bucket(RAPID) == "rapid"
        assert distance_bucket(-4) == "-4" and distance_bucket(3) == "+3"
        assert distance_bucket(5) == "beyond" and distance_bucket(math.inf) == "beyond"
        assert distance_bucket(Equidistant(3)) == "equidistant"
        assert distance_bucket(Equidistant(9)) == "beyond"
        assert set(distance_bucket(d) for d in range(-4, 5) if d) <= set(HISTOGRAM_BUCKETS)


class TestClassify:
    def test_worked_example(self):
        truth = np.full(12, S.N2)
        a, b = truth.copy(), truth.copy()
        a[[3, 7, 9]] = S.W
        b[[3, 7]] = S.N1
        res = classify_errors({"A": a, "B": b}, truth)
        assert res.n_common == 2
        fr = res.fractions()
        assert fr["A"] == pytest.approx((2 / 3, 1 / 3))
        assert fr["B"] == pytest.approx((1.0, 0.0))

    def test_against_set_intersection(self, rng):
        for _ in range(100):
            n, m = int(rng.integers(1, 60)), int(rng.integers(2, 5))
            truth = rng.integers(0, 5, n)
            preds = {f"s{k}": np.where(rng.random(n) < 0.6, truth, rng.integers(0, 5, n)) for k in range(m)}
            res = classify_errors(preds, truth)
            sets = [set(np.flatnonzero(p != truth).tolist()) for p in preds.values()]
            common = set.intersection(*sets)
            assert {r.epoch_index for r in res.records if r.is_common} == common
            assert {r.epoch_index for r in res.records} == set.union(*sets)
            for name, (c, o) in res.fractions().items():
                if res.n_errors[name]:
                    assert c + o == pytest.approx(1.0)
            for kind in ("common", "other", "all"):
                hist = distance_histogram(res.records, res.stagers, kind)
                for name in res.stagers:
                    wrong = [r for r in res.records if r.wrong_by(name)]
                    want = {"common": sum(r.is_common for r in wrong),
                            "other": sum(not r.is_common for r in wrong), "all": len(wrong)}[kind]
                    assert sum(hist[name].values()) == want

    def test_single_stager(self):
        with pytest.raises(SingleStager):
            classify_errors({"A": [0, 1]}, [0, 0])

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            classify_errors({"A": [0, 1], "B": [0]}, [0, 0])

    def test_merge(self):
        r1 = classify_errors({"A": [1, 0], "B": [1, 1]}, [0, 0], "x")
        r2 = classify_errors({"A": [1], "B": [0]}, [0], "y")
        both = r1 + r2
        assert both.n_errors == {"A": 2, "B": 2} and both.n_common == 1

    def test_record_dict(self):
        res = classify_errors({"A": [1, 1, 1], "B": [1, 1, 1]}, [0, 0, 0])
        d = res.records[0].to_dict()
        assert d["transition_distance"] is None and d["bucket"] == "beyond"
        assert d["truth"] == "W" and d["is_common"]


class TestDistributions:
    def test_stage_distribution(self):
        truth = np.array([S.N2] * 5 + list(range(5)))
        a = (truth + 1) % 5
        res = classify_errors({"A": a, "B": a}, truth)
        dist = error_stage_distribution(res.records, res.stagers)
        assert dist["A"][S.N2] == pytest.approx(6 / 10)
        assert dist["A"].sum() == pytest.approx(1.0)
        only = classify_errors({"A": a[:5], "B": a[:5]}, truth[:5])
        assert error_stage_distribution(only.records, only.stagers)["B"][S.N2] == 1.0
        uni = classify_errors({"A": a[5:], "B": a[5:]}, truth[5:])
        assert np.allclose(error_stage_distribution(uni.records, uni.stagers)["A"], 0.2)
        empty = error_stage_distribution([], ["A"])
        assert np.all(empty["A"] == 0)

    def test_pattern_counts(self):
        truth = [S.W, S.N1, S.N2, S.N2]
        res = classify_errors({"A": [S.N1, S.N1, S.W, S.N2], "B": [S.N1, S.N2, S.W, S.N2]}, truth)
        counts = pattern_counts(res.records)
        assert counts == {("W", "W", "N1"): 1, ("N1", "N2", "N2"): 1}
        other = pattern_counts(res.records, ["B"], kind="other")
        assert other == {("W", "N1", "N2"): 1}
