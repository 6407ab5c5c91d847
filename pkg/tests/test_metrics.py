import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from stagerbench.exceptions import DegenerateKappa, LengthMismatch
from stagerbench.metrics import (
    RecordingResult,
    cohen_kappa,
    confusion,
    evaluate,
    mcnemar,
    mcnemar_from_counts,
    overall_metrics,
    pairwise_kappa,
    stratified_metrics,
)

labels = st.lists(st.integers(0, 4), min_size=1, max_size=60)


class TestConfusion:
    def test_diagonal(self, rng):
        t = rng.integers(0, 5, 10)
        cm = confusion(t, t)
        assert np.trace(cm.counts) == 10 and cm.total == 10

    def test_disjoint(self):
        assert np.trace(confusion([0, 0, 1], [2, 3, 4]).counts) == 0

    def test_empty(self):
        cm = confusion([], [])
        assert cm.total == 0 and cm.counts.shape == (5, 5)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            confusion([0, 1], [0])

    def test_orientation(self):
        cm = confusion([1], [3])
        assert cm.counts[3, 1] == 1


class TestOverall:
    def test_perfect(self):
        t = np.array([0, 1, 2, 3, 4, 2, 2])
        onehot = np.eye(5)[t]
        r = evaluate(onehot, t)
        assert (r.accuracy, r.kappa, r.mf1, r.nll, r.brier) == (1.0, 1.0, 1.0, 0.0, 0.0)
        assert r.sensitivity == 1.0 and r.specificity == 1.0

    def test_uniform_uncertainty(self, rng):
        t = rng.integers(0, 5, 37)
        r = evaluate(np.full((37, 5), 0.2), t)
        assert abs(r.nll - math.log(5)) < 1e-12
        assert abs(r.brier - 0.16) < 1e-12

    def test_worked_kappa(self):
        r = overall_metrics(confusion([0, 0, 2, 2], [0, 2, 2, 2]))
        assert r.accuracy == 0.75
        assert r.kappa == pytest.approx(0.5, abs=1e-15)
        assert r.nll is None and r.brier is None

    def test_single_class_perfect_mf1(self):
        r = overall_metrics(confusion([2] * 8, [2] * 8))
        assert r.mf1 == 1.0 and r.kappa == 1.0

    def test_absent_zero_flag(self):
        r = overall_metrics(confusion([2] * 8, [2] * 8), absent="zero")
        assert r.mf1 == pytest.approx(0.2)

    def test_degenerate_kappa(self):
        with pytest.raises(DegenerateKappa):
            cohen_kappa(np.array([[0, 0], [0, 0]]))
        assert cohen_kappa(confusion([1, 1], [1, 1])) == 1.0

    @settings(max_examples=200)
    @given(st.data())
    def test_against_loops(self, data):
        n = data.draw(st.integers(1, 60))
        t = data.draw(st.lists(st.integers(0, 4), min_size=n, max_size=n))
        p = data.draw(st.lists(st.integers(0, 4), min_size=n, max_size=n))
        r = overall_metrics(confusion(p, t))
        assert r.accuracy == pytest.approx(oracles.accuracy(p, t), abs=1e-12)
        assert r.mf1 == pytest.approx(oracles.macro(p, t, 1), abs=1e-12)
        assert r.sensitivity == pytest.approx(oracles.macro(p, t, 2), abs=1e-12)
        assert r.specificity == pytest.approx(oracles.macro(p, t, 3), abs=1e-12)
        if len(set(p)) > 1 or len(set(t)) > 1:
            assert r.kappa == pytest.approx(oracles.kappa(p, t), abs=1e-12)
        for v in (r.accuracy, r.mf1, r.sensitivity, r.specificity):
            assert 0 <= v <= 1
        assert -1 <= r.kappa <= 1

    def test_uncertainty_against_loops(self, rng):
        for _ in range(50):
            n = int(rng.integers(1, 100))
            probs = rng.dirichlet(np.ones(5) * 0.5, size=n)
            probs[rng.random((n, 5)) < 0.05] = 0.0
            probs /= np.maximum(probs.sum(axis=1, keepdims=True), 1e-300)
            probs[probs.sum(axis=1) == 0] = 0.2
            t = rng.integers(0, 5, n)
            r = evaluate(probs, t)
            assert r.nll == pytest.approx(oracles.nll(probs.tolist(), t.tolist()), abs=1e-12)
            assert r.brier == pytest.approx(oracles.brier(probs.tolist(), t.tolist()), abs=1e-12)
            assert 0 <= r.brier <= 2 / 5

    def test_kappa_invariant_under_relabeling(self, rng):
        t = rng.integers(0, 5, 200)
        p = np.where(rng.random(200) < 0.7, t, rng.integers(0, 5, 200))
        perm = np.array([3, 0, 4, 1, 2])
        assert cohen_kappa(confusion(perm[p], perm[t])) == pytest.approx(cohen_kappa(confusion(p, t)))


class TestMcNemar:
    def test_balanced(self):
        r = mcnemar_from_counts(8, 8)
        assert r.statistic == pytest.approx(0.0625)
        assert r.p_value == pytest.approx(0.8025873486341526, abs=1e-9)
        assert r.p_value > 0.05

    def test_ten_two(self):
        r = mcnemar_from_counts(10, 2)
        # oracle p from erfc(sqrt(x/2)), the chi-square(1) upper tail
        assert r.statistic == pytest.approx(49 / 12)
        assert r.p_value == pytest.approx(math.erfc(math.sqrt(49 / 24)), abs=1e-12)

    def test_no_discordance(self):
        assert mcnemar_from_counts(0, 0).p_value == 1.0

    def test_exact_auto(self):
        r = mcnemar_from_counts(10, 2, exact="auto")
        # two-sided binomial: 2 * (1 + 12 + 66) / 4096
        assert r.exact and r.p_value == pytest.approx(2 * 79 / 4096)
        assert not mcnemar_from_counts(20, 10, exact="auto").exact

    def test_from_predictions_and_swap(self, rng):
        t = rng.integers(0, 5, 300)
        a = np.where(rng.random(300) < 0.8, t, (t + 1) % 5)
        b = np.where(rng.random(300) < 0.7, t, (t + 2) % 5)
        r1, r2 = mcnemar(a, b, t), mcnemar(b, a, t)
        assert r1.b == int(np.sum((a == t) & (b != t))) and r1.c == int(np.sum((a != t) & (b == t)))
        assert r1.p_value == r2.p_value and r1.statistic == r2.statistic

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            mcnemar([0, 1], [0, 1], [0])


class TestPairwiseKappa:
    def test_self_and_symmetry(self, rng):
        hs = [rng.integers(0, 5, 100) for _ in range(3)]
        k = pairwise_kappa(hs, hs[0])
        assert k.shape == (4, 4)
        assert np.array_equal(k, k.T)
        assert np.all(np.diag(k) == 1)
        assert k[0, 3] == pytest.approx(1.0)

    def test_independent_random_near_zero(self):
        rng = np.random.default_rng(7)
        k = pairwise_kappa([rng.integers(0, 5, 100_000), rng.integers(0, 5, 100_000)])
        assert abs(k[0, 1]) < 0.02

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            pairwise_kappa([[0, 1], [0, 1, 2]])


def _results(rng, n_rec=6):
    out = []
    for k in range(n_rec):
        t = rng.integers(0, 5, 50)
        p = rng.dirichlet(np.ones(5), size=50)
        out.append(RecordingResult(f"r{k}", 5 + k * 0.7, [0.5, 2.0, 7.0, 12.0, None, 3.0][k % 6], t,
                                   {"a": p, "b": np.eye(5)[t]}))
    return out


class TestStratified:
    def test_single_stratum_equals_overall(self, rng):
        res = _results(rng)
        table = stratified_metrics(res, by=lambda r: "all")
        truth = np.concatenate([r.truth for r in res])
        pooled = np.concatenate([r.probs["a"] for r in res])
        assert table["all"]["a"] == evaluate(pooled, truth)

    def test_partition_and_omission(self, rng):
        res = _results(rng)
        table = stratified_metrics(res, by="severity")
        assert list(table) == ["None", "Mild", "Moderate", "Severe", "Unknown"]
        assert sum(t["a"].n_epochs for t in table.values()) == 300
        ages = stratified_metrics(res, by="age", age_bins=[0, 6, 7, 100])
        assert sum(t["b"].n_epochs for t in ages.values()) == 300
        assert list(ages) == ["[0,6)", "[6,7)", "[7,100)"]
        sparse = stratified_metrics(res, by="age", age_bins=[0, 5, 5.5, 100])
        assert "[0,5)" not in sparse

    def test_default_age_bins(self, rng):
        table = stratified_metrics(_results(rng), by="age")
        assert list(table) == ["[5,6)", "[6,7)", "[7,8)", "[8,9)"]
