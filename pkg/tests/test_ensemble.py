import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stagerbench.core import Hypnogram, StagerSet, hardened
from stagerbench.ensemble import (
    SuperLearnerWeights,
    average_probs,
    super_learner_apply,
    super_learner_grad,
    super_learner_loss,
    super_learner_train,
)
from stagerbench.exceptions import EmptyStagerSet, LengthMismatch, NoLabels, WeightDimensionMismatch


def naive_loss(w, probs, labels):
    """Per-epoch loop: mean of -log softmax(sum_m w_m P^m)[y]."""
    total = 0.0
    for i, y in enumerate(labels):
        z = [sum(w[m] * probs[m][i][c] for m in range(len(w))) for c in range(5)]
        zmax = max(z)
        lse = zmax + math.log(sum(math.exp(v - zmax) for v in z))
        total += lse - z[y]
    return total / len(labels)


def random_instance(rng, m, n):
    probs = rng.dirichlet(np.ones(5) * rng.uniform(0.3, 3), size=(m, n))
    labels = rng.integers(0, 5, n)
    return probs, labels


def onehot(idx):
    out = np.zeros((len(idx), 5))
    out[np.arange(len(idx)), idx] = 1.0
    return out


def perfect_and_adversarial(rng, n=300):
    truth = rng.integers(0, 5, n)
    wrong = (truth + rng.integers(1, 5, n)) % 5
    return StagerSet(("good", "bad"), (onehot(truth), onehot(wrong)), Hypnogram(truth))


class TestAverage:
    def test_identical(self, rng):
        p = rng.dirichlet(np.ones(5), size=20)
        np.testing.assert_allclose(average_probs([p, p, p]).probs, p, atol=1e-15)

    def test_examples(self):
        out = average_probs([[[1, 0, 0, 0, 0]], [[0, 1, 0, 0, 0]]]).probs
        assert np.array_equal(out, [[0.5, 0.5, 0, 0, 0]])
        out = average_probs([[[0.6, 0.1, 0.1, 0.1, 0.1]], [[0.2] * 5]]).probs
        np.testing.assert_allclose(out, [[0.4, 0.15, 0.15, 0.15, 0.15]], atol=1e-12)

    def test_rows_sum_and_permutation(self, rng):
        ps = [rng.dirichlet(np.ones(5), size=50) for _ in range(4)]
        a = average_probs(ps).probs
        np.testing.assert_allclose(a.sum(axis=1), 1, atol=1e-6)
        np.testing.assert_allclose(average_probs(ps[::-1]).probs, a, atol=1e-15)

    def test_errors(self):
        with pytest.raises(EmptyStagerSet):
            average_probs([])
        with pytest.raises(LengthMismatch):
            average_probs([np.full((2, 5), 0.2), np.full((3, 5), 0.2)])


class TestApply:
    def test_zero_weights_uniform(self, rng):
        ps = [rng.dirichlet(np.ones(5), size=10) for _ in range(3)]
        np.testing.assert_allclose(super_learner_apply(np.zeros(3), ps).probs, 0.2, atol=1e-15)

    def test_large_weight_limit(self, rng):
        idx = rng.integers(0, 5, 30)
        out = super_learner_apply(np.array([50.0]), [onehot(idx)])
        assert np.array_equal(hardened(out).stages, idx)
        assert out.probs[np.arange(30), idx].min() > 0.999

    def test_analytic_softmax(self):
        out = super_learner_apply(np.array([1.0, 1.0]), [[[1, 0, 0, 0, 0]], [[0, 1, 0, 0, 0]]]).probs[0]
        # oracle: e/(2e+3) and 1/(2e+3)
        np.testing.assert_allclose(out, [0.32220249132240225] * 2 + [0.11853167245173185] * 3, rtol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(WeightDimensionMismatch):
            super_learner_apply(np.ones(2), [np.full((1, 5), 0.2)])

    @settings(max_examples=50)
    @given(st.integers(1, 6), st.integers(1, 40), st.integers(0, 2 ** 32 - 1))
    def test_softmax_monotone_at_init(self, m, n, seed):
        ps = np.random.default_rng(seed).dirichlet(np.ones(5), size=(m, n))
        avg = average_probs(list(ps))
        sl = super_learner_apply(np.full(m, 1 / m), list(ps))
        assert np.array_equal(hardened(avg).stages, hardened(sl).stages)


class TestGradient:
    def test_loss_matches_naive(self, rng):
        probs, labels = random_instance(rng, 3, 25)
        w = rng.normal(size=3)
        assert super_learner_loss(w, probs, labels) == pytest.approx(naive_loss(w, probs, labels), rel=1e-12)

    def test_finite_differences(self, rng):
        h = 1e-5
        for _ in range(20):
            m, n = int(rng.integers(1, 9)), int(rng.integers(1, 60))
            probs, labels = random_instance(rng, m, n)
            w = rng.normal(size=m) * 2
            g = super_learner_grad(w, probs, labels)
            fd = np.array([(naive_loss(w + h * e, probs, labels) - naive_loss(w - h * e, probs, labels)) / (2 * h)
                           for e in np.eye(m)])
            np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-9)


class TestTrain:
    def test_perfect_vs_adversarial(self, rng):
        sset = perfect_and_adversarial(rng)
        w = super_learner_train(sset)
        assert w.w[0] > w.w[1]
        assert np.array_equal(hardened(super_learner_apply(w, sset)).stages, sset.truth.stages)
        assert len(w.training_log) <= 101

    def test_grid_oracle_direction(self, rng):
        # brute-force grid over [-5,5]^2: loss decreases in w1 and increases in w2
        sset = perfect_and_adversarial(rng, 100)
        probs, labels = sset.stacked(), sset.truth.stages.astype(int)
        grid = np.linspace(-5, 5, 11)
        loss = np.array([[super_learner_loss(np.array([a, b]), probs, labels) for b in grid] for a in grid])
        assert np.all(np.diff(loss, axis=0) < 0)
        assert np.all(np.diff(loss, axis=1) > 0)

    def test_single_perfect_stager(self, rng):
        idx = rng.integers(0, 5, 100)
        sset = StagerSet(("only",), (onehot(idx),), Hypnogram(idx))
        probs = sset.stacked()
        assert naive_loss([2.0], probs, idx) < naive_loss([1.0], probs, idx)
        w = super_learner_train(sset)
        assert w.w[0] > 1.0
        assert w.training_log[-1] < naive_loss([1.0], probs, idx)

    def test_identical_stagers_keep_argmax(self, rng):
        p = rng.dirichlet(np.ones(5), size=80)
        sset = StagerSet(("a", "b", "c"), (p, p, p), Hypnogram(rng.integers(0, 5, 80)))
        w = super_learner_train(sset)
        assert np.array_equal(hardened(super_learner_apply(w, sset)).stages, hardened(p).stages)

    def test_best_so_far_non_increasing(self, rng):
        probs, labels = random_instance(rng, 4, 200)
        sset = StagerSet(tuple("abcd"), tuple(probs), Hypnogram(labels))
        w = super_learner_train(sset, learning_rate=5.0)
        best = np.minimum.accumulate(w.training_log)
        assert np.all(np.diff(best) <= 0)
        assert super_learner_loss(w.w, probs, labels) == pytest.approx(best[-1])

    def test_permutation_symmetry(self, rng):
        probs, labels = random_instance(rng, 4, 150)
        names = tuple("abcd")
        w = super_learner_train(StagerSet(names, tuple(probs), Hypnogram(labels)))
        perm = [2, 0, 3, 1]
        wp = super_learner_train(StagerSet(tuple(names[i] for i in perm), tuple(probs[perm]), Hypnogram(labels)))
        np.testing.assert_allclose(wp.w, w.w[perm], atol=1e-10)

    def test_requires_labels(self, rng):
        p = rng.dirichlet(np.ones(5), size=5)
        with pytest.raises(NoLabels):
            super_learner_train(StagerSet(("a",), (p,)))
        with pytest.raises(EmptyStagerSet):
            super_learner_train([])

    def test_pooled_sets_and_json(self, tmp_path, rng):
        sets = [perfect_and_adversarial(rng, 50) for _ in range(3)]
        w = super_learner_train(sets)
        w.to_json(tmp_path / "w.json")
        back = SuperLearnerWeights.from_json(tmp_path / "w.json")
        assert back.names == ("good", "bad")
        np.testing.assert_array_equal(back.w, w.w)
