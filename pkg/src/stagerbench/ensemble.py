"""
Combining the probability outputs of several stagers.

Two combiners are provided: plain probability averaging, and a learned
weighting in which each epoch's logits are a weighted sum of the stagers'
probability vectors (one scalar weight per stager, no bias) followed by a
softmax. The weights are fit by full-batch gradient descent on the mean
cross-entropy over a held-out labelled set.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import logsumexp, softmax

from .core import ProbSeq, StagerSet, as_labels
from .exceptions import EmptyStagerSet, LengthMismatch, NoLabels, WeightDimensionMismatch

__all__ = [
    "SuperLearnerWeights",
    "average_probs",
    "super_learner_apply",
    "super_learner_loss",
    "super_learner_grad",
    "super_learner_train",
]


@dataclass
class SuperLearnerWeights:
    w: np.ndarray
    names: tuple[str, ...] = ()
    training_log: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(self.w)):
            raise ValueError("super learner weights must be finite")
        self.names = tuple(self.names)

    def to_json(self, path: str | Path) -> None:
        payload = {"names": list(self.names), "w": [float(v) for v in self.w]}
        Path(path).write_text(json.dumps(payload, indent=1) + "\n")

    @classmethod
    def from_json(cls, path: str | Path) -> "SuperLearnerWeights":
        payload = json.loads(Path(path).read_text())
        return cls(np.array(payload["w"], dtype=np.float64), tuple(payload.get("names", ())))


def _stack(stagers: StagerSet | Sequence) -> np.ndarray:
    if isinstance(stagers, StagerSet):
        return stagers.stacked()
    if len(stagers) == 0:
        raise EmptyStagerSet("no stager outputs given")
    arrays = [np.asarray(s.probs if isinstance(s, ProbSeq) else s, dtype=np.float64) for s in stagers]
    if any(a.shape != arrays[0].shape for a in arrays):
        raise LengthMismatch("stager outputs have different shapes")
    return np.stack(arrays)


def average_probs(stagers: StagerSet | Sequence) -> ProbSeq:
    """Epoch-wise mean of the stagers' probability vectors."""
    return ProbSeq(_stack(stagers).mean(axis=0))


def _logits(w: np.ndarray, probs: np.ndarray) -> np.ndarray:
    # probs: (M, L, C) -> (L, C)
    return np.tensordot(w, probs, axes=(0, 0))


def super_learner_apply(weights: SuperLearnerWeights | np.ndarray, stagers: StagerSet | Sequence) -> ProbSeq:
    """Softmax of the weighted sum of stager probabilities, per epoch."""
    w = weights.w if isinstance(weights, SuperLearnerWeights) else np.asarray(weights, dtype=np.float64)
    probs = _stack(stagers)
    if w.shape != (probs.shape[0],):
        raise WeightDimensionMismatch(f"{w.size} weights for {probs.shape[0]} stagers")
    return ProbSeq(softmax(_logits(w, probs), axis=1))


def super_learner_loss(w: np.ndarray, probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean cross-entropy of the learned combiner on labelled epochs."""
    z = _logits(np.asarray(w, dtype=np.float64), probs)
    return float(np.mean(logsumexp(z, axis=1) - z[np.arange(len(labels)), labels]))


def super_learner_grad(w: np.ndarray, probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Gradient of :func:`super_learner_loss` with respect to the weights.

    dL/dw_m = mean over epochs of sum_c (softmax_c - y_c) * P^m_c.
    """
    s = softmax(_logits(np.asarray(w, dtype=np.float64), probs), axis=1)
    s[np.arange(len(labels)), labels] -= 1.0
    return np.einsum("lc,mlc->m", s, probs) / len(labels)


def super_learner_train(validation: StagerSet | Sequence[StagerSet], learning_rate: float = 0.5,
                        max_passes: int = 100, patience: int = 10,
                        min_improvement: float = 1e-6) -> SuperLearnerWeights:
    """Fit one weight per stager on labelled validation data.

    Parameters
    ----------
    validation : StagerSet or sequence of StagerSet
        Labelled recordings; several sets are pooled epoch-wise and must share
        stager names.
    learning_rate : float
        Step size of full-batch gradient descent.
    max_passes : int
        Upper bound on gradient steps over the whole set.
    patience : int
        Stop after this many passes without the loss improving on the best
        seen so far by more than ``min_improvement``.

    Returns
    -------
    SuperLearnerWeights
        The best-loss weights; ``training_log`` holds the loss evaluated at
        every visited weight vector, starting from the uniform ``1/M`` init.
    """
    sets = [validation] if isinstance(validation, StagerSet) else list(validation)
    if not sets:
        raise EmptyStagerSet("no validation recordings given")
    names = sets[0].names
    if any(s.names != names for s in sets):
        raise LengthMismatch("validation recordings use different stager names")
    if any(s.truth is None for s in sets):
        raise NoLabels("super learner training needs ground-truth labels")
    probs = np.concatenate([s.stacked() for s in sets], axis=1)
    labels = np.concatenate([as_labels(s.truth) for s in sets])
    if labels.size == 0:
        raise NoLabels("validation set has no epochs")

    m = probs.shape[0]
    w = np.full(m, 1.0 / m)
    loss = super_learner_loss(w, probs, labels)
    best_w, best_loss = w.copy(), loss
    log = [loss]
    stale = 0
    for _ in range(max_passes):
        w = w - learning_rate * super_learner_grad(w, probs, labels)
        loss = super_learner_loss(w, probs, labels)
        log.append(loss)
        if loss < best_loss - min_improvement:
            best_w, best_loss = w.copy(), loss
            stale = 0
        else:
            if loss < best_loss:
                best_w, best_loss = w.copy(), loss
            stale += 1
            if stale >= patience:
                break
    return SuperLearnerWeights(best_w, names, log)
