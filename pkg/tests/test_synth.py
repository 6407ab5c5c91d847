import filecmp

import numpy as np
import pytest

from stagerbench.core import hardened
from stagerbench.exceptions import InvalidStochasticMatrix
from stagerbench.synth import SynthSpec, generate_synthetic_cohort, write_cohort


def test_identity_confusions_reproduce_truth():
    spec = SynthSpec(n_recordings=3, epochs=200, confusions=[np.eye(5)] * 2, seed=3)
    cohort = generate_synthetic_cohort(spec)
    for truth, sset in zip(cohort.truths, cohort.stager_sets):
        for p in sset.outputs:
            assert np.array_equal(hardened(p).stages, truth.stages)


def test_uniform_confusion_is_chance():
    spec = SynthSpec(n_recordings=1, epochs=100_000, confusions=[np.full((5, 5), 0.2)], seed=11)
    cohort = generate_synthetic_cohort(spec)
    acc = np.mean(hardened(cohort.stager_sets[0].outputs[0]).stages == cohort.truths[0].stages)
    assert abs(acc - 0.2) < 0.02


def test_accuracy_tracks_confusion_diagonal():
    spec = SynthSpec(n_recordings=2, epochs=20_000, seed=5)
    cohort = generate_synthetic_cohort(spec)
    for k, want in enumerate((0.82, 0.78, 0.74, 0.70)):
        hits = [np.mean(hardened(s.outputs[k]).stages == t.stages)
                for s, t in zip(cohort.stager_sets, cohort.truths)]
        assert np.mean(hits) == pytest.approx(want, abs=0.01)


def test_concentration_sharpens_without_changing_argmax():
    base = dict(n_recordings=1, epochs=500, seed=9)
    soft = generate_synthetic_cohort(SynthSpec(**base, concentration=1.0))
    sharp = generate_synthetic_cohort(SynthSpec(**base, concentration=4.0))
    p1, p4 = soft.stager_sets[0].outputs[0], sharp.stager_sets[0].outputs[0]
    assert np.array_equal(hardened(p1).stages, hardened(p4).stages)
    assert p4.probs.max(axis=1).mean() > p1.probs.max(axis=1).mean()


def test_per_recording_streams_independent_of_count():
    a = generate_synthetic_cohort(SynthSpec(n_recordings=2, epochs=100, seed=4))
    b = generate_synthetic_cohort(SynthSpec(n_recordings=5, epochs=100, seed=4))
    for k in range(2):
        assert np.array_equal(a.truths[k].stages, b.truths[k].stages)


def test_validation_tags():
    cohort = generate_synthetic_cohort(SynthSpec(n_recordings=10, epochs=10, validation_fraction=0.3))
    tags = [e.subset_tag for e in cohort.manifest]
    assert tags.count("validation") == 3 and tags.count("test") == 7


def test_written_cohort_is_byte_deterministic(tmp_path):
    spec = SynthSpec(n_recordings=3, epochs=50, seed=2)
    write_cohort(generate_synthetic_cohort(spec), tmp_path / "a")
    write_cohort(generate_synthetic_cohort(spec), tmp_path / "b")
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    assert not cmp.diff_files and not cmp.left_only and not cmp.right_only
    for sub in ("truth", "stagers/stager1"):
        inner = filecmp.dircmp(tmp_path / "a" / sub, tmp_path / "b" / sub)
        assert not inner.diff_files and len(inner.same_files) == 3


def test_roundtrip_dict():
    spec = SynthSpec(n_recordings=2, epochs=5, seed=8, concentration=2.0)
    again = SynthSpec.from_dict(spec.to_dict())
    assert again.to_dict() == spec.to_dict()


@pytest.mark.parametrize("bad", [
    np.full((5, 5), 0.3),
    np.eye(4),
    np.eye(5) * 2 - np.full((5, 5), 0.2),
])
def test_invalid_matrix(bad):
    with pytest.raises(InvalidStochasticMatrix):
        SynthSpec(confusions=[bad])
    with pytest.raises(InvalidStochasticMatrix):
        SynthSpec(transitions=bad)
