"""
Where do stagers fail together?
===============================

Errors shared by every stager are separated from the rest and located
relative to the nearest stage transition in the scored hypnogram.
"""

from collections import Counter

import numpy as np

from stagerbench import SynthSpec, generate_synthetic_cohort, hardened
from stagerbench.error_analysis import (
    HISTOGRAM_BUCKETS,
    classify_errors,
    distance_histogram,
    error_stage_distribution,
    pattern_counts,
)

cohort = generate_synthetic_cohort(SynthSpec(n_recordings=10, epochs=960, seed=5))

analysis = None
for entry, sset in zip(cohort.manifest, cohort.stager_sets):
    preds = {name: hardened(p) for name, p in zip(sset.names, sset.outputs)}
    part = classify_errors(preds, sset.truth, entry.id)
    analysis = part if analysis is None else analysis + part

for name, (common, other) in analysis.fractions().items():
    print(f"{name}: {analysis.n_errors[name]} errors, {common:.1%} common")

# transition distances of the common errors, shared by all stagers
hist = distance_histogram(analysis.records, analysis.stagers)[analysis.stagers[0]]
print({b: hist[b] for b in HISTOGRAM_BUCKETS})

dist = error_stage_distribution(analysis.records, analysis.stagers, kind="common")
print("common errors by true stage:", np.round(dist[analysis.stagers[0]], 3))

top = Counter(pattern_counts(analysis.records)).most_common(3)
print("most frequent (prev, stage, next):", top)
