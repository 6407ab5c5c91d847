"""
Averaging and learned ensembles
===============================

Four imperfect stagers score the same recordings. Their outputs are combined
by plain averaging and by a learned weighting fitted on held-out recordings.
"""

import numpy as np

from stagerbench import SynthSpec, average_probs, evaluate, generate_synthetic_cohort
from stagerbench.ensemble import super_learner_apply, super_learner_train

spec = SynthSpec(n_recordings=20, epochs=960, seed=7, validation_fraction=0.25)
cohort = generate_synthetic_cohort(spec)

validation = [s for s, e in zip(cohort.stager_sets, cohort.manifest) if e.subset_tag == "validation"]
test = [s for s, e in zip(cohort.stager_sets, cohort.manifest) if e.subset_tag == "test"]

# fit one weight per stager by gradient descent on the validation log loss
weights = super_learner_train(validation)
print("learned weights:", {n: round(float(w), 3) for n, w in zip(weights.names, weights.w)})
print("loss by pass:", [round(v, 4) for v in weights.training_log[:5]], "...")

truth = np.concatenate([s.truth.stages for s in test])


def pooled(fn):
    return np.concatenate([fn(s) for s in test])


models = {name: pooled(lambda s, k=k: s.outputs[k].probs) for k, name in enumerate(spec.stager_names)}
models["average"] = pooled(lambda s: average_probs(s).probs)
models["learned"] = pooled(lambda s: super_learner_apply(weights, s).probs)

for name, probs in models.items():
    r = evaluate(probs, truth)
    print(f"{name:>8}: accuracy {r.accuracy:.3f}  kappa {r.kappa:.3f}  NLL {r.nll:.3f}  Brier {r.brier:.4f}")
