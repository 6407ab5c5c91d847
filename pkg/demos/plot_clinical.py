"""
Clinical sleep measures
=======================

Total sleep time, wake after sleep onset, REM latency and sleep efficiency
from a hypnogram, and whether an ensemble estimates them better than a
single stager across a cohort.
"""

from stagerbench import SynthSpec, average_probs, generate_synthetic_cohort, hardened
from stagerbench.clinical import clinical_measures, paired_t_test, relative_errors
from stagerbench.core import Hypnogram

night = Hypnogram.from_codes(["W", "W", "N1", "N2", "N2", "W", "N2", "N3", "REM", "REM", "W"])
print(clinical_measures(night))

cohort = generate_synthetic_cohort(SynthSpec(n_recordings=30, epochs=960, seed=11))
errs = {"stager1": [], "average": []}
for truth, sset in zip(cohort.truths, cohort.stager_sets):
    true_m = clinical_measures(truth)
    errs["stager1"].append(relative_errors(clinical_measures(hardened(sset.outputs[0])), true_m)["tst"])
    errs["average"].append(relative_errors(clinical_measures(hardened(average_probs(sset))), true_m)["tst"])

for name, values in errs.items():
    print(f"{name}: mean TST error {sum(values) / len(values):.2f}%")

t, p = paired_t_test(errs["average"], errs["stager1"])
print(f"paired t = {t:.2f}, p = {p:.2g}")
