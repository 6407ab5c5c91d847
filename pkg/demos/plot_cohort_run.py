"""
A full cohort run from the command line
=======================================

The same steps the ``stagerbench`` command performs: generate a seeded
cohort, run the evaluation and read back the report bundle.
"""

import json
import tempfile
from pathlib import Path

from stagerbench.cli import main

out = Path(tempfile.mkdtemp())

main(["synth", "--seed", "42", "--recordings", "12", "--epochs", "960", "--out", str(out)])
main(["run", "--config", str(out / "config.json")])

report = out / "report"
print(sorted(p.name for p in report.iterdir()))

summary = json.loads((report / "summary.json").read_text())
for model, m in summary["metrics"].items():
    print(f"{model:>16}: acc {m['accuracy']:.3f}  NLL {m['nll']:.3f}")

# per-stratum accuracy by obstructive sleep apnea severity
for stratum, per_model in summary["strata"]["ahi"].items():
    print(stratum, round(per_model["AverageEnsemble"]["accuracy"], 3))
