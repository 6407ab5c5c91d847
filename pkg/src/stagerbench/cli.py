"""Command-line entry point: ``stagerbench prep|ensemble|eval|clinical|errors|synth|run``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import clinical, error_analysis, metrics
from .core import Hypnogram, ProbSeq, StagerSet, SleepStage, hardened
from .edf_io import load_raw, read_edf
from .ensemble import SuperLearnerWeights, average_probs, super_learner_apply, super_learner_train
from .exceptions import StagerBenchError
from .pipeline import RunConfig, run_pipeline, validate_config, write_prep_outputs
from .sigprep import preprocess
from .synth import SynthSpec, generate_synthetic_cohort, write_cohort

logger = logging.getLogger("stagerbench")


def _named_inputs(items: list[str]) -> dict[str, Path]:
    """Parse ``name=path`` arguments; bare paths are named by their stem."""
    out = {}
    for item in items:
        name, sep, path = item.partition("=")
        if not sep:
            name, path = Path(item).stem, item
        out[name] = Path(path)
    return out


def _dump(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")


def cmd_prep(args) -> int:
    out = Path(args.out)
    if args.edf:
        aliases = json.loads(Path(args.aliases).read_text()) if args.aliases else {}
        traces = read_edf(args.edf, args.channels or None, aliases)
        rec_id = args.id or Path(args.edf).stem
    else:
        traces = {Path(p).stem: load_raw(p) for p in args.raw}
        rec_id = args.id or "recording"
    result = preprocess(traces, rec_id, target_rate=args.rate, eps=args.eps, clip_k=args.clip,
                        low=args.low, high=args.high)
    info = write_prep_outputs(result, out, rec_id)
    print(f"{rec_id}: {info['n_epochs']} epochs, {info['good_seconds']:.0f} s good, passed={info['passed']}")
    return 0


def cmd_ensemble(args) -> int:
    inputs = _named_inputs(args.probs)
    names = tuple(inputs)
    outputs = tuple(ProbSeq.read_csv(p) for p in inputs.values())
    truth = Hypnogram.read_csv(args.truth) if args.truth else None
    sset = StagerSet(names, outputs, truth)
    if args.mode == "avg":
        combined = average_probs(sset)
    else:
        if truth is not None:
            weights = super_learner_train(sset)
            if args.weights:
                weights.to_json(args.weights)
        elif args.weights:
            weights = SuperLearnerWeights.from_json(args.weights)
        else:
            print("learned mode needs --truth (to train) or --weights (to apply)", file=sys.stderr)
            return 2
        combined = super_learner_apply(weights, sset)
    combined.write_csv(args.out)
    return 0


def cmd_eval(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    truth = Hypnogram.read_csv(args.truth)
    inputs = {n: ProbSeq.read_csv(p) for n, p in _named_inputs(args.probs).items()}
    reports = {n: metrics.evaluate(p, truth, args.absent) for n, p in inputs.items()}
    _dump(out / "metrics.json", {n: r.to_dict() for n, r in reports.items()})
    header = ["model", "accuracy", "kappa", "mf1", "sensitivity", "specificity", "nll", "brier"]
    lines = [",".join(header)]
    lines += [",".join([n] + [repr(getattr(r, h)) for h in header[1:]]) for n, r in reports.items()]
    (out / "metrics_overall.csv").write_text("\n".join(lines) + "\n")
    lines = [",".join(["model"] + [s.name for s in SleepStage])]
    lines += [",".join([n] + [repr(v) for v in r.per_class_f1]) for n, r in reports.items()]
    (out / "metrics_classwise.csv").write_text("\n".join(lines) + "\n")
    for n, r in reports.items():
        print(f"{n}: acc={r.accuracy:.4f} kappa={r.kappa:.4f} mf1={r.mf1:.4f} nll={r.nll:.4f} brier={r.brier:.4f}")
    return 0


def cmd_clinical(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    truth = Hypnogram.read_csv(args.truth)
    true_m = clinical.clinical_measures(truth)
    rows = [["model", *clinical.MEASURES, *[f"relerr_{k}" for k in clinical.MEASURES]]]
    rows.append(["truth", *[getattr(true_m, k) for k in clinical.MEASURES], *[""] * len(clinical.MEASURES)])
    for name, path in _named_inputs(args.probs).items():
        pm = clinical.clinical_measures(hardened(ProbSeq.read_csv(path)))
        errs = clinical.relative_errors(pm, true_m)
        rows.append([name, *[getattr(pm, k) for k in clinical.MEASURES], *[errs[k] for k in clinical.MEASURES]])
    text = "\n".join(",".join("" if v is None else str(v) for v in row) for row in rows) + "\n"
    (out / "clinical.csv").write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_errors(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    truth = Hypnogram.read_csv(args.truth)
    preds = {n: hardened(ProbSeq.read_csv(p)) for n, p in _named_inputs(args.probs).items()}
    analysis = error_analysis.classify_errors(preds, truth)
    names = analysis.stagers
    (out / "errors.ndjson").write_text(
        "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in analysis.records))
    lines = [",".join(["model", "kind", *error_analysis.HISTOGRAM_BUCKETS])]
    for kind in ("common", "other"):
        hist = error_analysis.distance_histogram(analysis.records, names, kind)
        lines += [",".join([n, kind, *[str(hist[n][b]) for b in error_analysis.HISTOGRAM_BUCKETS]]) for n in names]
    (out / "errors_histogram.csv").write_text("\n".join(lines) + "\n")
    patterns = error_analysis.pattern_counts(analysis.records, kind="common")
    lines = ["prev,stage,next,count"] + [
        f"{a},{b},{c},{n}" for (a, b, c), n in sorted(patterns.items(), key=lambda kv: (-kv[1], kv[0]))]
    (out / "error_patterns.csv").write_text("\n".join(lines) + "\n")
    for n, (common, other) in analysis.fractions().items():
        print(f"{n}: {analysis.n_errors[n]} errors, common {common:.1%}, other {other:.1%}")
    return 0


def cmd_synth(args) -> int:
    spec_dict = json.loads(Path(args.config).read_text()) if args.config else {}
    if args.seed is not None:
        spec_dict["seed"] = args.seed
    if args.recordings is not None:
        spec_dict["n_recordings"] = args.recordings
    if args.epochs is not None:
        spec_dict["epochs"] = args.epochs
    spec = SynthSpec.from_dict(spec_dict)
    cohort = generate_synthetic_cohort(spec)
    out = Path(args.out)
    write_cohort(cohort, out)
    mode = "both" if spec.validation_fraction > 0 else "avg"
    run_config = {
        "manifest": "manifest.json",
        "stager_dirs": {n: f"stagers/{n}" for n in spec.stager_names},
        "out": "report",
        "ensemble_mode": mode,
        "seed": spec.seed,
    }
    _dump(out / "config.json", run_config)
    _dump(out / "synth_spec.json", spec.to_dict())
    print(f"wrote {spec.n_recordings} recordings x {spec.epochs} epochs to {out}")
    return 0


def cmd_run(args) -> int:
    config = RunConfig.from_json(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.out is not None:
        config.out = Path(args.out)
    if args.workers is not None:
        config.workers = args.workers
    if args.validate_only:
        diags = validate_config(config)
        for d in diags:
            print(f"{d.severity}: {d.message}")
        return 1 if any(d.severity == "error" for d in diags) else 0
    summary = run_pipeline(config)
    print(f"evaluated {summary['n_evaluated']} recordings ({summary['n_skipped']} skipped) -> {config.out}")
    for m in summary["models"]:
        r = summary["metrics"][m]
        print(f"  {m}: acc={r['accuracy']:.4f} kappa={r['kappa']:.4f} mf1={r['mf1']:.4f} nll={r['nll']:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stagerbench", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prep", help="preprocess PSG channels into 30-s epochs")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--edf", help="EDF file")
    src.add_argument("--raw", nargs="+", help=".f32le files with JSON sidecars")
    p.add_argument("--channels", nargs="*", default=[], help="channel names to extract from the EDF")
    p.add_argument("--aliases", help="JSON file mapping channel names to alternative labels")
    p.add_argument("--id", help="recording id (defaults to the file stem)")
    p.add_argument("--rate", type=float, default=100.0)
    p.add_argument("--eps", type=float, default=1e-4, help="flat-window threshold relative to peak")
    p.add_argument("--clip", type=float, default=6.0, help="clipping threshold in standard deviations")
    p.add_argument("--low", type=float, default=0.3)
    p.add_argument("--high", type=float, default=40.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("ensemble", help="combine stager probability CSVs")
    p.add_argument("probs", nargs="+", help="[name=]path of ProbSeq CSVs")
    p.add_argument("--mode", choices=("avg", "learned"), default="avg")
    p.add_argument("--truth", help="hypnogram CSV used to train the learned combiner")
    p.add_argument("--weights", help="weights JSON (written when training, read otherwise)")
    p.add_argument("--out", required=True, help="output ProbSeq CSV")
    p.set_defaults(func=cmd_ensemble)

    for name, func, helptext in (("eval", cmd_eval, "staging metrics per stager"),
                                 ("clinical", cmd_clinical, "clinical sleep measures"),
                                 ("errors", cmd_errors, "common/other error analysis")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("probs", nargs="+", help="[name=]path of ProbSeq CSVs")
        p.add_argument("--truth", required=True)
        p.add_argument("--out", required=True)
        if name == "eval":
            p.add_argument("--absent", choices=("exclude", "zero"), default="exclude")
        p.set_defaults(func=func)

    p = sub.add_parser("synth", help="generate a synthetic cohort")
    p.add_argument("--config", help="SynthSpec JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--recordings", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="full cohort evaluation from a run config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--workers", type=int)
    p.add_argument("--validate-only", action="store_true")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (StagerBenchError, OSError) as exc:
        print(f"stagerbench: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
