"""Command-line driver: synth, extract, label, evaluate, report, stats.

Exit codes: 0 success, 1 data or processing failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import __version__, config as cfgmod, harness, jsonio
from .errors import EngageError
from .features import BIO_NAMES, extract_session, record_from_dict, record_to_dict
from .labeling import DIMENSIONS, GoldStandardDataset, SubjectRecord, build_gold_standard, build_label_maps, quality_filter
from .session_io import load_session
from .synth import GeneratorSpec, generate_corpus

log = logging.getLogger("engagekit")

FEATURES_FILE = "features.json"


def _session_dirs(root: Path):
    return sorted(p for p in root.iterdir() if p.is_dir() and (p / "manifest.json").exists())


def _feature_files(root: Path):
    return sorted(root.glob(f"*/{FEATURES_FILE}"))


def _load_records(root: Path):
    files = _feature_files(root)
    if not files:
        raise EngageError(f"no {FEATURES_FILE} files under {root}; run 'extract' first")
    return [record_from_dict(jsonio.load(f)) for f in files]


# ---------------------------------------------------------------------------
# commands

def cmd_synth(args, cfg) -> int:
    spec = GeneratorSpec(n_subjects=args.subjects, questions_per_subject=args.questions,
                         class_separation=args.delta, neutral_fraction=args.neutral_fraction,
                         audio_present_fraction=args.audio_fraction, seed=args.seed)
    out = generate_corpus(spec, args.out)
    print(f"wrote {spec.n_subjects} session bundles to {out}")
    return 0


def cmd_extract(args, cfg) -> int:
    root = Path(args.data_root)
    out_root = Path(args.out) if args.out else root
    ecfg = cfgmod.extract_config(cfg)
    dirs = _session_dirs(root)
    if not dirs:
        raise EngageError(f"no session bundles under {root}")
    failed = 0
    for d in dirs:
        try:
            session = load_session(d)
            if session.complete:
                rec = extract_session(session, ecfg)
            else:
                missing = [n for n in ("eda", "bvp", "hr") if getattr(session, n) is None]
                log.warning("%s: missing %s track(s); recorded as incomplete", d.name, ", ".join(missing))
                rec = SubjectRecord(session.subject_id, session.questions, session.calibration, {}, False)
            jsonio.dump(record_to_dict(rec, ecfg), out_root / d.name / FEATURES_FILE)
            n_voice = sum(1 for v in rec.vectors.values() if not v.voice_missing)
            log.info("%s: %d questions, %d with voice", d.name, len(rec.questions), n_voice)
        except (EngageError, OSError, ValueError) as exc:
            failed += 1
            log.error("%s: skipped (%s)", d.name, exc)
    print(f"extracted {len(dirs) - failed}/{len(dirs)} sessions")
    return 1 if failed else 0


def cmd_label(args, cfg) -> int:
    root = Path(args.data_root)
    out = Path(args.out) if args.out else root
    records = _load_records(root)
    kept, excluded = quality_filter(records, cfg["label.min_std"])
    for sid, reason in excluded:
        log.warning("excluded subject %s: %s", sid, reason)
    if not kept:
        raise EngageError("no subjects left after the quality filter")
    maps = build_label_maps(kept, seed=args.seed, restarts=cfg["label.restarts"])
    v_names = next((tuple(jsonio.load(f)["voice_names"]) for f in _feature_files(root)), ())
    gold = build_gold_standard(kept, maps, BIO_NAMES, v_names)
    summary = {
        "subjects_kept": [s.subject_id for s in kept],
        "subjects_excluded": [{"subject_id": s, "reason": r} for s, r in excluded],
        "counts": {d: gold[d].counts() for d in DIMENSIONS},
        "voice_complete": {d: int((~gold[d].voice_missing).sum()) for d in DIMENSIONS},
    }
    jsonio.dump({d: m.to_dict() for d, m in maps.items()}, out / "labelmap.json")
    jsonio.dump({"summary": summary, **{d: gold[d].to_dict() for d in DIMENSIONS}}, out / "gold.json")
    for d in DIMENSIONS:
        c = gold[d].counts()
        total = sum(c.values())
        parts = ", ".join(f"{k} {v} ({100 * v / total:.0f}%)" for k, v in c.items())
        print(f"{d}: {maps[d].describe()}\n  {parts}")
    return 0


def _gold_path(p: Path) -> Path:
    return p / "gold.json" if p.is_dir() else p


def _choice_list(value: str):
    return {"Y": (True,), "N": (False,), "both": None}[value]


def cmd_evaluate(args, cfg) -> int:
    gold = jsonio.load(_gold_path(Path(args.gold)))
    dataset = GoldStandardDataset.from_dict(gold[args.dimension])
    kinds = tuple(args.classifiers.split(",")) if args.classifiers else cfgmod.classifier_list(cfg)
    bal = _choice_list(args.bal) or cfgmod.yn_list(cfg, "plan.balancing")
    scale = _choice_list(args.scale) or cfgmod.yn_list(cfg, "plan.scaling")
    imp = (False,) if args.no_imputation else (_choice_list(args.imp) or cfgmod.yn_list(cfg, "plan.imputation"))
    configs = harness.config_matrix(args.features, kinds, bal, scale, imp, args.seed)
    plan = harness.ExperimentPlan(
        feature_set=args.features, dimension=args.dimension, configs=configs,
        repetitions=args.repetitions or cfg["plan.repetitions"], split_ratio=cfg["plan.split_ratio"],
        master_seed=args.seed, grids=cfgmod.grids(cfg), smote_k=cfg["plan.smote_k"], impute_k=cfg["plan.impute_k"])
    for imp_flag in sorted({c.imputation for c in configs}):
        rows = harness.regime_rows(dataset, args.features, imp_flag)
        log.info("%s/%s imputation=%s: %d rows", args.features, args.dimension, "Y" if imp_flag else "N", rows.size)
    reports = harness.run_experiment(plan, dataset, jobs=args.jobs)
    problems = harness.audit_leakage(reports)
    if problems:
        for p in problems:
            log.error("leakage audit: %s", p)
        return 1
    out = Path(args.out) if args.out else Path(".")
    for fmt in ("csv", "json", "md"):
        harness.emit_report(reports, fmt, harness.report_path(out, args.features, args.dimension, fmt))
    rows = harness.report_rows(reports)
    best = next(r for r in rows if r["best"])
    print(f"best: {best['classifier']} Bal={best['bal']} Scale={best['scale']} Imp={best['imp']} "
          f"P={best['precision']:.2f} R={best['recall']:.2f} F1={best['f1']:.2f} "
          f"(baseline F1 {best['baseline_f1']:.2f}, {100 * (best['impr_f1'] or 0):+.1f}%)")
    return 0


def cmd_report(args, cfg) -> int:
    doc = jsonio.load(args.results)
    reports = [harness.report_from_dict(r) for r in doc["reports"]]
    text = harness.render(reports, args.format)
    if args.out:
        harness.emit_report(reports, args.format, args.out)
    else:
        sys.stdout.write(text)
    return 0


def cmd_stats(args, cfg) -> int:
    root = Path(args.data_root)
    records = _load_records(root)
    if not args.all_subjects:
        records, _ = quality_filter(records, cfg["label.min_std"])
    stats = harness.descriptive_stats(records)
    out = Path(args.out) if args.out else root
    jsonio.dump(stats, out / "stats.json")
    md = harness.stats_markdown(stats)
    (out / "stats.md").write_text(md, encoding="utf-8")
    sys.stdout.write(md)
    return 0


# ---------------------------------------------------------------------------
# parser

def _global_flags(p, suppress: bool):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", default=d(None), help="key = value config file")
    p.add_argument("--seed", type=int, default=d(0), help="master seed")
    p.add_argument("--jobs", type=int, default=d(os.cpu_count() or 1), help="worker processes")
    p.add_argument("--out", default=d(None), help="output path")
    p.add_argument("-v", "--verbose", action="count", default=d(0))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="engagekit", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic corpus")
    _global_flags(s, suppress=True)
    s.add_argument("--subjects", type=int, default=21)
    s.add_argument("--questions", type=int, default=38)
    s.add_argument("--delta", type=float, default=3.0, help="class separation")
    s.add_argument("--neutral-fraction", type=float, default=0.4)
    s.add_argument("--audio-fraction", type=float, default=0.8)
    s.set_defaults(func=cmd_synth, needs_out=True)

    s = sub.add_parser("extract", help="compute features.json for every session bundle")
    _global_flags(s, suppress=True)
    s.add_argument("data_root")
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("label", help="quality filter, label maps and gold standard")
    _global_flags(s, suppress=True)
    s.add_argument("data_root")
    s.set_defaults(func=cmd_label)

    s = sub.add_parser("evaluate", help="run the classifier x Bal x Scale x Imp matrix")
    _global_flags(s, suppress=True)
    s.add_argument("gold", help="gold.json or the directory holding it")
    s.add_argument("--features", choices=harness.FEATURE_SETS, default="combined")
    s.add_argument("--dimension", choices=DIMENSIONS, default="arousal")
    s.add_argument("--classifiers", help="comma-separated subset of NB,DTree,SVM,RF,MLP")
    s.add_argument("--bal", choices=("Y", "N", "both"), default="both")
    s.add_argument("--scale", choices=("Y", "N", "both"), default="both")
    s.add_argument("--imp", choices=("Y", "N", "both"), default="both")
    s.add_argument("--no-imputation", action="store_true", help="same as --imp N")
    s.add_argument("--repetitions", type=int)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("report", help="re-render a results JSON file")
    _global_flags(s, suppress=True)
    s.add_argument("results")
    s.add_argument("--format", choices=("csv", "json", "md"), default="md")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("stats", help="descriptive statistics of the ratings")
    _global_flags(s, suppress=True)
    s.add_argument("data_root")
    s.add_argument("--all-subjects", action="store_true", help="skip the quality filter")
    s.set_defaults(func=cmd_stats)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "needs_out", False) and not args.out:
        parser.error(f"{args.command}: --out is required")
    if getattr(args, "classifiers", None):
        bad = [k for k in args.classifiers.split(",") if k not in harness.KINDS]
        if bad:
            parser.error(f"unknown classifier(s): {', '.join(bad)}")
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = cfgmod.load_config(args.config)
        return args.func(args, cfg)
    except cfgmod.ConfigError as exc:
        print(f"engagekit: config error: {exc}", file=sys.stderr)
        return 2
    except (EngageError, OSError, ValueError, KeyError) as exc:
        print(f"engagekit {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
