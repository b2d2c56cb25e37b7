"""Repeated stratified hold-out evaluation with leave-one-out hyperparameter tuning.

Per repetition: split, optionally impute (fit on train), optionally SMOTE
(train only), optionally scale (fit on the processed train), tune by LOO-CV,
refit on the full processed train, score on the test split. Every row
carries an origin tag (dataset index, or -1 for synthetic rows) so the
leakage audit can prove that nothing derived from test rows reaches a model.
"""
from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import jsonio
from .errors import ClassTooSmall, EngageError, LengthMismatch, UnwritablePath
from .labeling import CLASS_NAMES, DIMENSIONS, SubjectRecord, calibration_offsets
from .ml.classifiers import DEFAULT_GRIDS, KINDS, make_estimator
from .ml.preprocessing import KnnImputer, apply_scaler, fit_scaler, smote

log = logging.getLogger(__name__)

FEATURE_SETS = ("biofeedback", "voice", "combined")
METRICS = ("precision", "recall", "f1", "accuracy")
LABEL_ORDER = (1, 0)  # positive/high first, as in the result tables


@dataclass(frozen=True)
class PipelineConfig:
    balancing: bool
    scaling: bool
    imputation: bool
    classifier: str
    seed: int = 0

    @property
    def key(self):
        yn = lambda b: "Y" if b else "N"
        return (self.classifier, yn(self.balancing), yn(self.scaling), yn(self.imputation))


@dataclass
class ExperimentPlan:
    feature_set: str = "combined"
    dimension: str = "arousal"
    configs: Sequence[PipelineConfig] = ()
    repetitions: int = 10
    split_ratio: float = 0.7
    master_seed: int = 0
    grids: Optional[dict] = None
    smote_k: int = 5
    impute_k: int = 5

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not 0 < self.split_ratio < 1:
            raise ValueError("split_ratio must lie in (0, 1)")
        if self.feature_set not in FEATURE_SETS:
            raise ValueError(f"feature_set must be one of {FEATURE_SETS}")
        if self.dimension not in DIMENSIONS:
            raise ValueError(f"dimension must be one of {DIMENSIONS}")

    def grid(self, kind):
        grids = self.grids or DEFAULT_GRIDS
        return grids.get(kind, DEFAULT_GRIDS[kind])


def config_matrix(feature_set: str, classifiers=KINDS, balancing=(False, True), scaling=(False, True),
                  imputation=(False, True), seed: int = 0):
    """The (classifier x Bal x Scale x Imp) grid; imputation is dropped for biofeedback-only runs."""
    if feature_set == "biofeedback":
        imputation = (False,)
    return [PipelineConfig(b, s, i, c, seed)
            for c in classifiers for b in balancing for s in scaling for i in imputation]


# ---------------------------------------------------------------------------
# metrics

def macro_metrics(predicted, truth, labels=LABEL_ORDER) -> dict:
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise LengthMismatch(f"{predicted.shape[0]} predictions for {truth.shape[0]} labels")
    p, r, f = [], [], []
    for c in labels:
        tp = np.sum((predicted == c) & (truth == c))
        n_pred = np.sum(predicted == c)
        n_true = np.sum(truth == c)
        prec = tp / n_pred if n_pred else 0.0
        rec = tp / n_true if n_true else 0.0
        p.append(prec)
        r.append(rec)
        f.append(2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0)
    acc = float(np.mean(predicted == truth)) if truth.size else 0.0
    return {"precision": float(np.mean(p)), "recall": float(np.mean(r)), "f1": float(np.mean(f)), "accuracy": acc}


def majority_class(train_y, labels=LABEL_ORDER):
    counts = [int(np.sum(np.asarray(train_y) == c)) for c in labels]
    return labels[int(np.argmax(counts))]


def majority_baseline(train_y, test_y, labels=LABEL_ORDER) -> dict:
    test_y = np.asarray(test_y)
    pred = np.full(test_y.shape, majority_class(train_y, labels), dtype=test_y.dtype)
    return macro_metrics(pred, test_y, labels)


def improvement(model: float, baseline: float) -> float:
    """Relative improvement ``(model - baseline) / baseline``."""
    return (model - baseline) / baseline


# ---------------------------------------------------------------------------
# splitting and tuning

def stratified_split(y, ratio: float, seed) -> tuple:
    """Indices ``(train, test)``; each class contributes ``round(ratio * count)`` to train."""
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        if idx.size < 2:
            raise ClassTooSmall(f"class {c!r} has {idx.size} member(s); need 2")
        idx = rng.permutation(idx)
        k = min(max(int(round(ratio * idx.size)), 1), idx.size - 1)
        train.append(idx[:k])
        test.append(idx[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def loo_predictions(kind, hyperparams, X, y, seed):
    n = X.shape[0]
    pred = np.empty_like(y)
    mask = np.ones(n, dtype=bool)
    for i in range(n):
        mask[i] = False
        yt = y[mask]
        if np.unique(yt).size < 2:
            pred[i] = yt[0]
        else:
            pred[i] = make_estimator(kind, hyperparams, seed).fit(X[mask], yt).predict(X[i:i + 1])[0]
        mask[i] = True
    return pred


def loo_tune(kind, grid, X, y, seed=0):
    """Grid cell with the best leave-one-out macro-F1; ties keep the earlier cell."""
    grid = list(grid)
    if len(grid) == 1:
        return dict(grid[0])
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    best, best_f1 = None, -1.0
    for cell in grid:
        f1 = macro_metrics(loo_predictions(kind, cell, X, y, seed), y)["f1"]
        log.debug("LOO %s %s -> F1 %.4f", kind, cell, f1)
        if f1 > best_f1:
            best, best_f1 = cell, f1
    return dict(best)


# ---------------------------------------------------------------------------
# experiment

@dataclass
class RunAudit:
    train_origins: np.ndarray
    test_origins: np.ndarray
    fit_origins: np.ndarray  # rows the scaler/model were fitted on (-1 = synthetic)
    donor_origins: np.ndarray  # imputation donors
    scaler_fingerprint: Optional[str] = None
    scaler_refit_fingerprint: Optional[str] = None


@dataclass
class RunResult:
    repetition: int
    seed: int
    metrics: dict
    baseline: dict
    hyperparams: dict
    n_train: int
    n_test: int
    n_synthetic: int
    audit: RunAudit = field(repr=False, default=None)


@dataclass
class EvalReport:
    feature_set: str
    dimension: str
    config: PipelineConfig
    runs: list
    dataset_fingerprint: str
    n_rows: int
    master_seed: int

    @property
    def means(self):
        return {m: float(np.mean([r.metrics[m] for r in self.runs])) for m in METRICS}

    @property
    def baseline_means(self):
        return {m: float(np.mean([r.baseline[m] for r in self.runs])) for m in METRICS}

    def to_dict(self):
        return {
            "feature_set": self.feature_set, "dimension": self.dimension,
            "classifier": self.config.classifier, "balancing": self.config.balancing,
            "scaling": self.config.scaling, "imputation": self.config.imputation,
            "means": self.means, "baseline_means": self.baseline_means,
            "dataset_fingerprint": self.dataset_fingerprint, "n_rows": self.n_rows,
            "master_seed": self.master_seed,
            "runs": [{"repetition": r.repetition, "seed": r.seed, "metrics": r.metrics, "baseline": r.baseline,
                      "hyperparams": {k: (list(v) if isinstance(v, tuple) else v) for k, v in r.hyperparams.items()},
                      "n_train": r.n_train, "n_test": r.n_test, "n_synthetic": r.n_synthetic,
                      "scaler_fingerprint": r.audit.scaler_fingerprint if r.audit else None}
                     for r in self.runs],
        }


def repetition_seeds(master_seed: int, repetition: int):
    """``(split_seed, smote_seed, model_seed)`` derived from the master seed and repetition index only."""
    ss = np.random.SeedSequence([int(master_seed), int(repetition)])
    return tuple(int(s) for s in ss.generate_state(3, dtype=np.uint32))


def regime_rows(dataset, feature_set: str, imputation: bool) -> np.ndarray:
    if feature_set != "biofeedback" and not imputation:
        return np.flatnonzero(~dataset.voice_missing)
    return np.arange(len(dataset))


def run_config(plan: ExperimentPlan, dataset, config: PipelineConfig) -> EvalReport:
    rows = regime_rows(dataset, plan.feature_set, config.imputation)
    data = dataset.subset(rows)
    y_all = data.y
    needs_voice = plan.feature_set != "biofeedback"
    runs = []
    for rep in range(plan.repetitions):
        split_seed, smote_seed, model_seed = repetition_seeds(plan.master_seed, rep)
        try:
            tr, te = stratified_split(y_all, plan.split_ratio, split_seed)
            voice = data.voice
            donors = np.empty(0, dtype=np.int64)
            if needs_voice and config.imputation and data.voice_missing.any():
                imp = KnnImputer(plan.impute_k).fit(data.bio[tr], data.voice[tr], data.voice_missing[tr], index=tr)
                voice = data.voice.copy()
                voice[tr] = imp.transform(data.bio[tr], data.voice[tr], data.voice_missing[tr])[0]
                voice[te] = imp.transform(data.bio[te], data.voice[te], data.voice_missing[te])[0]
                donors = imp.donor_index
            X = data.matrix(plan.feature_set, voice)
            X_tr, y_tr, X_te, y_te = X[tr], y_all[tr], X[te], y_all[te]
            origin_tr = tr.copy()
            n_syn = 0
            if config.balancing:
                X_tr, y_tr = smote(X_tr, y_tr, plan.smote_k, smote_seed)
                n_syn = X_tr.shape[0] - tr.size
                origin_tr = np.concatenate([tr, np.full(n_syn, -1)])
            fp = refit_fp = None
            if config.scaling:
                scaler = fit_scaler(X_tr)
                fp = scaler.fingerprint
                X_tr = apply_scaler(scaler, X_tr)
                X_te = apply_scaler(scaler, X_te)
                refit_fp = fit_scaler(X[tr] if not config.balancing else
                                      np.vstack([X[tr], smote(X[tr], y_all[tr], plan.smote_k, smote_seed)[0][tr.size:]])
                                      ).fingerprint
            hp = loo_tune(config.classifier, plan.grid(config.classifier), X_tr, y_tr, model_seed)
            model = make_estimator(config.classifier, hp, model_seed).fit(X_tr, y_tr)
            pred = model.predict(X_te)
            runs.append(RunResult(
                rep, split_seed, macro_metrics(pred, y_te), majority_baseline(y_all[tr], y_te), hp,
                int(X_tr.shape[0]), int(te.size), n_syn,
                RunAudit(rows[tr], rows[te], np.where(origin_tr >= 0, rows[np.maximum(origin_tr, 0)], -1),
                         rows[donors] if donors.size else donors, fp, refit_fp)))
        except EngageError as exc:
            raise EngageError(f"{config.key} repetition {rep} failed: {exc}") from exc
    return EvalReport(plan.feature_set, plan.dimension, config, runs, data.fingerprint(), len(data), plan.master_seed)


def _run_config_star(args):
    return run_config(*args)


def run_experiment(plan: ExperimentPlan, dataset, jobs: int = 1) -> list:
    """One :class:`EvalReport` per config, in config order."""
    configs = list(plan.configs) or config_matrix(plan.feature_set)
    tasks = [(plan, dataset, c) for c in configs]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_config_star, tasks))
    return [run_config(*t) for t in tasks]


def audit_leakage(reports) -> list:
    """Return a list of violations (empty when the audit passes)."""
    problems = []
    for rep in reports:
        for run in rep.runs:
            a = run.audit
            test = set(a.test_origins.tolist())
            if set(a.train_origins.tolist()) & test:
                problems.append(f"{rep.config.key} rep {run.repetition}: train/test overlap")
            if np.any(a.test_origins < 0):
                problems.append(f"{rep.config.key} rep {run.repetition}: synthetic row in test split")
            if test & set(a.fit_origins[a.fit_origins >= 0].tolist()):
                problems.append(f"{rep.config.key} rep {run.repetition}: test row used for fitting")
            if test & set(np.asarray(a.donor_origins).tolist()):
                problems.append(f"{rep.config.key} rep {run.repetition}: test row used as imputation donor")
            if a.scaler_fingerprint != a.scaler_refit_fingerprint:
                problems.append(f"{rep.config.key} rep {run.repetition}: scaler not derived from train rows only")
    return problems


# ---------------------------------------------------------------------------
# descriptive statistics

def _summary(x):
    x = np.asarray(x, dtype=float)
    return {"average": float(x.mean()), "minimum": float(x.min()), "maximum": float(x.max()),
            "std_dev": float(x.std())}


def box_stats(x):
    x = np.sort(np.asarray(x, dtype=float))
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    iqr = q3 - q1
    lo = x[x >= q1 - 1.5 * iqr].min()
    hi = x[x <= q3 + 1.5 * iqr].max()
    return {"q1": float(q1), "median": float(med), "q3": float(q3), "whisker_low": float(lo),
            "whisker_high": float(hi), "n": int(x.size)}


def descriptive_stats(subjects: Sequence[SubjectRecord]) -> dict:
    raw = {d: [] for d in DIMENSIONS}
    norm = {d: [] for d in DIMENSIONS}
    by_topic = {}
    for s in subjects:
        c_v, c_a = calibration_offsets(s.calibration)
        for q in s.questions:
            nv, na = q.rating_valence - c_v, q.rating_arousal - c_a
            raw["valence"].append(q.rating_valence)
            raw["arousal"].append(q.rating_arousal)
            norm["valence"].append(nv)
            norm["arousal"].append(na)
            t = by_topic.setdefault(q.topic, {"valence": [], "arousal": []})
            t["valence"].append(nv)
            t["arousal"].append(na)
    table = {}
    for d in DIMENSIONS:
        table[d] = _summary(raw[d])
        table[f"{d}_norm"] = _summary(norm[d])
    topics = {t: {d: box_stats(v[d]) for d in DIMENSIONS} for t, v in sorted(by_topic.items())}
    return {"summary": table, "by_topic": topics}


def stats_markdown(stats) -> str:
    cols = ["valence", "valence_norm", "arousal", "arousal_norm"]
    head = "| | Valence | Valence (norm) | Arousal | Arousal (norm) |\n|---|---|---|---|---|\n"
    lines = []
    for key, label in (("average", "Average"), ("minimum", "Minimum"), ("maximum", "Maximum"),
                       ("std_dev", "Std. Dev.")):
        lines.append(f"| {label} | " + " | ".join(f"{stats['summary'][c][key]:.2f}" for c in cols) + " |")
    return head + "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# report emission

NOTES = ("Metrics are macro-averaged over the two classes and averaged over repetitions. "
         "Standard deviations (HR features, variance filter) are population standard deviations. "
         "Improvement = (model - baseline) / baseline.")


def report_rows(reports) -> list:
    if not reports:
        raise EngageError("cannot emit an empty report")
    rows = []
    baselines = {}
    for rep in reports:
        base = rep.baseline_means
        baselines.setdefault(rep.config.imputation, base)
        row = {"classifier": rep.config.classifier, "bal": rep.config.key[1], "scale": rep.config.key[2],
               "imp": rep.config.key[3], **rep.means}
        for m in METRICS:
            row[f"baseline_{m}"] = base[m]
            row[f"impr_{m}"] = improvement(rep.means[m], base[m]) if base[m] > 0 else None
        rows.append(row)
    best = max(range(len(rows)), key=lambda i: (rows[i]["f1"], -i))
    for i, row in enumerate(rows):
        row["best"] = i == best
    for imp, base in sorted(baselines.items()):
        rows.append({"classifier": "Baseline", "bal": "-", "scale": "-", "imp": "Y" if imp else "N",
                     **base, **{f"baseline_{m}": base[m] for m in METRICS},
                     **{f"impr_{m}": 0.0 for m in METRICS}, "best": False})
    return rows


_COLUMNS = ["classifier", "bal", "scale", "imp", *METRICS, *(f"baseline_{m}" for m in METRICS),
            *(f"impr_{m}" for m in METRICS), "best"]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "Y" if v else "N"
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def render(reports, fmt: str) -> str:
    rows = report_rows(reports)
    if fmt == "json":
        head = reports[0]
        return jsonio.dumps({"feature_set": head.feature_set, "dimension": head.dimension, "notes": NOTES,
                             "rows": [{k: (round(v, 4) if isinstance(v, float) else v) for k, v in r.items()}
                                      for r in rows],
                             "reports": [r.to_dict() for r in reports]})
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in _COLUMNS])
        return buf.getvalue()
    if fmt == "md":
        head = reports[0]
        out = [f"# Results: {head.feature_set} features, {head.dimension}", "", NOTES, "",
               "| Alg. | Bal. | Scale | Imp. | Prec. | Rec. | F1 | Acc. | dPrec. | dRec. | dF1 |",
               "|---|---|---|---|---|---|---|---|---|---|---|"]
        for r in rows:
            pct = lambda v: "" if v is None or r["classifier"] == "Baseline" else f"{100 * v:+.1f}%"
            cells = [r["classifier"], r["bal"], r["scale"], r["imp"]]
            vals = [f"{r[m]:.2f}" for m in METRICS]
            if r["best"]:
                vals = [f"**{v}**" for v in vals]
            cells += vals + [pct(r["impr_precision"]), pct(r["impr_recall"]), pct(r["impr_f1"])]
            out.append("| " + " | ".join(cells) + " |")
        return "\n".join(out) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


def emit_report(reports, fmt: str, path) -> Path:
    text = render(reports, fmt)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise UnwritablePath(f"cannot write {path}: {exc}") from exc
    return path


def report_path(out_dir, feature_set, dimension, fmt) -> Path:
    return Path(out_dir) / f"results_{feature_set}_{dimension}.{fmt}"


def report_from_dict(d) -> EvalReport:
    """Rebuild an :class:`EvalReport` from its JSON form (audit records are not kept)."""
    cfg = PipelineConfig(bool(d["balancing"]), bool(d["scaling"]), bool(d["imputation"]), d["classifier"],
                         int(d["master_seed"]))
    runs = [RunResult(r["repetition"], r["seed"], r["metrics"], r["baseline"], r["hyperparams"],
                      r["n_train"], r["n_test"], r["n_synthetic"]) for r in d["runs"]]
    return EvalReport(d["feature_set"], d["dimension"], cfg, runs, d["dataset_fingerprint"], d["n_rows"],
                      d["master_seed"])
