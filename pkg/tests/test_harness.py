import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from engagekit import harness as H
from engagekit.errors import ClassTooSmall, EngageError, LengthMismatch, UnwritablePath
from engagekit.labeling import GoldStandardDataset, SubjectRecord
from engagekit.session_io import CalibrationRecord, QuestionWindow
from oracles import macro_prf


# --- splitting ----------------------------------------------------------------

@pytest.mark.parametrize("pos,neg,tr_pos,tr_neg", [(100, 50, 70, 35), (10, 10, 7, 7)])
def test_split_examples(pos, neg, tr_pos, tr_neg):
    y = np.array([1] * pos + [0] * neg)
    tr, te = H.stratified_split(y, 0.7, 1)
    assert (y[tr] == 1).sum() == tr_pos and (y[tr] == 0).sum() == tr_neg
    assert len(te) == pos + neg - tr_pos - tr_neg


def test_split_deterministic():
    y = np.arange(60) % 3 == 0
    a, b = H.stratified_split(y, 0.7, 5), H.stratified_split(y, 0.7, 5)
    np.testing.assert_array_equal(a[0], b[0])
    assert not np.array_equal(a[0], H.stratified_split(y, 0.7, 6)[0])


def test_split_class_too_small():
    with pytest.raises(ClassTooSmall):
        H.stratified_split(np.array([1, 1, 1, 0]), 0.7, 0)


@given(st.integers(2, 60), st.integers(2, 60), st.floats(0.05, 0.95), st.integers(0, 2 ** 32 - 1))
def test_split_properties(npos, nneg, ratio, seed):
    y = np.array([1] * npos + [0] * nneg)
    tr, te = H.stratified_split(y, ratio, seed)
    assert not set(tr) & set(te) and len(tr) + len(te) == len(y)
    for c, n in ((1, npos), (0, nneg)):
        assert abs((y[tr] == c).sum() - ratio * n) <= 1
        assert (y[te] == c).sum() >= 1


def test_repetition_seeds_depend_only_on_master_and_rep():
    assert H.repetition_seeds(3, 1) == H.repetition_seeds(3, 1)
    assert H.repetition_seeds(3, 1) != H.repetition_seeds(3, 2)
    assert H.repetition_seeds(3, 1) != H.repetition_seeds(4, 1)


# --- metrics ------------------------------------------------------------------

def test_all_positive_predictions():
    truth = np.array([1] * 10 + [0] * 10)
    m = H.macro_metrics(np.ones(20, int), truth)
    assert m["precision"] == pytest.approx(0.25)
    assert m["recall"] == pytest.approx(0.5)
    assert m["f1"] == pytest.approx(1 / 3)
    assert m["accuracy"] == pytest.approx(0.5)


def test_perfect_predictions():
    truth = np.array([1, 0, 1, 0, 0])
    assert H.macro_metrics(truth, truth) == {"precision": 1.0, "recall": 1.0, "f1": 1.0, "accuracy": 1.0}


def test_length_mismatch():
    with pytest.raises(LengthMismatch):
        H.macro_metrics([1, 0], [1, 0, 1])


@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=2, max_size=60))
def test_macro_metrics_matches_oracle(pairs):
    pred, truth = map(list, zip(*pairs))
    m = H.macro_metrics(pred, truth)
    p, r, f, a = macro_prf(pred, truth)
    assert (m["precision"], m["recall"], m["f1"], m["accuracy"]) == pytest.approx((p, r, f, a), abs=1e-12)
    assert all(0 <= v <= 1 for v in m.values())


@pytest.mark.parametrize("pos,neg,p,f", [(345, 89, 0.397, 0.443), (245, 191, 0.281, 0.360)])
def test_majority_baseline_published_counts(pos, neg, p, f):
    y = np.array([1] * pos + [0] * neg)
    m = H.majority_baseline(y, y)
    # closed form with q = majority share: P = q/2, R = 1/2, F1 = (2q/(1+q))/2
    q = pos / (pos + neg)
    assert m["precision"] == pytest.approx(q / 2, abs=1e-12)
    assert m["recall"] == 0.5
    assert m["f1"] == pytest.approx(q / (1 + q), abs=1e-12)
    assert m["precision"] == pytest.approx(p, abs=5e-4)
    assert m["f1"] == pytest.approx(f, abs=5e-4)


def test_published_baselines_within_rounding():
    val = H.majority_baseline(np.array([1] * 345 + [0] * 89), np.array([1] * 345 + [0] * 89))
    aro = H.majority_baseline(np.array([1] * 245 + [0] * 191), np.array([1] * 245 + [0] * 191))
    assert round(val["precision"], 2) == 0.40 and abs(val["f1"] - 0.45) <= 0.01
    assert round(aro["precision"], 2) == 0.28 and round(aro["f1"], 2) == 0.36


def test_majority_baseline_small_cases():
    assert H.majority_baseline([1, 1, 0], [1] * 5 + [0] * 5)["accuracy"] == 0.5
    assert H.majority_class([1, 1, 1]) == 1
    assert H.majority_class([0, 1]) == 1  # ties go to the first listed class


@pytest.mark.parametrize("model,base,pct", [(0.66, 0.28, 135.7), (0.63, 0.40, 57.5), (0.65, 0.36, 80.6)])
def test_improvement(model, base, pct):
    assert 100 * H.improvement(model, base) == pytest.approx(pct, abs=0.05)


# --- tuning -------------------------------------------------------------------

def test_loo_single_cell_returned():
    assert H.loo_tune("NB", [{"var_smoothing": 1e-3}], np.zeros((3, 1)), np.array([0, 1, 0])) == {"var_smoothing": 1e-3}


def test_loo_perfect_cell_wins():
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, size=(40, 2))
    y = ((X[:, 0] > 0) & (X[:, 1] > 0)).astype(int)
    grid = [{"max_depth": 1, "min_leaf": 1}, {"max_depth": None, "min_leaf": 1}]
    pred = H.loo_predictions("DTree", grid[1], X, y, 0)
    assert H.macro_metrics(pred, y)["f1"] > H.macro_metrics(H.loo_predictions("DTree", grid[0], X, y, 0), y)["f1"]
    assert H.loo_tune("DTree", grid, X, y) == grid[1]


def test_loo_tie_takes_first():
    X = np.r_[np.zeros(5), np.ones(5)][:, None] + np.arange(10)[:, None] * 1e-3
    y = np.array([0] * 5 + [1] * 5)
    grid = [{"max_depth": 3, "min_leaf": 1}, {"max_depth": 5, "min_leaf": 1}]
    assert H.loo_tune("DTree", grid, X, y) == grid[0]


def test_loo_single_class_fold_predicts_that_class():
    X = np.arange(3.0)[:, None]
    y = np.array([0, 0, 1])
    pred = H.loo_predictions("NB", {}, X, y, 0)
    assert pred[2] == 0


# --- experiments --------------------------------------------------------------

def _dataset(n=60, d_bio=12, d_voice=4, missing_every=5, seed=0, sep=3.0):
    rng = np.random.default_rng(seed)
    y = (np.arange(n) % 3 != 0).astype(np.int64)
    bio = rng.normal(size=(n, d_bio)) + sep * y[:, None]
    voice = rng.normal(size=(n, d_voice)) + sep * y[:, None]
    missing = np.arange(n) % missing_every == 0
    voice[missing] = np.nan
    sid = np.array([f"S{i % 7:02d}" for i in range(n)])
    return GoldStandardDataset("arousal", bio, voice, missing, y, sid, np.arange(n) + 1,
                               np.array(["privacy"] * n), 10)


PLAN_GRIDS = {"NB": [{"var_smoothing": 1e-9}], "DTree": [{"max_depth": 3, "min_leaf": 1}],
              "RF": [{"n_trees": 10, "max_depth": None}]}


def _plan(**kw):
    base = dict(feature_set="combined", dimension="arousal", repetitions=3, master_seed=7, grids=PLAN_GRIDS,
                configs=H.config_matrix("combined", classifiers=("NB", "DTree")))
    base.update(kw)
    return H.ExperimentPlan(**base)


def test_plan_validation():
    with pytest.raises(ValueError):
        H.ExperimentPlan(repetitions=0)
    with pytest.raises(ValueError):
        H.ExperimentPlan(split_ratio=1.0)
    with pytest.raises(ValueError):
        H.ExperimentPlan(feature_set="eeg")


def test_config_matrix_shapes():
    assert len(H.config_matrix("combined")) == 5 * 8
    assert len(H.config_matrix("biofeedback")) == 5 * 4
    assert all(not c.imputation for c in H.config_matrix("biofeedback"))


def test_regime_rows():
    ds = _dataset()
    assert len(H.regime_rows(ds, "voice", False)) == 48
    assert len(H.regime_rows(ds, "voice", True)) == 60
    assert len(H.regime_rows(ds, "biofeedback", False)) == 60


@pytest.fixture(scope="module")
def reports():
    return H.run_experiment(_plan(), _dataset())


def test_reports_shape_and_bounds(reports):
    assert len(reports) == 16
    for r in reports:
        assert len(r.runs) == 3
        for v in (*r.means.values(), *r.baseline_means.values()):
            assert 0 <= v <= 1
        # baseline dominance on separable data
        assert r.means["f1"] >= r.baseline_means["f1"]


def test_leakage_audit_passes(reports):
    assert H.audit_leakage(reports) == []
    for r in reports:
        for run in r.runs:
            if r.config.balancing:
                assert run.n_synthetic > 0 and np.any(run.audit.fit_origins == -1)
            if r.config.imputation:
                assert run.audit.donor_origins.size > 0


def test_leakage_audit_detects_violations(reports):
    import copy
    bad = copy.deepcopy(reports[:1])
    a = bad[0].runs[0].audit
    a.test_origins = np.r_[a.test_origins, -1]
    a.fit_origins = np.r_[a.fit_origins, a.test_origins[0]]
    a.scaler_refit_fingerprint = "different"
    problems = H.audit_leakage(bad)
    assert any("synthetic" in p for p in problems)
    assert any("fitting" in p for p in problems)
    assert any("scaler" in p for p in problems)


def test_run_determinism(reports):
    again = H.run_experiment(_plan(), _dataset())
    assert H.render(again, "json") == H.render(reports, "json")


def test_parallel_matches_serial(reports):
    par = H.run_experiment(_plan(), _dataset(), jobs=2)
    assert H.render(par, "json") == H.render(reports, "json")


def test_single_repetition_means_equal_run():
    plan = _plan(repetitions=1, configs=[H.PipelineConfig(True, True, True, "NB")])
    (r,) = H.run_experiment(plan, _dataset())
    assert r.means == r.runs[0].metrics
    assert r.baseline_means == r.runs[0].baseline


def test_baseline_uses_training_majority():
    plan = _plan(repetitions=2, configs=[H.PipelineConfig(True, False, False, "NB")])
    (r,) = H.run_experiment(plan, _dataset())
    for run in r.runs:
        # majority is class 1 (two thirds of rows): recall 0.5, precision = half the positive test share
        assert run.baseline["recall"] == 0.5


# --- reports --------------------------------------------------------------------

def test_emit_json_csv_consistent(reports, tmp_path):
    jp = H.emit_report(reports, "json", H.report_path(tmp_path, "combined", "arousal", "json"))
    cp = H.emit_report(reports, "csv", H.report_path(tmp_path, "combined", "arousal", "csv"))
    assert jp.name == "results_combined_arousal.json"
    rows_json = json.loads(jp.read_text())["rows"]
    rows_csv = list(csv.DictReader(io.StringIO(cp.read_text())))
    assert len(rows_json) == len(rows_csv)
    for a, b in zip(rows_json, rows_csv):
        for m in H.METRICS:
            assert f"{a[m]:.4f}" == b[m]
            assert f"{a['baseline_' + m]:.4f}" == b["baseline_" + m]
    assert sum(r["best"] for r in rows_json) == 1
    assert {r["imp"] for r in rows_json if r["classifier"] == "Baseline"} == {"N", "Y"}


def test_improvement_columns_consistent(reports):
    for row in H.report_rows(reports):
        for m in H.METRICS:
            if row["classifier"] != "Baseline" and row[f"baseline_{m}"] > 0:
                assert row[f"impr_{m}"] == pytest.approx((row[m] - row[f"baseline_{m}"]) / row[f"baseline_{m}"])


def test_markdown_improvement_135(reports):
    r = H.report_from_dict(reports[0].to_dict())
    for run in r.runs:
        run.metrics = {**run.metrics, "precision": 0.66}
        run.baseline = {**run.baseline, "precision": 0.28}
    md = H.render([r], "md")
    assert "+135.7%" in md
    assert "**" in md


def test_empty_report_error(tmp_path):
    with pytest.raises(EngageError):
        H.emit_report([], "csv", tmp_path / "x.csv")


def test_unwritable_path(reports, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(UnwritablePath):
        H.emit_report(reports, "md", blocker / "sub" / "r.md")


def test_report_round_trip(reports):
    back = [H.report_from_dict(json.loads(json.dumps(r.to_dict()))) for r in reports]
    assert H.render(back, "csv") == H.render(reports, "csv")


# --- descriptive statistics -------------------------------------------------------

def _subj(sid, vals, topics=None, cal=(50,)):
    qs = tuple(QuestionWindow(i + 1, (topics or ["privacy"] * len(vals))[i], 10.0 * i, 10.0 * i + 5, v, v)
               for i, v in enumerate(vals))
    return SubjectRecord(sid, qs, CalibrationRecord(cal, cal))


def test_descriptive_stats_example():
    s = H.descriptive_stats([_subj("A", [7, 8, 9])])
    v = s["summary"]["valence"]
    assert (v["average"], v["minimum"], v["maximum"]) == (8.0, 7.0, 9.0)
    assert v["std_dev"] == pytest.approx(np.sqrt(2 / 3))
    assert s["summary"]["valence_norm"]["average"] == pytest.approx(2.5)
    md = H.stats_markdown(s)
    assert "| Average | 8.00 | 2.50 | 8.00 | 2.50 |" in md
    assert "Std. Dev." in md


def test_single_value_topic_quartiles():
    s = H.descriptive_stats([_subj("A", [3, 9], topics=["money", "privacy"])])
    b = s["by_topic"]["money"]["valence"]
    assert b["q1"] == b["median"] == b["q3"] == b["whisker_low"] == b["whisker_high"] == 3 - 5.5


def test_box_whiskers():
    b = H.box_stats([1, 2, 3, 4, 100])
    assert b["median"] == 3 and b["whisker_high"] == 4 and b["whisker_low"] == 1
