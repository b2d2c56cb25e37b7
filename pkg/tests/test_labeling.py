import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from engagekit.errors import DegenerateInput, EmptyCalibration
from engagekit.labeling import (
    FeatureVector, GoldStandardDataset, LabelMap, SubjectRecord, build_gold_standard, build_label_maps,
    calibration_offsets, discretize, normalize, quality_filter,
)
from engagekit.session_io import CalibrationRecord, QuestionWindow
from engagekit.synth import GeneratorSpec, generate_bundle
from oracles import optimal_interval_partition


# --- calibration and normalization -------------------------------------------

@pytest.mark.parametrize("ratings,expected", [((50, 50), 5.5), ((100,), 10.0), ((40, 80), 6.4), ((0,), 1.0)])
def test_calibration_offsets(ratings, expected):
    cv, ca = calibration_offsets(CalibrationRecord(ratings, (50,)))
    assert cv == pytest.approx(expected, abs=1e-12)
    assert ca == pytest.approx(5.5)


def test_empty_calibration():
    # the record type already rejects empty lists, so use a bare stand-in
    rec = type("Rec", (), {"picture_valence": (), "picture_arousal": (50,)})()
    with pytest.raises(EmptyCalibration):
        calibration_offsets(rec)


def test_normalize_examples():
    assert normalize(7, 5, (6.4, 5.0)).valence_norm == pytest.approx(0.6)
    assert normalize(1, 5, (5.94, 5.0)).valence_norm == pytest.approx(-4.94)
    r = normalize(4, 8, (4.0, 8.0), question_id=3)
    assert (r.question_id, r.valence_norm, r.arousal_norm) == (3, 0.0, 0.0)


# --- discretization ------------------------------------------------------------

def test_discretize_symmetric_example():
    lm = discretize([-5, -4.9, 0, 0.1, 5, 5.1])
    np.testing.assert_allclose(lm.centers, [-4.95, 0.05, 5.05], atol=1e-12)
    assert list(lm.assign([-5, -4.9, 0, 0.1, 5, 5.1])) == [0, 0, 1, 1, 2, 2]
    assert lm.breaks == (-5.0, 0.0, 5.0, 5.1)


def test_discretize_degenerate():
    with pytest.raises(DegenerateInput):
        discretize([1.0, 1.0, 2.0, 2.0])


def test_ranges_cover_and_order():
    v = np.random.default_rng(0).normal(size=60)
    lm = discretize(v, "arousal")
    (a0, a1), (b0, b1), (c0, c1) = lm.cluster_ranges
    assert a0 == v.min() and c1 == v.max()
    assert a0 < a1 == b0 < b1 == c0 <= c1
    assert lm.class_names == ("low", "neutral", "high")


def test_published_ranges_format():
    lm = LabelMap("valence", (-3.0, 0.5, 3.9), (-4.94, -1.03, 2.52, 5.31), ("negative", "neutral", "positive"),
                  0, 50, 0.0)
    assert lm.describe() == "[-4.94,-1.03) negative; [-1.03,2.52) neutral; [2.52,5.31] positive"
    assert list(lm.assign([-4.94, -1.03, -1.0300001, 2.52, 5.31])) == [0, 1, 0, 2, 2]


def test_labelmap_round_trip():
    lm = discretize(np.linspace(-3, 4, 25), seed=5)
    assert LabelMap.from_dict(json.loads(json.dumps(lm.to_dict()))) == lm


@settings(max_examples=25)
@given(st.lists(st.integers(-40, 40), min_size=4, max_size=14).map(lambda xs: [x / 8 for x in xs]))
def test_inertia_matches_partition_oracle(vals):
    if len(set(vals)) < 3:
        return
    lm = discretize(vals)
    sse, _ = optimal_interval_partition(vals, 3)
    assert lm.inertia == pytest.approx(sse, abs=1e-9)


@settings(max_examples=25)
@given(st.lists(st.floats(-6, 6, allow_nan=False), min_size=3, max_size=40))
def test_assignment_monotone(vals):
    if len(set(vals)) < 3:
        return
    lm = discretize(vals)
    v = np.sort(np.array(vals))
    assert np.all(np.diff(lm.assign(v)) >= 0)


@settings(max_examples=15)
@given(st.lists(st.integers(-40, 40), min_size=3, max_size=30), st.integers(-20, 20))
def test_offset_invariance(ints, shift):
    if len(set(ints)) < 3:
        return
    # quarter-integer values keep the shifted arithmetic exact
    vals = np.array(ints) / 4.0
    c = shift / 4.0
    a, b = discretize(vals), discretize(vals + c)
    np.testing.assert_allclose(np.array(b.centers), np.array(a.centers) + c, atol=1e-9)
    np.testing.assert_allclose(np.array(b.breaks), np.array(a.breaks) + c, atol=1e-12)
    np.testing.assert_array_equal(a.assign(vals), b.assign(vals + c))


# --- subjects -------------------------------------------------------------------

def _subject(sid, val, aro, cal=(50,), complete=True, drop_vector=None, voice=True):
    val, aro = [int(v) for v in val], [int(a) for a in aro]
    qs = tuple(QuestionWindow(i + 1, "privacy", 10.0 * i, 10.0 * (i + 1), a, v)
               for i, (v, a) in enumerate(zip(val, aro)))
    vecs = {q.question_id: FeatureVector(sid, q.question_id, q.topic, np.full(12, float(q.question_id)),
                                         np.full(3, 0.5) if voice else None)
            for q in qs if q.question_id != drop_vector}
    return SubjectRecord(sid, qs, CalibrationRecord(cal, cal), vecs, complete)


def test_quality_filter_examples():
    flat = _subject("A", [7] * 6, [1, 3, 5, 7, 9, 9])
    ok = _subject("B", [2, 4, 6, 8, 5, 5], [1, 3, 5, 7, 9, 9])
    flat_a = _subject("C", [2, 4, 6, 8, 5, 5], [5] * 6)
    incomplete = _subject("D", [2, 4, 6, 8, 5, 5], [1, 3, 5, 7, 9, 9], complete=False)
    missing_q = _subject("E", [2, 4, 6, 8, 5, 5], [1, 3, 5, 7, 9, 9], drop_vector=2)
    kept, excluded = quality_filter([flat, ok, flat_a, incomplete, missing_q])
    assert [s.subject_id for s in kept] == ["B"]
    assert dict(excluded) == {"A": "low_variance_valence", "C": "low_variance_arousal",
                              "D": "incomplete_data", "E": "incomplete_data"}


def test_quality_filter_threshold_strict():
    # population std of (4, 6) is exactly 1.0, which is kept
    kept, _ = quality_filter([_subject("A", [4, 6], [4, 6])])
    assert len(kept) == 1
    kept, excluded = quality_filter([_subject("A", [4, 5, 5], [4, 6])])
    assert not kept and excluded[0][1] == "low_variance_valence"


def test_gold_standard_counts_and_no_neutral():
    rng = np.random.default_rng(1)
    subjects = [_subject(f"S{i}", rng.integers(1, 11, 12), rng.integers(1, 11, 12), voice=i % 2 == 0)
                for i in range(5)]
    maps = build_label_maps(subjects)
    gold = build_gold_standard(subjects, maps)
    for dim, ds in gold.items():
        assert set(np.unique(ds.y)) <= {0, 1}
        c = ds.counts()
        assert sum(c.values()) == 60
        assert np.all(np.isfinite(ds.bio))
        assert np.array_equal(np.isnan(ds.voice).all(axis=1), ds.voice_missing)
        assert not np.isnan(ds.voice[~ds.voice_missing]).any()
        back = GoldStandardDataset.from_dict(json.loads(json.dumps(_plain(ds.to_dict()))))
        assert back.fingerprint() == ds.fingerprint()


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def test_all_neutral_subject_contributes_nothing():
    extreme = [_subject(f"S{i}", [1, 10, 1, 10], [1, 10, 1, 10]) for i in range(3)]
    middle = _subject("M", [5, 6, 5, 6], [5, 6, 5, 6])
    maps = build_label_maps(extreme + [middle])
    gold = build_gold_standard(extreme + [middle], maps)
    for ds in gold.values():
        assert "M" not in set(ds.subject_ids)
        assert ds.counts()["neutral"] == 4


@pytest.fixture(scope="module")
def synthetic_pool():
    spec = GeneratorSpec(n_subjects=21, questions_per_subject=38, neutral_fraction=0.4, seed=11)
    subjects, truth = [], []
    for i in range(spec.n_subjects):
        files, t = generate_bundle(spec, i)
        man = json.loads(files["manifest.json"])
        val = [q["q_valence"] for q in man["questions"]]
        aro = [q["q_arousal"] for q in man["questions"]]
        s = _subject(man["subject_id"], val, aro)
        subjects.append(SubjectRecord(s.subject_id, s.questions,
                                      CalibrationRecord(tuple(man["calibration"]["valence"]),
                                                        tuple(man["calibration"]["arousal"])), s.vectors))
        truth.extend(t)
    return spec, subjects, truth


def test_dropped_fraction_matches_planted_neutral(synthetic_pool):
    spec, subjects, truth = synthetic_pool
    kept, _ = quality_filter(subjects)
    assert len(kept) == spec.n_subjects
    gold = build_gold_standard(kept, build_label_maps(kept))
    total = spec.n_subjects * spec.questions_per_subject
    for dim, ds in gold.items():
        dropped = ds.counts()["neutral"] / total
        assert abs(dropped - spec.neutral_fraction) <= 0.05, (dim, dropped)
        planted = {(t["subject_id"], t["question_id"]): t[dim] for t in truth}
        names = ds.label_names
        got = [planted[(s, int(q))] == names[int(y)] for s, q, y in zip(ds.subject_ids, ds.question_ids, ds.y)]
        assert np.mean(got) >= 0.95
