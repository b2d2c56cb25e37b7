import hashlib
import json
import warnings

import numpy as np
import pytest

from engagekit.session_io import load_session
from engagekit.synth import GeneratorSpec, audio_absent, generate_bundle, generate_corpus, generate_session


def _tree_hash(root):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    spec = GeneratorSpec(seed=7)
    root = generate_corpus(spec, tmp_path_factory.mktemp("corpus"))
    return spec, root


def test_cohort_shape(corpus):
    spec, root = corpus
    dirs = sorted(p for p in root.iterdir() if p.is_dir())
    assert len(dirs) == 21
    truth = json.loads((root / "truth.json").read_text())
    assert len(truth["labels"]) == 798
    assert truth["spec"]["n_subjects"] == 21


def test_audio_absent_fraction(corpus):
    spec, root = corpus
    missing = [p for p in root.iterdir() if p.is_dir() and not (p / "interview.wav").exists()]
    assert len(missing) == round(0.2 * 21) == len(audio_absent(spec))


def test_neutral_fraction(corpus):
    _, root = corpus
    labels = json.loads((root / "truth.json").read_text())["labels"]
    for dim in ("valence", "arousal"):
        frac = np.mean([t[dim] == "neutral" for t in labels])
        assert abs(frac - 0.4) <= 0.05


def test_bundles_parse_without_warnings(corpus):
    _, root = corpus
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        for d in sorted(p for p in root.iterdir() if p.is_dir()):
            s = load_session(d)
            assert s.complete and len(s.questions) == 38


def test_byte_identical_rerun(corpus, tmp_path):
    spec, root = corpus
    small = GeneratorSpec(n_subjects=3, questions_per_subject=6, seed=7)
    a = generate_corpus(small, tmp_path / "a")
    b = generate_corpus(small, tmp_path / "b")
    assert _tree_hash(a) == _tree_hash(b)
    files, _ = generate_bundle(spec, 4)
    for name, data in files.items():
        assert (root / "S05" / name).read_bytes() == data


def test_seed_changes_output():
    a, _ = generate_bundle(GeneratorSpec(seed=1, questions_per_subject=4), 0)
    b, _ = generate_bundle(GeneratorSpec(seed=2, questions_per_subject=4), 0)
    assert a["EDA.csv"] != b["EDA.csv"]


def test_generate_session_and_truth():
    spec = GeneratorSpec(questions_per_subject=8, audio_present_fraction=1.0, seed=3)
    session, truth = generate_session(spec, 0)
    assert session.audio is not None and len(session.questions) == 8
    assert {t["question_id"] for t in truth} == set(range(1, 9))
    # ratings follow the planted class: positive class rates above the calibration offset
    from engagekit.labeling import calibration_offsets
    cv, _ = calibration_offsets(session.calibration)
    for q, t in zip(session.questions, truth):
        if t["valence"] == "positive":
            assert q.rating_valence > cv
        elif t["valence"] == "negative":
            assert q.rating_valence < cv


def test_high_arousal_raises_hr():
    spec = GeneratorSpec(n_subjects=1, questions_per_subject=40, class_separation=3.0, seed=5)
    session, truth = generate_session(spec, 0)
    hi, lo = [], []
    for q, t in zip(session.questions, truth):
        seg = session.hr.samples[int(q.t_start - session.hr.start_time):int(q.t_end - session.hr.start_time)]
        (hi if t["arousal"] == "high" else lo if t["arousal"] == "low" else []).append(seg.mean())
    assert np.mean(hi) - np.mean(lo) == pytest.approx(15.0, abs=2.0)


@pytest.mark.parametrize("bad", [dict(n_subjects=0), dict(questions_per_subject=3), dict(class_separation=-1),
                                 dict(neutral_fraction=1.0), dict(audio_present_fraction=0.0)])
def test_spec_validation(bad):
    with pytest.raises(ValueError):
        GeneratorSpec(**bad)
