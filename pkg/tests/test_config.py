import pytest

from engagekit import config as C
from engagekit.errors import ConfigError


def test_defaults():
    cfg = C.load_config()
    assert cfg["plan.repetitions"] == 10 and cfg["plan.split_ratio"] == 0.7
    ec = C.extract_config(cfg)
    assert ec.voice.dimension == 160


def test_file_and_override(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# comment\nplan.repetitions = 3\nvoice.mel_scalar = yes   # trailing\n")
    cfg = C.load_config(p, {"plan.repetitions": "5"})
    assert cfg["plan.repetitions"] == 5
    assert cfg["voice.mel_scalar"] is True


def test_unknown_key():
    with pytest.raises(ConfigError):
        C.parse_config("plan.repetition = 3")


def test_bad_value_and_syntax():
    with pytest.raises(ConfigError):
        C.parse_config("plan.repetitions = many")
    with pytest.raises(ConfigError):
        C.parse_config("just words")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        C.load_config(tmp_path / "nope.cfg")


def test_grid_overrides():
    cfg = C.load_config(overrides=C.parse_config(
        "grid.RF.n_trees = 50\ngrid.RF.max_depth = none; 4\ngrid.MLP.hidden = 32; 64,32"))
    g = C.grids(cfg)
    assert g["RF"] == [{"n_trees": 50, "max_depth": None}, {"n_trees": 50, "max_depth": 4}]
    assert [c["hidden"] for c in g["MLP"]][:2] == [(32,), (32,)]
    assert {c["hidden"] for c in g["MLP"]} == {(32,), (64, 32)}
    assert len(g["SVM"]) == 12


def test_unknown_grid_axis():
    with pytest.raises(ConfigError):
        C.parse_config("grid.RF.depth = 3")


def test_lists():
    cfg = C.load_config(overrides={"plan.balancing": "Y", "plan.classifiers": "RF,NB"})
    assert C.yn_list(cfg, "plan.balancing") == (True,)
    assert C.classifier_list(cfg) == ("RF", "NB")
    with pytest.raises(ConfigError):
        C.classifier_list(C.load_config(overrides={"plan.classifiers": "KNN"}))


def test_invalid_module_value():
    with pytest.raises(ConfigError):
        C.extract_config(C.load_config(overrides={"bvp.order": "3"}))


def test_describe_lists_every_key():
    text = C.describe()
    assert all(k in text for k in C.KEYS)
