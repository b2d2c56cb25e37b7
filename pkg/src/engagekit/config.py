"""``key = value`` run configuration.

One setting per line; ``#`` starts a comment. Unknown keys are errors.
Grid axes are written ``grid.<KIND>.<param> = v1; v2`` where a tuple value
uses commas (``grid.MLP.hidden = 32; 64,32``) and ``none`` means unlimited.
"""
from __future__ import annotations

import itertools
from pathlib import Path

from .cardio import FilterSpec
from .eda import EdaParams
from .errors import ConfigError
from .features import ExtractConfig
from .ml.classifiers import DEFAULT_GRIDS, KINDS
from .voice import SpectralConfig

# key -> (type, default, help)
KEYS = {
    "eda.alpha": (float, 8e-4, "L1 weight on the sudomotor driver"),
    "eda.gamma": (float, 1e-2, "L2 weight on the tonic spline coefficients"),
    "eda.tau0": (float, 2.0, "slow time constant of the SCR response (s)"),
    "eda.tau1": (float, 0.7, "fast time constant of the SCR response (s)"),
    "eda.knot_s": (float, 10.0, "tonic spline knot spacing (s)"),
    "eda.min_peak_uS": (float, 0.01, "minimum SCR peak amplitude (uS)"),
    "bvp.low_hz": (float, 0.5, "band-pass low cut (Hz)"),
    "bvp.high_hz": (float, 4.0, "band-pass high cut (Hz)"),
    "bvp.order": (int, 2, "Butterworth order (2 or 4)"),
    "bvp.min_peak_separation_s": (float, 0.33, "minimum pulse peak separation (s)"),
    "voice.frame_len": (int, 2048, "STFT frame length (samples)"),
    "voice.hop_len": (int, 512, "STFT hop (samples)"),
    "voice.n_mels": (int, 128, "mel bands"),
    "voice.n_mfcc": (int, 20, "MFCC coefficients kept"),
    "voice.mel_scalar": (bool, False, "collapse the mel means to a single scalar"),
    "label.restarts": (int, 50, "k-means restarts for discretization"),
    "label.min_std": (float, 1.0, "subject rating std below which the subject is excluded"),
    "plan.repetitions": (int, 10, "hold-out repetitions"),
    "plan.split_ratio": (float, 0.7, "training fraction of each split"),
    "plan.smote_k": (int, 5, "SMOTE neighbours"),
    "plan.impute_k": (int, 5, "k-NN imputation neighbours"),
    "plan.classifiers": (str, ",".join(KINDS), "comma-separated classifier kinds to evaluate"),
    "plan.balancing": (str, "N,Y", "balancing settings to evaluate"),
    "plan.scaling": (str, "N,Y", "scaling settings to evaluate"),
    "plan.imputation": (str, "N,Y", "imputation settings to evaluate"),
}
_GRID_AXES = {kind: list(cells[0].keys()) for kind, cells in DEFAULT_GRIDS.items()}


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "y", "on"):
        return True
    if low in ("0", "false", "no", "n", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_scalar(s: str):
    s = s.strip()
    if s.lower() in ("none", "inf", "unlimited"):
        return None
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    return s


def _parse_grid_value(s: str):
    if "," in s:
        return tuple(_parse_scalar(p) for p in s.split(","))
    v = _parse_scalar(s)
    return v


def _coerce(key: str, raw: str):
    if key.startswith("grid."):
        parts = key.split(".")
        if len(parts) != 3 or parts[1] not in _GRID_AXES or parts[2] not in _GRID_AXES[parts[1]]:
            raise ConfigError(f"unknown grid key {key!r}")
        values = [_parse_grid_value(v) for v in raw.split(";") if v.strip()]
        if not values:
            raise ConfigError(f"{key}: empty grid axis")
        if parts[2] == "hidden":
            values = [v if isinstance(v, tuple) else (v,) for v in values]
        return values
    if key not in KEYS:
        raise ConfigError(f"unknown config key {key!r}")
    typ = KEYS[key][0]
    try:
        return _parse_bool(raw) if typ is bool else typ(raw.strip())
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {typ.__name__}") from exc


def parse_config(text: str) -> dict:
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value'")
        key, raw = (p.strip() for p in line.split("=", 1))
        out[key] = _coerce(key, raw)
    return out


def load_config(path=None, overrides=None) -> dict:
    """Defaults, then the file, then ``overrides`` (already typed or raw strings)."""
    cfg = {k: v[1] for k, v in KEYS.items()}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        cfg.update(parse_config(text))
    for k, v in (overrides or {}).items():
        cfg[k] = _coerce(k, v) if isinstance(v, str) else v
    return cfg


def extract_config(cfg: dict) -> ExtractConfig:
    try:
        return ExtractConfig(
            eda=EdaParams(tau0=cfg["eda.tau0"], tau1=cfg["eda.tau1"], knot_s=cfg["eda.knot_s"],
                          alpha=cfg["eda.alpha"], gamma=cfg["eda.gamma"], min_peak_uS=cfg["eda.min_peak_uS"]),
            bvp=FilterSpec(cfg["bvp.low_hz"], cfg["bvp.high_hz"], cfg["bvp.order"]),
            bvp_min_peak_separation_s=cfg["bvp.min_peak_separation_s"],
            voice=SpectralConfig(frame_len=cfg["voice.frame_len"], hop_len=cfg["voice.hop_len"],
                                 n_mels=cfg["voice.n_mels"], n_mfcc=cfg["voice.n_mfcc"],
                                 mel_scalar=cfg["voice.mel_scalar"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def grids(cfg: dict) -> dict:
    """Per-kind grids: default axes with any ``grid.*`` overrides substituted."""
    out = {}
    for kind, axes in _GRID_AXES.items():
        values = []
        for ax in axes:
            default = list(dict.fromkeys(cell[ax] for cell in DEFAULT_GRIDS[kind]))
            values.append(cfg.get(f"grid.{kind}.{ax}", default))
        out[kind] = [dict(zip(axes, combo)) for combo in itertools.product(*values)]
    return out


def yn_list(cfg: dict, key: str):
    vals = []
    for tok in cfg[key].split(","):
        try:
            vals.append(_parse_bool(tok))
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from exc
    return tuple(dict.fromkeys(vals))


def classifier_list(cfg: dict):
    kinds = tuple(k.strip() for k in cfg["plan.classifiers"].split(",") if k.strip())
    bad = [k for k in kinds if k not in KINDS]
    if bad or not kinds:
        raise ConfigError(f"plan.classifiers: unknown kinds {bad}; choose from {KINDS}")
    return kinds


def describe() -> str:
    lines = [f"{k} = {v[1]}    # {v[2]}" for k, v in KEYS.items()]
    for kind, axes in _GRID_AXES.items():
        for ax in axes:
            lines.append(f"grid.{kind}.{ax} = ...    # grid axis, values separated by ';'")
    return "\n".join(lines)
