"""Synthetic interview sessions with planted valence/arousal classes.

Signals are analytic templates, not physiological models: a tonic EDA level
with biexponential SCRs, an HR trace with Gaussian noise, a BVP waveform
driven by the integrated heart rate, and a harmonic voice-like tone. The
planted class of each question drives them:

* high arousal adds two SCRs of amplitude ``0.1 * delta`` uS, raises HR by
  ``5 * delta`` bpm and raises the tone's RMS by a factor ``1 + 0.5 * delta``;
* positive valence shifts the tone up by ``2 * delta`` semitones.

Ratings are drawn around the subject's calibration offset so that the
normalized score sits near -3, 0 or +3 for the three planted classes.
"""
from __future__ import annotations

import io
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from . import jsonio
from .eda import impulse_response
from .errors import UnwritablePath
from .labeling import CLASS_NAMES
from .session_io import TOPICS, Channel, InterviewSession, SignalTrack, load_manifest, load_wav, parse_track

log = logging.getLogger(__name__)

EDA_RATE, BVP_RATE, HR_RATE = 4.0, 64.0, 1.0
N_CALIBRATION_PICTURES = 12


@dataclass(frozen=True)
class GeneratorSpec:
    n_subjects: int = 21
    questions_per_subject: int = 38
    class_separation: float = 3.0
    neutral_fraction: float = 0.4
    audio_present_fraction: float = 0.8
    seed: int = 0
    question_duration_s: float = 10.0
    baseline_duration_s: float = 60.0
    audio_rate_hz: int = 8000
    start_time: float = 1.6e9

    def __post_init__(self):
        if self.n_subjects < 1:
            raise ValueError("n_subjects must be >= 1")
        if self.questions_per_subject < 4:
            raise ValueError("questions_per_subject must be >= 4")
        if self.class_separation < 0:
            raise ValueError("class_separation must be >= 0")
        if not 0 <= self.neutral_fraction < 1:
            raise ValueError("neutral_fraction must lie in [0, 1)")
        if not 0 < self.audio_present_fraction <= 1:
            raise ValueError("audio_present_fraction must lie in (0, 1]")
        if self.question_duration_s < 4:
            raise ValueError("question_duration_s must be >= 4 (EDA decomposition needs 4 s)")


def subject_id(index: int) -> str:
    return f"S{index + 1:02d}"


def audio_absent(spec: GeneratorSpec) -> frozenset:
    """Indices of subjects generated without audio: exactly ``round((1 - f) * n)`` of them."""
    n_absent = int(round((1.0 - spec.audio_present_fraction) * spec.n_subjects))
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0x5EED]))
    return frozenset(int(i) for i in rng.permutation(spec.n_subjects)[:n_absent])


def _planted(rng, n, neutral_fraction):
    """Class indices 0/1/2 (low, neutral, high) with P(neutral) = f."""
    side = (1.0 - neutral_fraction) / 2.0
    return rng.choice(3, size=n, p=[side, neutral_fraction, side])


def _scr_template(rate):
    h = impulse_response(int(20 * rate), rate)
    return h / h.max()


def _eda(rng, n, q_start_idx, q_len, high, delta):
    x = np.full(n, rng.uniform(1.0, 5.0))
    x += np.linspace(0.0, rng.uniform(-0.3, 0.3), n)
    tpl = _scr_template(EDA_RATE)
    drive = np.zeros(n)
    # spontaneous responses, independent of the planted classes
    n_spont = rng.poisson(n / EDA_RATE / 30.0)
    drive[rng.integers(0, n, n_spont)] += rng.uniform(0.02, 0.06, n_spont)
    amp = 0.1 * delta
    if amp > 0:
        for i0, is_high in zip(q_start_idx, high):
            if is_high:
                for frac in (0.1, 0.5):
                    drive[i0 + int(frac * q_len)] += amp
    x += np.convolve(drive, tpl)[:n]
    return x + rng.normal(0.0, 0.005, n)


def _hr(rng, n, q_bounds, high, delta):
    base = rng.uniform(60.0, 80.0)
    hr = np.full(n, base)
    for (i0, i1), is_high in zip(q_bounds, high):
        if is_high:
            hr[i0:i1] += 5.0 * delta
    return hr + rng.normal(0.0, 2.0, n)


def _bvp(rng, hr, n):
    t = np.arange(n) / BVP_RATE
    inst = np.interp(t, np.arange(hr.size) / HR_RATE, hr)
    phase = 2 * np.pi * np.cumsum(inst / 60.0) / BVP_RATE + rng.uniform(0, 2 * np.pi)
    amp = rng.uniform(40.0, 60.0)
    return amp * (np.sin(phase) + 0.3 * np.sin(2 * phase + 0.5)) + rng.normal(0.0, 1.0, n)


def _voice(rng, rate, n_per_q, positive, high, delta):
    f_base = rng.uniform(140.0, 180.0)
    out = []
    t = np.arange(n_per_q) / rate
    for pos, hi in zip(positive, high):
        semis = (2.0 * delta if pos else 0.0) + rng.normal(0.0, 0.3)
        f0 = f_base * 2.0 ** (semis / 12.0)
        tone = sum(np.sin(2 * np.pi * h * f0 * t + rng.uniform(0, 2 * np.pi)) / h for h in (1, 2, 3, 4))
        env = 1.0 + 0.5 * np.sin(2 * np.pi * 4.0 * t + rng.uniform(0, 2 * np.pi))
        gain = 0.05 * (1.0 + 0.5 * delta if hi else 1.0)
        out.append(gain * env * tone / 2.1 + rng.normal(0.0, 0.002, n_per_q))
    return np.clip(np.concatenate(out), -1.0, 1.0)


def _wav_bytes(samples, rate) -> bytes:
    buf = io.BytesIO()
    wavfile.write(buf, int(rate), np.round(samples * 32767).astype(np.int16))
    return buf.getvalue()


def generate_bundle(spec: GeneratorSpec, subject_index: int):
    """Files of one session bundle (name -> bytes) and its truth entries."""
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, subject_index + 1]))
    sid = subject_id(subject_index)
    nq = spec.questions_per_subject
    delta = spec.class_separation
    val = _planted(rng, nq, spec.neutral_fraction)
    aro = _planted(rng, nq, spec.neutral_fraction)

    cal_mean_v, cal_mean_a = rng.uniform(35.0, 65.0, 2)
    cal_v = np.clip(np.round(cal_mean_v + rng.normal(0, 10, N_CALIBRATION_PICTURES), 1), 0, 100)
    cal_a = np.clip(np.round(cal_mean_a + rng.normal(0, 10, N_CALIBRATION_PICTURES), 1), 0, 100)
    c_v = 1 + 9 * cal_v.mean() / 100
    c_a = 1 + 9 * cal_a.mean() / 100
    rate_v = np.clip(np.round(c_v + 3.0 * (val - 1) + rng.normal(0, 0.5, nq)), 1, 10).astype(int)
    rate_a = np.clip(np.round(c_a + 3.0 * (aro - 1) + rng.normal(0, 0.5, nq)), 1, 10).astype(int)

    t0 = spec.start_time + 1000.0 * subject_index
    q_t0 = t0 + spec.baseline_duration_s
    qd = spec.question_duration_s
    total = spec.baseline_duration_s + nq * qd + 2.0
    high = aro == 2
    positive = val == 2

    n_eda = int(total * EDA_RATE)
    q_len_eda = int(qd * EDA_RATE)
    starts_eda = [int((spec.baseline_duration_s + i * qd) * EDA_RATE) for i in range(nq)]
    eda = _eda(rng, n_eda, starts_eda, q_len_eda, high, delta)
    n_hr = int(total * HR_RATE)
    bounds_hr = [(int((spec.baseline_duration_s + i * qd) * HR_RATE),
                  int((spec.baseline_duration_s + (i + 1) * qd) * HR_RATE)) for i in range(nq)]
    hr = _hr(rng, n_hr, bounds_hr, high, delta)
    bvp = _bvp(rng, hr, int(total * BVP_RATE))

    files = {
        "EDA.csv": SignalTrack(Channel.EDA, t0, EDA_RATE, eda).to_csv().encode(),
        "BVP.csv": SignalTrack(Channel.BVP, t0, BVP_RATE, bvp).to_csv().encode(),
        "HR.csv": SignalTrack(Channel.HR, t0, HR_RATE, hr).to_csv().encode(),
    }
    has_audio = subject_index not in audio_absent(spec)
    if has_audio:
        n_per_q = int(round(qd * spec.audio_rate_hz))
        files["interview.wav"] = _wav_bytes(_voice(rng, spec.audio_rate_hz, n_per_q, positive, high, delta),
                                            spec.audio_rate_hz)

    per_block = -(-nq // len(TOPICS))
    questions = [{
        "id": i + 1, "topic": TOPICS[min(i // per_block, len(TOPICS) - 1)],
        "t_start": q_t0 + i * qd, "t_end": q_t0 + (i + 1) * qd,
        "q_arousal": int(rate_a[i]), "q_valence": int(rate_v[i]),
    } for i in range(nq)]
    manifest = {
        "subject_id": sid, "questions": questions,
        "calibration": {"valence": cal_v.tolist(), "arousal": cal_a.tolist()},
        "baseline": [t0, q_t0],
    }
    if has_audio:
        manifest["audio_start_time"] = q_t0
    files["manifest.json"] = jsonio.dumps(manifest).encode("utf-8")

    truth = [{"subject_id": sid, "question_id": i + 1, "valence": CLASS_NAMES["valence"][val[i]],
              "arousal": CLASS_NAMES["arousal"][aro[i]], "audio_present": has_audio} for i in range(nq)]
    return files, truth


def generate_session(spec: GeneratorSpec, subject_index: int):
    """``(InterviewSession, truth entries)`` for one subject, parsed from its generated files."""
    files, truth = generate_bundle(spec, subject_index)
    questions, cal, sid, audio_start, baseline = load_manifest(json.loads(files["manifest.json"]))
    tracks = {ch: parse_track(files[f"{ch.value}.csv"].decode(), ch) for ch in Channel}
    audio = load_wav(files["interview.wav"]) if "interview.wav" in files else None
    session = InterviewSession(sid, tracks[Channel.EDA], tracks[Channel.BVP], tracks[Channel.HR],
                               questions, cal, audio, audio_start, baseline)
    return session, truth


def generate_corpus(spec: GeneratorSpec, out_dir) -> Path:
    """Write ``n_subjects`` session directories plus ``truth.json`` under ``out_dir``."""
    out = Path(out_dir)
    truth = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for i in range(spec.n_subjects):
            files, t = generate_bundle(spec, i)
            d = out / subject_id(i)
            d.mkdir(exist_ok=True)
            for name, data in files.items():
                (d / name).write_bytes(data)
            truth.extend(t)
            log.info("generated %s (%d questions, audio=%s)", d.name, len(t), "interview.wav" in files)
    except OSError as exc:
        raise UnwritablePath(f"cannot write corpus to {out}: {exc}") from exc
    jsonio.dump({"spec": asdict(spec), "labels": truth}, out / "truth.json")
    return out
