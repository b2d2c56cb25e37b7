"""Per-question feature extraction: 12 biofeedback features plus the voice block."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import cardio, eda, voice
from .errors import EngageError
from .labeling import FeatureVector, SubjectRecord
from .session_io import InterviewSession, SignalTrack, slice_audio, slice_track

log = logging.getLogger(__name__)

BIO_NAMES = (
    "eda_mean_tonic", "eda_phasic_auc", "eda_peak_min", "eda_peak_max", "eda_peak_mean", "eda_peak_sum",
    "bvp_peak_min", "bvp_peak_max", "bvp_peak_sum", "bvp_mean_peak_diff",
    "hr_mean_diff", "hr_std_diff",
)
PITCH_NAMES = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")


def voice_names(cfg: voice.SpectralConfig):
    mel = ("mel_mean",) if cfg.mel_scalar else tuple(f"mel_{i:03d}" for i in range(cfg.n_mels))
    return mel + tuple(f"mfcc_{i:02d}" for i in range(cfg.n_mfcc)) + tuple(f"chroma_{p}" for p in PITCH_NAMES)


@dataclass(frozen=True)
class ExtractConfig:
    eda: eda.EdaParams = field(default_factory=eda.EdaParams)
    bvp: cardio.FilterSpec = field(default_factory=cardio.FilterSpec)
    bvp_min_peak_separation_s: float = 0.33
    voice: voice.SpectralConfig = field(default_factory=voice.SpectralConfig)


def _filtered_bvp(track: SignalTrack, cfg: ExtractConfig) -> SignalTrack:
    return replace(track, samples=cardio.bandpass(track.samples, track.sample_rate_hz, cfg.bvp))


def question_features(session: InterviewSession, question_id: int, baseline: cardio.BaselineStats,
                      bvp_filtered: SignalTrack, cfg: ExtractConfig) -> FeatureVector:
    q = session.question(question_id)
    eda_win = slice_track(session.eda, q.t_start, q.t_end)
    rate = session.eda.sample_rate_hz
    dec = eda.decompose(eda_win, rate, cfg.eda)
    scr = eda.detect_scr_peaks(dec.phasic, rate, cfg.eda.min_peak_uS)
    f_eda = eda.eda_features(dec, scr, rate)

    bvp_win = slice_track(bvp_filtered, q.t_start, q.t_end)
    pulses = cardio.detect_pulse_peaks(bvp_win, bvp_filtered.sample_rate_hz, cfg.bvp_min_peak_separation_s)
    f_bvp = cardio.bvp_features(pulses, baseline)
    f_hr = cardio.hr_features(slice_track(session.hr, q.t_start, q.t_end), baseline)

    vox = None
    if session.audio is not None:
        try:
            clip = slice_audio(session.audio, session.audio_start_time, q.t_start, q.t_end)
            vox = voice.voice_features(clip, cfg.voice, session.audio.sample_rate_hz).vector()
        except EngageError as exc:
            log.warning("%s Q%d: voice features unavailable (%s)", session.subject_id, question_id, exc)
    return FeatureVector(session.subject_id, question_id, q.topic, np.concatenate([f_eda, f_bvp, f_hr]), vox)


def session_baseline(session: InterviewSession, bvp_filtered: SignalTrack, cfg: ExtractConfig) -> cardio.BaselineStats:
    t0, t1 = session.baseline_span()
    return cardio.baseline_stats(slice_track(session.hr, t0, t1), slice_track(bvp_filtered, t0, t1),
                                 bvp_filtered.sample_rate_hz, cfg.bvp_min_peak_separation_s)


def extract_session(session: InterviewSession, cfg: ExtractConfig = ExtractConfig()) -> SubjectRecord:
    """Feature vectors for every question. Raises if a biofeedback track is missing."""
    if not session.complete:
        missing = [n for n in ("eda", "bvp", "hr") if getattr(session, n) is None]
        raise EngageError(f"session {session.subject_id} lacks tracks: {', '.join(missing)}")
    bvp_f = _filtered_bvp(session.bvp, cfg)
    baseline = session_baseline(session, bvp_f, cfg)
    vectors = {q.question_id: question_features(session, q.question_id, baseline, bvp_f, cfg)
               for q in session.questions}
    return SubjectRecord(session.subject_id, session.questions, session.calibration, vectors, True)


# ---------------------------------------------------------------------------
# features.json

def record_to_dict(rec: SubjectRecord, cfg: ExtractConfig = ExtractConfig()):
    qs = []
    for q in rec.questions:
        fv = rec.vectors.get(q.question_id)
        qs.append({
            "id": q.question_id, "topic": q.topic, "t_start": q.t_start, "t_end": q.t_end,
            "q_arousal": q.rating_arousal, "q_valence": q.rating_valence,
            "biofeedback": None if fv is None else fv.biofeedback,
            "voice": None if fv is None else fv.voice,
            "voice_missing": True if fv is None else fv.voice_missing,
        })
    return {
        "subject_id": rec.subject_id, "complete": rec.complete,
        "calibration": {"valence": list(rec.calibration.picture_valence),
                        "arousal": list(rec.calibration.picture_arousal)},
        "bio_names": list(BIO_NAMES), "voice_names": list(voice_names(cfg.voice)),
        "questions": qs,
    }


def record_from_dict(d) -> SubjectRecord:
    from .session_io import CalibrationRecord, QuestionWindow

    questions, vectors = [], {}
    for q in d["questions"]:
        qw = QuestionWindow(int(q["id"]), q["topic"], float(q["t_start"]), float(q["t_end"]),
                            int(q["q_arousal"]), int(q["q_valence"]))
        questions.append(qw)
        if q.get("biofeedback") is not None:
            bio = np.array([np.nan if v is None else v for v in q["biofeedback"]], dtype=float)
            vox = None if q.get("voice") is None else np.array(q["voice"], dtype=float)
            vectors[qw.question_id] = FeatureVector(d["subject_id"], qw.question_id, qw.topic, bio, vox)
    cal = CalibrationRecord(tuple(d["calibration"]["valence"]), tuple(d["calibration"]["arousal"]))
    return SubjectRecord(d["subject_id"], tuple(questions), cal, vectors, bool(d.get("complete", True)))
