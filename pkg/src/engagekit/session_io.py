"""Reading and slicing raw interview sessions.

A session directory holds ``EDA.csv``, ``BVP.csv`` and ``HR.csv`` in the
Empatica export layout (row 1 = UTC start time, row 2 = sample rate in Hz,
then one sample per row), an optional ``interview.wav`` and a
``manifest.json`` with the question timestamps, the self-assessment ratings
and the calibration ratings.
"""
from __future__ import annotations

import io
import json
import logging
import math
import struct
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.io import wavfile

from .errors import (
    CorruptContainer,
    EmptyTrack,
    EmptyWindow,
    MalformedHeader,
    NonFiniteSample,
    NonMonotoneTimestamps,
    RangeViolation,
    UnsupportedEncoding,
    WindowOutsideTrack,
)

log = logging.getLogger(__name__)

_EPS = 1e-9


class Channel(str, Enum):
    EDA = "EDA"
    BVP = "BVP"
    HR = "HR"


DEFAULT_RATES = {Channel.EDA: 4.0, Channel.BVP: 64.0, Channel.HR: 1.0}

TOPICS = ("usage_habits", "privacy", "procedures", "relationships", "information", "money", "ethics")


class RateWarning(UserWarning):
    """A track's sample rate differs from the E4 default for its channel."""


@dataclass(frozen=True)
class SignalTrack:
    channel: Channel
    start_time: float
    sample_rate_hz: float
    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "channel", Channel(self.channel))
        if not self.sample_rate_hz > 0:
            raise MalformedHeader(f"sample rate must be positive, got {self.sample_rate_hz}")
        if not np.all(np.isfinite(samples)):
            raise NonFiniteSample(f"{self.channel.value} track contains non-finite samples")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    @property
    def end_time(self) -> float:
        return self.start_time + self.duration

    def to_csv(self) -> str:
        """Serialize back to the two-header-row export layout."""
        rows = [repr(float(self.start_time)), repr(float(self.sample_rate_hz))]
        rows.extend(f"{v:.9g}" for v in self.samples)
        return "\n".join(rows) + "\n"


@dataclass(frozen=True)
class AudioClip:
    sample_rate_hz: int
    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        if self.sample_rate_hz <= 0:
            raise CorruptContainer("audio sample rate must be positive")
        if samples.ndim != 1:
            raise CorruptContainer("audio clip must be mono")
        if not np.all(np.isfinite(samples)) or np.any(np.abs(samples) > 1.0):
            raise CorruptContainer("audio samples must be finite and within [-1, 1]")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass(frozen=True)
class QuestionWindow:
    question_id: int
    topic: str
    t_start: float
    t_end: float
    rating_arousal: int
    rating_valence: int

    def __post_init__(self):
        if self.question_id < 1:
            raise RangeViolation(f"question id must be >= 1, got {self.question_id}")
        if self.topic not in TOPICS:
            raise RangeViolation(f"unknown topic {self.topic!r}")
        if not self.t_start < self.t_end:
            raise NonMonotoneTimestamps(f"question {self.question_id}: t_start must precede t_end")
        for name in ("rating_arousal", "rating_valence"):
            r = getattr(self, name)
            if r != int(r) or not 1 <= r <= 10:
                raise RangeViolation(f"question {self.question_id}: {name}={r} outside 1..10")


@dataclass(frozen=True)
class CalibrationRecord:
    picture_valence: tuple
    picture_arousal: tuple

    def __post_init__(self):
        for name in ("picture_valence", "picture_arousal"):
            vals = tuple(float(v) for v in getattr(self, name))
            object.__setattr__(self, name, vals)
            if not vals:
                raise RangeViolation(f"calibration {name} is empty")
            if any(not (0.0 <= v <= 100.0) for v in vals):
                raise RangeViolation(f"calibration {name} has values outside [0, 100]")


@dataclass(frozen=True)
class InterviewSession:
    subject_id: str
    eda: Optional[SignalTrack]
    bvp: Optional[SignalTrack]
    hr: Optional[SignalTrack]
    questions: tuple
    calibration: CalibrationRecord
    audio: Optional[AudioClip] = None
    audio_start_time: Optional[float] = None
    baseline_window: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "questions", tuple(self.questions))
        _check_order(self.questions)
        for track in self.tracks():
            for q in self.questions:
                _check_inside(track, q.t_start, q.t_end, q.question_id)
        if self.audio is not None and self.audio_start_time is None:
            raise RangeViolation("audio present but audio_start_time missing")

    def tracks(self):
        return [t for t in (self.eda, self.bvp, self.hr) if t is not None]

    @property
    def complete(self) -> bool:
        return all(t is not None for t in (self.eda, self.bvp, self.hr))

    def question(self, question_id: int) -> QuestionWindow:
        for q in self.questions:
            if q.question_id == question_id:
                return q
        raise KeyError(f"question {question_id} not in session {self.subject_id}")

    def baseline_span(self) -> tuple:
        """Pre-task segment used as the physiological baseline.

        Defaults to everything recorded before the first question.
        """
        if self.baseline_window is not None:
            return tuple(self.baseline_window)
        start = max(t.start_time for t in self.tracks())
        return start, self.questions[0].t_start


def _check_order(questions: Sequence[QuestionWindow]):
    for prev, cur in zip(questions, questions[1:]):
        if cur.t_start < prev.t_end - _EPS or cur.t_start <= prev.t_start:
            raise NonMonotoneTimestamps(
                f"question {cur.question_id} starts at {cur.t_start} before question "
                f"{prev.question_id} ends at {prev.t_end}")


def _check_inside(track: SignalTrack, t0: float, t1: float, qid=None):
    if t0 < track.start_time - _EPS or t1 > track.end_time + _EPS:
        where = f"question {qid}" if qid is not None else "window"
        raise WindowOutsideTrack(
            f"{where} [{t0}, {t1}) outside {track.channel.value} span "
            f"[{track.start_time}, {track.end_time})")


# ---------------------------------------------------------------------------
# parsing

def parse_track(text: str, channel) -> SignalTrack:
    """Parse one E4-style CSV export.

    Multi-column rows (the E4 ``ACC.csv`` style) are rejected; only the first
    column is meaningful for the three supported channels.
    """
    channel = Channel(channel)
    rows = [r.strip() for r in text.strip().splitlines() if r.strip()]
    if len(rows) < 2:
        raise MalformedHeader(f"{channel.value}: need two header rows (start time, rate)")
    try:
        start = float(rows[0].split(",")[0])
        rate = float(rows[1].split(",")[0])
    except ValueError as exc:
        raise MalformedHeader(f"{channel.value}: header rows are not numeric") from exc
    if not (math.isfinite(start) and math.isfinite(rate)) or rate <= 0:
        raise MalformedHeader(f"{channel.value}: invalid header start={start} rate={rate}")
    if len(rows) == 2:
        raise EmptyTrack(f"{channel.value}: no samples after header")
    try:
        samples = np.array([float(r.split(",")[0]) for r in rows[2:]])
    except ValueError as exc:
        raise NonFiniteSample(f"{channel.value}: unparsable sample row") from exc
    if not np.all(np.isfinite(samples)):
        bad = int(np.flatnonzero(~np.isfinite(samples))[0]) + 3
        raise NonFiniteSample(f"{channel.value}: non-finite sample at row {bad}")
    expected = DEFAULT_RATES[channel]
    if not math.isclose(rate, expected):
        warnings.warn(f"{channel.value} rate {rate} Hz differs from the E4 default {expected} Hz",
                      RateWarning, stacklevel=2)
    return SignalTrack(channel, start, rate, samples)


_WAVE_PCM, _WAVE_FLOAT, _WAVE_EXTENSIBLE = 0x0001, 0x0003, 0xFFFE


def _wav_format_tag(data: bytes) -> int:
    if len(data) < 12 or data[:4] not in (b"RIFF", b"RIFX") or data[8:12] != b"WAVE":
        if data[:3] == b"ID3" or (len(data) > 1 and data[0] == 0xFF and data[1] & 0xE0 == 0xE0):
            raise UnsupportedEncoding("MPEG audio is not supported; provide RIFF/WAVE PCM")
        if data[:4] in (b"fLaC", b"OggS"):
            raise UnsupportedEncoding(f"{data[:4].decode()} audio is not supported")
        raise CorruptContainer("not a RIFF/WAVE container")
    pos = 12
    endian = "<" if data[:4] == b"RIFF" else ">"
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        (size,) = struct.unpack(endian + "I", data[pos + 4:pos + 8])
        if cid == b"fmt ":
            if size < 16 or pos + 8 + size > len(data):
                raise CorruptContainer("truncated fmt chunk")
            (tag,) = struct.unpack(endian + "H", data[pos + 8:pos + 10])
            if tag == _WAVE_EXTENSIBLE and size >= 40:
                (tag,) = struct.unpack(endian + "H", data[pos + 32:pos + 34])
            return tag
        pos += 8 + size + (size & 1)
    raise CorruptContainer("RIFF/WAVE container without fmt chunk")


def load_wav(data: bytes) -> AudioClip:
    """Decode RIFF/WAVE PCM (integer or float) into a mono clip in [-1, 1]."""
    tag = _wav_format_tag(data)
    if tag not in (_WAVE_PCM, _WAVE_FLOAT):
        raise UnsupportedEncoding(f"WAVE format tag 0x{tag:04x} is not PCM")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", wavfile.WavFileWarning)
            rate, raw = wavfile.read(io.BytesIO(data))
    except (ValueError, EOFError, struct.error) as exc:
        raise CorruptContainer(f"cannot decode WAVE data: {exc}") from exc
    if raw.dtype == np.uint8:
        x = (raw.astype(float) - 128.0) / 128.0
    elif np.issubdtype(raw.dtype, np.integer):
        x = raw.astype(float) / float(-np.iinfo(raw.dtype).min)
    else:
        x = np.clip(raw.astype(float), -1.0, 1.0)
    if x.ndim == 2:
        x = x.mean(axis=1)
    if not np.all(np.isfinite(x)):
        raise CorruptContainer("non-finite audio samples")
    return AudioClip(int(rate), np.clip(x, -1.0, 1.0))


def load_manifest(source):
    """Read a manifest (path, file object or already-decoded dict).

    Returns ``(questions, calibration, subject_id, audio_start_time, baseline)``;
    the first three are the core contract, the rest are optional extras.
    """
    if isinstance(source, dict):
        doc = source
    elif hasattr(source, "read"):
        doc = json.load(source)
    else:
        doc = json.loads(Path(source).read_text(encoding="utf-8"))
    try:
        subject_id = str(doc["subject_id"])
        cal = doc["calibration"]
        calibration = CalibrationRecord(tuple(cal["valence"]), tuple(cal["arousal"]))
        questions = []
        for q in doc["questions"]:
            questions.append(QuestionWindow(
                question_id=int(q["id"]), topic=q["topic"],
                t_start=float(q["t_start"]), t_end=float(q["t_end"]),
                rating_arousal=_rating(q["q_arousal"]), rating_valence=_rating(q["q_valence"])))
    except KeyError as exc:
        raise CorruptContainer(f"manifest missing key {exc}") from exc
    _check_order(questions)
    audio_start = doc.get("audio_start_time")
    baseline = doc.get("baseline")
    if baseline is not None:
        baseline = (float(baseline[0]), float(baseline[1]))
    return (tuple(questions), calibration, subject_id,
            None if audio_start is None else float(audio_start), baseline)


def _rating(v):
    if isinstance(v, bool) or float(v) != int(float(v)):
        raise RangeViolation(f"rating {v!r} is not an integer")
    v = int(float(v))
    if not 1 <= v <= 10:
        raise RangeViolation(f"rating {v} outside 1..10")
    return v


def load_session(session_dir) -> InterviewSession:
    """Load a full session bundle; missing track files leave that track ``None``."""
    session_dir = Path(session_dir)
    questions, calibration, subject_id, audio_start, baseline = load_manifest(session_dir / "manifest.json")
    tracks = {}
    for ch in Channel:
        path = session_dir / f"{ch.value}.csv"
        tracks[ch] = parse_track(path.read_text(), ch) if path.exists() else None
    audio = None
    wav = session_dir / "interview.wav"
    if wav.exists():
        audio = load_wav(wav.read_bytes())
        if audio_start is None:
            audio_start = questions[0].t_start
    return InterviewSession(subject_id, tracks[Channel.EDA], tracks[Channel.BVP], tracks[Channel.HR],
                            questions, calibration, audio, audio_start, baseline)


# ---------------------------------------------------------------------------
# segmentation

def _index_range(t0: float, t1: float, start: float, rate: float, n: int):
    lo = max(0, math.ceil((t0 - start) * rate - _EPS))
    hi = min(n, math.ceil((t1 - start) * rate - _EPS))
    return lo, hi


def slice_track(track: SignalTrack, t0: float, t1: float) -> np.ndarray:
    """Samples whose timestamps fall in ``[t0, t1)``."""
    _check_inside(track, t0, t1)
    lo, hi = _index_range(t0, t1, track.start_time, track.sample_rate_hz, len(track.samples))
    if hi <= lo:
        raise EmptyWindow(f"window [{t0}, {t1}) holds no {track.channel.value} samples")
    return track.samples[lo:hi]


def slice_audio(clip: AudioClip, audio_start: float, t0: float, t1: float) -> np.ndarray:
    end = audio_start + clip.duration
    if t0 < audio_start - _EPS or t1 > end + _EPS:
        raise WindowOutsideTrack(f"window [{t0}, {t1}) outside audio span [{audio_start}, {end})")
    lo, hi = _index_range(t0, t1, audio_start, clip.sample_rate_hz, len(clip.samples))
    if hi <= lo:
        raise EmptyWindow(f"window [{t0}, {t1}) holds no audio samples")
    return clip.samples[lo:hi]


@dataclass(frozen=True)
class Segment:
    question: QuestionWindow
    eda: Optional[np.ndarray]
    bvp: Optional[np.ndarray]
    hr: Optional[np.ndarray]
    audio: Optional[np.ndarray] = None
    extras: dict = field(default_factory=dict)


def segment(session: InterviewSession, question_id: int) -> Segment:
    q = session.question(question_id)
    parts = {}
    for name in ("eda", "bvp", "hr"):
        track = getattr(session, name)
        parts[name] = None if track is None else slice_track(track, q.t_start, q.t_end)
    audio = None
    if session.audio is not None:
        audio = slice_audio(session.audio, session.audio_start_time, q.t_start, q.t_end)
    return Segment(q, parts["eda"], parts["bvp"], parts["hr"], audio)
