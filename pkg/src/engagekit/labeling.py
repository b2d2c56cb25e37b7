"""Calibration-adjusted ratings, k-means discretization and the binary gold standard."""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateInput, EmptyCalibration
from .ml.cluster import kmeans

log = logging.getLogger(__name__)

DIMENSIONS = ("valence", "arousal")
CLASS_NAMES = {
    "valence": ("negative", "neutral", "positive"),
    "arousal": ("low", "neutral", "high"),
}
N_BIO = 12


def calibration_offsets(rec) -> tuple:
    """Map mean picture ratings (0-100 scale) onto the 1-10 interview scale: ``(c_V, c_A)``."""
    if not rec.picture_valence or not rec.picture_arousal:
        raise EmptyCalibration("calibration ratings are empty")
    cv = 1.0 + 9.0 * float(np.mean(rec.picture_valence)) / 100.0
    ca = 1.0 + 9.0 * float(np.mean(rec.picture_arousal)) / 100.0
    return cv, ca


@dataclass(frozen=True)
class NormalizedRating:
    question_id: Optional[int]
    valence_norm: float
    arousal_norm: float


def normalize(q_v, q_a, offsets, question_id=None) -> NormalizedRating:
    c_v, c_a = offsets
    return NormalizedRating(question_id, float(q_v) - c_v, float(q_a) - c_a)


@dataclass(frozen=True)
class LabelMap:
    dimension: str
    centers: tuple
    breaks: tuple  # (min_0, min_1, min_2, max_2), read as [b0,b1) [b1,b2) [b2,b3]
    class_names: tuple
    seed: int
    restarts: int
    inertia: float

    @property
    def cluster_ranges(self):
        b = self.breaks
        return ((b[0], b[1]), (b[1], b[2]), (b[2], b[3]))

    def assign(self, values) -> np.ndarray:
        """Class index 0 (negative/low), 1 (neutral) or 2 (positive/high)."""
        v = np.asarray(values, dtype=float)
        return np.searchsorted(np.asarray(self.breaks[1:3]), v, side="right")

    def describe(self, digits: int = 3) -> str:
        b = [f"{x:.{digits}g}" for x in self.breaks]
        n = self.class_names
        return f"[{b[0]},{b[1]}) {n[0]}; [{b[1]},{b[2]}) {n[1]}; [{b[2]},{b[3]}] {n[2]}"

    def to_dict(self):
        return {"dimension": self.dimension, "centers": list(self.centers), "breaks": list(self.breaks),
                "ranges": [list(r) for r in self.cluster_ranges], "class_names": list(self.class_names),
                "seed": self.seed, "restarts": self.restarts, "inertia": self.inertia,
                "intervals": self.describe()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["dimension"], tuple(d["centers"]), tuple(d["breaks"]), tuple(d["class_names"]),
                   int(d["seed"]), int(d["restarts"]), float(d["inertia"]))


def discretize(values, dimension: str = "valence", k: int = 3, seed: int = 0, restarts: int = 50) -> LabelMap:
    v = np.asarray(values, dtype=float)
    if np.unique(v).size < k:
        raise DegenerateInput(f"need at least {k} distinct values to discretize, got {np.unique(v).size}")
    res = kmeans(v, k, seed=seed, restarts=restarts)
    order = np.argsort(res.centers[:, 0])
    rank = np.empty(k, dtype=int)
    rank[order] = np.arange(k)
    labels = rank[res.labels]
    mins = [float(v[labels == c].min()) for c in range(k)]
    breaks = (*mins, float(v.max()))
    return LabelMap(dimension, tuple(float(c) for c in res.centers[order, 0]), breaks,
                    CLASS_NAMES[dimension], int(seed), int(restarts), res.inertia)


# ---------------------------------------------------------------------------
# subjects and the gold standard

@dataclass
class FeatureVector:
    subject_id: str
    question_id: int
    topic: str
    biofeedback: np.ndarray
    voice: Optional[np.ndarray]

    @property
    def voice_missing(self) -> bool:
        return self.voice is None


@dataclass
class SubjectRecord:
    """Everything labeling needs about one subject."""
    subject_id: str
    questions: tuple
    calibration: object
    vectors: dict = field(default_factory=dict)  # question_id -> FeatureVector
    complete: bool = True

    @property
    def ratings_valence(self):
        return np.array([q.rating_valence for q in self.questions], dtype=float)

    @property
    def ratings_arousal(self):
        return np.array([q.rating_arousal for q in self.questions], dtype=float)

    def normalized(self):
        off = calibration_offsets(self.calibration)
        return [normalize(q.rating_valence, q.rating_arousal, off, q.question_id) for q in self.questions]


def quality_filter(subjects: Sequence[SubjectRecord], min_std: float = 1.0):
    """Drop subjects with incomplete data or rating std below ``min_std`` (population std)."""
    kept, excluded = [], []
    for s in subjects:
        if not s.complete or len(s.questions) == 0 or any(
                q.question_id not in s.vectors or not np.all(np.isfinite(s.vectors[q.question_id].biofeedback))
                for q in s.questions):
            excluded.append((s.subject_id, "incomplete_data"))
        elif s.ratings_valence.std() < min_std:
            excluded.append((s.subject_id, "low_variance_valence"))
        elif s.ratings_arousal.std() < min_std:
            excluded.append((s.subject_id, "low_variance_arousal"))
        else:
            kept.append(s)
    for sid, reason in excluded:
        log.info("excluded subject %s: %s", sid, reason)
    return kept, excluded


def pooled_normalized(subjects: Sequence[SubjectRecord]):
    vals = {d: [] for d in DIMENSIONS}
    for s in subjects:
        for r in s.normalized():
            vals["valence"].append(r.valence_norm)
            vals["arousal"].append(r.arousal_norm)
    return {d: np.array(v) for d, v in vals.items()}


def build_label_maps(subjects, seed: int = 0, restarts: int = 50):
    pool = pooled_normalized(subjects)
    return {d: discretize(pool[d], d, seed=seed, restarts=restarts) for d in DIMENSIONS}


@dataclass
class GoldStandardDataset:
    """Binary dataset for one dimension. ``y`` is 1 for positive/high, 0 for negative/low."""
    dimension: str
    bio: np.ndarray
    voice: np.ndarray  # NaN rows where voice is missing
    voice_missing: np.ndarray
    y: np.ndarray
    subject_ids: np.ndarray
    question_ids: np.ndarray
    topics: np.ndarray
    n_neutral: int = 0
    bio_names: tuple = ()
    voice_names: tuple = ()

    def __len__(self):
        return self.y.shape[0]

    @property
    def label_names(self):
        names = CLASS_NAMES[self.dimension]
        return {1: names[2], 0: names[0]}

    def counts(self):
        names = self.label_names
        return {names[1]: int((self.y == 1).sum()), names[0]: int((self.y == 0).sum()), "neutral": int(self.n_neutral)}

    def subset(self, rows):
        rows = np.asarray(rows)
        return GoldStandardDataset(self.dimension, self.bio[rows], self.voice[rows], self.voice_missing[rows],
                                   self.y[rows], self.subject_ids[rows], self.question_ids[rows], self.topics[rows],
                                   0, self.bio_names, self.voice_names)

    def matrix(self, feature_set: str, voice=None) -> np.ndarray:
        voice = self.voice if voice is None else voice
        if feature_set == "biofeedback":
            return self.bio
        if feature_set == "voice":
            return voice
        if feature_set == "combined":
            return np.hstack([self.bio, voice])
        raise ValueError(f"unknown feature set {feature_set!r}")

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for a in (self.bio, np.nan_to_num(self.voice, nan=-1e300), self.voice_missing, self.y):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()[:16]

    def to_dict(self):
        names = self.label_names
        items = []
        for i in range(len(self)):
            items.append({
                "subject_id": str(self.subject_ids[i]), "question_id": int(self.question_ids[i]),
                "topic": str(self.topics[i]), "label": names[int(self.y[i])], "y": int(self.y[i]),
                "biofeedback": self.bio[i], "voice_missing": bool(self.voice_missing[i]),
                "voice": None if self.voice_missing[i] else self.voice[i],
            })
        return {"dimension": self.dimension, "counts": self.counts(), "items": items,
                "bio_names": list(self.bio_names), "voice_names": list(self.voice_names)}

    @classmethod
    def from_dict(cls, d):
        items = d["items"]
        n_voice = len(d.get("voice_names", [])) or next((len(it["voice"]) for it in items if it["voice"] is not None), 0)
        bio = np.array([it["biofeedback"] for it in items], dtype=float).reshape(len(items), -1)
        voice = np.full((len(items), n_voice), np.nan)
        for i, it in enumerate(items):
            if it["voice"] is not None:
                voice[i] = it["voice"]
        return cls(d["dimension"], bio, voice, np.array([it["voice_missing"] for it in items], dtype=bool),
                   np.array([it["y"] for it in items], dtype=np.int64),
                   np.array([it["subject_id"] for it in items]), np.array([it["question_id"] for it in items]),
                   np.array([it["topic"] for it in items]), int(d["counts"].get("neutral", 0)),
                   tuple(d.get("bio_names", ())), tuple(d.get("voice_names", ())))


def build_gold_standard(subjects: Sequence[SubjectRecord], label_maps: dict, bio_names=(), voice_names=()):
    """One binary dataset per dimension; neutral items are dropped per dimension."""
    n_voice = len(voice_names) or next((len(v.voice) for s in subjects for v in s.vectors.values()
                                        if v.voice is not None), 0)
    out = {}
    for dim in DIMENSIONS:
        lm = label_maps[dim]
        rows = {k: [] for k in ("bio", "voice", "missing", "y", "sid", "qid", "topic")}
        n_neutral = 0
        for s in subjects:
            norm = {r.question_id: (r.valence_norm if dim == "valence" else r.arousal_norm) for r in s.normalized()}
            for q in s.questions:
                cls = int(lm.assign([norm[q.question_id]])[0])
                if cls == 1:
                    n_neutral += 1
                    continue
                fv = s.vectors[q.question_id]
                rows["bio"].append(np.asarray(fv.biofeedback, dtype=float))
                rows["voice"].append(np.full(n_voice, np.nan) if fv.voice is None else np.asarray(fv.voice, dtype=float))
                rows["missing"].append(fv.voice is None)
                rows["y"].append(1 if cls == 2 else 0)
                rows["sid"].append(s.subject_id)
                rows["qid"].append(q.question_id)
                rows["topic"].append(q.topic)
        n = len(rows["y"])
        out[dim] = GoldStandardDataset(
            dim, np.array(rows["bio"]).reshape(n, N_BIO), np.array(rows["voice"]).reshape(n, n_voice),
            np.array(rows["missing"], dtype=bool), np.array(rows["y"], dtype=np.int64),
            np.array(rows["sid"], dtype=object).astype(str), np.array(rows["qid"], dtype=np.int64),
            np.array(rows["topic"], dtype=object).astype(str), n_neutral, tuple(bio_names), tuple(voice_names))
    return out
