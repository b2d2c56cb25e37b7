"""Spectral voice features: mel spectrogram, MFCC and chromagram means."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import dct

from .errors import ClipTooShort


@dataclass(frozen=True)
class SpectralConfig:
    frame_len: int = 2048
    hop_len: int = 512
    window: str = "hann"
    n_mels: int = 128
    n_mfcc: int = 20
    n_chroma: int = 12
    log_floor: float = 1e-10
    mel_scalar: bool = False

    def __post_init__(self):
        if not 0 < self.hop_len <= self.frame_len:
            raise ValueError("need 0 < hop_len <= frame_len")
        if self.n_mfcc > self.n_mels:
            raise ValueError("n_mfcc cannot exceed n_mels")
        if self.n_chroma != 12:
            raise ValueError("chroma uses exactly 12 pitch classes")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")
        if self.window != "hann":
            raise ValueError(f"unsupported window {self.window!r}")

    @property
    def dimension(self) -> int:
        return (1 if self.mel_scalar else self.n_mels) + self.n_mfcc + self.n_chroma


@dataclass(frozen=True)
class VoiceFeatures:
    mel_means: np.ndarray
    mfcc_means: np.ndarray
    chroma_means: np.ndarray

    def vector(self) -> np.ndarray:
        return np.concatenate([self.mel_means, self.mfcc_means, self.chroma_means])


def _samples(clip):
    return np.asarray(getattr(clip, "samples", clip), dtype=float)


def hann(n: int) -> np.ndarray:
    # periodic Hann, the usual choice for spectral analysis
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft_power(clip, cfg: SpectralConfig = SpectralConfig()) -> np.ndarray:
    """Power spectrogram ``[n_frames, frame_len // 2 + 1]``; the last frame is zero-padded."""
    x = _samples(clip)
    if x.size < cfg.frame_len:
        raise ClipTooShort(f"clip has {x.size} samples, frame_len is {cfg.frame_len}")
    n_frames = 1 + -(-(x.size - cfg.frame_len) // cfg.hop_len)
    padded = np.zeros((n_frames - 1) * cfg.hop_len + cfg.frame_len)
    padded[: x.size] = x
    idx = np.arange(cfg.frame_len)[None, :] + cfg.hop_len * np.arange(n_frames)[:, None]
    frames = padded[idx] * hann(cfg.frame_len)
    spec = np.fft.rfft(frames, axis=1)
    return spec.real ** 2 + spec.imag ** 2


def hz_to_mel(f):
    """Slaney mel scale: linear below 1 kHz, logarithmic above."""
    f = np.asarray(f, dtype=float)
    f_sp = 200.0 / 3
    min_log_hz = 1000.0
    min_log_mel = min_log_hz / f_sp
    logstep = np.log(6.4) / 27.0
    return np.where(f >= min_log_hz, min_log_mel + np.log(np.maximum(f, min_log_hz) / min_log_hz) / logstep, f / f_sp)


def mel_to_hz(m):
    m = np.asarray(m, dtype=float)
    f_sp = 200.0 / 3
    min_log_hz = 1000.0
    min_log_mel = min_log_hz / f_sp
    logstep = np.log(6.4) / 27.0
    return np.where(m >= min_log_mel, min_log_hz * np.exp(logstep * (m - min_log_mel)), f_sp * m)


def mel_filterbank(rate_hz: float, frame_len: int, n_mels: int) -> np.ndarray:
    """Triangular, area-normalised filters ``[n_mels, frame_len // 2 + 1]`` from 0 Hz to Nyquist."""
    fft_freqs = np.fft.rfftfreq(frame_len, d=1.0 / rate_hz)
    edges = mel_to_hz(np.linspace(hz_to_mel(0.0), hz_to_mel(rate_hz / 2.0), n_mels + 2))
    widths = np.diff(edges)
    ramps = edges[:, None] - fft_freqs[None, :]
    lower = -ramps[:-2] / widths[:-1, None]
    upper = ramps[2:] / widths[1:, None]
    weights = np.maximum(0.0, np.minimum(lower, upper))
    return weights * (2.0 / (edges[2:] - edges[:-2]))[:, None]


def mel_centers(rate_hz: float, n_mels: int) -> np.ndarray:
    return mel_to_hz(np.linspace(hz_to_mel(0.0), hz_to_mel(rate_hz / 2.0), n_mels + 2))[1:-1]


def mel_spectrogram(power_stft, cfg: SpectralConfig, rate_hz: float) -> np.ndarray:
    power_stft = np.asarray(power_stft, dtype=float)
    fb = mel_filterbank(rate_hz, 2 * (power_stft.shape[1] - 1), cfg.n_mels)
    return power_stft @ fb.T


def mfcc(mel_spec, cfg: SpectralConfig = SpectralConfig()) -> np.ndarray:
    """Orthonormal DCT-II of ``log(max(mel, log_floor))``, first ``n_mfcc`` coefficients."""
    logmel = np.log(np.maximum(np.asarray(mel_spec, dtype=float), cfg.log_floor))
    return dct(logmel, type=2, norm="ortho", axis=-1)[..., : cfg.n_mfcc]


def pitch_classes(freqs) -> np.ndarray:
    """Pitch class (C = 0) of each frequency; entries for f <= 0 are -1."""
    freqs = np.asarray(freqs, dtype=float)
    out = np.full(freqs.shape, -1, dtype=np.int64)
    pos = freqs > 0
    out[pos] = (np.round(12.0 * np.log2(freqs[pos] / 440.0)).astype(np.int64) + 9) % 12
    return out


def chromagram(power_stft, cfg: SpectralConfig, rate_hz: float) -> np.ndarray:
    power_stft = np.asarray(power_stft, dtype=float)
    freqs = np.fft.rfftfreq(2 * (power_stft.shape[1] - 1), d=1.0 / rate_hz)
    pc = pitch_classes(freqs)
    onehot = np.zeros((power_stft.shape[1], 12))
    onehot[pc >= 0, pc[pc >= 0]] = 1.0
    chroma = power_stft @ onehot
    peak = chroma.max(axis=1, keepdims=True)
    return np.divide(chroma, peak, out=np.zeros_like(chroma), where=peak > 0)


def voice_features(clip, cfg: SpectralConfig = SpectralConfig(), rate_hz: float | None = None) -> VoiceFeatures:
    """Per-band / per-coefficient / per-class means over frames."""
    if rate_hz is None:
        rate_hz = clip.sample_rate_hz
    power = stft_power(clip, cfg)
    mel = mel_spectrogram(power, cfg, rate_hz)
    mel_means = mel.mean(axis=0)
    if cfg.mel_scalar:
        mel_means = np.array([mel_means.mean()])
    return VoiceFeatures(mel_means, mfcc(mel, cfg).mean(axis=0), chromagram(power, cfg, rate_hz).mean(axis=0))
