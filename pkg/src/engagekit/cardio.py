"""BVP band-pass filtering, pulse peaks, and task-minus-baseline cardiac features."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, sosfiltfilt

from .errors import EmptyWindow, NyquistViolation, SignalTooShort
from .peaks import local_maxima, select_separated


@dataclass(frozen=True)
class FilterSpec:
    low_hz: float = 0.5
    high_hz: float = 4.0
    order: int = 2

    def __post_init__(self):
        if self.order not in (2, 4):
            raise ValueError(f"filter order must be 2 or 4, got {self.order}")
        if not 0 < self.low_hz < self.high_hz:
            raise ValueError(f"need 0 < low_hz < high_hz, got {self.low_hz}, {self.high_hz}")


@dataclass(frozen=True)
class BaselineStats:
    hr_mean: float
    hr_std: float
    bvp_mean_peak_amplitude: float


def bandpass(signal, rate_hz: float, spec: FilterSpec = FilterSpec()) -> np.ndarray:
    """Zero-phase Butterworth band-pass (forward-backward, second-order sections)."""
    x = np.asarray(signal, dtype=float)
    if spec.high_hz >= rate_hz / 2:
        raise NyquistViolation(f"high cut {spec.high_hz} Hz must be below Nyquist {rate_hz / 2} Hz")
    sos = butter(spec.order, [spec.low_hz, spec.high_hz], btype="bandpass", fs=rate_hz, output="sos")
    padlen = 3 * (2 * len(sos) + 1)
    if x.size <= max(3 * spec.order, padlen):
        raise SignalTooShort(f"need more than {max(3 * spec.order, padlen)} samples, got {x.size}")
    return sosfiltfilt(sos, x, padlen=padlen)


def detect_pulse_peaks(filtered_bvp, rate_hz: float, min_separation_s: float = 0.33,
                       percentile: float = 60.0):
    """Pulse peaks as ``(index, amplitude)`` pairs.

    Candidates are strict local maxima at or above the window's
    ``percentile``-th sample value; survivors are at least
    ``min_separation_s`` apart.
    """
    x = np.asarray(filtered_bvp, dtype=float)
    cand = local_maxima(x)
    if cand.size == 0:
        return []
    cand = cand[x[cand] >= np.percentile(x, percentile)]
    kept = select_separated(cand, x[cand], min_separation_s * rate_hz)
    return [(int(i), float(x[i])) for i in kept]


def bvp_features(task_peaks, baseline: BaselineStats) -> np.ndarray:
    """``[min, max, sum of peak amplitudes, mean amplitude - baseline mean]``."""
    amps = np.array([a for _, a in task_peaks], dtype=float)
    if amps.size == 0:
        return np.array([0.0, 0.0, 0.0, -baseline.bvp_mean_peak_amplitude])
    return np.array([amps.min(), amps.max(), amps.sum(), amps.mean() - baseline.bvp_mean_peak_amplitude])


def hr_features(hr_window, baseline: BaselineStats) -> np.ndarray:
    """``[mean - baseline mean, std - baseline std]`` with population std."""
    hr = np.asarray(hr_window, dtype=float)
    if hr.size == 0:
        raise EmptyWindow("HR window is empty")
    return np.array([hr.mean() - baseline.hr_mean, hr.std() - baseline.hr_std])


def baseline_stats(hr_segment, filtered_bvp_segment, bvp_rate_hz: float,
                   min_separation_s: float = 0.33) -> BaselineStats:
    hr = np.asarray(hr_segment, dtype=float)
    if hr.size == 0:
        raise EmptyWindow("baseline HR segment is empty")
    peaks = detect_pulse_peaks(filtered_bvp_segment, bvp_rate_hz, min_separation_s)
    amp = float(np.mean([a for _, a in peaks])) if peaks else 0.0
    return BaselineStats(float(hr.mean()), float(hr.std()), amp)
