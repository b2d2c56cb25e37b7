"""Tonic/phasic decomposition of skin conductance (cvxEDA model) and EDA features.

The signal is modelled as

    y = K p + C d + B l + e

where ``K`` is the lower-triangular convolution with the discretised
Bateman (biexponential) impulse response, ``p >= 0`` the sparse sudomotor
driver, ``C`` an offset + linear drift, and ``B`` a cubic-spline basis with
one knot every ``knot_s`` seconds. The estimate minimises

    0.5*||e||^2 + alpha*sum(p) + 0.5*gamma*||l||^2    subject to p >= 0,

solved here with a primal active-set method (Lawson-Hanson style, free
variables always in the passive set). Each outer iteration strictly lowers
the objective and the method stops on an exact KKT check.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.signal import lfilter

from .errors import NonFiniteSample, SolverNonConvergence, WindowTooShort
from .peaks import local_maxima, select_separated


@dataclass(frozen=True)
class EdaParams:
    tau0: float = 2.0
    tau1: float = 0.7
    knot_s: float = 10.0
    alpha: float = 8e-4
    gamma: float = 1e-2
    min_peak_uS: float = 0.01
    max_iter: int = 5000
    kkt_tol: float = 1e-6
    # keeps the passive-set systems positive definite; negligible next to ||K||^2
    ridge: float = 1e-10


@dataclass(frozen=True)
class EdaDecomposition:
    tonic: np.ndarray
    phasic: np.ndarray
    residual: np.ndarray
    driver: np.ndarray
    objective_trace: tuple = field(default=(), repr=False)
    n_iter: int = 0


@dataclass(frozen=True)
class ScrPeak:
    index: int
    amplitude: float


def bateman_ar(tau0: float, tau1: float, dt: float) -> np.ndarray:
    """AR coefficients of the bilinear-discretised biexponential response."""
    a1 = 1.0 / min(tau1, tau0)
    a0 = 1.0 / max(tau1, tau0)
    return np.array([
        (a1 * dt + 2.0) * (a0 * dt + 2.0),
        2.0 * a1 * a0 * dt ** 2 - 8.0,
        (a1 * dt - 2.0) * (a0 * dt - 2.0),
    ]) / ((a1 - a0) * dt ** 2)


def impulse_response(n: int, rate_hz: float, tau0: float = 2.0, tau1: float = 0.7) -> np.ndarray:
    """Phasic response to a unit driver impulse at sample 0."""
    imp = np.zeros(n)
    imp[0] = 1.0
    return lfilter([1.0, 2.0, 1.0], bateman_ar(tau0, tau1, 1.0 / rate_hz), imp)


def spline_basis(n: int, rate_hz: float, knot_s: float) -> np.ndarray:
    step = max(1, int(round(knot_s * rate_hz)))
    tri = np.r_[np.arange(1.0, step), np.arange(step, 0.0, -1.0)]
    spl = np.convolve(tri, tri, "full")
    spl /= spl.max()
    offsets = np.arange(-(len(spl) // 2), (len(spl) + 1) // 2)
    knots = np.arange(0, n, step)
    B = np.zeros((n, len(knots)))
    for j, k in enumerate(knots):
        rows = offsets + k
        ok = (rows >= 0) & (rows < n)
        B[rows[ok], j] = spl[ok]
    return B


def _design(n, rate_hz, params):
    h = impulse_response(n, rate_hz, params.tau0, params.tau1)
    K = np.zeros((n, n))
    for j in range(n):
        K[j:, j] = h[: n - j]
    C = np.column_stack([np.ones(n), np.arange(1.0, n + 1.0) / n])
    B = spline_basis(n, rate_hz, params.knot_s)
    return K, C, B


def _active_set_qp(Q, c, n_cons, max_iter, tol):
    """min 0.5 z'Qz + c'z  s.t. z[:n_cons] >= 0, remaining entries free."""
    m = Q.shape[0]
    passive = np.zeros(m, dtype=bool)
    passive[n_cons:] = True
    z = np.zeros(m)

    def solve(mask):
        s = np.zeros(m)
        s[mask] = np.linalg.solve(Q[np.ix_(mask, mask)], -c[mask])
        return s

    def objective(v):
        return 0.5 * v @ Q @ v + c @ v

    if passive.any():
        z = solve(passive)
    trace = [objective(z)]
    it = 0
    while True:
        grad = Q @ z + c
        w = np.where(passive[:n_cons], -np.inf, -grad[:n_cons])
        if n_cons == 0 or w.max() <= tol:
            return z, tuple(trace), it
        passive[int(np.argmax(w))] = True
        while True:
            it += 1
            if it > max_iter:
                kkt = float(max(0.0, w.max()))
                raise SolverNonConvergence(f"active-set QP hit {max_iter} iterations (KKT residual {kkt:.3g})")
            s = solve(passive)
            cons = passive[:n_cons]
            bad = cons & (s[:n_cons] <= 0)
            if not bad.any():
                z = s
                break
            zc, sc = z[:n_cons][bad], s[:n_cons][bad]
            step = np.min(zc / (zc - sc))
            z = z + step * (s - z)
            drop = cons & (z[:n_cons] <= 1e-14)
            z[:n_cons][drop] = 0.0
            passive[:n_cons][drop] = False
        z[:n_cons] = np.maximum(z[:n_cons], 0.0)
        trace.append(objective(z))


def decompose(eda_window, rate_hz: float, params: EdaParams = EdaParams()) -> EdaDecomposition:
    y = np.asarray(eda_window, dtype=float)
    if y.ndim != 1 or y.size < 4 * rate_hz or y.size < 4:
        raise WindowTooShort(f"need at least 4 s of EDA ({int(np.ceil(4 * rate_hz))} samples), got {y.size}")
    if not np.all(np.isfinite(y)):
        raise NonFiniteSample("EDA window contains non-finite samples")
    n = y.size
    K, C, B = _design(n, rate_hz, params)
    J = np.hstack([K, C, B])
    nB = B.shape[1]
    Q = J.T @ J
    diag = np.r_[np.full(n, params.ridge * np.trace(K.T @ K) / n), np.zeros(2), np.full(nB, params.gamma)]
    Q[np.diag_indices_from(Q)] += diag
    c = -(J.T @ y)
    c[:n] += params.alpha
    z, trace, it = _active_set_qp(Q, c, n, params.max_iter, params.kkt_tol)
    driver = z[:n]
    phasic = K @ driver
    tonic = C @ z[n:n + 2] + B @ z[n + 2:]
    residual = y - (tonic + phasic)
    # constant term of the objective so the trace reports the full cost
    const = 0.5 * float(y @ y)
    return EdaDecomposition(tonic, phasic, residual, driver, tuple(t + const for t in trace), it)


def detect_scr_peaks(phasic, rate_hz: float, min_amplitude: float = 0.01, min_separation_s: float = 1.0):
    phasic = np.asarray(phasic, dtype=float)
    cand = local_maxima(phasic)
    cand = cand[phasic[cand] >= min_amplitude]
    kept = select_separated(cand, phasic[cand], min_separation_s * rate_hz)
    return [ScrPeak(int(i), float(phasic[i])) for i in kept]


def eda_features(dec: EdaDecomposition, peaks, rate_hz: float) -> np.ndarray:
    """``[mean tonic, phasic AUC (uS*s), peak min, max, mean, sum]``."""
    amps = np.array([p.amplitude for p in peaks], dtype=float)
    auc = trapezoid(dec.phasic, dx=1.0 / rate_hz) if dec.phasic.size > 1 else 0.0
    if amps.size:
        stats = [amps.min(), amps.max(), amps.mean(), amps.sum()]
    else:
        stats = [0.0, 0.0, 0.0, 0.0]
    return np.array([float(np.mean(dec.tonic)), float(auc), *map(float, stats)])
