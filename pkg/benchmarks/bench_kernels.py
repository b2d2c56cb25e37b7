"""Time the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--scale 1.0]

Each kernel is warmed up once (numba compiles on first call, cached after),
then timed ``--repeat`` times; the best time is reported. Outputs are
compared across backends so a speedup never hides a divergence.
"""
import argparse
import time

import numpy as np

from engagekit.kernels import BACKENDS


def _cases(scale, rng):
    n = max(20, int(400 * scale))
    d = 170
    X = rng.normal(size=(n, d))
    y01 = (X[:, 0] + 0.5 * X[:, 1] > 0).astype(np.int64)
    pts = rng.normal(size=(int(800 * scale), 1))
    centers = pts[rng.choice(pts.shape[0], 3, replace=False)].copy()
    sub = X[: n // 2, :20]
    K = np.exp(-0.05 * ((sub[:, None, :] - sub[None, :, :]) ** 2).sum(-1))
    ypm = np.where(y01[: n // 2] == 1, 1.0, -1.0)
    idx = np.arange(n, dtype=np.int64)
    return {
        "sq_dists": (X, X[:50]),
        "lloyd": (pts, centers, 300),
        "build_tree": (X, y01, idx, -1, 1, int(np.sqrt(d)), False, np.uint64(42)),
        "smo": (K, ypm, 1.0, 1e-3, 100000),
    }


def _best(fn, args, repeat):
    fn(*args)  # warm-up / compile
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return a.shape == np.shape(b) and np.allclose(a, b, rtol=1e-9, atol=1e-9)
    return np.isclose(a, b, rtol=1e-9, atol=1e-9)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--scale", type=float, default=1.0, help="problem-size multiplier")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    cases = _cases(args.scale, np.random.default_rng(args.seed))
    print(f"{'kernel':<12} {'numba [ms]':>11} {'numpy [ms]':>11} {'speedup':>8}  match")
    for name, call_args in cases.items():
        t_nb, out_nb = _best(BACKENDS["numba"][name], call_args, args.repeat)
        t_np, out_np = _best(BACKENDS["numpy"][name], call_args, args.repeat)
        print(f"{name:<12} {1e3 * t_nb:11.2f} {1e3 * t_np:11.2f} {t_np / t_nb:8.1f}x  {_same(out_nb, out_np)}")


if __name__ == "__main__":
    main()
