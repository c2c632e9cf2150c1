"""Time the numba kernels against their pure Python / numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--records 200000] [--repeat 3]
"""
import argparse
import time

import numpy as np

from cachelattice import _kernels as kn


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def as_tuple(r):
    return r if isinstance(r, tuple) else (r,)


def cases(n, rng):
    lines = rng.integers(0, 4096, n).astype(np.int64)
    uniq, dense = np.unique(lines, return_inverse=True)
    dense = dense.ravel().astype(np.int64)
    sets = (uniq[dense] % 64).astype(np.int64)
    replay = (sets, dense, 64, 8, len(uniq))

    pos = np.sort(rng.integers(0, n // 3, n)).astype(np.int64)
    key = rng.integers(0, 2000, n).astype(np.int64)
    cls = (pos, key, 2000, 4, False)

    px, py, W, H = 16, 32, 120, 120
    ind = (rng.random((px + W, py + H)) < 0.05).astype(np.int64)
    prefix = np.zeros((px + W + 1, py + H + 1), dtype=np.int64)
    prefix[1:, 1:] = ind.cumsum(0).cumsum(1)
    rect = (prefix, px, py, W, H)

    return [
        ("lru_replay", kn.lru_replay_jit, kn._lru_replay_py, replay),
        ("plru_replay", kn.plru_replay_jit, kn._plru_replay_py, replay),
        ("classify", kn.classify_jit, kn._classify_np, cls),
        ("rect_sweep", kn.rect_sweep_jit, kn._rect_sweep_np, rect),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--records", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    print(f"numba available: {kn.HAVE_NUMBA}, active: {kn.USE_NUMBA}")
    print(f"{'kernel':<12} {'numba s':>10} {'fallback s':>11} {'speedup':>8}")
    for name, jit, fallback, a in cases(args.records, rng):
        jit(*a)  # compile (or load from cache) outside the timing
        r1, r2 = jit(*a), fallback(*a)
        same = all(np.array_equal(x, y) for x, y in zip(as_tuple(r1), as_tuple(r2)))
        tj = best_of(lambda: jit(*a), args.repeat)
        tf = best_of(lambda: fallback(*a), args.repeat)
        flag = "" if same else "  MISMATCH"
        print(f"{name:<12} {tj:>10.4f} {tf:>11.4f} {tf / tj:>7.1f}x{flag}")


if __name__ == "__main__":
    main()
