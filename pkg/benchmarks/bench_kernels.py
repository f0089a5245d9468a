"""Time the numba and numpy bilinear sampling kernels on warp-sized inputs.

Run: python3 benchmarks/bench_kernels.py [--size 96] [--channels 64] [--runs 5]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from geoenhance.numerics import kernels


def _best_of(fn, runs: int) -> float:
    fn()  # warm-up (triggers JIT compilation on the numba path)
    best = float("inf")
    for _ in range(runs):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run(size: int, channels: int, runs: int) -> list[tuple[str, float, float, float]]:
    rng = np.random.default_rng(0)
    inp = rng.standard_normal((1, channels, size, size)).astype(np.float32)
    v, u = np.mgrid[0:size, 0:size]
    grid = np.stack([u, v], -1)[None].astype(np.float32) + rng.uniform(-3, 3, (1, size, size, 2)).astype(np.float32)
    gout = rng.standard_normal((1, channels, size, size)).astype(np.float32)

    rows = []
    ref_f = kernels.sample_forward(inp, grid, use_numba=False)
    ref_b = kernels.sample_backward(inp, grid, gout, True, True, use_numba=False)
    for label, call in (
        ("forward", lambda nb: kernels.sample_forward(inp, grid, use_numba=nb)),
        ("backward", lambda nb: kernels.sample_backward(inp, grid, gout, True, True, use_numba=nb)),
    ):
        t_np = _best_of(lambda: call(False), runs)
        t_nb = _best_of(lambda: call(True), runs) if kernels.HAS_NUMBA else float("nan")
        rows.append((label, t_np, t_nb, t_np / t_nb))
    if kernels.HAS_NUMBA:
        np.testing.assert_allclose(kernels.sample_forward(inp, grid, use_numba=True), ref_f, atol=1e-4)
        for a, b in zip(kernels.sample_backward(inp, grid, gout, True, True, use_numba=True), ref_b):
            np.testing.assert_allclose(a, b, atol=1e-3)
    return rows


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=96)
    ap.add_argument("--channels", type=int, default=64)
    ap.add_argument("--runs", type=int, default=5)
    args = ap.parse_args()
    if not kernels.HAS_NUMBA:
        print("numba unavailable (or GEOENHANCE_DISABLE_NUMBA set); timing numpy only")
    print(f"grid_sample {args.channels} x {args.size} x {args.size}, best of {args.runs}")
    print(f"{'pass':10s}{'numpy ms':>12s}{'numba ms':>12s}{'speed-up':>10s}")
    for label, t_np, t_nb, ratio in run(args.size, args.channels, args.runs):
        print(f"{label:10s}{t_np * 1e3:12.2f}{t_nb * 1e3:12.2f}{ratio:10.1f}x")


if __name__ == "__main__":
    main()
