"""Bilinear sampling kernels: numba versions plus a pure-numpy fallback.

Set ``GEOENHANCE_DISABLE_NUMBA=1`` to force the numpy path (useful for
debugging, or where numba is unavailable).  Both paths implement the same
zero-padded bilinear sampling: each of the four corner taps that falls
outside the source image contributes zero.
"""

from __future__ import annotations

import os

import numpy as np

DISABLE_NUMBA = os.getenv("GEOENHANCE_DISABLE_NUMBA", "0").lower() not in ("", "0", "false", "no")

try:
    if DISABLE_NUMBA:
        raise ImportError
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False


# ---------------------------------------------------------------------------
# numpy path
# ---------------------------------------------------------------------------

def _corners(gx, gy, h, w):
    x0 = np.floor(gx)
    y0 = np.floor(gy)
    fx = gx - x0
    fy = gy - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    x1 = x0 + 1
    y1 = y0 + 1
    vx0 = (x0 >= 0) & (x0 < w)
    vx1 = (x1 >= 0) & (x1 < w)
    vy0 = (y0 >= 0) & (y0 < h)
    vy1 = (y1 >= 0) & (y1 < h)
    return x0, y0, x1, y1, fx, fy, vx0, vx1, vy0, vy1


def _gather(img, yy, xx, valid):
    # img: (C, H, W); yy/xx/valid: (Ho, Wo)
    h, w = img.shape[1:]
    flat = img.reshape(img.shape[0], -1)
    idx = np.clip(yy, 0, h - 1) * w + np.clip(xx, 0, w - 1)
    out = flat[:, idx]
    return out * valid


def sample_forward_numpy(inp: np.ndarray, grid: np.ndarray) -> np.ndarray:
    n, c, h, w = inp.shape
    out = np.empty((n, c) + grid.shape[1:3], dtype=inp.dtype)
    for b in range(n):
        gx = np.clip(grid[b, :, :, 0], -2.0, w + 1.0)
        gy = np.clip(grid[b, :, :, 1], -2.0, h + 1.0)
        x0, y0, x1, y1, fx, fy, vx0, vx1, vy0, vy1 = _corners(gx, gy, h, w)
        img = inp[b]
        v00 = _gather(img, y0, x0, vy0 & vx0)
        v01 = _gather(img, y0, x1, vy0 & vx1)
        v10 = _gather(img, y1, x0, vy1 & vx0)
        v11 = _gather(img, y1, x1, vy1 & vx1)
        out[b] = (
            v00 * ((1 - fx) * (1 - fy))
            + v01 * (fx * (1 - fy))
            + v10 * ((1 - fx) * fy)
            + v11 * (fx * fy)
        )
    return out


def sample_backward_numpy(inp, grid, gout, need_input=True, need_grid=True):
    n, c, h, w = inp.shape
    ginp = np.zeros_like(inp) if need_input else None
    ggrid = np.zeros_like(grid) if need_grid else None
    for b in range(n):
        gx = np.clip(grid[b, :, :, 0], -2.0, w + 1.0)
        gy = np.clip(grid[b, :, :, 1], -2.0, h + 1.0)
        x0, y0, x1, y1, fx, fy, vx0, vx1, vy0, vy1 = _corners(gx, gy, h, w)
        g = gout[b]
        taps = (
            (y0, x0, vy0 & vx0, (1 - fx) * (1 - fy)),
            (y0, x1, vy0 & vx1, fx * (1 - fy)),
            (y1, x0, vy1 & vx0, (1 - fx) * fy),
            (y1, x1, vy1 & vx1, fx * fy),
        )
        if need_input:
            acc = ginp[b].reshape(c, -1)
            for yy, xx, valid, wgt in taps:
                idx = (np.clip(yy, 0, h - 1) * w + np.clip(xx, 0, w - 1)).ravel()
                contrib = (g * (wgt * valid)).reshape(c, -1)
                for ch in range(c):
                    acc[ch] += np.bincount(idx, weights=contrib[ch], minlength=h * w)
        if need_grid:
            img = inp[b]
            v00 = _gather(img, y0, x0, vy0 & vx0)
            v01 = _gather(img, y0, x1, vy0 & vx1)
            v10 = _gather(img, y1, x0, vy1 & vx0)
            v11 = _gather(img, y1, x1, vy1 & vx1)
            dx = (v01 - v00) * (1 - fy) + (v11 - v10) * fy
            dy = (v10 - v00) * (1 - fx) + (v11 - v01) * fx
            ggrid[b, :, :, 0] = (g * dx).sum(axis=0)
            ggrid[b, :, :, 1] = (g * dy).sum(axis=0)
    return ginp, ggrid


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True)
    def _tap(img, ch, y, x, h, w):
        if 0 <= y < h and 0 <= x < w:
            return img[ch, y, x]
        return 0.0

    @njit(cache=True)
    def _sample_forward_nb(inp, grid, out):
        n, c, h, w = inp.shape
        ho, wo = grid.shape[1], grid.shape[2]
        for b in range(n):
            img = inp[b]
            for i in range(ho):
                for j in range(wo):
                    gx = min(max(grid[b, i, j, 0], -2.0), w + 1.0)
                    gy = min(max(grid[b, i, j, 1], -2.0), h + 1.0)
                    fx0 = np.floor(gx)
                    fy0 = np.floor(gy)
                    fx = gx - fx0
                    fy = gy - fy0
                    x0 = int(fx0)
                    y0 = int(fy0)
                    w00 = (1 - fx) * (1 - fy)
                    w01 = fx * (1 - fy)
                    w10 = (1 - fx) * fy
                    w11 = fx * fy
                    for ch in range(c):
                        out[b, ch, i, j] = (
                            _tap(img, ch, y0, x0, h, w) * w00
                            + _tap(img, ch, y0, x0 + 1, h, w) * w01
                            + _tap(img, ch, y0 + 1, x0, h, w) * w10
                            + _tap(img, ch, y0 + 1, x0 + 1, h, w) * w11
                        )

    @njit(cache=True)
    def _sample_backward_nb(inp, grid, gout, ginp, ggrid, need_input, need_grid):
        n, c, h, w = inp.shape
        ho, wo = grid.shape[1], grid.shape[2]
        for b in range(n):
            img = inp[b]
            for i in range(ho):
                for j in range(wo):
                    gx = min(max(grid[b, i, j, 0], -2.0), w + 1.0)
                    gy = min(max(grid[b, i, j, 1], -2.0), h + 1.0)
                    fx0 = np.floor(gx)
                    fy0 = np.floor(gy)
                    fx = gx - fx0
                    fy = gy - fy0
                    x0 = int(fx0)
                    y0 = int(fy0)
                    x1 = x0 + 1
                    y1 = y0 + 1
                    in00 = 0 <= y0 < h and 0 <= x0 < w
                    in01 = 0 <= y0 < h and 0 <= x1 < w
                    in10 = 0 <= y1 < h and 0 <= x0 < w
                    in11 = 0 <= y1 < h and 0 <= x1 < w
                    sx = 0.0
                    sy = 0.0
                    for ch in range(c):
                        g = gout[b, ch, i, j]
                        if need_input:
                            if in00:
                                ginp[b, ch, y0, x0] += g * (1 - fx) * (1 - fy)
                            if in01:
                                ginp[b, ch, y0, x1] += g * fx * (1 - fy)
                            if in10:
                                ginp[b, ch, y1, x0] += g * (1 - fx) * fy
                            if in11:
                                ginp[b, ch, y1, x1] += g * fx * fy
                        if need_grid:
                            v00 = img[ch, y0, x0] if in00 else 0.0
                            v01 = img[ch, y0, x1] if in01 else 0.0
                            v10 = img[ch, y1, x0] if in10 else 0.0
                            v11 = img[ch, y1, x1] if in11 else 0.0
                            sx += g * ((v01 - v00) * (1 - fy) + (v11 - v10) * fy)
                            sy += g * ((v10 - v00) * (1 - fx) + (v11 - v01) * fx)
                    if need_grid:
                        ggrid[b, i, j, 0] = sx
                        ggrid[b, i, j, 1] = sy


def sample_forward(inp: np.ndarray, grid: np.ndarray, use_numba: bool | None = None) -> np.ndarray:
    """Bilinear zero-padded sampling of ``inp`` (N,C,H,W) at ``grid`` (N,Ho,Wo,2) as (x, y)."""
    if use_numba is None:
        use_numba = HAS_NUMBA
    if use_numba:
        inp = np.ascontiguousarray(inp)
        grid = np.ascontiguousarray(grid, dtype=inp.dtype)
        out = np.empty((inp.shape[0], inp.shape[1]) + grid.shape[1:3], dtype=inp.dtype)
        _sample_forward_nb(inp, grid, out)
        return out
    return sample_forward_numpy(inp, grid)


def sample_backward(inp, grid, gout, need_input=True, need_grid=True, use_numba=None):
    """Gradients of :func:`sample_forward` with respect to input and grid."""
    if use_numba is None:
        use_numba = HAS_NUMBA
    if use_numba:
        inp = np.ascontiguousarray(inp)
        grid = np.ascontiguousarray(grid, dtype=inp.dtype)
        gout = np.ascontiguousarray(gout, dtype=inp.dtype)
        ginp = np.zeros_like(inp)
        ggrid = np.zeros_like(grid)
        _sample_backward_nb(inp, grid, gout, ginp, ggrid, need_input, need_grid)
        return (ginp if need_input else None), (ggrid if need_grid else None)
    return sample_backward_numpy(inp, grid, gout, need_input, need_grid)
