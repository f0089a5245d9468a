"""Seeded He initialisation."""

from __future__ import annotations

import zlib

import numpy as np


def fan_in(shape) -> int:
    shape = tuple(shape)
    if len(shape) < 2:
        raise ValueError(f"cannot compute fan-in for shape {shape}")
    return int(np.prod(shape[1:]))


def he_init(shape, seed: int, bias: bool = False, dtype=np.float64) -> np.ndarray:
    """Zero-mean Gaussian with variance ``2 / fan_in``; zeros when ``bias``."""
    if bias:
        return np.zeros(shape, dtype=dtype)
    std = np.sqrt(2.0 / fan_in(shape))
    rng = np.random.default_rng(seed)
    return (rng.standard_normal(shape) * std).astype(dtype)


def derive_seed(seed: int, name: str) -> int:
    """Stable per-parameter seed so layers don't share random streams."""
    return (int(seed) * 1_000_003 + zlib.crc32(name.encode("utf-8"))) % (2**32)
