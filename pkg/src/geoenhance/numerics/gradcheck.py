"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import NumericalError
from . import ops
from .tensor import Tensor

FD_STEP = 1e-5


def _scalar(out: Tensor, proj: dict) -> Tensor:
    if out.data.ndim == 0:
        return out
    key = out.shape
    if key not in proj:
        proj[key] = np.random.default_rng(1234).standard_normal(out.shape)
    return ops.total(out, proj[key])


def grad_check(
    fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    tolerance: float | None = None,
    step: float = FD_STEP,
    max_entries: int = 24,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``fn`` rebuilds the graph from the current values of ``tensors`` (inputs
    or parameters, all float64).  Non-scalar outputs are contracted with a
    fixed random projection.  At most ``max_entries`` coordinates per tensor
    are perturbed; per tensor the error is ``|a - n| / max(|a| + |n|, 1e-12)``
    over the sampled coordinates as vectors.  If ``tolerance`` is given and
    exceeded, an AssertionError reports the worst tensor.
    """
    proj: dict = {}
    for t in tensors:
        if t.data.dtype != np.float64:
            raise TypeError("grad_check requires float64 tensors")
        t.data = np.ascontiguousarray(t.data)
        t.requires_grad = True
        t.grad = None
    out = _scalar(fn(), proj)
    if not np.isfinite(out.data).all():
        raise NumericalError("non-finite output in grad_check")
    out.backward()
    rng = np.random.default_rng(seed)
    worst, worst_idx = 0.0, -1
    for ti, t in enumerate(tensors):
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad.copy()
        if not np.isfinite(analytic).all():
            raise NumericalError(f"non-finite analytic gradient in tensor {ti}")
        flat = t.data.reshape(-1)
        count = min(max_entries, flat.size)
        picks = rng.choice(flat.size, size=count, replace=False)
        a = analytic.reshape(-1)[picks]
        num = np.empty(count)
        for j, idx in enumerate(picks):
            orig = flat[idx]
            flat[idx] = orig + step
            fp = _scalar(fn(), proj).data
            flat[idx] = orig - step
            fm = _scalar(fn(), proj).data
            flat[idx] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NumericalError(f"non-finite value while perturbing tensor {ti}")
            num[j] = (fp - fm) / (2 * step)
        denom = max(np.linalg.norm(a) + np.linalg.norm(num), 1e-12)
        err = float(np.linalg.norm(a - num) / denom)
        if err > worst:
            worst, worst_idx = err, ti
    for t in tensors:
        t.grad = None
    if tolerance is not None and worst > tolerance:
        raise AssertionError(f"gradient check failed: rel err {worst:.3e} > {tolerance:.1e} (tensor {worst_idx})")
    return worst
