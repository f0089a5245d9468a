"""Training loop, checkpoint selection, inference and scene evaluation."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .. import geometry
from ..errors import NumericalError
from ..numerics.optim import AdamState, adam_step
from ..numerics.tensor import Tensor
from ..scene_io.types import SceneDataset, split_indices
from .loss import PERCEPTUAL_WEIGHT, loss
from .metrics import psnr, ssim
from .model import Enhancer, ViewInput, forward, to_image

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch: int = 4
    crop: int = 64
    steps: int = 100
    seconds: float | None = None
    neighbors: int = 5
    leniency: float = geometry.DEFAULT_LENIENCY
    seed: int = 0
    perceptual_weight: float = PERCEPTUAL_WEIGHT
    residual: bool = False
    flow_iterations: int = 3
    val_every: int = 25
    val_views: int = 2

    def __post_init__(self):
        if self.neighbors < 1:
            raise ValueError("neighbors must be >= 1")
        if self.batch < 1 or self.crop < 8:
            raise ValueError("batch must be >= 1 and crop >= 8")

    def to_dict(self) -> dict:
        return asdict(self)


def desk_config(**overrides) -> TrainConfig:
    """Settings sized for minutes of single-core CPU training on 96 x 96 scenes."""
    base = dict(lr=1e-3, batch=4, crop=64, neighbors=1, residual=True, val_every=25)
    base.update(overrides)
    return TrainConfig(**base)


def build_model(config: TrainConfig, dtype=np.float32) -> Enhancer:
    return Enhancer(seed=config.seed, dtype=dtype, flow_iterations=config.flow_iterations, residual=config.residual)


# ---------------------------------------------------------------------------
# view plumbing
# ---------------------------------------------------------------------------

def render_input(dataset: SceneDataset, index: int) -> ViewInput:
    if dataset.renders is None:
        raise ValueError("dataset has no degraded renders; run degrade first")
    v = dataset.views[index]
    if v.depth is None or not np.isfinite(v.depth).all():
        raise ValueError(f"view {index} is missing a valid depth map")
    return ViewInput(dataset.renders[index], v.depth, v.pose, v.intrinsics)


def neighbor_input(dataset: SceneDataset, index: int) -> ViewInput:
    v = dataset.views[index]
    return ViewInput(v.rgb, v.depth, v.pose, v.intrinsics)


def choose_neighbors(dataset: SceneDataset, index: int, pool: Sequence[int], n: int) -> list[int]:
    candidates = [j for j in pool if j != index]
    if len(candidates) < geometry.STAGE_ONE:
        raise ValueError(f"need at least {geometry.STAGE_ONE} training views besides view {index}")
    picked = geometry.select_neighbors(dataset.views[index].pose, [dataset.views[j].pose for j in candidates], n)
    return [candidates[p] for p in picked]


def enhance_view(model: Enhancer, dataset: SceneDataset, index: int, config: TrainConfig, train_pool=None,
                 clamp: bool = True, attention: bool = True) -> np.ndarray:
    """Enhanced H x W x 3 image for view ``index`` using training views as neighbours."""
    pool = split_indices(len(dataset))[0] if train_pool is None else train_pool
    nbrs = choose_neighbors(dataset, index, pool, config.neighbors)
    out = forward(model, render_input(dataset, index), [neighbor_input(dataset, j) for j in nbrs],
                  config.leniency, attention=attention)
    return to_image(out, clamp)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class Sample:
    dataset: SceneDataset
    index: int
    neighbors: list[int]
    box: tuple[int, int, int, int]


def _diagnostics(model: Enhancer, out: Tensor | None) -> str:
    parts = [f"{name}={np.linalg.norm(p.data):.3g}" for name, p in model.named_parameters()]
    if out is not None:
        parts.append(f"output_norm={np.linalg.norm(np.nan_to_num(out.data)):.3g}")
    return ", ".join(parts)


def train_step(model: Enhancer, batch: Sequence[Sample], adam: AdamState, config: TrainConfig) -> float:
    """Forward and backward every sample in order, then one Adam update."""
    model.zero_grad()
    total = 0.0
    for s in batch:
        out = forward(model, render_input(s.dataset, s.index), [neighbor_input(s.dataset, j) for j in s.neighbors],
                      config.leniency, crop_box=s.box)
        top, left, h, w = s.box
        gt = s.dataset.views[s.index].rgb[top : top + h, left : left + w]
        target = Tensor(np.ascontiguousarray(gt.transpose(2, 0, 1)[None], dtype=out.dtype))
        value = loss(out, target, config.perceptual_weight) if np.isfinite(out.data).all() else None
        if value is None or not np.isfinite(value.data):
            raise NumericalError(f"non-finite loss at view {s.index}; {_diagnostics(model, out)}")
        value.backward(np.asarray(1.0 / len(batch), dtype=out.dtype))
        total += float(value.data)
    for p in model.parameters():
        if p.grad is not None and not np.isfinite(p.grad).all():
            raise NumericalError(f"non-finite gradient in {p.name}; {_diagnostics(model, None)}")
    adam_step(model.parameters(), adam)
    return total / len(batch)


@dataclass
class SceneContext:
    dataset: SceneDataset
    train_targets: list[int]
    val_targets: list[int]
    pool: list[int]
    neighbor_cache: dict = field(default_factory=dict)

    def neighbors(self, index: int, n: int) -> list[int]:
        key = (index, n)
        if key not in self.neighbor_cache:
            self.neighbor_cache[key] = choose_neighbors(self.dataset, index, self.pool, n)
        return self.neighbor_cache[key]


def scene_context(dataset: SceneDataset, val_views: int) -> SceneContext:
    train, _ = split_indices(len(dataset))
    val = []
    if val_views > 0:
        picks = np.linspace(0, len(train) - 1, val_views + 2)[1:-1]
        val = sorted({train[int(round(p))] for p in picks})
    targets = [i for i in train if i not in val]
    return SceneContext(dataset, targets, val, train)


def validation_loss(model: Enhancer, contexts: Sequence[SceneContext], config: TrainConfig) -> float:
    vals = []
    for ctx in contexts:
        for i in ctx.val_targets:
            out = forward(model, render_input(ctx.dataset, i), [neighbor_input(ctx.dataset, j) for j in ctx.neighbors(i, config.neighbors)],
                          config.leniency)
            gt = ctx.dataset.views[i].rgb.transpose(2, 0, 1)[None]
            vals.append(float(loss(out, Tensor(np.ascontiguousarray(gt, dtype=out.dtype)), config.perceptual_weight).data))
    return float(np.mean(vals)) if vals else float("nan")


@dataclass
class FitResult:
    state: dict
    best_step: int
    best_val: float
    history: list = field(default_factory=list)
    val_history: list = field(default_factory=list)
    steps_run: int = 0
    seconds: float = 0.0


def fit(mode: str, scenes: Sequence[SceneDataset], config: TrainConfig, init_state: dict | None = None,
        progress=None) -> FitResult:
    """Pre-train on several scenes or fine-tune on one.

    The budget is ``config.steps`` updates, cut short by ``config.seconds``
    of wall-clock time when that is set.  Validation loss on held-out
    training views is measured at step 0, every ``val_every`` steps and at
    the end; the returned state is the best one seen, so a zero budget
    returns the initial parameters unchanged.
    """
    if mode not in ("pretrain", "finetune"):
        raise ValueError(f"mode must be 'pretrain' or 'finetune', got {mode!r}")
    if mode == "finetune" and len(scenes) != 1:
        raise ValueError("finetune takes exactly one scene")
    if not scenes:
        raise ValueError("no scenes given")
    model = build_model(config)
    if init_state is not None:
        model.load_state_dict(init_state)
    contexts = [scene_context(s, config.val_views) for s in scenes]
    rng = np.random.default_rng(config.seed)
    adam = AdamState(lr=config.lr)

    def snapshot():
        return {k: v.copy() for k, v in model.state_dict().items()}

    best_state = snapshot()
    if config.steps <= 0 and not config.seconds:
        return FitResult(best_state, 0, float("nan"))
    best_val = validation_loss(model, contexts, config)
    result = FitResult(best_state, 0, best_val, val_history=[(0, best_val)])
    start = time.perf_counter()
    step = 0
    while step < config.steps:
        if config.seconds is not None and time.perf_counter() - start >= config.seconds:
            break
        batch = []
        for _ in range(config.batch):
            ctx = contexts[int(rng.integers(len(contexts)))]
            idx = ctx.train_targets[int(rng.integers(len(ctx.train_targets)))]
            h, w = ctx.dataset.views[idx].depth.shape
            ch, cw = min(config.crop, h), min(config.crop, w)
            top, left = int(rng.integers(h - ch + 1)), int(rng.integers(w - cw + 1))
            batch.append(Sample(ctx.dataset, idx, ctx.neighbors(idx, config.neighbors), (top, left, ch, cw)))
        value = train_step(model, batch, adam, config)
        step += 1
        result.history.append(value)
        if progress is not None:
            progress(step, value)
        out_of_time = config.seconds is not None and time.perf_counter() - start >= config.seconds
        if step % config.val_every == 0 or step == config.steps or out_of_time:
            v = validation_loss(model, contexts, config)
            result.val_history.append((step, v))
            log.info("step %d train %.5f val %.5f", step, value, v)
            if v < best_val:
                best_val, result.best_val, result.best_step = v, v, step
                result.state = snapshot()
    result.steps_run = step
    result.seconds = time.perf_counter() - start
    return result


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def evaluate_scene(dataset: SceneDataset, state: dict, config: TrainConfig, model: Enhancer | None = None) -> dict:
    """Per-view and mean PSNR / SSIM of degraded input and enhanced output on test views."""
    if model is None:
        model = build_model(config)
        model.load_state_dict(state)
    train, test = split_indices(len(dataset))
    rows = []
    for i in test:
        gt = dataset.views[i].rgb
        rnd = render_input(dataset, i).rgb
        out = enhance_view(model, dataset, i, config, train)
        rows.append({
            "index": i,
            "psnr_in": psnr(rnd, gt),
            "psnr_out": psnr(out, gt),
            "ssim_in": ssim(rnd, gt),
            "ssim_out": ssim(out, gt),
        })
    keys = ("psnr_in", "psnr_out", "ssim_in", "ssim_out")
    mean = {k: float(np.mean([r[k] for r in rows])) for k in keys}
    return {"per_view": rows, "mean": mean, "config": config.to_dict()}


# ---------------------------------------------------------------------------
# checkpoint packing
# ---------------------------------------------------------------------------

META_PREFIX = "meta."
_META_FIELDS = ("neighbors", "residual", "flow_iterations", "leniency")


def pack_checkpoint(state: dict, config: TrainConfig) -> dict:
    """Parameters plus the architecture switches inference needs, as scalar tensors."""
    out = dict(state)
    for name in _META_FIELDS:
        out[META_PREFIX + name] = np.asarray(float(getattr(config, name)), dtype=np.float32)
    return out


def unpack_checkpoint(tensors: dict, config: TrainConfig | None = None) -> tuple[dict, TrainConfig]:
    """Split a packed checkpoint into parameters and a config carrying its switches."""
    state = {k: v for k, v in tensors.items() if not k.startswith(META_PREFIX)}
    base = (config or desk_config()).to_dict()
    for name in _META_FIELDS:
        key = META_PREFIX + name
        if key in tensors:
            raw = float(np.asarray(tensors[key]).reshape(()))
            base[name] = type(base[name])(raw) if name != "leniency" else raw
    return state, TrainConfig(**base)
