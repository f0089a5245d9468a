"""Command-line entry point: ``geoenhance <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from pathlib import Path

from .errors import ConfigurationError, LoadError, NumericalError, StateError

log = logging.getLogger("geoenhance")

_BUDGET = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*(s|sec|m|min|h|steps?)?\s*$")


def parse_budget(text: str) -> tuple[int, float | None]:
    """'200' or '200steps' -> (200, None); '90s', '1m', '1h' -> (huge, seconds)."""
    m = _BUDGET.match(text)
    if not m:
        raise ConfigurationError(f"cannot parse budget {text!r}; use e.g. 200, 200steps, 90s, 1m")
    value, unit = float(m.group(1)), (m.group(2) or "steps")
    if unit.startswith("step"):
        if value != int(value):
            raise ConfigurationError(f"step budget must be an integer, got {text!r}")
        return int(value), None
    scale = {"s": 1, "sec": 1, "m": 60, "min": 60, "h": 3600}[unit]
    return 10**9, value * scale


def _train_config(args, **extra):
    from .training import desk_config

    steps, seconds = parse_budget(args.budget)
    fields = dict(steps=steps, seconds=seconds, seed=args.seed)
    if args.neighbors is not None:
        fields["neighbors"] = args.neighbors
    if args.lr is not None:
        fields["lr"] = args.lr
    fields.update(extra)
    return desk_config(**fields)


def cmd_synth(args) -> None:
    from .scene_io import SceneSpec, save_scene, synth_scene

    spec = SceneSpec()
    if args.spec:
        spec = SceneSpec.from_dict(json.loads(Path(args.spec).read_text()))
    save_scene(synth_scene(spec), args.out)


def cmd_degrade(args) -> None:
    from .scene_io import DegradationConfig, degrade_dataset, load_scene, save_scene

    cfg = DegradationConfig(blur_sigma=args.blur, down_up_factor=args.factor, noise_sigma=args.noise, seed=args.seed)
    save_scene(degrade_dataset(load_scene(args.scene), cfg), args.out)


def cmd_perturb(args) -> None:
    from .scene_io import PoseNoiseConfig, load_scene, perturb_poses, save_scene

    if args.preset is not None:
        if args.rot_sigma is not None or args.pos_sigma is not None:
            raise ConfigurationError("give either --preset or --rot-sigma/--pos-sigma, not both")
        cfg = PoseNoiseConfig.preset(args.preset, args.seed)
    else:
        if args.rot_sigma is None or args.pos_sigma is None:
            raise ConfigurationError("give --preset or both --rot-sigma and --pos-sigma")
        cfg = PoseNoiseConfig(args.rot_sigma, args.pos_sigma, args.seed)
    save_scene(perturb_poses(load_scene(args.scene), cfg), args.out)


def _progress(step, value):
    if step % 10 == 0:
        log.info("step %d loss %.5f", step, value)


def cmd_pretrain(args) -> None:
    from .numerics import save_checkpoint
    from .scene_io import load_scene
    from .training import fit, pack_checkpoint

    config = _train_config(args)
    result = fit("pretrain", [load_scene(p) for p in args.scenes], config, progress=_progress)
    save_checkpoint(pack_checkpoint(result.state, config), args.out_ckpt)
    print(f"pretrain: {result.steps_run} steps, best step {result.best_step}, val {result.best_val:.5f}")


def cmd_finetune(args) -> None:
    from .numerics import load_checkpoint, save_checkpoint
    from .scene_io import load_scene
    from .training import fit, pack_checkpoint, unpack_checkpoint

    init, config = None, _train_config(args)
    if args.ckpt:
        init, stored = unpack_checkpoint(load_checkpoint(args.ckpt))
        config = _train_config(args, residual=stored.residual, flow_iterations=stored.flow_iterations,
                               neighbors=args.neighbors or stored.neighbors)
    result = fit("finetune", [load_scene(args.scene)], config, init_state=init, progress=_progress)
    save_checkpoint(pack_checkpoint(result.state, config), args.out_ckpt)
    print(f"finetune: {result.steps_run} steps, best step {result.best_step}, val {result.best_val:.5f}")


def _load_model(path):
    from .numerics import load_checkpoint
    from .training import build_model, unpack_checkpoint

    state, config = unpack_checkpoint(load_checkpoint(path))
    model = build_model(config)
    model.load_state_dict(state)
    return model, state, config


def cmd_enhance(args) -> None:
    from .scene_io import load_scene
    from .scene_io.files import write_png
    from .training import enhance_view

    dataset = load_scene(args.scene)
    if not 0 <= args.view_index < len(dataset):
        raise ConfigurationError(f"view index {args.view_index} out of range for {len(dataset)} views")
    model, _, config = _load_model(args.ckpt)
    write_png(args.out_png, enhance_view(model, dataset, args.view_index, config))


def cmd_eval(args) -> None:
    from .scene_io import load_scene
    from .training import evaluate_scene

    model, state, config = _load_model(args.ckpt)
    report = evaluate_scene(load_scene(args.scene), state, config, model=model)
    text = json.dumps(report, indent=2, sort_keys=True)
    Path(args.report_json).write_text(text + "\n")
    m = report["mean"]
    print(f"PSNR {m['psnr_in']:.3f} -> {m['psnr_out']:.3f} dB, SSIM {m['ssim_in']:.4f} -> {m['ssim_out']:.4f}")


def cmd_gradcheck(args) -> None:
    from .gradsuite import run_suite

    worst = 0.0
    failed = []
    for name, err in run_suite(seed=args.seed):
        worst = max(worst, err)
        ok = err < args.tolerance
        print(f"{'ok  ' if ok else 'FAIL'} {name:28s} {err:.3e}")
        if not ok:
            failed.append(name)
    if failed:
        raise NumericalError(f"gradient check failed for {', '.join(failed)} (tolerance {args.tolerance:g})")
    print(f"all passed, worst relative error {worst:.3e}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="geoenhance", description="Geometry-aware enhancement of rendered views.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="render a synthetic posed scene")
    s.add_argument("--spec", help="JSON scene spec (defaults used when omitted)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("degrade", help="add blurred, resampled, noisy renders to a scene")
    s.add_argument("--scene", required=True)
    s.add_argument("--blur", type=float, default=1.5)
    s.add_argument("--factor", type=int, default=2)
    s.add_argument("--noise", type=float, default=0.01)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_degrade)

    s = sub.add_parser("perturb", help="add pose noise to every camera")
    s.add_argument("--scene", required=True)
    s.add_argument("--preset", choices=["small", "medium", "large"])
    s.add_argument("--rot-sigma", type=float, help="rotation sigma in degrees")
    s.add_argument("--pos-sigma", type=float, help="position sigma in scene units")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_perturb)

    for name, helptext in (("pretrain", "train from scratch on several scenes"),
                           ("finetune", "train on one scene, optionally from a checkpoint")):
        s = sub.add_parser(name, help=helptext)
        if name == "pretrain":
            s.add_argument("--scenes", nargs="+", required=True)
        else:
            s.add_argument("--scene", required=True)
            s.add_argument("--ckpt", help="initial checkpoint (from scratch when omitted)")
        s.add_argument("--budget", required=True, help="steps (200) or wall-clock (90s, 1m)")
        s.add_argument("--out-ckpt", required=True)
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--neighbors", type=int)
        s.add_argument("--lr", type=float)
        s.set_defaults(func=cmd_pretrain if name == "pretrain" else cmd_finetune)

    s = sub.add_parser("enhance", help="write the enhanced image of one view")
    s.add_argument("--scene", required=True)
    s.add_argument("--ckpt", required=True)
    s.add_argument("--view-index", type=int, required=True)
    s.add_argument("--out-png", required=True)
    s.set_defaults(func=cmd_enhance)

    s = sub.add_parser("eval", help="PSNR/SSIM report over the held-out views")
    s.add_argument("--scene", required=True)
    s.add_argument("--ckpt", required=True)
    s.add_argument("--report-json", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("gradcheck", help="finite-difference check of every differentiable block")
    s.add_argument("--tolerance", type=float, default=1e-4)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except (ConfigurationError, LoadError, NumericalError, StateError, ValueError, OSError) as exc:
        print(f"geoenhance {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
