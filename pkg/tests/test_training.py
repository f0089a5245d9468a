import json

import numpy as np
import pytest
from skimage.metrics import structural_similarity

from geoenhance import cli
from geoenhance.errors import NumericalError
from geoenhance.numerics import AdamState, Tensor, load_checkpoint
from geoenhance.scene_io import SceneDataset
from geoenhance.training import (
    Enhancer,
    TrainConfig,
    build_model,
    desk_config,
    enhance_view,
    evaluate_scene,
    fit,
    forward,
    loss,
    pack_checkpoint,
    psnr,
    ssim,
    train_step,
    unpack_checkpoint,
)
from geoenhance.training.model import Trace
from geoenhance.training.train import Sample, choose_neighbors, neighbor_input, render_input


class TestLoss:
    def test_zero_iff_equal(self, rng):
        a = rng.random((1, 3, 16, 16)).astype(np.float32)
        assert float(loss(Tensor(a), a).data) == 0.0
        b = a.copy()
        b[0, 1, 3, 4] += 0.01
        assert float(loss(Tensor(b), a).data) > 0.0

    def test_constant_offset_pixel_term(self, rng):
        a = rng.random((1, 3, 8, 8))
        assert float(loss(Tensor(a + 0.1), a, perceptual_weight=0).data) == pytest.approx(0.1, abs=1e-12)

    def test_rejects_non_finite(self):
        a = np.zeros((1, 3, 8, 8))
        a[0, 0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            loss(Tensor(a), np.zeros((1, 3, 8, 8)))


class TestMetrics:
    def test_psnr_cap_and_offset(self, rng):
        a = rng.random((9, 9, 3))
        assert psnr(a, a) == 99.0
        assert abs(psnr(a, a + 0.1) - 20.0) < 1e-9

    def test_psnr_direct_formula(self, rng):
        a, b = rng.random((12, 10, 3)), rng.random((12, 10, 3))
        mse = ((a - b) ** 2).mean()
        assert abs(psnr(a, b) - 10 * np.log10(1 / mse)) < 1e-9

    def test_psnr_decreases_with_noise(self, rng):
        a = rng.random((32, 32, 3))
        z = rng.standard_normal(a.shape)
        vals = [psnr(a, a + s * z) for s in (0.01, 0.05, 0.1)]
        assert vals[0] > vals[1] > vals[2]

    def test_ssim_identity_symmetry_negative(self, rng):
        a, b = rng.random((24, 24, 3)), rng.random((24, 24, 3))
        assert ssim(a, a) == 1.0
        assert abs(ssim(a, b) - ssim(b, a)) < 1e-12
        assert ssim(a, 1.0 - a) < 0

    def test_ssim_matches_skimage(self, rng):
        a = rng.random((40, 36))
        b = np.clip(a + 0.1 * rng.standard_normal(a.shape), 0, 1)
        ref = structural_similarity(a, b, gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
                                    data_range=1.0)
        assert abs(ssim(a, b) - ref) < 1e-6


def _view_inputs(scene, index, nbrs):
    return render_input(scene, index), [neighbor_input(scene, j) for j in nbrs]


class TestForward:
    @pytest.mark.parametrize("n", [1, 2, 5])
    def test_shapes_and_attention_range(self, small_scene, n):
        model = Enhancer(seed=1)
        pool = small_scene.split[0]
        render, nbrs = _view_inputs(small_scene, 0, choose_neighbors(small_scene, 0, pool, n))
        trace = Trace([], [], [], [], [])
        out = forward(model, render, nbrs, trace=trace)
        assert out.shape == (1, 3, 32, 32)
        for p, c in zip(trace.psi_pix, trace.psi_cam):
            assert np.all((p > 0) & (p < 1)) and np.all((c > 0) & (c < 1))

    def test_permutation_bit_identical(self, small_scene):
        model = Enhancer(seed=2)
        render, nbrs = _view_inputs(small_scene, 0, [1, 2, 3, 4, 5])
        ref = forward(model, render, nbrs).data.tobytes()
        for perm in ([4, 3, 2, 1, 0], [2, 0, 4, 1, 3]):
            assert forward(model, render, [nbrs[i] for i in perm]).data.tobytes() == ref

    def test_zero_attention_valid(self, small_scene):
        render, nbrs = _view_inputs(small_scene, 0, [1, 2])
        out = forward(Enhancer(), render, nbrs, attention=False)
        assert np.isfinite(out.data).all()

    def test_crop_box_matches_shape(self, small_scene):
        render, nbrs = _view_inputs(small_scene, 3, [2, 4])
        assert forward(Enhancer(), render, nbrs, crop_box=(4, 6, 16, 20)).shape == (1, 3, 16, 20)

    def test_relabel_invariance(self, small_scene):
        cfg = desk_config(neighbors=2)
        model = build_model(cfg)
        order = [0, 5, 3, 7, 1, 6, 2, 4]  # test view 0 stays first
        relabeled = SceneDataset([small_scene.views[i] for i in order], [small_scene.renders[i] for i in order])
        a = enhance_view(model, small_scene, 0, cfg, train_pool=[1, 2, 3, 4, 5, 6, 7])
        b = enhance_view(model, relabeled, 0, cfg, train_pool=[1, 2, 3, 4, 5, 6, 7])
        assert a.tobytes() == b.tobytes()

    def test_needs_neighbors(self, small_scene):
        with pytest.raises(ValueError):
            forward(Enhancer(), render_input(small_scene, 0), [])


class TestTraining:
    def _batch(self, scene, rng, size=4, crop=16):
        out = []
        for _ in range(size):
            i = int(rng.integers(1, 8))
            top, left = rng.integers(0, 32 - crop + 1, 2)
            out.append(Sample(scene, i, [i - 1 if i > 1 else 2], (int(top), int(left), crop, crop)))
        return out

    def test_equal_seeds_equal_traces(self, small_scene):
        traces = []
        for _ in range(2):
            cfg = desk_config(crop=16)
            model, adam, rng = build_model(cfg), AdamState(lr=cfg.lr), np.random.default_rng(0)
            traces.append([train_step(model, self._batch(small_scene, rng), adam, cfg) for _ in range(3)])
        assert traces[0] == traces[1]

    def test_batch_of_four_at_crop_64(self, degraded):
        cfg = desk_config()
        model = build_model(cfg)
        batch = [Sample(degraded, i, [i + 1], (10, 20, 64, 64)) for i in (2, 5, 9, 12)]
        value = train_step(model, batch, AdamState(lr=cfg.lr), cfg)
        assert np.isfinite(value)

    def test_loss_trend_two_view_toy(self, small_scene):
        # one target view and one neighbour
        cfg = desk_config(crop=24)
        model, adam, rng = build_model(cfg), AdamState(lr=cfg.lr), np.random.default_rng(3)
        trace = []
        for _ in range(50):
            top, left = rng.integers(0, 9, 2)
            trace.append(train_step(model, [Sample(small_scene, 2, [1], (int(top), int(left), 24, 24))], adam, cfg))
        smooth = np.convolve(trace, np.ones(10) / 10, mode="valid")
        assert smooth[-1] < smooth[0]

    def test_non_finite_aborts_with_diagnostics(self, small_scene):
        cfg = desk_config(crop=16)
        model = build_model(cfg)
        model.backbone.out.bias.data[:] = np.inf
        with pytest.raises(NumericalError, match="backbone.out.bias"):
            train_step(model, [Sample(small_scene, 2, [1], (0, 0, 16, 16))], AdamState(), cfg)

    def test_zero_budget_returns_input(self, small_scene):
        init = build_model(desk_config(seed=5)).state_dict()
        res = fit("finetune", [small_scene], desk_config(steps=0), init_state=init)
        for k, v in init.items():
            assert res.state[k].tobytes() == v.tobytes()

    def test_fit_argument_checks(self, small_scene):
        with pytest.raises(ValueError):
            fit("train", [small_scene], desk_config(steps=1))
        with pytest.raises(ValueError):
            fit("finetune", [small_scene, small_scene], desk_config(steps=1))

    def test_longer_budget_not_worse(self, small_scene):
        short = fit("finetune", [small_scene], desk_config(steps=4, crop=16, val_every=2))
        long = fit("finetune", [small_scene], desk_config(steps=8, crop=16, val_every=2))
        assert long.best_val <= short.best_val
        assert long.history[:4] == short.history

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(neighbors=0)


class TestEvaluate:
    def test_rows_per_test_view(self, degraded):
        cfg = desk_config()
        report = evaluate_scene(degraded, build_model(cfg).state_dict(), cfg)
        assert [r["index"] for r in report["per_view"]] == [0, 8, 16]
        assert set(report["mean"]) == {"psnr_in", "psnr_out", "ssim_in", "ssim_out"}
        assert report["config"]["neighbors"] == cfg.neighbors

    def test_identity_enhancer_reproduces_baseline(self, degraded):
        cfg = desk_config()
        model = build_model(cfg, dtype=np.float64)  # zero output conv + residual = identity
        report = evaluate_scene(degraded, model.state_dict(), cfg, model=model)
        for row in report["per_view"]:
            assert row["psnr_out"] == row["psnr_in"] and row["ssim_out"] == row["ssim_in"]

    def test_missing_depth_named(self, small_scene):
        from dataclasses import replace

        views = list(small_scene.views)
        bad = views[0].depth.copy()
        bad[0, 0] = np.nan
        views[0] = replace(views[0], depth=bad)
        broken = SceneDataset(views, small_scene.renders)
        with pytest.raises(ValueError, match="view 0"):
            evaluate_scene(broken, build_model(desk_config()).state_dict(), desk_config())


class TestCheckpointPacking:
    def test_meta_round_trip(self):
        cfg = desk_config(neighbors=2, residual=False, flow_iterations=2)
        state, back = unpack_checkpoint(pack_checkpoint(build_model(cfg).state_dict(), cfg))
        assert (back.neighbors, back.residual, back.flow_iterations) == (2, False, 2)
        assert not any(k.startswith("meta.") for k in state)


class TestCli:
    def test_pipeline(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"view_count": 8, "width": 32, "height": 32}))
        assert cli.main(["synth", "--spec", str(spec), "--out", str(tmp_path / "clean")]) == 0
        assert cli.main(["degrade", "--scene", str(tmp_path / "clean"), "--out", str(tmp_path / "deg")]) == 0
        assert cli.main(["perturb", "--scene", str(tmp_path / "deg"), "--preset", "small", "--out",
                         str(tmp_path / "noisy")]) == 0
        assert cli.main(["pretrain", "--scenes", str(tmp_path / "deg"), "--budget", "2", "--out-ckpt",
                         str(tmp_path / "a.ckpt")]) == 0
        assert cli.main(["finetune", "--scene", str(tmp_path / "noisy"), "--ckpt", str(tmp_path / "a.ckpt"),
                         "--budget", "1", "--out-ckpt", str(tmp_path / "b.ckpt")]) == 0
        assert cli.main(["enhance", "--scene", str(tmp_path / "noisy"), "--ckpt", str(tmp_path / "b.ckpt"),
                         "--view-index", "0", "--out-png", str(tmp_path / "v0.png")]) == 0
        assert cli.main(["eval", "--scene", str(tmp_path / "noisy"), "--ckpt", str(tmp_path / "b.ckpt"),
                         "--report-json", str(tmp_path / "r.json")]) == 0
        report = json.loads((tmp_path / "r.json").read_text())
        assert len(report["per_view"]) == 1 and "mean" in report and "config" in report
        assert (tmp_path / "v0.png").stat().st_size > 0
        assert "meta.neighbors" in load_checkpoint(tmp_path / "b.ckpt")

    def test_errors_exit_nonzero(self, tmp_path, capsys):
        assert cli.main(["eval", "--scene", str(tmp_path / "none"), "--ckpt", str(tmp_path / "x.ckpt"),
                         "--report-json", str(tmp_path / "r.json")]) != 0
        assert "error" in capsys.readouterr().err
        assert cli.main(["perturb", "--scene", str(tmp_path), "--out", str(tmp_path / "o")]) != 0

    def test_budget_parsing(self):
        assert cli.parse_budget("200") == (200, None)
        assert cli.parse_budget("1m")[1] == 60.0
        assert cli.parse_budget("90s")[1] == 90.0
        with pytest.raises(Exception):
            cli.parse_budget("soon")
