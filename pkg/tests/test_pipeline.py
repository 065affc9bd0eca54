"""Tests for image I/O, degradations, metrics, training and evaluation."""
import importlib
import math

import numpy as np
import pytest
from PIL import Image
from scipy.signal import correlate2d

from matir.errors import ConfigError, ContractError, DimensionError, FormatError, TrainingError
from matir.model.config import preset
from matir.model.network import MatIrModel
from matir.pipeline.degrade import add_noise, bicubic_down, degrade, make_degradation
from matir.pipeline.evaluate import CSV_HEADER, evaluate, restore
from matir.pipeline.images import ImagePlane, list_images, read_image, write_image
from matir.pipeline.metrics import SSIM_K1, gaussian_window, luminance, psnr, ssim
from matir.pipeline.optim import Adam, MultiStepSchedule, default_milestones
from matir.pipeline.report import StepRecord, TrainingReport
from matir.pipeline.train import PatchSampler, dihedral, fixed_noisy_images, make_train_spec, run_ablation, train
from matir.tensor.core import Tensor


def flat(value: int, height: int = 16, width: int = 16) -> ImagePlane:
    return ImagePlane(np.full((height, width, 3), value, dtype=np.uint8))


def quick_spec(**overrides):
    fields = dict(patch_size=8, batch_size=1, max_steps=2, val_every=1, val_patches=1, seed=3)
    fields.update(overrides)
    return make_train_spec(**fields)


class TestImages:
    """Tests for ImagePlane and file I/O."""

    def test_rejects_float_pixels(self):
        with pytest.raises(ContractError, match="uint8"):
            ImagePlane(np.zeros((2, 2, 3)))

    def test_rejects_two_channels(self):
        with pytest.raises(ContractError, match="H x W"):
            ImagePlane(np.zeros((2, 2, 2), dtype=np.uint8))

    def test_array_round_trip(self, make_image):
        img = make_image(8, 12)
        back = ImagePlane.from_array(img.to_array())
        assert np.array_equal(back.pixels, img.pixels)
        assert img.to_tensor().shape == (3, 8, 12)

    def test_from_array_clamps(self):
        planes = np.stack([np.full((2, 2), v) for v in (-0.5, 0.5, 1.5)])
        assert ImagePlane.from_array(planes).pixels[0, 0].tolist() == [0, 128, 255]

    @pytest.mark.parametrize("suffix", [".png", ".ppm"])
    def test_file_round_trip(self, tmp_path, make_image, suffix):
        img = make_image(9, 7, seed=4)
        path = tmp_path / f"img{suffix}"
        write_image(path, img)
        assert np.array_equal(read_image(path).pixels, img.pixels)

    def test_ppm_header_with_comment(self, tmp_path):
        payload = bytes(range(12))
        path = tmp_path / "c.ppm"
        path.write_bytes(b"P6\n# made by hand\n2 2\n255\n" + payload)
        assert read_image(path).pixels.reshape(-1).tolist() == list(payload)

    def test_truncated_ppm(self, tmp_path):
        path = tmp_path / "t.ppm"
        path.write_bytes(b"P6\n4 4\n255\n" + bytes(10))
        with pytest.raises(FormatError, match="truncated"):
            read_image(path)

    def test_sixteen_bit_ppm_rejected(self, tmp_path):
        path = tmp_path / "w.ppm"
        path.write_bytes(b"P6\n1 1\n65535\n" + bytes(6))
        with pytest.raises(FormatError, match="8-bit"):
            read_image(path)

    def test_grayscale_png(self, tmp_path):
        path = tmp_path / "g.png"
        Image.fromarray(np.full((4, 5), 77, dtype=np.uint8)).save(path)
        img = read_image(path)
        assert img.channels == 1
        assert img.to_rgb().pixels.shape == (4, 5, 3)

    def test_undecodable_file(self, image_dir):
        with pytest.raises(FormatError, match="cannot decode"):
            read_image(image_dir / "broken.png")

    def test_missing_file(self, tmp_path):
        with pytest.raises(FormatError, match="cannot read"):
            read_image(tmp_path / "absent.png")

    def test_list_images_sorted(self, image_dir):
        (image_dir / "notes.txt").write_text("skip me")
        names = [p.name for p in list_images(image_dir)]
        assert names == ["broken.png", "img_0.png", "img_1.png", "img_2.png"]

    def test_list_images_missing_directory(self, tmp_path):
        with pytest.raises(FormatError, match="not found"):
            list_images(tmp_path / "nowhere")


class TestDegrade:
    """Tests for bicubic downscaling and Gaussian noise."""

    def test_bicubic_needs_scale(self):
        with pytest.raises(ConfigError, match="scale"):
            make_degradation(kind="bicubic", scale=1)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError, match="kind"):
            make_degradation(kind="jpeg")

    def test_bicubic_shape(self, make_image):
        assert bicubic_down(make_image(16, 12), 4).pixels.shape == (4, 3, 3)

    def test_bicubic_constant_preserved(self):
        assert np.array_equal(bicubic_down(flat(100), 2).pixels, flat(100, 8, 8).pixels)

    def test_bicubic_not_divisible(self, make_image):
        with pytest.raises(ContractError, match="not divisible"):
            bicubic_down(make_image(10, 12), 3)

    def test_zero_sigma_is_identity(self, make_image):
        img = make_image(8, 8)
        assert add_noise(img, 0.0, seed=1) is img

    def test_noise_seeded(self, make_image):
        img = make_image(8, 8)
        spec = make_degradation(kind="noise", sigma=25, seed=9)
        assert np.array_equal(degrade(img, spec).pixels, degrade(img, spec).pixels)
        assert not np.array_equal(degrade(img, spec).pixels, degrade(img, spec.with_seed(10)).pixels)

    def test_noise_std(self):
        noisy = add_noise(flat(128, 64, 64), 25.0, seed=0)
        diff = noisy.pixels.astype(np.float64) - 128.0
        assert abs(np.std(diff) - 25.0) < 2.5


class TestMetrics:
    """Tests for PSNR and SSIM."""

    def test_psnr_identical_is_capped(self, make_image):
        img = make_image(16, 16)
        assert psnr(img, img) == 100.0

    def test_psnr_falls_as_noise_grows(self, make_image):
        clean = make_image(64, 64)
        scores = [psnr(add_noise(clean, sigma, seed=5), clean) for sigma in (5, 15, 25, 50)]
        assert all(a > b for a, b in zip(scores, scores[1:]))

    def test_psnr_off_by_one(self):
        assert psnr(flat(100), flat(101)) == pytest.approx(20 * math.log10(255), abs=1e-9)
        assert psnr(flat(100), flat(101)) == pytest.approx(48.13, abs=0.01)

    def test_psnr_black_white(self):
        assert psnr(flat(0), flat(255)) == pytest.approx(0.0, abs=1e-9)

    def test_psnr_all_channels(self):
        a = flat(100)
        b = ImagePlane(a.pixels.copy())
        b.pixels[:, :, 0] += 3
        assert psnr(a, b, y_channel_only=False) == pytest.approx(10 * math.log10(255 ** 2 / 3.0), abs=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            psnr(flat(0, 8, 8), flat(0, 8, 9))

    def test_ssim_identical(self, make_image):
        img = make_image(32, 32)
        assert ssim(img, img) == pytest.approx(1.0, abs=1e-12)

    def test_ssim_symmetric(self, make_image):
        a, b = make_image(24, 24, seed=1), make_image(24, 24, seed=2)
        assert ssim(a, b) == ssim(b, a)

    def test_ssim_brightness_shift(self, make_image):
        a = ImagePlane.from_array(make_image(24, 24).to_array() * 0.7)
        b = ImagePlane(a.pixels + 10)
        ya = luminance(a)
        window = gaussian_window()
        mu_a = correlate2d(ya, window, mode="valid")
        mu_b = mu_a + 10.0
        c1 = (SSIM_K1 * 255.0) ** 2
        expected = float(np.mean((2 * mu_a * mu_b + c1) / (mu_a ** 2 + mu_b ** 2 + c1)))
        assert ssim(a, b) < 1.0
        assert ssim(a, b) == pytest.approx(expected, abs=1e-9)

    def test_ssim_independent_noise_near_zero(self, rng):
        a = ImagePlane(rng.integers(0, 256, size=(64, 64, 3), dtype=np.uint8))
        b = ImagePlane(rng.integers(0, 256, size=(64, 64, 3), dtype=np.uint8))
        assert abs(ssim(a, b)) < 0.1

    def test_ssim_needs_window(self):
        with pytest.raises(ContractError, match="11x11"):
            ssim(flat(0, 8, 8), flat(0, 8, 8))


class TestOptim:
    """Tests for Adam and the learning-rate schedule."""

    def test_first_adam_step_moves_by_lr(self):
        p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
        p.grad = np.array([0.5, -3.0])
        opt = Adam([("w", p)], lr=0.1)
        opt.step()
        assert np.allclose(p.data, [0.9, -1.9], atol=1e-6)
        opt.zero_grad()
        assert p.grad is None

    def test_zero_gradient_step_is_exact_noop(self):
        p = Tensor(np.array([0.3, -1.7, 5.0]), requires_grad=True)
        before = p.data.copy()
        p.grad = np.zeros(3)
        opt = Adam([("w", p)], lr=0.1)
        opt.step()
        assert np.array_equal(p.data, before)
        assert opt.step_count == 1

    def test_parameters_without_grad_untouched(self):
        p = Tensor(np.ones(3), requires_grad=True)
        Adam([("w", p)], lr=0.1).step()
        assert np.array_equal(p.data, np.ones(3))

    def test_schedule_halves_at_milestones(self):
        schedule = MultiStepSchedule(1.0, [4, 2])
        assert [schedule.lr_at(s) for s in (0, 1, 2, 3, 4, 9)] == [1.0, 1.0, 0.5, 0.5, 0.25, 0.25]

    def test_default_milestones(self):
        assert default_milestones(100) == [50, 75, 90]
        assert default_milestones(1) == []


class TestReport:
    """Tests for the training report format."""

    def test_step_lines(self):
        assert StepRecord(1, 0.5, 2e-4).to_line() == "1,0.5,0.0002"
        assert StepRecord(0, 0.25, 1e-3, 30.5).to_line() == "0,0.25,0.001,30.500000"

    def test_smoothing(self):
        report = TrainingReport(header={"seed": "0"})
        for step, val in enumerate([10.0, None, 20.0, 30.0, 40.0]):
            report.add(StepRecord(step, 1.0, 1e-3, val))
        assert report.final_val_psnr == 40.0
        assert report.smoothed_val_psnr == 30.0
        text = report.to_text()
        assert text.startswith("# seed: 0\nstep,loss,lr[,val_psnr]\n")
        assert "# val_psnr_avg3: 30.000000" in text


class TestTrain:
    """Tests for the training loop and ablation runs."""

    def test_dihedral_group(self, rng):
        x = rng.integers(0, 256, size=(3, 5, 1))
        outs = [dihedral(x, k) for k in range(8)]
        assert np.array_equal(outs[0], x)
        assert np.array_equal(outs[4], x[:, ::-1])
        assert len({o.tobytes() + bytes(o.shape) for o in outs}) == 8

    def test_zero_steps_reports_baseline_only(self, tiny_denoise_config, make_image):
        model = MatIrModel(tiny_denoise_config)
        report = train(model, [make_image(16, 16)], quick_spec(max_steps=0))
        assert [r.step for r in report.records] == [0]
        assert report.final_val_psnr is not None

    def test_steps_update_parameters(self, tiny_denoise_config, make_image):
        model = MatIrModel(tiny_denoise_config)
        before = model.conv_first.weight.data.copy()
        report = train(model, [make_image(16, 16)], quick_spec())
        assert [r.step for r in report.records] == [0, 1, 2]
        assert all(r.val_psnr is not None for r in report.records)
        assert not np.array_equal(before, model.conv_first.weight.data)

    def test_same_seed_identical_reports(self, tiny_denoise_config, make_image, tmp_path):
        images = [make_image(16, 16, seed=s) for s in range(2)]
        paths = [tmp_path / "a.txt", tmp_path / "b.txt"]
        for path in paths:
            train(MatIrModel(tiny_denoise_config), images, quick_spec(), report_path=path)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_sr_training_uses_scaled_crop(self, tiny_config, make_image):
        report = train(MatIrModel(tiny_config), [make_image(16, 16)], quick_spec(max_steps=1))
        assert report.header["patch_size"] == "8"

    def test_patch_not_window_multiple(self, tiny_denoise_config, make_image):
        with pytest.raises(ConfigError, match="window_size"):
            train(MatIrModel(tiny_denoise_config), [make_image(16, 16)], quick_spec(patch_size=6))

    def test_empty_dataset(self, tiny_denoise_config, tmp_path):
        with pytest.raises(TrainingError, match="no readable images"):
            train(MatIrModel(tiny_denoise_config), tmp_path, quick_spec())

    def test_images_smaller_than_crop(self, tiny_denoise_config, make_image):
        with pytest.raises(TrainingError, match="smaller"):
            train(MatIrModel(tiny_denoise_config), [make_image(4, 4)], quick_spec())

    def test_folder_dataset_skips_broken(self, tiny_denoise_config, image_dir):
        report = train(MatIrModel(tiny_denoise_config), image_dir, quick_spec(max_steps=0))
        assert report.header["train_images"] == "2"
        assert report.header["val_images"] == "1"
        assert report.header["validation"] == "held-out images"

    def test_held_out_images_never_sampled(self, tiny_denoise_config, make_image, monkeypatch):
        module = importlib.import_module("matir.pipeline.train")
        seen = []

        class RecordingSampler(PatchSampler):
            def __init__(self, images, *args, **kwargs):
                seen.append(list(images))
                super().__init__(images, *args, **kwargs)

        monkeypatch.setattr(module, "PatchSampler", RecordingSampler)
        images = [make_image(16, 16, seed=s) for s in range(3)]
        report = train(MatIrModel(tiny_denoise_config), images, quick_spec(max_steps=1))
        assert len(seen[0]) == 2
        assert not any(np.array_equal(img.pixels, images[-1].pixels) for img in seen[0])
        assert report.header["validation"] == "held-out images"

    def test_validation_folder(self, tiny_denoise_config, make_image, image_dir):
        report = train(MatIrModel(tiny_denoise_config), [make_image(16, 16)], quick_spec(max_steps=0),
                       val_dataset=image_dir)
        assert report.header["validation"] == "held-out folder"
        assert report.header["train_images"] == "1"
        assert report.header["val_images"] == "1"

    def test_fixed_noise_reuses_one_realisation(self, make_image):
        images = [make_image(8, 8)]
        spec = make_degradation(kind="noise", sigma=25)
        noisy = fixed_noisy_images(images, spec, seed=0)
        fixed = PatchSampler(images, 8, spec, augment=False, seed=1, noisy=noisy)
        first, second = fixed.batch(1, None)[0], fixed.batch(1, None)[0]
        assert np.array_equal(first.degraded.pixels, second.degraded.pixels)
        assert np.array_equal(first.degraded.pixels, noisy[0].pixels)
        fresh = PatchSampler(images, 8, spec, augment=False, seed=1)
        first, second = fresh.batch(1, None)[0], fresh.batch(1, None)[0]
        assert not np.array_equal(first.degraded.pixels, second.degraded.pixels)

    def test_fixed_noise_validates_on_training_pair(self, tiny_denoise_config, make_image):
        report = train(MatIrModel(tiny_denoise_config), [make_image(16, 16)], quick_spec(max_steps=0, fixed_noise=True))
        assert report.header["fixed_noise"] == "True"
        assert report.header["validation"] == "training images"

    def test_ablation_pairs_runs(self, tiny_denoise_config, make_image):
        reduced = preset("tiny", task="denoise", scale=1, remove_irss=True)
        result = run_ablation(tiny_denoise_config, reduced, [make_image(16, 16)], quick_spec(max_steps=1), "drop_irss")
        assert result.full_params > result.reduced_params
        text = result.to_text()
        assert "drop_irss" in text and "delta_val_psnr" in text

    @pytest.mark.slow
    def test_overfit_single_image(self, tiny_denoise_config, make_image):
        tspec = make_train_spec(
            patch_size=32, batch_size=1, max_steps=2000, sigma=15, val_every=500, val_patches=1, augment=False,
            fixed_noise=True,
        )
        report = train(MatIrModel(tiny_denoise_config), [make_image(32, 32)], tspec)
        assert report.header["validation"] == "training images"
        assert report.final_val_psnr > 40.0
        assert report.records[0].loss >= 10.0 * report.losses[-1]

    @pytest.mark.slow
    def test_denoising_generalises(self, tiny_denoise_config, make_image, tmp_path):
        held_out = tmp_path / "held_out"
        held_out.mkdir()
        for s in range(5):
            write_image(held_out / f"{s}.png", make_image(64, 64, seed=100 + s))
        model = MatIrModel(tiny_denoise_config)
        train(model, [make_image(64, 64, seed=s) for s in range(24)],
              make_train_spec(patch_size=32, batch_size=2, max_steps=1500, sigma=25, val_every=500))
        result = evaluate(model, held_out, make_degradation(kind="noise", sigma=25, seed=7))
        assert result.mean().psnr - result.mean_baseline().psnr >= 2.0

    @pytest.mark.slow
    def test_super_resolution_beats_bicubic(self, tiny_config, make_image, tmp_path):
        held_out = tmp_path / "held_out"
        held_out.mkdir()
        for s in range(5):
            write_image(held_out / f"{s}.png", make_image(64, 64, seed=100 + s))
        model = MatIrModel(tiny_config)
        train(model, [make_image(64, 64, seed=s) for s in range(24)],
              make_train_spec(patch_size=16, batch_size=2, max_steps=1500, val_every=500))
        result = evaluate(model, held_out, make_degradation(kind="bicubic", scale=2))
        assert result.mean().psnr - result.mean_baseline().psnr >= 0.3

    @pytest.mark.slow
    def test_four_directions_beat_one(self, make_image):
        images = [make_image(32, 32, seed=s) for s in range(8)]
        wins = 0
        for seed in range(5):
            full = preset("tiny", task="denoise", scale=1, seed=seed)
            reduced = preset("tiny", task="denoise", scale=1, seed=seed, scan_directions=1)
            tspec = make_train_spec(patch_size=16, batch_size=2, max_steps=300, sigma=25, val_every=100, seed=seed)
            result = run_ablation(full, reduced, images, tspec, "dirs_1")
            wins += result.delta <= 0
        assert wins >= 4


class TestEvaluate:
    """Tests for restore and folder evaluation."""

    def test_restore_pads_and_crops(self, tiny_denoise_config, make_image):
        model = MatIrModel(tiny_denoise_config)
        model.zero_residual_branches()
        img = make_image(10, 13)
        assert np.array_equal(restore(model, img).pixels, img.pixels)

    def test_restore_sr_shape(self, tiny_config, make_image):
        assert restore(MatIrModel(tiny_config), make_image(6, 9)).pixels.shape == (12, 18, 3)

    def test_identity_model_noiseless(self, tiny_denoise_config, image_dir, tmp_path):
        model = MatIrModel(tiny_denoise_config)
        model.zero_residual_branches()
        csv_path = tmp_path / "scores.csv"
        result = evaluate(model, image_dir, make_degradation(kind="noise", sigma=0), csv_path=csv_path)
        assert [r.name for r in result.results] == ["img_0.png", "img_1.png", "img_2.png"]
        assert result.skipped == 1
        assert result.mean().psnr == 100.0
        assert result.mean().ssim == pytest.approx(1.0, abs=1e-12)
        text = csv_path.read_text()
        assert text.startswith("# config_hash: ")
        assert "# version: " in text and "# seed: 0" in text
        lines = [line for line in text.splitlines() if not line.startswith("#")]
        assert lines[0] == CSV_HEADER
        assert len(lines) == 4
        assert result.to_table().startswith("# config_hash: ")
        assert "skipped: 1" in result.to_table()

    def test_noisy_baseline_is_input(self, tiny_denoise_config, image_dir):
        model = MatIrModel(tiny_denoise_config)
        model.zero_residual_branches()
        result = evaluate(model, image_dir, make_degradation(kind="noise", sigma=25, seed=1))
        for r in result.results:
            assert r.restored.psnr == r.baseline.psnr

    def test_sr_identity_matches_bicubic_baseline(self, tiny_config, image_dir):
        model = MatIrModel(tiny_config)
        model.zero_residual_branches()
        result = evaluate(model, image_dir, make_degradation(kind="bicubic", scale=2))
        for r in result.results:
            assert r.restored.psnr == pytest.approx(r.baseline.psnr, abs=0.05)

    def test_empty_folder(self, tiny_denoise_config, tmp_path):
        result = evaluate(MatIrModel(tiny_denoise_config), tmp_path, make_degradation(kind="noise", sigma=0))
        assert result.results == [] and result.mean() is None
