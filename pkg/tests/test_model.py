"""Unit tests for configuration, the network, census and checkpoints."""
import numpy as np
import pytest

from matir.errors import ConfigError, ContractError, DimensionError, FormatError
from matir.model.census import FLOP_TERMS, count_params, estimate_flops, flops_breakdown
from matir.model.checkpoint import load_checkpoint, save_checkpoint, sidecar_path
from matir.model.config import PRESETS, config_hash, load_config, make_config, preset, save_config
from matir.model.network import MatIrModel, build, pad_to_multiple, upsample_stages
from matir.resample import resize_array, resize_matrix, upsample_tensor
from matir.tensor import ops
from matir.tensor.core import Tensor
from matir.tensor.gradcheck import check_gradients

# Tiny preset, counted by hand from the layer shapes.
TINY_TRANSFORMER = (
    32            # norm1
    + 816 + 320 + 16 + 368 + 16 + 272  # twla: qkv, phi, u, psi, v, proj
    + 32 + 1072   # norm2, ffn1
    + 32 + 768    # norm3, cga
    + 32 + 1072   # norm4, ffn2
)
TINY_IRSS = 32 + 1024 + 320 + 4 * (594 + 96 + 256 + 32) + 512
TINY_STEM = 448
TINY_SR_HEAD = 2320 + 9280 + 435
TINY_SR_PARAMS = TINY_STEM + 2 * TINY_TRANSFORMER + 2 * TINY_IRSS + TINY_SR_HEAD
TINY_DENOISE_PARAMS = TINY_STEM + 2 * TINY_TRANSFORMER + 2 * TINY_IRSS + 435


class TestConfig:
    """Tests for MatIrConfig validation, presets and the config file."""

    def test_tiny_preset(self, tiny_config):
        assert tiny_config.channels == 16
        assert tiny_config.layer_kinds() == ["T", "M", "T", "M"]
        assert (tiny_config.window_size, tiny_config.neighbors, tiny_config.state_size) == (4, 3, 8)

    def test_presets_build_configs(self):
        for name in PRESETS:
            assert preset(name).channels in (16, 96, 144, 180)

    def test_unknown_preset(self):
        with pytest.raises(ConfigError, match="unknown preset"):
            preset("huge")

    def test_depth_one_rejected(self):
        with pytest.raises(ConfigError, match="depth"):
            make_config(depth=1)

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="colour"):
            make_config(colour="red")

    @pytest.mark.parametrize("fields, message", [
        ({"task": "denoise", "scale": 2}, "scale"),
        ({"task": "sr", "scale": 1}, "scale"),
        ({"layer_pattern": "TX"}, "layer_pattern"),
        ({"scan_directions": 3}, "scan_directions"),
        ({"conv_kernel": 4}, "conv_kernel"),
        ({"channels": 10, "heads": 4}, "heads"),
        ({"remove_twla": True, "remove_cga": True}, "remove_twla"),
        ({"window_size": 4, "neighbors": 6}, "neighbors"),
    ])
    def test_invalid_combinations(self, fields, message):
        with pytest.raises(ConfigError, match=message):
            make_config(**fields)

    def test_neighbors_unchecked_without_twla(self):
        assert make_config(window_size=4, neighbors=20, remove_twla=True).neighbors == 20

    def test_remove_irss_drops_mamba_layers(self):
        assert preset("tiny", remove_irss=True).layer_kinds() == ["T", "T"]

    def test_file_round_trip(self, tmp_path, tiny_config):
        path = tmp_path / "tiny.cfg"
        save_config(tiny_config, path)
        assert "remove_twla=false" in path.read_text()
        assert load_config(path) == tiny_config

    def test_file_overrides(self, tmp_path, tiny_config):
        path = tmp_path / "tiny.cfg"
        save_config(tiny_config, path)
        assert load_config(path, seed=7).seed == 7

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "absent.cfg")

    def test_bad_value_in_file(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("channels=many\n")
        with pytest.raises(ConfigError, match="channels"):
            load_config(path)

    def test_hash_stable_and_sensitive(self, tiny_config):
        assert config_hash(tiny_config) == config_hash(preset("tiny"))
        assert config_hash(tiny_config) != config_hash(preset("tiny", seed=1))
        assert len(config_hash(tiny_config)) == 12


class TestNetwork:
    """Tests for model assembly and forward."""

    def test_census_by_hand(self, tiny_config, tiny_denoise_config):
        assert count_params(MatIrModel(tiny_config)) == TINY_SR_PARAMS == 33_779
        assert count_params(MatIrModel(tiny_denoise_config)) == TINY_DENOISE_PARAMS

    def test_same_seed_same_parameters(self, tiny_config):
        a = dict(build(tiny_config).named_parameters())
        b = dict(build(tiny_config).named_parameters())
        assert list(a) == list(b)
        assert all(np.array_equal(a[n].data, b[n].data) for n in a)

    def test_different_seed_differs(self, tiny_config):
        a = build(tiny_config).conv_first.weight.data
        b = build(preset("tiny", seed=1)).conv_first.weight.data
        assert not np.array_equal(a, b)

    @pytest.mark.parametrize("scale, stages", [(1, ()), (2, (2,)), (3, (3,)), (4, (2, 2))])
    def test_upsample_stages(self, scale, stages):
        assert upsample_stages(scale) == stages

    @pytest.mark.parametrize("scale", [2, 3, 4])
    def test_sr_output_shape(self, scale):
        model = MatIrModel(preset("tiny", scale=scale))
        assert model(Tensor(np.zeros((3, 8, 8)))).shape == (3, 8 * scale, 8 * scale)

    def test_sr_32_to_64(self, tiny_config, rng):
        model = MatIrModel(tiny_config)
        assert model(Tensor(rng.uniform(size=(3, 32, 32)))).shape == (3, 64, 64)

    def test_denoise_identity_when_branches_zeroed(self, tiny_denoise_config, rng):
        model = MatIrModel(tiny_denoise_config)
        model.zero_residual_branches()
        x = rng.uniform(size=(3, 8, 8))
        assert np.array_equal(model(Tensor(x)).data, x)

    def test_sr_zeroed_is_bicubic(self, tiny_config, rng):
        model = MatIrModel(tiny_config)
        model.zero_residual_branches()
        x = rng.uniform(size=(3, 8, 8))
        assert np.allclose(model(Tensor(x)).data, resize_array(x, 16, 16), atol=1e-12)

    def test_input_must_be_tiled(self, tiny_config):
        with pytest.raises(ContractError, match="pad"):
            MatIrModel(tiny_config)(Tensor(np.zeros((3, 6, 8))))

    def test_input_must_be_rgb(self, tiny_config):
        with pytest.raises(DimensionError, match="3 x H x W"):
            MatIrModel(tiny_config)(Tensor(np.zeros((1, 8, 8))))

    def test_gradient_check_small_input(self, tiny_denoise_config, rng):
        model = MatIrModel(tiny_denoise_config)
        target = rng.uniform(size=(3, 4, 4))
        f = lambda x: ops.l1_loss(model(x), target)  # noqa: E731
        assert check_gradients(f, Tensor(rng.uniform(size=(3, 4, 4)))) < 1e-4

    @pytest.mark.slow
    def test_gradient_check_8x8(self, tiny_denoise_config, rng):
        model = MatIrModel(tiny_denoise_config)
        target = rng.uniform(size=(3, 8, 8))
        f = lambda x: ops.l1_loss(model(x), target)  # noqa: E731
        assert check_gradients(f, Tensor(rng.uniform(size=(3, 8, 8)))) < 1e-4


class TestPadding:
    """Tests for pad_to_multiple."""

    def test_no_padding_needed(self, rng):
        x = rng.normal(size=(3, 8, 8))
        padded, size = pad_to_multiple(x, 4)
        assert padded is x and size == (8, 8)

    def test_reflect_bottom_right(self, rng):
        x = rng.normal(size=(3, 6, 7))
        padded, size = pad_to_multiple(x, 4)
        assert padded.shape == (3, 8, 8) and size == (6, 7)
        assert np.array_equal(padded[:, :6, :7], x)
        assert np.array_equal(padded[:, 6, :7], x[:, 4, :])

    def test_tiny_image_falls_back_to_edge(self):
        x = np.arange(3.0).reshape(3, 1, 1)
        padded, _ = pad_to_multiple(x, 4)
        assert padded.shape == (3, 4, 4)
        assert np.array_equal(padded[:, 3, 3], x[:, 0, 0])


class TestResample:
    """Tests for the bicubic resize matrices."""

    def test_rows_normalised(self):
        for n_in, n_out in ((8, 16), (16, 8), (9, 3)):
            assert np.allclose(resize_matrix(n_in, n_out).sum(axis=1), 1.0, atol=1e-12)

    def test_constant_preserved(self):
        x = np.full((3, 6, 6), 0.4)
        assert np.allclose(resize_array(x, 12, 12), 0.4, atol=1e-12)
        assert np.allclose(resize_array(x, 3, 3), 0.4, atol=1e-12)

    def test_matrix_read_only(self):
        with pytest.raises(ValueError):
            resize_matrix(4, 8)[0, 0] = 1.0

    def test_upsample_tensor_matches_array(self, rng):
        x = rng.normal(size=(2, 4, 5))
        assert np.allclose(upsample_tensor(Tensor(x), 2).data, resize_array(x, 8, 10), atol=1e-12)


class TestCensus:
    """Tests for the MAC breakdown."""

    def test_terms(self, tiny_config):
        terms = flops_breakdown(MatIrModel(tiny_config), 8, 8)
        assert tuple(terms) == FLOP_TERMS
        assert terms["stem"] == 27_648
        assert all(v > 0 for v in terms.values())
        assert estimate_flops(MatIrModel(tiny_config), 8, 8) == sum(terms.values())

    def test_irss_term_scales_with_pixels(self, tiny_config):
        model = MatIrModel(tiny_config)
        assert flops_breakdown(model, 16, 16)["irss"] == 4 * flops_breakdown(model, 8, 8)["irss"]

    def test_sr_head_counts_upsampled_resolution(self, tiny_config):
        model = MatIrModel(tiny_config)
        head = flops_breakdown(model, 8, 8)["head"]
        assert head == 16 * 16 * 9 * 64 + 16 * 64 * 9 * 64 + 16 * 3 * 9 * 256

    def test_zero_layer_model(self, tiny_config):
        model = MatIrModel(tiny_config.model_copy(update={"depth": 0}))
        terms = flops_breakdown(model, 8, 8)
        assert terms["twla"] == terms["cga"] == terms["ffn"] == terms["irss"] == 0
        assert estimate_flops(model, 8, 8) == terms["stem"] + terms["head"]

    def test_remove_irss_has_fewer_params(self, tiny_config):
        full = count_params(MatIrModel(tiny_config))
        reduced = count_params(MatIrModel(preset("tiny", remove_irss=True)))
        assert full - reduced == 2 * TINY_IRSS


class TestCheckpoint:
    """Tests for save_checkpoint / load_checkpoint."""

    def test_round_trip(self, tmp_path, tiny_config, rng):
        model = MatIrModel(tiny_config)
        path = tmp_path / "tiny.ckpt"
        save_checkpoint(model, path)
        assert sidecar_path(path).is_file()
        loaded = load_checkpoint(path)
        x = Tensor(rng.uniform(size=(3, 8, 8)))
        assert np.max(np.abs(loaded(x).data - model(x).data)) < 1e-5
        assert loaded.config == tiny_config

    def test_truncated(self, tmp_path, tiny_config):
        path = tmp_path / "tiny.ckpt"
        save_checkpoint(MatIrModel(tiny_config), path)
        path.write_bytes(path.read_bytes()[:100])
        with pytest.raises(FormatError, match="truncated"):
            load_checkpoint(path)

    def test_census_mismatch_names_counts(self, tmp_path, tiny_config):
        path = tmp_path / "tiny.ckpt"
        save_checkpoint(MatIrModel(tiny_config), path)
        other = preset("tiny", channels=8)
        with pytest.raises(FormatError, match=f"expected {count_params(MatIrModel(other))} params") as info:
            load_checkpoint(path, other)
        assert info.value.found == TINY_SR_PARAMS

    def test_missing_sidecar(self, tmp_path, tiny_config):
        path = tmp_path / "tiny.ckpt"
        save_checkpoint(MatIrModel(tiny_config), path)
        sidecar_path(path).unlink()
        with pytest.raises(FormatError, match="sidecar"):
            load_checkpoint(path)
