"""Unit tests for scan paths and the image-restoration state-space block."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from matir.errors import ContractError, DimensionError
from matir.irss.block import IrssBlock, irss_forward, irss_forward_ndir
from matir.irss.paths import ALL_PATHS, ScanPath, flatten, inverse_order, path_order, paths_for, unflatten
from matir.tensor import ops
from matir.tensor.core import Tensor, backward
from matir.tensor.gradcheck import check_gradients
from matir.verification.properties import center_only_dwconv, influence, unit_scale


def grid_letters(path: ScanPath) -> str:
    letters = np.array(list("abcd"))
    return "".join(letters[path_order(path, 2, 2)])


class TestPaths:
    """Tests for path orders, flatten and unflatten."""

    def test_two_by_two_orders(self):
        assert grid_letters(ScanPath.ROW_FORWARD) == "abcd"
        assert grid_letters(ScanPath.COL_FORWARD) == "acbd"
        assert grid_letters(ScanPath.ROW_BACKWARD) == "dcba"
        assert grid_letters(ScanPath.COL_BACKWARD) == "dbca"

    @settings(max_examples=60, deadline=None)
    @given(height=st.integers(1, 16), width=st.integers(1, 16), path=st.sampled_from(ALL_PATHS))
    def test_order_is_bijection(self, height, width, path):
        order = path_order(path, height, width)
        assert sorted(order.tolist()) == list(range(height * width))
        inverse = inverse_order(path, height, width)
        assert np.array_equal(order[inverse], np.arange(height * width))
        assert np.array_equal(inverse[order], np.arange(height * width))

    @pytest.mark.parametrize("path", ALL_PATHS)
    def test_round_trip(self, path, rng):
        x = rng.normal(size=(2, 3, 5))
        assert np.array_equal(unflatten(flatten(Tensor(x), path), path, 3, 5).data, x)

    def test_single_pixel_paths_agree(self, rng):
        x = Tensor(rng.normal(size=(4, 1, 1)))
        seqs = [flatten(x, p).data for p in ALL_PATHS]
        assert all(np.array_equal(s, seqs[0]) for s in seqs)

    def test_flatten_order_matches_path(self, rng):
        x = rng.normal(size=(1, 3, 4))
        seq = flatten(Tensor(x), ScanPath.COL_FORWARD).data[:, 0]
        assert np.array_equal(seq, x[0].T.reshape(-1))

    def test_unflatten_length_mismatch(self):
        with pytest.raises(DimensionError, match="3x4"):
            unflatten(Tensor(np.ones((11, 2))), ScanPath.ROW_FORWARD, 3, 4)

    @pytest.mark.parametrize("directions, expected", [
        (1, (ScanPath.ROW_FORWARD,)),
        (2, (ScanPath.ROW_FORWARD, ScanPath.ROW_BACKWARD)),
        (4, ALL_PATHS),
    ])
    def test_direction_sets(self, directions, expected):
        assert paths_for(directions) == expected

    def test_invalid_direction_count(self):
        with pytest.raises(ContractError, match="directions"):
            paths_for(3)

    def test_path_values_are_strings(self):
        assert ScanPath("col_backward") is ScanPath.COL_BACKWARD


def symmetric_dwconv(block: IrssBlock, axes) -> None:
    w = block.dwconv.weight.data
    w[...] = 0.5 * (w + np.flip(w, axis=axes))


class TestIrssBlock:
    """Tests for irss_forward and irss_forward_ndir."""

    def test_shape_preserved(self, rng):
        block = IrssBlock(rng, channels=4, state_size=4)
        assert irss_forward(block, Tensor(rng.normal(size=(4, 5, 6)))).shape == (4, 5, 6)

    def test_zero_input_zero_output(self, rng):
        block = IrssBlock(rng, channels=3, state_size=4)
        assert np.array_equal(irss_forward(block, Tensor(np.zeros((3, 4, 4)))).data, np.zeros((3, 4, 4)))

    def test_zero_out_proj_is_identity(self, rng):
        block = IrssBlock(rng, channels=3, state_size=4)
        block.out_proj.zero_()
        x = rng.normal(size=(3, 4, 4))
        assert np.array_equal(irss_forward(block, Tensor(x)).data, x)

    def test_wrong_channel_count(self, rng):
        block = IrssBlock(rng, channels=3, state_size=4)
        with pytest.raises(DimensionError, match="IrssBlock"):
            block(Tensor(np.ones((2, 4, 4))))

    def test_one_scan_per_direction(self, rng):
        assert len(IrssBlock(rng, channels=2, state_size=4, directions=4).scans) == 4
        assert len(IrssBlock(rng, channels=2, state_size=4, directions=1).scans) == 1

    def test_horizontal_flip_equivariance_on_strips(self, rng):
        block = unit_scale(IrssBlock(rng, channels=3, state_size=4, directions=2), rng)
        block.tie_scans()
        symmetric_dwconv(block, axes=-1)
        x = rng.normal(size=(3, 1, 7))
        out = block(Tensor(x)).data
        out_flipped = block(Tensor(x[:, :, ::-1].copy())).data
        assert np.max(np.abs(out_flipped - out[:, :, ::-1])) < 1e-12

    def test_rotation_equivariance_four_directions(self, rng):
        block = unit_scale(IrssBlock(rng, channels=2, state_size=4, directions=4), rng)
        block.tie_scans()
        symmetric_dwconv(block, axes=(-2, -1))
        x = rng.normal(size=(2, 4, 5))
        out = block(Tensor(x)).data
        out_rotated = block(Tensor(x[:, ::-1, ::-1].copy())).data
        assert np.max(np.abs(out_rotated - out[:, ::-1, ::-1])) < 1e-12

    def test_all_directions_equal_default_forward(self, rng):
        block = IrssBlock(rng, channels=2, state_size=4)
        x = Tensor(rng.normal(size=(2, 4, 4)))
        assert np.array_equal(irss_forward_ndir(block, x, 4).data, irss_forward(block, x).data)

    def test_single_direction_on_a_row_is_one_scan(self, rng):
        block = unit_scale(IrssBlock(rng, channels=2, state_size=4), rng)
        x = Tensor(rng.normal(size=(2, 1, 6)))
        u, z = block.pre(x)
        expected = block.post(x, block.scans[0](u), z)
        assert np.allclose(irss_forward_ndir(block, x, 1).data, expected.data, atol=1e-14)

    def test_invalid_direction_count(self, rng):
        block = IrssBlock(rng, channels=2, state_size=4)
        with pytest.raises(ContractError):
            irss_forward_ndir(block, Tensor(np.ones((2, 4, 4))), 3)

    def test_missing_directions(self, rng):
        block = IrssBlock(rng, channels=2, state_size=4, directions=2)
        with pytest.raises(ContractError, match="col_forward"):
            irss_forward_ndir(block, Tensor(np.ones((2, 4, 4))), 4)

    def test_one_direction_is_causal(self, rng):
        block = unit_scale(IrssBlock(rng, channels=2, state_size=4, directions=1), rng)
        center_only_dwconv(block)
        table = influence(block, rng.normal(size=(2, 4, 4)))
        assert np.max(np.tril(table, k=-1)) < 1e-9  # table[p, q] with q < p
        assert np.min(np.diag(table)) > 0

    def test_four_directions_reach_every_pixel(self, rng):
        block = unit_scale(IrssBlock(rng, channels=2, state_size=4, directions=4), rng)
        table = influence(block, rng.normal(size=(2, 4, 4)))
        assert np.min(table) > 1e-6 * np.max(table)

    def test_one_direction_reaches_every_later_pixel(self, rng):
        block = unit_scale(IrssBlock(rng, channels=2, state_size=4, directions=1), rng)
        center_only_dwconv(block)
        table = influence(block, rng.normal(size=(2, 4, 4)))
        assert np.min(np.triu(table, k=1)[np.triu_indices(16, k=1)]) > 1e-6 * np.max(table)

    def test_zeroed_scan_is_per_pixel_map(self, rng):
        block = unit_scale(IrssBlock(rng, channels=2, state_size=4), rng)
        k = block.dwconv.kernel_size
        block.dwconv.weight.data[...] = 0.0
        block.dwconv.weight.data[:, 0, k // 2, k // 2] = 1.0
        for scan in block.scans:
            scan.x_proj.zero_()
            scan.d.data[...] = rng.normal(size=scan.d.shape)
        x = rng.normal(size=(2, 4, 5))
        table = influence(block, x)
        assert np.array_equal(table, np.diag(np.diag(table)))
        tokens = x.reshape(2, -1).T
        mu = tokens.mean(axis=1, keepdims=True)
        normed = (tokens - mu) / np.sqrt(tokens.var(axis=1, keepdims=True) + block.norm.eps)
        xz = normed @ block.in_proj.weight.data
        u = xz[:, :block.inner] / (1.0 + np.exp(-xz[:, :block.inner]))
        z = xz[:, block.inner:]
        d = np.mean([scan.d.data for scan in block.scans], axis=0)
        expected = tokens + ((d * u) * (z / (1.0 + np.exp(-z)))) @ block.out_proj.weight.data
        assert np.allclose(block(Tensor(x)).data, expected.T.reshape(2, 4, 5), atol=1e-12)

    def test_gradient_check(self, rng):
        block = unit_scale(IrssBlock(rng, channels=2, state_size=4), rng)
        assert check_gradients(lambda x: ops.sum(ops.sin(block(x))), Tensor(rng.normal(size=(2, 4, 4)))) < 1e-4

    def test_parameter_gradients_reach_every_scan(self, rng):
        block = IrssBlock(rng, channels=2, state_size=4)
        backward(ops.sum(ops.sin(block(Tensor(rng.normal(size=(2, 3, 3)))))))
        for scan in block.scans:
            assert scan.a_log.grad is not None
            assert np.any(scan.a_log.grad != 0)

    def test_macs_linear_in_pixels(self, rng):
        block = IrssBlock(rng, channels=4, state_size=8)
        assert block.macs(16, 16) == 4 * block.macs(8, 8)
