"""
Registry of numerical properties checked by `matir verify`.

Each property returns a Measurement (measured value, tolerance, pass flag).
Suites: tensor, ssm, irss, attention, gradients, metrics.
"""
import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np

from matir.attention.cga import CgaBlock
from matir.attention.layer import TransformerLayer
from matir.attention.triangle import GeometryRegistry
from matir.attention.twla import TwlaBlock
from matir.irss import paths as scan_paths
from matir.irss.block import IrssBlock
from matir.model.config import preset
from matir.model.network import MatIrModel
from matir.pipeline.images import ImagePlane
from matir.pipeline.metrics import psnr, ssim
from matir.ssm import core as ssm_core
from matir.ssm.selective import SelectiveSsm, inverse_softplus
from matir.tensor import ops
from matir.tensor.core import Tensor
from matir.tensor.gradcheck import check_gradients
from matir.tensor.module import to_map, to_tokens

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Measurement:
    value: float
    tolerance: float
    passed: bool


@dataclass(frozen=True)
class PropertyResult:
    suite: str
    name: str
    status: str  # PASS, FAIL or ERROR
    value: Optional[float]
    tolerance: Optional[float]
    seconds: float
    detail: str = ""

    @property
    def full_name(self) -> str:
        return f"{self.suite}.{self.name}"

    def to_line(self) -> str:
        if self.status == "ERROR":
            return f"ERROR {self.full_name}: {self.detail}"
        return f"{self.status} {self.full_name}: measured {self.value:.3e} (tolerance {self.tolerance:.1e}) [{self.seconds:.2f}s]"


PropertyFn = Callable[[], Measurement]
_REGISTRY: Dict[str, Dict[str, PropertyFn]] = {}


def register(suite: str, name: str) -> Callable[[PropertyFn], PropertyFn]:
    def decorator(fn: PropertyFn) -> PropertyFn:
        _REGISTRY.setdefault(suite, {})[name] = fn
        return fn
    return decorator


def at_most(value: float, tolerance: float) -> Measurement:
    return Measurement(value=float(value), tolerance=tolerance, passed=bool(value <= tolerance))


def list_properties(pattern: Optional[str] = None) -> List[str]:
    names = [f"{suite}.{name}" for suite, props in _REGISTRY.items() for name in props]
    return [n for n in names if not pattern or pattern in n]


def run_properties(pattern: Optional[str] = None) -> List[PropertyResult]:
    """Run every property whose 'suite.name' contains pattern."""
    results = []
    for suite, props in _REGISTRY.items():
        for name, fn in props.items():
            if pattern and pattern not in f"{suite}.{name}":
                continue
            start = time.perf_counter()
            try:
                m = fn()
                status = "PASS" if m.passed else "FAIL"
                results.append(PropertyResult(suite, name, status, m.value, m.tolerance, time.perf_counter() - start))
            except Exception as e:  # noqa: BLE001 - reported as a harness error
                logger.exception(f"Property {suite}.{name} raised")
                results.append(PropertyResult(suite, name, "ERROR", None, None, time.perf_counter() - start, str(e)))
    return results


# ---------------------------------------------------------------------------
# tensor
# ---------------------------------------------------------------------------

@register("tensor", "softmax_rows_sum_to_one")
def _softmax_rows() -> Measurement:
    rng = np.random.default_rng(0)
    out = ops.softmax(Tensor(rng.normal(size=(6, 9)) * 10.0), axis=1).data
    return at_most(np.max(np.abs(out.sum(axis=1) - 1.0)), 1e-12)


@register("tensor", "softmax_shift_invariance")
def _softmax_shift() -> Measurement:
    rng = np.random.default_rng(1)
    x = rng.normal(size=(4, 7))
    a = ops.softmax(Tensor(x), axis=-1).data
    b = ops.softmax(Tensor(x + 123.456), axis=-1).data
    return at_most(np.max(np.abs(a - b)), 1e-12)


@register("tensor", "conv2d_delta_reproduces_kernel")
def _conv_delta() -> Measurement:
    rng = np.random.default_rng(2)
    w = rng.normal(size=(1, 1, 3, 3))
    x = np.zeros((1, 5, 5))
    x[0, 2, 2] = 1.0
    out = ops.conv2d(Tensor(x), Tensor(w)).data[0, 1:4, 1:4]
    # Cross-correlation: the impulse response is the kernel rotated by 180 degrees.
    return at_most(np.max(np.abs(out - w[0, 0, ::-1, ::-1])), 0.0)


@register("tensor", "primitive_gradients")
def _primitive_gradients() -> Measurement:
    rng = np.random.default_rng(3)
    b = Tensor(rng.normal(size=(5, 3)))
    weights = rng.normal(size=(4, 3))
    w = Tensor(rng.normal(size=(3, 2, 3, 3)))
    cases = [
        (lambda x: ops.sum(ops.sin(ops.matmul(x, b))), rng.normal(size=(4, 5))),
        (lambda x: ops.sum(ops.mul(ops.softmax(x, axis=-1), weights)), rng.normal(size=(4, 3))),
        (lambda x: ops.sum(ops.sin(ops.conv2d(x, w))), rng.normal(size=(2, 4, 4))),
        (lambda x: ops.sum(ops.gelu(x) * ops.silu(x) + ops.softplus(x)), rng.normal(size=(4, 8, 8))),
        (lambda x: ops.sum(ops.pixel_shuffle(x, 2) * ops.pixel_shuffle(x, 2)), rng.normal(size=(4, 3, 3))),
    ]
    return at_most(max(check_gradients(f, Tensor(x)) for f, x in cases), 1e-6)


# ---------------------------------------------------------------------------
# ssm
# ---------------------------------------------------------------------------

def _random_params(rng: np.random.Generator, n: int) -> ssm_core.SsmParams:
    return ssm_core.SsmParams(
        A=rng.normal(size=(n, n)) / math.sqrt(n) - np.eye(n),
        B=rng.normal(size=(n, 1)),
        C=rng.normal(size=(1, n)),
        D=float(rng.normal()),
    )


@register("ssm", "recurrent_convolutional_duality")
def _duality() -> Measurement:
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 9))
        length = int(rng.integers(1, 65))
        m = ssm_core.discretize(_random_params(rng, n), float(rng.uniform(0.01, 0.5)))
        x = rng.normal(size=length)
        y_rnn = ssm_core.scan_recurrent(m, x)
        y_cnn = ssm_core.scan_convolutional(m, x)
        worst = max(worst, float(np.max(np.abs(y_rnn - y_cnn))))
    return at_most(worst, 1e-10)


@register("ssm", "zoh_matches_expm")
def _zoh_expm() -> Measurement:
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 9))
        a = rng.normal(size=(n, n))
        delta = float(rng.uniform(0.0, 4.0)) / max(np.linalg.norm(a, 2), 1e-12)
        p = ssm_core.SsmParams(A=a, B=rng.normal(size=(n, 1)), C=rng.normal(size=(1, n)))
        m = ssm_core.discretize(p, delta)
        worst = max(worst, float(np.max(np.abs(m.A_bar - ssm_core.expm_oracle(delta * a)))))
    return at_most(worst, 1e-10)


@register("ssm", "zoh_regular_limits")
def _zoh_limits() -> Measurement:
    b = np.array([[1.0], [-2.0], [0.5]])
    p = ssm_core.SsmParams(A=np.zeros((3, 3)), B=b, C=np.ones((1, 3)))
    m = ssm_core.discretize(p, 0.25)
    err = max(np.max(np.abs(m.A_bar - np.eye(3))), np.max(np.abs(m.B_bar - 0.25 * b)))
    z = ssm_core.discretize(ssm_core.SsmParams.diagonal(3), 0.0)
    err = max(err, np.max(np.abs(z.A_bar - np.eye(3))), np.max(np.abs(z.B_bar)))
    return at_most(err, 0.0)


@register("ssm", "zoh_semigroup")
def _semigroup() -> Measurement:
    rng = np.random.default_rng(12)
    worst = 0.0
    for _ in range(20):
        p = _random_params(rng, int(rng.integers(1, 7)))
        d1, d2 = rng.uniform(0.0, 1.0, size=2)
        lhs = ssm_core.discretize(p, d1 + d2).A_bar
        rhs = ssm_core.discretize(p, d1).A_bar @ ssm_core.discretize(p, d2).A_bar
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return at_most(worst, 1e-9)


@register("ssm", "scalar_zoh_example")
def _scalar_example() -> Measurement:
    p = ssm_core.SsmParams(A=np.array([[-1.0]]), B=np.array([[1.0]]), C=np.array([[1.0]]), D=0.0)
    m = ssm_core.discretize(p, math.log(2.0))
    y = ssm_core.scan_recurrent(m, [1.0, 0.0, 0.0])
    err = max(abs(m.A_bar[0, 0] - 0.5), abs(m.B_bar[0, 0] - 0.5), np.max(np.abs(y - [0.5, 0.25, 0.125])))
    return at_most(err, 1e-12)


@register("ssm", "selective_reduces_to_time_invariant")
def _selective_reduction() -> Measurement:
    scan = SelectiveSsm(np.random.default_rng(13), channels=3, state_size=1)
    scan.freeze_time_invariant(delta=math.log(2.0), a=1.0, b=1.0, c=1.0, d=0.0)
    u = np.zeros((3, 3))
    u[0, :] = 1.0
    y = scan(Tensor(u)).data
    expected = np.array([0.5, 0.25, 0.125])[:, None] * np.ones((1, 3))
    return at_most(np.max(np.abs(y - expected)), 1e-12)


@register("ssm", "selective_stability_bound")
def _selective_bound() -> Measurement:
    rng = np.random.default_rng(14)
    scan = SelectiveSsm(rng, channels=4, state_size=6)
    u = Tensor(rng.normal(size=(40, 4)) * 3.0)
    delta, a, b, c = scan.projections(u)
    y = scan(u).data
    z = delta.data[:, :, None] * a.data[None]
    a_bar = np.exp(z)
    b_bar = np.abs(np.expm1(z) / a.data[None] * b.data[:, None, :])
    # max|C| is the largest per-step L1 norm of C over the state axis.
    max_c = float(np.max(np.sum(np.abs(c.data), axis=1)))
    bound = (max_c * float(np.max(b_bar)) / (1.0 - float(np.max(a_bar))) + float(np.max(np.abs(scan.d.data))))
    bound *= float(np.max(np.abs(u.data)))
    # Report the excess over the bound (<= 0 when the bound holds).
    return at_most(max(0.0, float(np.max(np.abs(y))) - bound), 0.0)


# ---------------------------------------------------------------------------
# irss
# ---------------------------------------------------------------------------

@register("irss", "path_bijection")
def _bijection() -> Measurement:
    worst = 0
    for h in range(1, 17):
        for w in range(1, 17):
            for path in scan_paths.ALL_PATHS:
                order = scan_paths.path_order(path, h, w)
                inverse = scan_paths.inverse_order(path, h, w)
                identity = np.arange(h * w)
                worst = max(worst, int(np.sum(order[inverse] != identity)), int(np.sum(inverse[order] != identity)))
    return at_most(worst, 0)


SCAN_DELTA = 0.5


def unit_scale(block: IrssBlock, rng: np.random.Generator) -> IrssBlock:
    """
    Redraw the block's projections at fan-in scale, with timescales near
    SCAN_DELTA, so cross-pixel terms of the scans are O(1) rather than the
    vanishing values of the default init.
    """
    for linear in (block.in_proj, block.out_proj):
        linear.weight.data[...] = rng.normal(size=linear.weight.shape) / math.sqrt(linear.in_features)
    block.dwconv.weight.data[...] = rng.normal(size=block.dwconv.weight.shape) / block.dwconv.kernel_size
    for scan in block.scans:
        scan.x_proj.weight.data[...] = rng.normal(size=scan.x_proj.weight.shape) / math.sqrt(scan.channels)
        scan.x_proj.bias.data[...] = 0.0
        scan.dt_proj.weight.data[...] = rng.normal(size=scan.dt_proj.weight.shape) * 0.1
        scan.dt_proj.bias.data[...] = inverse_softplus(np.full(scan.channels, SCAN_DELTA))
    return block


def center_only_dwconv(block: IrssBlock) -> None:
    """Restrict the depthwise conv to its centre tap, removing spatial mixing before the scan."""
    k = block.dwconv.kernel_size
    centre = block.dwconv.weight.data[:, :, k // 2, k // 2].copy()
    block.dwconv.weight.data[...] = 0.0
    block.dwconv.weight.data[:, :, k // 2, k // 2] = centre


LEAK_TOL = 1e-9
REACH_TOL = 1e-6


def influence(forward: Callable[[Tensor], Tensor], x: np.ndarray, eps: float = 1e-4) -> np.ndarray:
    """[P x P] max |d out_q / d in_p| over channels, by finite differences on each input pixel."""
    channels, h, w = x.shape
    base = forward(Tensor(x)).data
    table = np.zeros((h * w, h * w))
    for p in range(h * w):
        bumped = x.copy()
        bumped[:, p // w, p % w] += eps
        diff = np.abs(forward(Tensor(bumped)).data - base).max(axis=0).reshape(-1)
        table[p] = diff / eps
    return table


@register("irss", "one_direction_causality")
def _causality() -> Measurement:
    rng = np.random.default_rng(20)
    block = unit_scale(IrssBlock(rng, channels=2, state_size=4, directions=1), rng)
    center_only_dwconv(block)
    table = influence(block, rng.normal(size=(2, 4, 4)))
    # Later pixels (p) must not influence earlier outputs (q < p).
    leak = max((table[p, q] for p in range(16) for q in range(p)), default=0.0)
    return at_most(leak, LEAK_TOL)


@register("irss", "four_direction_receptive_field")
def _receptive_field() -> Measurement:
    rng = np.random.default_rng(21)
    block = unit_scale(IrssBlock(rng, channels=2, state_size=4, directions=4), rng)
    table = influence(block, rng.normal(size=(2, 4, 4)))
    # Weakest pixel-to-pixel influence relative to the strongest.
    weakest = float(np.min(table) / np.max(table))
    return Measurement(value=weakest, tolerance=REACH_TOL, passed=weakest > REACH_TOL)


@register("irss", "residual_identity")
def _irss_identity() -> Measurement:
    rng = np.random.default_rng(22)
    block = IrssBlock(rng, channels=3, state_size=4)
    block.out_proj.zero_()
    x = rng.normal(size=(3, 4, 4))
    return at_most(np.max(np.abs(block(Tensor(x)).data - x)), 0.0)


# ---------------------------------------------------------------------------
# attention
# ---------------------------------------------------------------------------

@register("attention", "attention_rows_sum_to_one")
def _rows() -> Measurement:
    rng = np.random.default_rng(30)
    x = rng.normal(size=(4, 8, 8))
    cga = CgaBlock(rng, 4)
    a = cga.attention(Tensor(x)).data
    twla = TwlaBlock(rng, 4, edge_hidden=8)
    geometry = GeometryRegistry.get(8, 8, 4, 3)
    t = twla.attention(to_tokens(Tensor(x)), geometry).data
    err = max(np.max(np.abs(a.sum(axis=1) - 1.0)), np.max(np.abs(t.sum(axis=1) - 1.0)))
    if np.min(a) <= 0 or np.min(t) <= 0:
        return Measurement(value=float(min(np.min(a), np.min(t))), tolerance=0.0, passed=False)
    return at_most(err, 1e-12)


@register("attention", "twla_logit_shift_invariance")
def _twla_shift() -> Measurement:
    rng = np.random.default_rng(31)
    twla = TwlaBlock(rng, 4, edge_hidden=8)
    geometry = GeometryRegistry.get(4, 4, 4, 3)
    x = to_tokens(Tensor(rng.normal(size=(4, 4, 4))))
    base = twla.attention(x, geometry).data
    # Moving phi's output bias adds u . db to every G_ij: one constant per head.
    twla.phi.fc2.bias.data += rng.normal(size=twla.phi.fc2.bias.shape) * 3.0
    shifted = twla.attention(x, geometry).data
    return at_most(np.max(np.abs(shifted - base)), 1e-12)


@register("attention", "twla_two_hop_locality")
def _twla_locality() -> Measurement:
    rng = np.random.default_rng(32)
    twla = TwlaBlock(rng, 2, edge_hidden=8)
    geometry = GeometryRegistry.get(4, 4, 4, 3)

    def forward(x: Tensor) -> Tensor:
        return to_map(twla(to_tokens(x), geometry), 4, 4)

    table = influence(forward, rng.normal(size=(2, 4, 4)))
    leak = 0.0
    for i in range(16):
        allowed = {i} | set(geometry.neighbors[i].tolist())
        for j in geometry.neighbors[i]:
            allowed |= set(geometry.neighbors[j].tolist())
        for p in range(16):
            if p not in allowed:
                leak = max(leak, table[p, i])
    return at_most(leak, LEAK_TOL)


@register("attention", "cga_spatial_permutation")
def _cga_permutation() -> Measurement:
    rng = np.random.default_rng(33)
    cga = CgaBlock(rng, 3)
    x = rng.normal(size=(3, 4, 5))
    perm = rng.permutation(20)
    xp = x.reshape(3, -1)[:, perm].reshape(3, 4, 5)
    a = cga.attention(Tensor(x)).data
    ap = cga.attention(Tensor(xp)).data
    out = cga(Tensor(x)).data.reshape(3, -1)[:, perm]
    outp = cga(Tensor(xp)).data.reshape(3, -1)
    return at_most(max(np.max(np.abs(a - ap)), np.max(np.abs(out - outp))), 1e-12)


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------

GRADIENT_TOL = 1e-4


@register("gradients", "cga")
def _grad_cga() -> Measurement:
    rng = np.random.default_rng(40)
    cga = CgaBlock(rng, 3)
    return at_most(check_gradients(lambda x: ops.sum(ops.sin(cga(x))), Tensor(rng.normal(size=(3, 4, 4)))), GRADIENT_TOL)


@register("gradients", "twla")
def _grad_twla() -> Measurement:
    rng = np.random.default_rng(41)
    twla = TwlaBlock(rng, 2, edge_hidden=8)
    geometry = GeometryRegistry.get(4, 4, 4, 3)
    f = lambda x: ops.sum(ops.sin(twla(to_tokens(x), geometry)))  # noqa: E731
    return at_most(check_gradients(f, Tensor(rng.normal(size=(2, 4, 4)))), GRADIENT_TOL)


@register("gradients", "irss")
def _grad_irss() -> Measurement:
    rng = np.random.default_rng(42)
    block = unit_scale(IrssBlock(rng, channels=2, state_size=4), rng)
    return at_most(check_gradients(lambda x: ops.sum(ops.sin(block(x))), Tensor(rng.normal(size=(2, 4, 4)))), GRADIENT_TOL)


@register("gradients", "transformer_layer")
def _grad_layer() -> Measurement:
    rng = np.random.default_rng(43)
    layer = TransformerLayer(rng, 2, window_size=4, neighbors=3, edge_hidden=8)
    f = lambda x: ops.sum(ops.sin(layer(x)))  # noqa: E731
    return at_most(check_gradients(f, Tensor(rng.normal(size=(2, 4, 4)))), GRADIENT_TOL)


GRADIENT_MODEL = preset("tiny", task="denoise", scale=1)


@register("gradients", "tiny_model_l1")
def _grad_model() -> Measurement:
    rng = np.random.default_rng(44)
    model = MatIrModel(GRADIENT_MODEL)
    target = rng.uniform(size=(3, 8, 8))
    f = lambda x: ops.l1_loss(model(x), target)  # noqa: E731
    return at_most(check_gradients(f, Tensor(rng.uniform(size=(3, 8, 8)))), GRADIENT_TOL)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

@register("metrics", "psnr_off_by_one")
def _psnr_one() -> Measurement:
    a = ImagePlane(np.full((16, 16, 3), 100, dtype=np.uint8))
    b = ImagePlane(np.full((16, 16, 3), 101, dtype=np.uint8))
    return at_most(abs(psnr(a, b) - 20.0 * math.log10(255.0)), 1e-6)


@register("metrics", "ssim_identity")
def _ssim_identity() -> Measurement:
    rng = np.random.default_rng(50)
    a = ImagePlane(rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8))
    return at_most(abs(ssim(a, a) - 1.0), 1e-12)
