"""
Time-invariant structured state-space machinery.

Continuous system:  h'(t) = A h(t) + B x(t),  y(t) = C h(t) + D x(t)
Zero-order hold:    A_bar = exp(dA),  B_bar = (dA)^-1 (exp(dA) - I) dB
Recurrent form:     h_k = A_bar h_{k-1} + B_bar x_k,  y_k = C h_k + D x_k
Kernel form:        y = x * (C B_bar, C A_bar B_bar, ...) + D x

B_bar is evaluated through the series sum_j d^(j+1) A^j / (j+1)! B, which is
regular at A = 0 and at d = 0.
"""
import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.linalg import expm

from matir.errors import ContractError, DimensionError
from matir.tensor.ops import softplus_array

logger = logging.getLogger(__name__)

SERIES_TOL = 1e-16
_MAX_TERMS = 64
_SCALED_NORM = 0.5


@dataclass(frozen=True)
class SsmParams:
    """Continuous-time (A, B, C, D) with state size N."""
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: float = 0.0

    def __post_init__(self):
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise DimensionError(f"A must be square, got {self.A.shape}")
        if self.B.shape != (n, 1):
            raise DimensionError(f"B must be {n}x1, got {self.B.shape}")
        if self.C.shape != (1, n):
            raise DimensionError(f"C must be 1x{n}, got {self.C.shape}")

    @property
    def state_size(self) -> int:
        return self.A.shape[0]

    @classmethod
    def diagonal(cls, state_size: int, B=None, C=None, D: float = 1.0) -> "SsmParams":
        """
        Diagonal real init: A_ii = -softplus(a_i), a_i = log of evenly spaced
        values in [1, N], so every eigenvalue is strictly negative.
        """
        a = np.log(np.linspace(1.0, float(state_size), state_size))
        A = np.diag(-softplus_array(a))
        B = np.ones((state_size, 1)) if B is None else np.asarray(B, dtype=np.float64).reshape(state_size, 1)
        C = np.ones((1, state_size)) if C is None else np.asarray(C, dtype=np.float64).reshape(1, state_size)
        return cls(A=A, B=B, C=C, D=float(D))


@dataclass(frozen=True)
class DiscreteSsm:
    """Discretised (A_bar, B_bar, C, D) at timescale delta."""
    A_bar: np.ndarray
    B_bar: np.ndarray
    C: np.ndarray
    D: float
    delta: float

    @property
    def state_size(self) -> int:
        return self.A_bar.shape[0]


@dataclass(frozen=True)
class SsmKernel:
    """Convolution taps k[t] = C A_bar^t B_bar, t in [0, L)."""
    k: np.ndarray

    @property
    def length(self) -> int:
        return int(self.k.shape[0])


def _norm1(m: np.ndarray) -> float:
    return float(np.max(np.sum(np.abs(m), axis=0))) if m.size else 0.0


def exp_and_phi1(M: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    exp(M) and phi1(M) = sum_j M^j / (j+1)! by scaling and squaring.

    Both Taylor series run on M / 2^s with ||M / 2^s|| <= 0.5 and stop once the
    next term's norm drops below 1e-16; squaring uses
    exp(2X) = exp(X)^2 and phi1(2X) = phi1(X) (exp(X) + I) / 2.
    """
    n = M.shape[0]
    eye = np.eye(n)
    norm = _norm1(M)
    squarings = max(0, int(math.ceil(math.log2(norm / _SCALED_NORM)))) if norm > _SCALED_NORM else 0
    X = M / (2.0 ** squarings)

    exp_x = eye.copy()
    phi_x = eye.copy()
    power = eye.copy()
    factorial = 1.0
    for j in range(1, _MAX_TERMS):
        power = power @ X
        factorial *= j
        exp_term = power / factorial
        phi_term = power / (factorial * (j + 1))
        exp_x = exp_x + exp_term
        phi_x = phi_x + phi_term
        if _norm1(exp_term) < SERIES_TOL:
            break

    for _ in range(squarings):
        phi_x = 0.5 * phi_x @ (exp_x + eye)
        exp_x = exp_x @ exp_x
    return exp_x, phi_x


def discretize(p: SsmParams, delta: float) -> DiscreteSsm:
    """
    Zero-order-hold discretisation at step delta.

    Raises:
        ContractError if delta is negative
    """
    if delta < 0:
        raise ContractError(f"discretize: delta must be >= 0, got {delta}")
    exp_da, phi_da = exp_and_phi1(delta * p.A)
    B_bar = delta * (phi_da @ p.B)
    return DiscreteSsm(A_bar=exp_da, B_bar=B_bar, C=p.C.copy(), D=float(p.D), delta=float(delta))


def expm_oracle(M: np.ndarray) -> np.ndarray:
    """Reference matrix exponential (Pade scaling-and-squaring)."""
    return expm(M)


def spectral_radius(m: DiscreteSsm) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(m.A_bar)))) if m.state_size else 0.0


def scan_recurrent(m: DiscreteSsm, x: Sequence[float]) -> np.ndarray:
    """Run h_k = A_bar h_{k-1} + B_bar x_k, y_k = C h_k + D x_k from h_0 = 0."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.zeros_like(x)
    h = np.zeros((m.state_size, 1))
    for k in range(x.shape[0]):
        h = m.A_bar @ h + m.B_bar * x[k]
        y[k] = float((m.C @ h)[0, 0]) + m.D * x[k]
    return y


def kernel(m: DiscreteSsm, length: int) -> SsmKernel:
    """Taps (C B_bar, C A_bar B_bar, ..., C A_bar^(L-1) B_bar)."""
    if length < 1:
        raise ContractError(f"kernel length must be >= 1, got {length}")
    taps = np.zeros(length)
    v = m.B_bar.copy()
    for t in range(length):
        taps[t] = float((m.C @ v)[0, 0])
        v = m.A_bar @ v
    return SsmKernel(k=taps)


def scan_convolutional(m: DiscreteSsm, x: Sequence[float]) -> np.ndarray:
    """y_t = sum_{s=0..t} k[s] x_{t-s} + D x_t, summed in ascending s."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    length = x.shape[0]
    if length == 0:
        return np.zeros(0)
    taps = kernel(m, length).k
    y = np.zeros(length)
    for t in range(length):
        acc = 0.0
        for s in range(t + 1):
            acc += taps[s] * x[t - s]
        y[t] = acc + m.D * x[t]
    return y
