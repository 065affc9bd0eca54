"""
Dense float64 tensor with reverse-mode differentiation.

Every primitive records a Node (inputs + backward rule) on its output when any
input participates in gradients. `backward` orders the reachable nodes into a
Tape and runs the backward rules once each, in reverse topological order.
"""
import logging
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from matir.errors import ContractError, NumericalError
from matir.settings import get_settings

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]

_grad_mode = threading.local()


def grad_enabled() -> bool:
    return getattr(_grad_mode, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """
    Record no graph inside the block (per thread); outputs never require grad.

    Use for inference: the forward pass keeps no references to intermediates.
    """
    previous = grad_enabled()
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = previous


class Node:
    """Recorded primitive: op name, input tensors and backward rule."""
    __slots__ = ("op", "inputs", "backward_fn")

    def __init__(self, op: str, inputs: Tuple["Tensor", ...], backward_fn: BackwardFn):
        self.op = op
        self.inputs = inputs
        self.backward_fn = backward_fn


class Tensor:
    """
    Rank-N float64 array with optional gradient participation.

    Leaves are created by the user (parameters, inputs); non-leaves are created
    by primitives and carry the Node that produced them.
    """

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._node: Optional[Node] = None

    @classmethod
    def _wrap(cls, data: np.ndarray, requires_grad: bool, node: Optional[Node]) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data if data.dtype == np.float64 else data.astype(np.float64)
        out.requires_grad = requires_grad
        out.grad = None
        out.name = None
        out._node = node
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data, False, None)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> "Tape":
        return backward(self)

    def __repr__(self) -> str:
        tag = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    # Operator sugar; implementations live in matir.tensor.ops
    def __add__(self, other):
        from matir.tensor import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from matir.tensor import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from matir.tensor import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from matir.tensor import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from matir.tensor import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from matir.tensor import ops
        return ops.div(other, self)

    def __neg__(self):
        from matir.tensor import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from matir.tensor import ops
        return ops.matmul(self, other)

    def __getitem__(self, key):
        from matir.tensor import ops
        return ops.index(self, key)

    def reshape(self, *shape):
        from matir.tensor import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from matir.tensor import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)

    @property
    def T(self):
        return self.transpose()

    def sum(self, axis=None, keepdims: bool = False):
        from matir.tensor import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        from matir.tensor import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)


def as_tensor(value: Union[Tensor, ArrayLike]) -> Tensor:
    """Wrap constants; tensors pass through untouched."""
    if isinstance(value, Tensor):
        return value
    return Tensor._wrap(np.asarray(value, dtype=np.float64), False, None)


def record(op: str, data: np.ndarray, inputs: Sequence[Tensor], backward_fn: BackwardFn) -> Tensor:
    """
    Wrap a primitive's forward result, attaching a Node when gradients flow.

    Args:
        op: Primitive name (shown on the tape and in debug errors)
        data: Forward result
        inputs: Input tensors, in the order backward_fn returns their grads
        backward_fn: Maps d(root)/d(output) to a tuple of input grads (None allowed)
    """
    inputs = tuple(inputs)
    needs_grad = grad_enabled() and any(t.requires_grad for t in inputs)
    node = Node(op, inputs, backward_fn) if needs_grad else None
    out = Tensor._wrap(np.asarray(data, dtype=np.float64), needs_grad, node)
    if get_settings().debug_checks and not np.all(np.isfinite(out.data)):
        raise NumericalError(f"op '{op}' produced NaN/Inf (output shape {out.shape})")
    return out


@dataclass
class TapeEntry:
    """One recorded primitive: op name, input node ids, output node id."""
    op: str
    input_ids: Tuple[int, ...]
    output_id: int


@dataclass
class Tape:
    """Topologically ordered primitives reachable from a scalar root."""
    entries: List[TapeEntry] = field(default_factory=list)
    _tensors: List[Tensor] = field(default_factory=list, repr=False)

    @classmethod
    def from_root(cls, root: Tensor) -> "Tape":
        """Order every non-leaf ancestor of root so inputs precede outputs."""
        tape = cls()
        visited = set()
        # Iterative post-order DFS
        stack: List[Tuple[Tensor, bool]] = [(root, False)]
        while stack:
            tensor, expanded = stack.pop()
            if tensor._node is None:
                continue
            key = id(tensor)
            if expanded:
                if key not in visited:
                    visited.add(key)
                    tape._tensors.append(tensor)
                    tape.entries.append(TapeEntry(
                        op=tensor._node.op,
                        input_ids=tuple(id(t) for t in tensor._node.inputs),
                        output_id=key,
                    ))
                continue
            if key in visited:
                continue
            stack.append((tensor, True))
            for parent in reversed(tensor._node.inputs):
                if parent._node is not None and id(parent) not in visited:
                    stack.append((parent, False))
        return tape

    def __len__(self) -> int:
        return len(self.entries)

    def run_backward(self, root: Tensor) -> None:
        """Propagate d(root)/d(root) = 1 through the tape into leaf .grad fields."""
        grads: Dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
        for tensor in reversed(self._tensors):
            g = grads.pop(id(tensor), None)
            if g is None:
                continue
            node = tensor._node
            input_grads = node.backward_fn(g)
            for parent, pg in zip(node.inputs, input_grads):
                if pg is None or not parent.requires_grad:
                    continue
                if pg.shape != parent.data.shape:
                    pg = np.broadcast_to(pg, parent.data.shape)
                if parent._node is None:
                    parent.grad = pg.copy() if parent.grad is None else parent.grad + pg
                else:
                    key = id(parent)
                    grads[key] = pg if key not in grads else grads[key] + pg
        # Root itself may be a leaf (e.g. backward on a parameter)
        if root._node is None and root.requires_grad:
            root.grad = np.ones_like(root.data) if root.grad is None else root.grad + 1.0


def backward(root: Tensor) -> Tape:
    """
    Populate .grad on every requires_grad leaf reachable from a scalar root.

    Raises:
        ContractError if root is not a scalar
    """
    if root.size != 1:
        raise ContractError(f"backward root must be a scalar, got shape {root.shape}")
    tape = Tape.from_root(root)
    tape.run_backward(root)
    logger.debug(f"backward: {len(tape)} tape entries")
    return tape
