"""Dense 4-D tensors with tape-based reverse-mode differentiation.

Every op that has at least one input with ``requires_grad`` records a
``Node`` on its output. ``backward(root)`` walks those nodes from the root
in reverse topological order and deposits gradients on the leaves.
A graph is single use: rebuild it with a fresh forward pass.
"""

import hashlib
import logging
from typing import Callable, Sequence

import numpy as np

from cascadeseg.errors import GraphError, ShapeError

logger = logging.getLogger(__name__)

BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Node:
    """One executed op: its inputs, backward closure and branch key.

    The branch key identifies which piece of a non-smooth op was taken
    (relu mask, argmax position, clamp mask).
    """

    __slots__ = ("op", "inputs", "backward_fn", "branch_key", "consumed")

    def __init__(
        self,
        op: str,
        inputs: tuple["Tensor", ...],
        backward_fn: BackwardFn,
        branch_key: bytes | None = None,
    ):
        self.op = op
        self.inputs = inputs
        self.backward_fn: BackwardFn | None = backward_fn
        self.branch_key = branch_key
        self.consumed = False


class Tensor:
    """Dense (N, C, H, W) float64 array that can take part in a graph."""

    __slots__ = ("_data", "requires_grad", "grad", "_node")

    def __init__(self, data, requires_grad: bool = False):
        self._init(np.array(data, dtype=np.float64), requires_grad, None)

    @classmethod
    def _from_op(
        cls,
        array: np.ndarray,
        op: str,
        inputs: Sequence["Tensor"],
        backward_fn: BackwardFn,
        branch_key: bytes | None = None,
    ) -> "Tensor":
        requires_grad = any(t.requires_grad for t in inputs)
        node = Node(op, tuple(inputs), backward_fn, branch_key) if requires_grad else None
        out = cls.__new__(cls)
        out._init(np.asarray(array, dtype=np.float64), requires_grad, node)
        return out

    def _init(self, array: np.ndarray, requires_grad: bool, node: Node | None) -> None:
        if array.ndim != 4:
            raise ShapeError(f"tensor must be 4-D (N, C, H, W), got shape {array.shape}")
        if min(array.shape) < 1:
            raise ShapeError(f"tensor extents must all be >= 1, got shape {array.shape}")
        array.flags.writeable = False
        self._data = array
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._node = node

    # ── Accessors ──────────────────────────────────────────────────

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self._data.shape

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        """Read-only view of the values."""
        return self._data

    def item(self) -> float:
        if self._data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self._data.reshape(()))

    def detach(self) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out._init(self._data, False, None)
        return out

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        op = self._node.op if self._node else "leaf"
        return f"Tensor(shape={self.shape}, op={op}, requires_grad={self.requires_grad})"


def _topological_order(root: Tensor) -> list[Tensor]:
    """Non-leaf tensors reachable from root, inputs before outputs."""
    order: list[Tensor] = []
    if root._node is None:
        return order
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        tensor, expanded = stack.pop()
        if expanded:
            order.append(tensor)
            continue
        if id(tensor) in visited:
            continue
        visited.add(id(tensor))
        stack.append((tensor, True))
        for parent in tensor._node.inputs:
            if parent._node is not None and id(parent) not in visited:
                stack.append((parent, False))
    return order


class Graph:
    """Topologically ordered record of the ops that produced ``root``."""

    def __init__(self, root: Tensor):
        self.root = root
        self.nodes = _topological_order(root)

    def __len__(self) -> int:
        return len(self.nodes)

    def signature(self) -> str:
        """Hash of the op sequence and the branch taken by each non-smooth op."""
        digest = hashlib.blake2b(digest_size=16)
        for tensor in self.nodes:
            node = tensor._node
            digest.update(node.op.encode("ascii"))
            if node.branch_key is not None:
                digest.update(node.branch_key)
        return digest.hexdigest()

    def backward(self) -> None:
        root = self.root
        if root.shape != (1, 1, 1, 1):
            raise GraphError(f"backward needs a scalar (1, 1, 1, 1) root, got {root.shape}")
        if not root.requires_grad:
            raise GraphError("backward root does not depend on any requires_grad tensor")

        seed = np.ones(root.shape, dtype=np.float64)
        if root._node is None:
            _accumulate_leaf(root, seed)
            return
        if any(t._node.consumed for t in self.nodes):
            raise GraphError("graph was already used for backward; run the forward pass again")

        pending: dict[int, np.ndarray] = {id(root): seed}
        for tensor in reversed(self.nodes):
            node = tensor._node
            grad = pending.pop(id(tensor), None)
            if grad is not None:
                input_grads = node.backward_fn(grad)
                for parent, parent_grad in zip(node.inputs, input_grads):
                    if parent_grad is None or not parent.requires_grad:
                        continue
                    if parent._node is None:
                        _accumulate_leaf(parent, parent_grad)
                    elif id(parent) in pending:
                        pending[id(parent)] = pending[id(parent)] + parent_grad
                    else:
                        pending[id(parent)] = parent_grad
            node.consumed = True
            node.backward_fn = None

        logger.debug("backward visited %d nodes", len(self.nodes))


def _accumulate_leaf(leaf: Tensor, grad: np.ndarray) -> None:
    if grad.shape != leaf.shape:
        raise ShapeError(f"gradient shape {grad.shape} does not match leaf shape {leaf.shape}")
    if leaf.grad is None:
        leaf.grad = np.array(grad, dtype=np.float64)
    else:
        leaf.grad = leaf.grad + grad


def backward(root: Tensor) -> Graph:
    """Populate ``grad`` on every requires_grad leaf under ``root``."""
    graph = Graph(root)
    graph.backward()
    return graph
