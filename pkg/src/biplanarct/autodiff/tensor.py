"""Dense tensors with reverse-mode automatic differentiation.

The graph is define-by-run: every differentiable op attaches a Node holding
its inputs and a vector-Jacobian product. ``backward`` walks the graph in
reverse topological order and accumulates gradients into every tensor that
requires them. Repeated ``backward`` calls accumulate; call ``zero_grad``
(or rebuild the graph) between steps.

Storage is float32 by default; float64 is supported so gradient checks can
run at high precision.
"""

from __future__ import annotations

import numpy as np


class Node:
    """Provenance record: the op that produced a tensor and how to push grads back."""

    __slots__ = ("op", "inputs", "vjp")

    def __init__(self, op: str, inputs, vjp):
        self.op = op
        self.inputs = tuple(inputs)
        self.vjp = vjp  # grad_out -> tuple of grads aligned with inputs (None allowed)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "node")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self.node = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def detach(self) -> "Tensor":
        """A view of the same data with no graph attached."""
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError("item() requires a single-element tensor, got shape %s"
                             % (self.shape,))
        return float(self.data.reshape(())[()])

    def __repr__(self):
        return "Tensor(shape=%s, dtype=%s, requires_grad=%s)" % (
            self.shape, self.data.dtype, self.requires_grad)


def as_tensor(x, dtype=None) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)


def make_op(op: str, data, inputs, vjp) -> Tensor:
    """Create the output tensor of an op, attaching a graph node when needed."""
    rg = any(t.requires_grad for t in inputs)
    out = Tensor(data)
    out.requires_grad = rg
    if rg:
        out.node = Node(op, inputs, vjp)
    return out


def _toposort(root: Tensor):
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in seen or t.node is None:
            continue
        seen.add(id(t))
        stack.append((t, True))
        for parent in t.node.inputs:
            stack.append((parent, False))
    return order  # children before parents reversed later


def backward(loss: Tensor):
    """Populate ``grad`` on every reachable tensor with ``requires_grad``.

    Requires a scalar loss. Grads accumulate across calls (no implicit reset).
    """
    if loss.data.size != 1:
        raise ValueError("backward() requires a scalar loss, got shape %s"
                         % (loss.shape,))
    if not loss.requires_grad:
        return

    grads = {id(loss): np.ones_like(loss.data)}
    order = _toposort(loss)
    for t in reversed(order):
        g = grads.pop(id(t), None)
        if g is None:
            continue
        if t.requires_grad:
            t.grad = g if t.grad is None else t.grad + g
        in_grads = t.node.vjp(g)
        for parent, pg in zip(t.node.inputs, in_grads):
            if pg is None or not parent.requires_grad:
                continue
            if parent.node is None:
                # leaf: accumulate directly
                parent.grad = pg if parent.grad is None else parent.grad + pg
            else:
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg
