"""Dense float64 tensors with reverse-mode automatic differentiation.

A ``Tensor`` wraps a numpy array plus an optional backward rule linking it to
its parents. Calling :meth:`Tensor.backward` on a scalar loss walks the
recorded graph once in reverse topological order and accumulates gradients
into every ``requires_grad`` leaf; the graph is released afterwards.

All values are float64. Forward passes are deterministic for fixed inputs:
contraction kernels pin their reduction order (see ``spikebridge.kernels``)
and elementwise/reduction numpy ops are order-stable for fixed shapes.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError

_GRAD_ENABLED = True


class no_grad:
    """Context manager that disables graph recording (evaluation, probes)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """A numpy-backed value node in the autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "_op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward_fn = None
        self._op = "leaf"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self._op!r}, requires_grad={self.requires_grad})"

    # convenience arithmetic; the op implementations live in spikebridge.ops
    def __add__(self, other):
        from . import ops

        return ops.add(self, other)

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, other)

    def reshape(self, *shape):
        from . import ops

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def sum(self, axis=None):
        from . import ops

        return ops.sum_(self, axis=axis)

    def backward(self):
        """Reverse-mode sweep from a scalar loss; consumes the graph."""
        if self.data.size != 1:
            raise ContractError(f"backward() requires a scalar loss, got shape {self.data.shape}")

        # iterative topological sort (graphs can be deep: layers x timesteps)
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward_fn is not None:
                if node.grad is not None:
                    node._backward_fn(node.grad)
                # interior node: free its gradient and graph references once
                # propagated, so each node is visited exactly once and leaves
                # keep their accumulated gradients
                node.grad = None
                node._parents = ()
                node._backward_fn = None


def make_node(data, parents, backward_fn, op: str) -> Tensor:
    """Wrap a computed array as a graph node.

    ``backward_fn(grad)`` must accumulate into each parent via
    :func:`accumulate_grad`. Recording is skipped when no parent requires a
    gradient or recording is globally disabled.
    """
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
        out._op = op
    return out


def accumulate_grad(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad += g
