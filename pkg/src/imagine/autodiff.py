"""Minimal reverse-mode differentiation engine on dense float64 arrays.

Provides the tape-based Tensor type, the primitive ops needed by the models in
this repo, MLP construction, Adam, finite-difference gradient checking, and the
binary checkpoint format shared repo-wide.

Training code is single threaded; forward/backward never mutate parameter
data, so read-only evaluation of the same parameters from other threads is
safe.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .errors import ArchitectureError, DimensionError, FormatError, NumericsError

CHECKPOINT_MAGIC = b"JVC1"

# Set of parameter names seen by stop_gradient during the current forward
# build; installed by forward_backward/grad_check so frozen params can be
# excluded from finite-difference checks.
_frozen_ctx: set[str] | None = None

# When True every op output is checked for NaN/Inf (slow; used to locate the
# offending node after a non-finite loss).
_check_finite = False
_node_counter = 0


class Tensor:
    """A node in the computation tape: float64 data plus backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "parents", "bwd", "name", "op")

    def __init__(self, data, requires_grad=False, parents=(), bwd=None, name=None, op="leaf"):
        if not isinstance(data, np.ndarray) or data.dtype != np.float64:
            data = np.asarray(data, dtype=np.float64)
        self.data = data
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.parents = parents
        self.bwd = bwd
        self.name = name
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; scalars are python floats, everything else is a Tensor.
    def __add__(self, other):
        return add(self, other) if isinstance(other, Tensor) else shift(self, float(other))

    def __radd__(self, other):
        return shift(self, float(other))

    def __sub__(self, other):
        return sub(self, other) if isinstance(other, Tensor) else shift(self, -float(other))

    def __rsub__(self, other):
        return shift(neg(self), float(other))

    def __mul__(self, other):
        return mul(self, other) if isinstance(other, Tensor) else scale(self, float(other))

    def __rmul__(self, other):
        return scale(self, float(other))

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, pow_const(other, -1.0))
        return scale(self, 1.0 / float(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def constant(data) -> Tensor:
    return Tensor(data, op="const")


def parameter(name: str, data) -> Tensor:
    return Tensor(data, requires_grad=True, name=name, op="param")


def _make(data, parents, bwd, op) -> Tensor:
    global _node_counter
    requires = any(p.requires_grad for p in parents)
    if _check_finite:
        _node_counter += 1
        if not np.all(np.isfinite(data)):
            raise NumericsError(f"non-finite output of op '{op}' at node index {_node_counter}")
    return Tensor(data, requires_grad=requires, parents=parents, bwd=bwd if requires else None, op=op)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcasted gradient back to the operand's shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad:
        t.grad = g if t.grad is None else t.grad + g


# ---------------------------------------------------------------------------
# Primitive ops


def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _make(out_data, (a, b), bwd, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data - b.data

    def bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    return _make(out_data, (a, b), bwd, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data

    def bwd(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(out_data, (a, b), bwd, "mul")


def neg(a: Tensor) -> Tensor:
    def bwd(g):
        _accum(a, -g)

    return _make(-a.data, (a,), bwd, "neg")


def scale(a: Tensor, s: float) -> Tensor:
    def bwd(g):
        _accum(a, g * s)

    return _make(a.data * s, (a,), bwd, "scale")


def shift(a: Tensor, c: float) -> Tensor:
    def bwd(g):
        _accum(a, g)

    return _make(a.data + c, (a,), bwd, "shift")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(f"matmul shapes {a.data.shape} x {b.data.shape}")
    out_data = a.data @ b.data

    def bwd(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _make(out_data, (a, b), bwd, "matmul")


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def bwd(g):
        _accum(a, g * out_data)

    return _make(out_data, (a,), bwd, "exp")


def log(a: Tensor) -> Tensor:
    def bwd(g):
        _accum(a, g / a.data)

    return _make(np.log(a.data), (a,), bwd, "log")


def pow_const(a: Tensor, p: float) -> Tensor:
    out_data = a.data**p

    def bwd(g):
        _accum(a, g * p * a.data ** (p - 1.0))

    return _make(out_data, (a,), bwd, "pow")


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def bwd(g):
        _accum(a, g * out_data * (1.0 - out_data))

    return _make(out_data, (a,), bwd, "sigmoid")


def elu(a: Tensor) -> Tensor:
    x = a.data
    out_data = np.expm1(np.minimum(x, 0.0))
    np.add(out_data, np.maximum(x, 0.0), out=out_data)

    def bwd(g):
        # derivative is exp(x) = out + 1 on the negative side, 1 elsewhere
        _accum(a, g * (np.minimum(out_data, 0.0) + 1.0))

    return _make(out_data, (a,), bwd, "elu")


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    out_data = np.clip(a.data, lo, hi)
    mask = (a.data >= lo) & (a.data <= hi)

    def bwd(g):
        _accum(a, g * mask)

    return _make(out_data, (a,), bwd, "clip")


def sum_all(a: Tensor) -> Tensor:
    shape = a.data.shape

    def bwd(g):
        _accum(a, np.broadcast_to(g, shape))

    return _make(a.data.sum(), (a,), bwd, "sum")


def mean_all(a: Tensor) -> Tensor:
    return scale(sum_all(a), 1.0 / a.data.size)


def sum_axis(a: Tensor, axis: int, keepdims: bool = True) -> Tensor:
    out_data = a.data.sum(axis=axis, keepdims=keepdims)
    shape = a.data.shape

    def bwd(g):
        gg = g if keepdims else np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(gg, shape))

    return _make(out_data, (a,), bwd, "sum_axis")


def log_softmax(a: Tensor) -> Tensor:
    """Row-wise log-softmax over the last axis, computed via log-sum-exp."""
    x = a.data
    m = x.max(axis=-1, keepdims=True)
    lse = m + np.log(np.exp(x - m).sum(axis=-1, keepdims=True))
    out_data = x - lse

    def bwd(g):
        soft = np.exp(out_data)
        _accum(a, g - soft * g.sum(axis=-1, keepdims=True))

    return _make(out_data, (a,), bwd, "log_softmax")


def gather_cols(a: Tensor, idx: np.ndarray) -> Tensor:
    """Pick one column per row: out[i] = a[i, idx[i]]."""
    rows = np.arange(a.data.shape[0])
    out_data = a.data[rows, idx]

    def bwd(g):
        ga = np.zeros_like(a.data)
        ga[rows, idx] = g
        _accum(a, ga)

    return _make(out_data, (a,), bwd, "gather_cols")


def slice_cols(a: Tensor, lo: int, hi: int) -> Tensor:
    out_data = np.ascontiguousarray(a.data[:, lo:hi])

    def bwd(g):
        ga = np.zeros_like(a.data)
        ga[:, lo:hi] = g
        _accum(a, ga)

    return _make(out_data, (a,), bwd, "slice_cols")


def concat_cols(parts: list[Tensor]) -> Tensor:
    out_data = np.concatenate([p.data for p in parts], axis=1)
    widths = [p.data.shape[1] for p in parts]

    def bwd(g):
        off = 0
        for p, w in zip(parts, widths):
            _accum(p, g[:, off : off + w])
            off += w

    return _make(out_data, tuple(parts), bwd, "concat_cols")


def stop_gradient(a: Tensor) -> Tensor:
    """A constant view of `a`: downstream gradients never reach `a`."""
    if _frozen_ctx is not None and a.name is not None:
        _frozen_ctx.add(a.name)
    return Tensor(a.data, op="stop_gradient")


# ---------------------------------------------------------------------------
# Fused ops: single nodes with analytic backwards for the hot paths of the
# training objectives. Each is exactly equivalent to its composite form.


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b with the bias broadcast over rows."""
    if x.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise DimensionError(f"dense shapes {x.data.shape} x {w.data.shape}")
    out_data = x.data @ w.data
    out_data += b.data

    def bwd(g):
        _accum(x, g @ w.data.T)
        _accum(w, x.data.T @ g)
        _accum(b, g.sum(axis=0))

    return _make(out_data, (x, w, b), bwd, "dense")


def bernoulli_loglik(logits: Tensor, x: np.ndarray, eps: float = 1e-7) -> Tensor:
    """Sum of x log p + (1 - x) log(1 - p) with p = sigmoid(logits) clamped to
    [eps, 1 - eps]; gradient is x - p where the clamp is inactive, 0 where it
    saturates."""
    z = logits.data
    p = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
    clipped = np.clip(p, eps, 1.0 - eps)
    out_data = np.asarray((x * np.log(clipped) + (1.0 - x) * np.log(1.0 - clipped)).sum())

    def bwd(g):
        inside = (p > eps) & (p < 1.0 - eps)
        _accum(logits, g * np.where(inside, x - p, 0.0))

    return _make(out_data, (logits,), bwd, "bernoulli_loglik")


def categorical_loglik(logits: Tensor, idx: np.ndarray) -> Tensor:
    """Sum over rows of log softmax(logits)[row, idx[row]]."""
    z = logits.data
    m = z.max(axis=-1, keepdims=True)
    lse = m + np.log(np.exp(z - m).sum(axis=-1, keepdims=True))
    rows = np.arange(z.shape[0])
    out_data = np.asarray((z[rows, idx] - lse[:, 0]).sum())

    def bwd(g):
        ga = -np.exp(z - lse)
        ga[rows, idx] += 1.0
        _accum(logits, g * ga)

    return _make(out_data, (logits,), bwd, "categorical_loglik")


def gaussian_reparam(mean: Tensor, log_var: Tensor, eps: np.ndarray) -> Tensor:
    """mean + exp(log_var / 2) * eps for a fixed noise array."""
    std = np.exp(0.5 * log_var.data)
    out_data = mean.data + std * eps

    def bwd(g):
        _accum(mean, g)
        _accum(log_var, g * (0.5 * std * eps))

    return _make(out_data, (mean, log_var), bwd, "gaussian_reparam")


def kl_std_normal(mean: Tensor, log_var: Tensor) -> Tensor:
    """Sum over all entries of KL(N(mean, exp(log_var)) || N(0, I))."""
    var = np.exp(log_var.data)
    out_data = np.asarray(0.5 * (var + mean.data**2 - 1.0 - log_var.data).sum())

    def bwd(g):
        _accum(mean, g * mean.data)
        _accum(log_var, g * 0.5 * (var - 1.0))

    return _make(out_data, (mean, log_var), bwd, "kl_std_normal")


def kl_gaussians(mean_a: Tensor, lv_a: Tensor, mean_b: Tensor, lv_b: Tensor) -> Tensor:
    """Sum over all entries of KL(a || b) for diagonal Gaussians."""
    var_a = np.exp(lv_a.data)
    inv_var_b = np.exp(-lv_b.data)
    diff = mean_a.data - mean_b.data
    out_data = np.asarray(0.5 * ((lv_b.data - lv_a.data) + (var_a + diff * diff) * inv_var_b - 1.0).sum())

    def bwd(g):
        _accum(mean_a, g * diff * inv_var_b)
        _accum(mean_b, -g * diff * inv_var_b)
        _accum(lv_a, g * 0.5 * (var_a * inv_var_b - 1.0))
        _accum(lv_b, g * 0.5 * (1.0 - (var_a + diff * diff) * inv_var_b))
    return _make(out_data, (mean_a, lv_a, mean_b, lv_b), bwd, "kl_gaussians")


# ---------------------------------------------------------------------------
# Backward pass


def backward(loss: Tensor) -> None:
    """Accumulate gradients of all reachable requires_grad tensors."""
    if loss.data.shape != ():
        raise DimensionError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited or not node.requires_grad:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    loss.grad = np.ones((), dtype=np.float64)
    for node in reversed(topo):
        if node.bwd is not None:
            node.bwd(node.grad)
        if node.parents:
            node.grad = None  # free intermediate grads early


# ---------------------------------------------------------------------------
# MLPs


@dataclass
class Dense:
    w: Tensor
    b: Tensor


class Mlp:
    """Stack of affine layers with an activation between hidden layers only."""

    def __init__(self, layers: list[Dense], activation: str):
        self.layers = layers
        self.activation = activation

    def __call__(self, x: Tensor, frozen: bool = False) -> Tensor:
        h = x
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            w, b = (layer.w, layer.b) if not frozen else (stop_gradient(layer.w), stop_gradient(layer.b))
            h = dense(h, w, b)
            if i < last and self.activation == "elu":
                h = elu(h)
        return h

    def forward_np(self, x: np.ndarray) -> np.ndarray:
        h = x
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            h = h @ layer.w.data + layer.b.data
            if i < last and self.activation == "elu":
                h = np.where(h > 0, h, np.expm1(np.minimum(h, 0.0)))
        return h

    def params(self) -> dict[str, Tensor]:
        out = {}
        for layer in self.layers:
            out[layer.w.name] = layer.w
            out[layer.b.name] = layer.b
        return out

    def weight_tensors(self) -> list[Tensor]:
        return [layer.w for layer in self.layers]


def build_mlp(layer_sizes: list[int], activation: str, rng: np.random.Generator, prefix: str) -> Mlp:
    """Affine stack with ELU between hidden layers; uniform(-s, s) weights with
    s = sqrt(6 / (fan_in + fan_out)), zero biases."""
    if len(layer_sizes) < 2:
        raise ArchitectureError(f"need at least 2 layer sizes, got {layer_sizes}")
    if any(n <= 0 for n in layer_sizes):
        raise ArchitectureError(f"layer sizes must be positive, got {layer_sizes}")
    if activation not in ("elu", "none"):
        raise ArchitectureError(f"unknown activation {activation!r}")
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(layer_sizes[:-1], layer_sizes[1:])):
        s = np.sqrt(6.0 / (fan_in + fan_out))
        w = parameter(f"{prefix}.w{i}", rng.uniform(-s, s, size=(fan_in, fan_out)))
        b = parameter(f"{prefix}.b{i}", np.zeros(fan_out))
        layers.append(Dense(w, b))
    return Mlp(layers, activation)


# ---------------------------------------------------------------------------
# Graphs: a rebuildable scalar loss over named trainable parameters


@dataclass
class Graph:
    """A deterministic closure producing a scalar loss, plus its parameters.

    `build` must bake in all inputs (data and noise draws) so repeated calls
    return the same value; `frozen` is filled with the names of parameters
    wrapped by stop_gradient during the latest forward pass.
    """

    build: Callable[[], Tensor]
    params: dict[str, Tensor]
    frozen: set[str] = field(default_factory=set)


def _build_tracked(graph: Graph) -> Tensor:
    global _frozen_ctx
    _frozen_ctx = set()
    try:
        loss = graph.build()
    finally:
        graph.frozen = _frozen_ctx
        _frozen_ctx = None
    return loss


def forward_backward(graph: Graph) -> tuple[float, dict[str, np.ndarray]]:
    """Evaluate the loss and the gradient of every trainable parameter.

    Parameters frozen by stop_gradient (or unused) get exactly-zero gradients.
    Raises NumericsError, with the offending node index, on non-finite values.
    """
    for p in graph.params.values():
        p.grad = None
    loss = _build_tracked(graph)
    if loss.data.shape != ():
        raise DimensionError(f"graph output must be scalar, got shape {loss.data.shape}")
    if not np.isfinite(loss.data):
        _locate_nonfinite(graph)
        raise NumericsError("non-finite loss")  # pragma: no cover - located above
    backward(loss)
    grads = {}
    for name, p in graph.params.items():
        grads[name] = p.grad if p.grad is not None else np.zeros_like(p.data)
        p.grad = None
    return float(loss.data), grads


def _locate_nonfinite(graph: Graph) -> None:
    """Re-run the forward pass with per-node checking to name the bad node."""
    global _check_finite, _node_counter
    _check_finite = True
    _node_counter = 0
    try:
        graph.build()
    finally:
        _check_finite = False
    raise NumericsError("non-finite loss but all nodes finite on re-run")


def grad_check(graph: Graph, epsilon: float = 1e-5) -> float:
    """Max relative error between analytic gradients and central differences.

    Every coordinate of every trainable parameter is perturbed, except
    parameters that the graph froze via stop_gradient. The graph must be
    deterministic (noise baked in).
    """
    _, grads = forward_backward(graph)
    max_rel = 0.0
    for name, p in graph.params.items():
        if name in graph.frozen:
            continue
        flat = p.data.ravel()
        gflat = grads[name].ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            f_plus = float(graph.build().data)
            flat[i] = orig - epsilon
            f_minus = float(graph.build().data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            rel = abs(numeric - gflat[i]) / max(abs(numeric), abs(gflat[i]), 1e-4)
            if rel > max_rel:
                max_rel = rel
    return max_rel


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    # flat fast path: when create() packed the parameters into one buffer,
    # the per-name m/v dicts hold views into these arrays
    _layout: list[tuple[str, int, int, tuple]] | None = None
    _flat_param: np.ndarray | None = None
    _flat_m: np.ndarray | None = None
    _flat_v: np.ndarray | None = None

    @classmethod
    def create(cls, params: dict[str, Tensor], learning_rate: float = 1e-4, pack: bool = True, **kw) -> "AdamState":
        """Moment state for the given parameters. With pack=True (default) the
        parameter data is rebound to views of one contiguous buffer so the
        update runs as a handful of large vector ops."""
        state = cls(learning_rate=learning_rate, **kw)
        if not pack:
            for name, p in params.items():
                state.m[name] = np.zeros_like(p.data)
                state.v[name] = np.zeros_like(p.data)
            return state
        names = list(params)
        total = sum(params[n].data.size for n in names)
        flat = np.empty(total)
        layout = []
        offset = 0
        for n in names:
            p = params[n]
            size = p.data.size
            flat[offset : offset + size] = p.data.ravel()
            p.data = flat[offset : offset + size].reshape(p.data.shape)
            layout.append((n, offset, size, p.data.shape))
            offset += size
        state._layout = layout
        state._flat_param = flat
        state._flat_m = np.zeros(total)
        state._flat_v = np.zeros(total)
        for n, off, size, shape in layout:
            state.m[n] = state._flat_m[off : off + size].reshape(shape)
            state.v[n] = state._flat_v[off : off + size].reshape(shape)
        return state


def _flat_gradient(grads: dict[str, np.ndarray], state: AdamState) -> np.ndarray:
    out = np.empty(state._flat_m.shape[0])
    for name, off, size, shape in state._layout:
        g = grads[name]
        if g.shape != shape:
            raise DimensionError(f"gradient shape {g.shape} != param shape {shape} for {name!r}")
        out[off : off + size] = g.ravel()
    return out


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: AdamState) -> None:
    """One Adam update with bias-corrected moments; mutates params and state."""
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    if state._layout is not None:
        g = _flat_gradient(grads, state)
        if not np.all(np.isfinite(g)):
            state.step -= 1
            for name, arr in grads.items():
                if not np.all(np.isfinite(arr)):
                    raise NumericsError(f"non-finite gradient for parameter {name!r} at step {state.step + 1}")
            raise NumericsError("non-finite gradient")  # pragma: no cover
        m, v = state._flat_m, state._flat_v
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        g *= g
        v += (1.0 - state.beta2) * g
        state._flat_param -= state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
        return
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            state.step -= 1
            raise NumericsError(f"non-finite gradient for parameter {name!r} at step {state.step + 1}")
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.data.shape:
            raise DimensionError(f"gradient shape {g.shape} != param shape {p.data.shape} for {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)


# ---------------------------------------------------------------------------
# Checkpoint format (shared repo-wide)
#
#   magic "JVC1", u32 tensor count, then per tensor:
#   u16 name length, UTF-8 name, u8 rank, rank x u32 dims, float32 data.
# All integers and floats little-endian.


def save_checkpoint(path, tensors: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            arr = np.asarray(tensors[name], dtype=np.float32)
            name_b = name.encode("utf-8")
            f.write(struct.pack("<H", len(name_b)))
            f.write(name_b)
            f.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                f.write(struct.pack("<I", dim))
            f.write(arr.astype("<f4").tobytes(order="C"))


def _read_exact(f, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise FormatError(f"truncated checkpoint: wanted {n} bytes for {what} at offset {f.tell() - len(data)}")
    return data


def load_checkpoint(path) -> dict[str, np.ndarray]:
    tensors: dict[str, np.ndarray] = {}
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, "magic")
        if magic != CHECKPOINT_MAGIC:
            raise FormatError(f"bad checkpoint magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
        (count,) = struct.unpack("<I", _read_exact(f, 4, "tensor count"))
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(f, 2, "name length"))
            name = _read_exact(f, name_len, "name").decode("utf-8")
            (rank,) = struct.unpack("<B", _read_exact(f, 1, "rank"))
            dims = struct.unpack(f"<{rank}I", _read_exact(f, 4 * rank, "dims")) if rank else ()
            n_items = int(np.prod(dims)) if dims else 1
            raw = _read_exact(f, 4 * n_items, f"data of {name!r}")
            tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
    return tensors
