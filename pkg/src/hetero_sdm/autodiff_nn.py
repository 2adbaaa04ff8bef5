"""Neural-network numerics built on a small reverse-mode tape.

The engine supports exactly the operation set the models need (matrix
multiply, broadcast add, the activation family, concatenation, row gather,
segment reductions, row-wise dot products, and sigmoid cross-entropy), not
general autodiff. Every op records a backward closure on a tape; `grad`
replays the tape in reverse topological order.

All arrays are float64 and all functions are pure, so results are bitwise
reproducible for fixed seeds.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit as sigmoid

from .errors import (
    EmptyInputError,
    IndexOutOfBoundsError,
    NonFiniteLossError,
    ShapeMismatchError,
)

# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------

LEAKY_SLOPE = 0.01


def _relu(x):
    return np.maximum(x, 0.0)


def _relu_d(x):
    return (x > 0).astype(np.float64)


def _leakyrelu(x):
    return np.where(x > 0, x, LEAKY_SLOPE * x)


def _leakyrelu_d(x):
    return np.where(x > 0, 1.0, LEAKY_SLOPE)


def _softplus(x):
    return np.logaddexp(0.0, x)


def _softplus_d(x):
    return sigmoid(x)


def _silu(x):
    return x * sigmoid(x)


def _silu_d(x):
    s = sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


def _hardsilu(x):
    # x * relu6(x + 3) / 6
    return x * np.clip(x + 3.0, 0.0, 6.0) / 6.0


def _hardsilu_d(x):
    return np.where(x <= -3.0, 0.0, np.where(x >= 3.0, 1.0, (2.0 * x + 3.0) / 6.0))


def _sparseplus(x):
    # 0 below -1, identity above 1, quadratic blend between.
    return np.where(x <= -1.0, 0.0, np.where(x >= 1.0, x, 0.25 * (x + 1.0) ** 2))


def _sparseplus_d(x):
    return np.where(x <= -1.0, 0.0, np.where(x >= 1.0, 1.0, 0.5 * (x + 1.0)))


ACTIVATIONS: dict[str, tuple[Callable, Callable]] = {
    "relu": (_relu, _relu_d),
    "leakyrelu": (_leakyrelu, _leakyrelu_d),
    "softplus": (_softplus, _softplus_d),
    "silu": (_silu, _silu_d),
    "hardsilu": (_hardsilu, _hardsilu_d),
    "sparseplus": (_sparseplus, _sparseplus_d),
}


# ---------------------------------------------------------------------------
# Tape
# ---------------------------------------------------------------------------


class Tensor:
    """A float64 array plus the backward closure that produced it."""

    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, parents=()):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"


def _acc(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def backward(loss: Tensor) -> None:
    """Accumulate gradients of a scalar tensor into every tape ancestor."""
    if loss.data.ndim != 0 and loss.data.size != 1:
        raise ShapeMismatchError("backward expects a scalar loss")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None:
            node._backward()


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def t_const(data) -> Tensor:
    return Tensor(data)


def t_matmul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data @ b.data, (a, b))

    def bk():
        _acc(a, out.grad @ b.data.T)
        _acc(b, a.data.T @ out.grad)

    out._backward = bk
    return out


def t_add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data, (a, b))

    def bk():
        _acc(a, _unbroadcast(out.grad, a.data.shape))
        _acc(b, _unbroadcast(out.grad, b.data.shape))

    out._backward = bk
    return out


def t_activation(x: Tensor, name: str) -> Tensor:
    fn, dfn = ACTIVATIONS[name]
    out = Tensor(fn(x.data), (x,))

    def bk():
        _acc(x, dfn(x.data) * out.grad)

    out._backward = bk
    return out


def t_concat(parts: Sequence[Tensor], axis: int = 1) -> Tensor:
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis), tuple(parts))
    widths = [p.data.shape[axis] for p in parts]

    def bk():
        offset = 0
        for p, w in zip(parts, widths):
            sl = [slice(None)] * out.grad.ndim
            sl[axis] = slice(offset, offset + w)
            _acc(p, out.grad[tuple(sl)])
            offset += w

    out._backward = bk
    return out


def t_take_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size > 0 and (idx.min() < 0 or idx.max() >= x.data.shape[0]):
        raise IndexOutOfBoundsError(
            f"row index outside [0, {x.data.shape[0]})"
        )
    out = Tensor(x.data[idx], (x,))

    def bk():
        g = np.zeros_like(x.data)
        np.add.at(g, idx, out.grad)
        _acc(x, g)

    out._backward = bk
    return out


def t_segment_reduce(
    x: Tensor, segment_ids: np.ndarray, num_segments: int, mode: str = "sum"
) -> Tensor:
    data, counts = _segment_reduce_impl(x.data, segment_ids, num_segments, mode)
    out = Tensor(data, (x,))
    ids = np.asarray(segment_ids, dtype=np.int64)

    def bk():
        g = out.grad[ids]
        if mode == "mean":
            g = g / counts[ids][:, None]
        _acc(x, g)

    out._backward = bk
    return out


def t_rowwise_dot(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeMismatchError(
            f"rowwise dot needs equal shapes, got {a.data.shape} vs {b.data.shape}"
        )
    out = Tensor(np.sum(a.data * b.data, axis=1), (a, b))

    def bk():
        _acc(a, out.grad[:, None] * b.data)
        _acc(b, out.grad[:, None] * a.data)

    out._backward = bk
    return out


def t_sum(x: Tensor) -> Tensor:
    out = Tensor(np.sum(x.data), (x,))

    def bk():
        _acc(x, np.full_like(x.data, out.grad))

    out._backward = bk
    return out


def bce_logits_elements(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-element -[y log p + (1-y) log(1-p)], p = sigmoid(score).

    Evaluated in the logit form max(s,0) - s*y + log(1+exp(-|s|)), which
    neither overflows nor loses the tail for |score| up to ~700.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    return np.maximum(s, 0.0) - s * y + np.log1p(np.exp(-np.abs(s)))


def t_bce_mean(scores: Tensor, labels: np.ndarray) -> Tensor:
    y = np.asarray(labels, dtype=np.float64)
    if scores.data.size == 0:
        raise EmptyInputError("cross-entropy over zero pairs is undefined")
    if scores.data.shape != y.shape:
        raise ShapeMismatchError(
            f"scores shape {scores.data.shape} vs labels shape {y.shape}"
        )
    out = Tensor(np.mean(bce_logits_elements(scores.data, y)), (scores,))

    def bk():
        _acc(scores, (sigmoid(scores.data) - y) * (out.grad / y.size))

    out._backward = bk
    return out


# ---------------------------------------------------------------------------
# Segment reductions (public numpy entry point)
# ---------------------------------------------------------------------------


def _segment_reduce_impl(values, segment_ids, num_segments, mode):
    values = np.asarray(values, dtype=np.float64)
    ids = np.asarray(segment_ids, dtype=np.int64)
    if mode not in ("sum", "mean"):
        raise ValueError(f"unknown reduction mode {mode!r}")
    if ids.shape[0] != values.shape[0]:
        raise ShapeMismatchError(
            f"{values.shape[0]} value rows vs {ids.shape[0]} segment ids"
        )
    if ids.size > 0 and (ids.min() < 0 or ids.max() >= num_segments):
        raise IndexOutOfBoundsError(f"segment id outside [0, {num_segments})")
    out = np.zeros((num_segments, values.shape[1]), dtype=np.float64)
    np.add.at(out, ids, values)
    counts = np.zeros(num_segments, dtype=np.float64)
    np.add.at(counts, ids, 1.0)
    if mode == "mean":
        # Empty segments stay at zero: mean over no rows is defined as 0.
        nonzero = counts > 0
        out[nonzero] /= counts[nonzero][:, None]
    return out, counts


def segment_reduce(values, segment_ids, num_segments: int, mode: str = "sum") -> np.ndarray:
    """Reduce value rows grouped by segment id; empty segments give zero rows."""
    out, _ = _segment_reduce_impl(values, segment_ids, num_segments, mode)
    return out


# ---------------------------------------------------------------------------
# MLPs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden_dim: int
    num_hidden_layers: int
    output_dim: int
    activation: str

    def __post_init__(self):
        for fieldname in ("input_dim", "hidden_dim", "num_hidden_layers", "output_dim"):
            if getattr(self, fieldname) <= 0:
                raise ValueError(f"MlpSpec.{fieldname} must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(
                f"unknown activation {self.activation!r}; "
                f"expected one of {sorted(ACTIVATIONS)}"
            )

    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.input_dim] + [self.hidden_dim] * self.num_hidden_layers + [self.output_dim]
        return list(zip(dims[:-1], dims[1:]))


@dataclass(frozen=True)
class MlpParams:
    """Per-layer weight matrices (in x out) and bias vectors."""

    weights: tuple
    biases: tuple
    activation: str

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]


def mlp_init(spec: MlpSpec, seed: int) -> MlpParams:
    """Uniform variance-scaled weights (limit sqrt(6/(fan_in+fan_out))), zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in spec.layer_dims():
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights=tuple(weights), biases=tuple(biases), activation=spec.activation)


def mlp_apply(params: MlpParams, x: Tensor) -> Tensor:
    """Tape-recorded MLP: activation on hidden layers, linear final layer."""
    w0 = params.weights[0]
    in_dim = (w0.data if isinstance(w0, Tensor) else w0).shape[0]
    if x.data.ndim != 2 or x.data.shape[1] != in_dim:
        raise ShapeMismatchError(f"expected input width {in_dim}, got {x.data.shape}")
    h = x
    n_layers = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        w_t = w if isinstance(w, Tensor) else Tensor(w)
        b_t = b if isinstance(b, Tensor) else Tensor(b)
        h = t_add(t_matmul(h, w_t), b_t)
        if i < n_layers - 1:
            h = t_activation(h, params.activation)
    return h


def mlp_forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Plain-array forward pass through the same code path as training."""
    return mlp_apply(params, Tensor(x)).data


# ---------------------------------------------------------------------------
# Parameter trees and gradients
# ---------------------------------------------------------------------------


def tree_map(fn, tree):
    """Apply `fn` to every ndarray/Tensor leaf, preserving structure."""
    if isinstance(tree, (np.ndarray, Tensor)):
        return fn(tree)
    if isinstance(tree, MlpParams):
        return MlpParams(
            weights=tuple(tree_map(fn, w) for w in tree.weights),
            biases=tuple(tree_map(fn, b) for b in tree.biases),
            activation=tree.activation,
        )
    if isinstance(tree, dict):
        return {k: tree_map(fn, v) for k, v in tree.items()}
    if isinstance(tree, (list, tuple)):
        return type(tree)(tree_map(fn, v) for v in tree)
    if dataclasses.is_dataclass(tree):
        return dataclasses.replace(
            tree,
            **{
                f.name: tree_map(fn, getattr(tree, f.name))
                for f in dataclasses.fields(tree)
            },
        )
    return tree


def tree_leaves(tree) -> list:
    leaves = []
    tree_map(lambda leaf: (leaves.append(leaf), leaf)[1], tree)
    return leaves


def loss_and_grad(loss_fn, params):
    """Evaluate a tape-built scalar loss and its gradients in one pass.

    `loss_fn` receives the parameter tree with every array replaced by a
    Tensor and must build its result from the ops in this module.
    """
    tensors = tree_map(lambda a: a if isinstance(a, Tensor) else Tensor(a), params)
    loss = loss_fn(tensors)
    value = float(loss.data)
    if not np.isfinite(value):
        raise NonFiniteLossError(f"loss evaluated to {value}")
    backward(loss)
    grads = tree_map(
        lambda t: t.grad if t.grad is not None else np.zeros_like(t.data), tensors
    )
    return value, grads


def grad(loss_fn, params):
    """Reverse-mode gradients of `loss_fn` with respect to every parameter."""
    _, grads = loss_and_grad(loss_fn, params)
    return grads


# ---------------------------------------------------------------------------
# Optimizer (adaptive moment estimation)
# ---------------------------------------------------------------------------

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class OptimizerState:
    first_moment: object
    second_moment: object
    step: int

    @staticmethod
    def init(params) -> "OptimizerState":
        zeros = lambda a: np.zeros_like(a)
        return OptimizerState(
            first_moment=tree_map(zeros, params),
            second_moment=tree_map(zeros, params),
            step=0,
        )


def optimizer_step(params, grads, state: OptimizerState, lr: float):
    """One bias-corrected adaptive-moment update; returns (params, state)."""
    t = state.step + 1
    p_leaves = tree_leaves(params)
    g_leaves = tree_leaves(grads)
    m_leaves = tree_leaves(state.first_moment)
    v_leaves = tree_leaves(state.second_moment)
    if not (len(p_leaves) == len(g_leaves) == len(m_leaves) == len(v_leaves)):
        raise ShapeMismatchError("parameter, gradient, and state trees disagree")
    for p, g in zip(p_leaves, g_leaves):
        if p.shape != g.shape:
            raise ShapeMismatchError(f"parameter shape {p.shape} vs gradient {g.shape}")

    updated, new_m, new_v = [], [], []
    for p, g, m, v in zip(p_leaves, g_leaves, m_leaves, v_leaves):
        m2 = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * g
        v2 = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * g * g
        m_hat = m2 / (1.0 - ADAM_BETA1**t)
        v_hat = v2 / (1.0 - ADAM_BETA2**t)
        updated.append(p - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS))
        new_m.append(m2)
        new_v.append(v2)

    # tree_map visits leaves in the same order tree_leaves produced them.
    it_p, it_m, it_v = iter(updated), iter(new_m), iter(new_v)
    new_params = tree_map(lambda _: next(it_p), params)
    new_state = OptimizerState(
        first_moment=tree_map(lambda _: next(it_m), state.first_moment),
        second_moment=tree_map(lambda _: next(it_v), state.second_moment),
        step=t,
    )
    return new_params, new_state


# ---------------------------------------------------------------------------
# Finite-difference checking
# ---------------------------------------------------------------------------


def finite_difference_grads(loss_fn, params, eps: float = 1e-5):
    """Central-difference gradients of the same closure `loss_and_grad` takes.

    Uses only forward evaluations, so it is independent of the tape's
    backward pass.
    """

    work = tree_map(np.copy, params)

    def eval_at():
        t = tree_map(Tensor, work)
        return float(loss_fn(t).data)

    fd_leaves = []
    for leaf in tree_leaves(work):
        fd = np.zeros_like(leaf)
        flat = fd.reshape(-1)
        base = leaf.reshape(-1)
        for i in range(base.size):
            orig = base[i]
            base[i] = orig + eps
            up = eval_at()
            base[i] = orig - eps
            down = eval_at()
            base[i] = orig
            flat[i] = (up - down) / (2.0 * eps)
        fd_leaves.append(fd)
    it = iter(fd_leaves)
    return tree_map(lambda _: next(it), params)


@dataclass
class GradCheckResult:
    max_rel_error: float
    max_abs_error_near_zero: float
    ok: bool


def compare_gradients(
    analytic,
    numeric,
    rel_tol: float = 1e-4,
    abs_tol: float = 1e-6,
    near_zero: float = 1e-8,
) -> GradCheckResult:
    """Elementwise check with a combined tolerance.

    An element passes when it matches within `abs_tol` absolutely or
    `rel_tol` relatively. The absolute branch is what makes small entries
    checkable at all: central differences carry roundoff around
    eps_machine * |loss| / eps, so an analytic value of, say, 1e-7 can
    never meet a purely relative bar. The reported max relative error is
    taken over elements that do not already pass absolutely.
    """
    max_rel = 0.0
    max_abs = 0.0
    ok = True
    for a, n in zip(tree_leaves(analytic), tree_leaves(numeric)):
        a = np.asarray(a, dtype=np.float64)
        n = np.asarray(n, dtype=np.float64)
        diff = np.abs(a - n)
        denom = np.maximum(np.abs(a), np.abs(n))
        rel = np.divide(diff, denom, out=np.zeros_like(diff), where=denom > 0)
        abs_pass = diff <= abs_tol
        ok = ok and bool(np.all(abs_pass | (rel <= rel_tol)))
        if np.any(~abs_pass):
            max_rel = max(max_rel, float(rel[~abs_pass].max(initial=0.0)))
        small = np.abs(a) < near_zero
        if np.any(small):
            max_abs = max(max_abs, float(diff[small].max(initial=0.0)))
    return GradCheckResult(
        max_rel_error=max_rel,
        max_abs_error_near_zero=max_abs,
        ok=ok and max_abs <= abs_tol,
    )
