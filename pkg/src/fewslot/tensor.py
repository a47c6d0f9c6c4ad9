"""Dense float64 tensors with reverse-mode differentiation on an explicit tape.

A ``Graph`` owns an ordered list of nodes; insertion order is topological order,
which makes the backward pass a single reverse sweep and lets the tape replay
its forward computation after leaf values change (used by ``grad_check``).
Every value is a C-contiguous ``numpy`` float64 array. There is no implicit
broadcasting: elementwise ops require equal shapes, except that either operand
may be a single-element tensor (scalar), and any other expansion must go
through the explicit ``broadcast_to`` op.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError, NumericError

Array = np.ndarray


def as_array(value) -> Array:
    """Copy ``value`` into a C-contiguous float64 array."""
    return np.array(value, dtype=np.float64, order="C")


class Tensor:
    """One node of a computation graph: an op record plus its output value."""

    __slots__ = ("graph", "id", "op", "inputs", "value", "meta")

    def __init__(self, graph: "Graph", node_id: int, op: str,
                 inputs: tuple["Tensor", ...], value: Array, meta=None):
        self.graph = graph
        self.id = node_id
        self.op = op
        self.inputs = inputs
        self.value = value
        self.meta = meta

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def item(self) -> float:
        if self.value.size != 1:
            raise ContractError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.value.reshape(()))

    def __repr__(self):
        return f"Tensor(id={self.id}, op={self.op!r}, shape={self.shape})"


class Graph:
    """Tape of tensor ops; single-threaded, append-only.

    ``parameters`` is the set of node ids marked trainable. When
    ``check_finite`` is set (the default) every non-leaf op output is checked
    and a ``NumericError`` naming the op is raised on NaN/Inf.
    """

    def __init__(self, check_finite: bool = True):
        self.nodes: list[Tensor] = []
        self.parameters: set[int] = set()
        self.check_finite = check_finite

    def constant(self, value) -> Tensor:
        return self._leaf(value, trainable=False)

    def parameter(self, value) -> Tensor:
        return self._leaf(value, trainable=True)

    def _leaf(self, value, trainable: bool) -> Tensor:
        node = Tensor(self, len(self.nodes), "leaf", (), as_array(value))
        self.nodes.append(node)
        if trainable:
            self.parameters.add(node.id)
        return node

    def _apply(self, op: str, inputs: tuple[Tensor, ...], meta=None) -> Tensor:
        for t in inputs:
            if t.graph is not self:
                raise ContractError(f"operand of {op!r} belongs to a different graph")
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            value = _FORWARD[op]([t.value for t in inputs], meta)
        if self.check_finite and not np.isfinite(value).all():
            raise NumericError(f"op {op!r} produced non-finite values")
        node = Tensor(self, len(self.nodes), op, inputs, value, meta)
        self.nodes.append(node)
        return node

    def replay(self) -> None:
        """Recompute every non-leaf value from current leaf values, in order."""
        for node in self.nodes:
            if node.op != "leaf":
                node.value = _FORWARD[node.op]([t.value for t in node.inputs], node.meta)

    def backward(self, loss: Tensor) -> dict[int, Array]:
        """Gradients of a scalar ``loss`` w.r.t. every parameter node.

        Visits each node reachable from the loss exactly once, in reverse
        insertion order. Parameters the loss does not depend on get zero
        gradients.
        """
        if loss.graph is not self:
            raise ContractError("loss tensor belongs to a different graph")
        if loss.value.size != 1:
            raise ContractError(f"loss must be scalar-shaped, got shape {loss.shape}")
        grads: dict[int, Array] = {loss.id: np.ones_like(loss.value)}
        for node in reversed(self.nodes[: loss.id + 1]):
            grad = grads.get(node.id)
            if grad is None or node.op == "leaf":
                continue
            input_grads = _BACKWARD[node.op](grad, [t.value for t in node.inputs],
                                             node.value, node.meta)
            for parent, g in zip(node.inputs, input_grads):
                if g is None:
                    continue
                acc = grads.get(parent.id)
                grads[parent.id] = g if acc is None else acc + g
        return {
            pid: grads.get(pid, np.zeros_like(self.nodes[pid].value))
            for pid in self.parameters
        }


# ---------------------------------------------------------------------------
# forward kernels
# ---------------------------------------------------------------------------

def _require_same_or_scalar(op: str, a: Array, b: Array) -> None:
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not match "
                             "(only scalar operands broadcast)")


def _fw_matmul(vals, meta):
    a, b = vals
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} are incompatible")
    return a @ b


def _conv_pad(length: int, kernel: int, padding: str) -> tuple[int, int]:
    if padding == "same":
        return (kernel - 1) // 2, kernel // 2
    if padding == "valid":
        return 0, 0
    raise ContractError(f"conv1d: unknown padding {padding!r}")


def _pad_last(x: Array, left: int, right: int) -> Array:
    if not (left or right):
        return x
    shape = x.shape[:-1] + (x.shape[-1] + left + right,)
    out = np.zeros(shape)
    out[..., left:left + x.shape[-1]] = x
    return out


def _fw_conv1d(vals, meta):
    x, w = vals
    padding = meta
    if x.ndim != 2 or w.ndim != 3:
        raise DimensionError(f"conv1d: expected input [ci, L] and kernels [co, ci, k], "
                             f"got {x.shape} and {w.shape}")
    ci, length = x.shape
    co, wci, k = w.shape
    if wci != ci:
        raise DimensionError(f"conv1d: input channels {ci} != kernel channels {wci}")
    if padding == "valid" and k > length:
        raise DimensionError(f"conv1d: kernel size {k} exceeds input length {length} "
                             "under valid padding")
    left, right = _conv_pad(length, k, padding)
    xp = _pad_last(x, left, right)
    out_length = xp.shape[1] - k + 1
    # correlation as k matmuls (BLAS) instead of a strided einsum
    out = w[:, :, 0] @ xp[:, 0:out_length]
    for j in range(1, k):
        out += w[:, :, j] @ xp[:, j:j + out_length]
    return out


def _fw_conv1d_batch(vals, meta):
    x, w = vals
    padding = meta
    if x.ndim != 3 or w.ndim != 3:
        raise DimensionError(f"conv1d_batch: expected input [B, ci, L] and kernels "
                             f"[co, ci, k], got {x.shape} and {w.shape}")
    batch, ci, length = x.shape
    co, wci, k = w.shape
    if wci != ci:
        raise DimensionError(f"conv1d_batch: input channels {ci} != kernel "
                             f"channels {wci}")
    if padding == "valid" and k > length:
        raise DimensionError(f"conv1d_batch: kernel size {k} exceeds input length "
                             f"{length} under valid padding")
    left, right = _conv_pad(length, k, padding)
    xp = _pad_last(x, left, right)
    out_length = xp.shape[2] - k + 1
    out = np.matmul(w[:, :, 0], xp[:, :, 0:out_length])
    for j in range(1, k):
        out += np.matmul(w[:, :, j], xp[:, :, j:j + out_length])
    return out


def _fw_transpose(vals, meta):
    x = vals[0]
    if x.ndim != 2:
        raise DimensionError(f"transpose: expected a matrix, got shape {x.shape}")
    return np.ascontiguousarray(x.T)


def _fw_relu(vals, meta):
    return np.maximum(vals[0], 0.0)


def _fw_sigmoid(vals, meta):
    x = vals[0]
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _fw_add(vals, meta):
    _require_same_or_scalar("add", vals[0], vals[1])
    return vals[0] + vals[1]


def _fw_sub(vals, meta):
    _require_same_or_scalar("sub", vals[0], vals[1])
    return vals[0] - vals[1]


def _fw_mul(vals, meta):
    _require_same_or_scalar("mul_elementwise", vals[0], vals[1])
    return vals[0] * vals[1]


def _fw_div(vals, meta):
    _require_same_or_scalar("div", vals[0], vals[1])
    return vals[0] / vals[1]


def _fw_concat(vals, meta):
    a, b = vals
    axis = meta
    if a.ndim != b.ndim:
        raise DimensionError(f"concat: ranks differ, shapes {a.shape} and {b.shape}")
    for d in range(a.ndim):
        if d != axis and a.shape[d] != b.shape[d]:
            raise DimensionError(f"concat: shapes {a.shape} and {b.shape} differ "
                                 f"outside axis {axis}")
    return np.concatenate([a, b], axis=axis)


def _fw_sum(vals, meta):
    return np.sum(vals[0], axis=meta)


def _fw_mean(vals, meta):
    return np.mean(vals[0], axis=meta)


def _fw_sqrt(vals, meta):
    x = vals[0]
    if np.any(x < 0):
        raise NumericError("sqrt of negative value")
    return np.sqrt(x)


def _fw_exp(vals, meta):
    return np.exp(vals[0])


def _fw_log(vals, meta):
    x = vals[0]
    if np.any(x <= 0):
        raise NumericError("log of non-positive value")
    return np.log(x)


def _fw_reshape(vals, meta):
    x = vals[0]
    shape = meta
    if int(np.prod(shape, dtype=np.int64)) != x.size:
        raise DimensionError(f"reshape: cannot reshape {x.shape} to {shape}")
    return np.reshape(x, shape)


def _fw_broadcast_to(vals, meta):
    x = vals[0]
    shape = meta
    if x.ndim != len(shape):
        raise DimensionError(f"broadcast_to: rank of {x.shape} differs from {shape}")
    for have, want in zip(x.shape, shape):
        if have != want and have != 1:
            raise DimensionError(f"broadcast_to: cannot expand {x.shape} to {shape}")
    return np.ascontiguousarray(np.broadcast_to(x, shape))


_FORWARD = {
    "matmul": _fw_matmul,
    "conv1d": _fw_conv1d,
    "conv1d_batch": _fw_conv1d_batch,
    "transpose": _fw_transpose,
    "relu": _fw_relu,
    "sigmoid": _fw_sigmoid,
    "add": _fw_add,
    "sub": _fw_sub,
    "mul_elementwise": _fw_mul,
    "div": _fw_div,
    "concat": _fw_concat,
    "sum_axis": _fw_sum,
    "mean_axis": _fw_mean,
    "sqrt": _fw_sqrt,
    "exp": _fw_exp,
    "log": _fw_log,
    "reshape": _fw_reshape,
    "broadcast_to": _fw_broadcast_to,
}


# ---------------------------------------------------------------------------
# backward rules: grad wrt output -> grads wrt each input
# ---------------------------------------------------------------------------

def _unbroadcast_scalar(grad: Array, shape: tuple[int, ...]) -> Array:
    # inverse of the scalar-broadcast allowance in elementwise ops
    if grad.shape == shape:
        return grad
    return np.sum(grad).reshape(shape)


def _bw_matmul(grad, vals, out, meta):
    a, b = vals
    return grad @ b.T, a.T @ grad


def _bw_conv1d(grad, vals, out, meta):
    x, w = vals
    padding = meta
    ci, length = x.shape
    co, _, k = w.shape
    left, right = _conv_pad(length, k, padding)
    xp = _pad_last(x, left, right)
    out_length = grad.shape[1]
    grad_w = np.empty_like(w)
    grad_xp = np.zeros_like(xp)
    for j in range(k):
        grad_w[:, :, j] = grad @ xp[:, j:j + out_length].T
        grad_xp[:, j:j + out_length] += w[:, :, j].T @ grad
    grad_x = grad_xp[:, left:left + length] if (left or right) else grad_xp
    return np.ascontiguousarray(grad_x), grad_w


def _bw_conv1d_batch(grad, vals, out, meta):
    x, w = vals
    padding = meta
    batch, ci, length = x.shape
    co, _, k = w.shape
    left, right = _conv_pad(length, k, padding)
    xp = _pad_last(x, left, right)
    out_length = grad.shape[2]
    grad_w = np.empty_like(w)
    grad_xp = np.zeros_like(xp)
    for j in range(k):
        # [B,co,L'] x [B,ci,L'] contracted over (B, L'); tensordot hits BLAS
        grad_w[:, :, j] = np.tensordot(grad, xp[:, :, j:j + out_length],
                                       axes=([0, 2], [0, 2]))
        grad_xp[:, :, j:j + out_length] += np.matmul(w[:, :, j].T, grad)
    grad_x = grad_xp[:, :, left:left + length] if (left or right) else grad_xp
    return np.ascontiguousarray(grad_x), grad_w


def _bw_transpose(grad, vals, out, meta):
    return (np.ascontiguousarray(grad.T),)


def _bw_relu(grad, vals, out, meta):
    return (grad * (vals[0] > 0),)


def _bw_sigmoid(grad, vals, out, meta):
    return (grad * out * (1.0 - out),)


def _bw_add(grad, vals, out, meta):
    a, b = vals
    return _unbroadcast_scalar(grad, a.shape), _unbroadcast_scalar(grad, b.shape)


def _bw_sub(grad, vals, out, meta):
    a, b = vals
    return _unbroadcast_scalar(grad, a.shape), _unbroadcast_scalar(-grad, b.shape)


def _bw_mul(grad, vals, out, meta):
    a, b = vals
    return (_unbroadcast_scalar(grad * b, a.shape),
            _unbroadcast_scalar(grad * a, b.shape))


def _bw_div(grad, vals, out, meta):
    a, b = vals
    return (_unbroadcast_scalar(grad / b, a.shape),
            _unbroadcast_scalar(-grad * a / (b * b), b.shape))


def _bw_concat(grad, vals, out, meta):
    a, b = vals
    axis = meta
    split = a.shape[axis]
    index = [slice(None)] * grad.ndim
    index[axis] = slice(0, split)
    ga = grad[tuple(index)]
    index[axis] = slice(split, None)
    gb = grad[tuple(index)]
    return np.ascontiguousarray(ga), np.ascontiguousarray(gb)


def _bw_sum(grad, vals, out, meta):
    x = vals[0]
    if meta is None:
        return (np.full_like(x, float(grad.reshape(()))),)
    return (np.ascontiguousarray(np.broadcast_to(np.expand_dims(grad, meta), x.shape)),)


def _bw_mean(grad, vals, out, meta):
    x = vals[0]
    if meta is None:
        return (np.full_like(x, float(grad.reshape(())) / x.size),)
    g = np.broadcast_to(np.expand_dims(grad, meta), x.shape) / x.shape[meta]
    return (np.ascontiguousarray(g),)


def _bw_sqrt(grad, vals, out, meta):
    return (grad * 0.5 / out,)


def _bw_exp(grad, vals, out, meta):
    return (grad * out,)


def _bw_log(grad, vals, out, meta):
    return (grad / vals[0],)


def _bw_reshape(grad, vals, out, meta):
    return (np.reshape(grad, vals[0].shape),)


def _bw_broadcast_to(grad, vals, out, meta):
    x = vals[0]
    axes = tuple(d for d in range(x.ndim) if x.shape[d] == 1 and grad.shape[d] != 1)
    return (np.sum(grad, axis=axes, keepdims=True) if axes else grad.copy(),)


_BACKWARD = {
    "matmul": _bw_matmul,
    "conv1d": _bw_conv1d,
    "conv1d_batch": _bw_conv1d_batch,
    "transpose": _bw_transpose,
    "relu": _bw_relu,
    "sigmoid": _bw_sigmoid,
    "add": _bw_add,
    "sub": _bw_sub,
    "mul_elementwise": _bw_mul,
    "div": _bw_div,
    "concat": _bw_concat,
    "sum_axis": _bw_sum,
    "mean_axis": _bw_mean,
    "sqrt": _bw_sqrt,
    "exp": _bw_exp,
    "log": _bw_log,
    "reshape": _bw_reshape,
    "broadcast_to": _bw_broadcast_to,
}


# ---------------------------------------------------------------------------
# public op constructors
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    return a.graph._apply("matmul", (a, b))


def conv1d(x: Tensor, kernels: Tensor, padding: str = "same") -> Tensor:
    """Cross-correlate ``x`` [ci, L] with ``kernels`` [co, ci, k]."""
    return x.graph._apply("conv1d", (x, kernels), padding)


def conv1d_batch(x: Tensor, kernels: Tensor, padding: str = "same") -> Tensor:
    """conv1d applied to a batch: ``x`` [B, ci, L] -> [B, co, L']."""
    return x.graph._apply("conv1d_batch", (x, kernels), padding)


def transpose(x: Tensor) -> Tensor:
    return x.graph._apply("transpose", (x,))


def relu(x: Tensor) -> Tensor:
    return x.graph._apply("relu", (x,))


def sigmoid(x: Tensor) -> Tensor:
    return x.graph._apply("sigmoid", (x,))


def add(a: Tensor, b: Tensor) -> Tensor:
    return a.graph._apply("add", (a, b))


def sub(a: Tensor, b: Tensor) -> Tensor:
    return a.graph._apply("sub", (a, b))


def mul_elementwise(a: Tensor, b: Tensor) -> Tensor:
    return a.graph._apply("mul_elementwise", (a, b))


def div(a: Tensor, b: Tensor) -> Tensor:
    return a.graph._apply("div", (a, b))


def concat(a: Tensor, b: Tensor, axis: int) -> Tensor:
    return a.graph._apply("concat", (a, b), axis)


def sum_axis(x: Tensor, axis: int | None = None) -> Tensor:
    return x.graph._apply("sum_axis", (x,), axis)


def mean_axis(x: Tensor, axis: int | None = None) -> Tensor:
    return x.graph._apply("mean_axis", (x,), axis)


def sqrt(x: Tensor) -> Tensor:
    return x.graph._apply("sqrt", (x,))


def exp(x: Tensor) -> Tensor:
    return x.graph._apply("exp", (x,))


def log(x: Tensor) -> Tensor:
    return x.graph._apply("log", (x,))


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    return x.graph._apply("reshape", (x,), tuple(shape))


def broadcast_to(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    return x.graph._apply("broadcast_to", (x,), tuple(shape))


def scale(x: Tensor, factor: float) -> Tensor:
    """Multiply by a python scalar (convenience over mul_elementwise)."""
    return mul_elementwise(x, x.graph.constant(factor))


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    """Outcome of comparing backward() against central finite differences."""

    passed: bool
    tolerance: float
    max_relative_error: float
    worst_parameter: int | None = None
    worst_element: int | None = None
    per_parameter: dict[int, float] = field(default_factory=dict)

    def __str__(self):
        if self.passed:
            return (f"grad_check passed: max relative error "
                    f"{self.max_relative_error:.3e} < {self.tolerance:.1e}")
        return (f"grad_check FAILED at parameter node {self.worst_parameter} "
                f"element {self.worst_element}: relative error "
                f"{self.max_relative_error:.3e} >= {self.tolerance:.1e}")


def _relative_error(analytic: float, numeric: float) -> float:
    # unit-floored: relative for large gradients, absolute near zero
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1.0)


def grad_check(graph: Graph, loss: Tensor, tolerance: float = 1e-4,
               step: float = 1e-5) -> GradCheckReport:
    """Check every parameter element of ``graph`` against finite differences.

    Perturbs each element by ±``step``, replays the tape, and compares the
    central difference with the analytic gradient from ``backward``. Restores
    all values before returning. A graph without parameters passes vacuously.
    """
    analytic = graph.backward(loss)
    report = GradCheckReport(passed=True, tolerance=tolerance, max_relative_error=0.0)
    for pid in sorted(graph.parameters):
        node = graph.nodes[pid]
        flat = node.value.reshape(-1)
        grads = analytic[pid].reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            graph.replay()
            plus = loss.item()
            flat[i] = original - step
            graph.replay()
            minus = loss.item()
            flat[i] = original
            numeric = (plus - minus) / (2.0 * step)
            err = _relative_error(float(grads[i]), numeric)
            if err > worst:
                worst = err
            if err > report.max_relative_error:
                report.max_relative_error = err
                report.worst_parameter = pid
                report.worst_element = i
        report.per_parameter[pid] = worst
    graph.replay()
    if report.max_relative_error >= tolerance:
        report.passed = False
    else:
        report.worst_parameter = None
        report.worst_element = None
    return report
