"""Reverse-mode differentiation over recorded array computations.

The engine records every operation of a forward computation onto an
append-only tape (:class:`Tape`). A reverse sweep over the tape yields
gradients with respect to any recorded leaves. The sweep itself can be
*recorded*, i.e. expressed as further tape operations, which makes the
gradients ordinary differentiable values; differentiating through them a
second time is what lets an outer loss flow backwards through one inner
SGD step (reverse-over-reverse). No persistent higher-order graph is kept:
one tape per meta-step is enough.

Values are float64 ``numpy`` arrays (scalars are 0-d arrays). Supported
primitives: add, sub, mul, div, neg, exp, log, tanh, square, minimum,
maximum, clip, matmul, transpose, reshape, sum, mean, broadcast_to and its
adjoint sum_to. There is no in-place mutation of recorded values, so a
tape replays bit-exactly.

Subgradient conventions (deterministic, measure-zero events):
  * minimum/maximum at ties route the gradient to the first argument;
  * clip passes the gradient only strictly inside (lo, hi) — at or beyond
    either bound the gradient is exactly 0.0, which is what creates the
    trust region when clipping a probability ratio.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractViolation, NumericalFailure

Array = np.ndarray

_LEAF = "leaf"
_CONST = "const"


class Node:
    __slots__ = ("op", "value", "parents", "meta")

    def __init__(self, op: str, value: Array, parents: tuple[int, ...], meta):
        self.op = op
        self.value = value
        self.parents = parents
        self.meta = meta


class Var:
    """Handle to one node of a tape; the engine's differentiable value."""

    __slots__ = ("tape", "idx")

    def __init__(self, tape: "Tape", idx: int):
        self.tape = tape
        self.idx = idx

    @property
    def value(self) -> Array:
        return self.tape.nodes[self.idx].value

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    # Operator sugar; scalars and arrays are wrapped as constants.
    def _coerce(self, other) -> "Var":
        if isinstance(other, Var):
            if other.tape is not self.tape:
                raise ContractViolation("operands recorded on different tapes")
            return other
        return self.tape.constant(other)

    def __add__(self, other):
        return add(self, self._coerce(other))

    def __radd__(self, other):
        return add(self._coerce(other), self)

    def __sub__(self, other):
        return sub(self, self._coerce(other))

    def __rsub__(self, other):
        return sub(self._coerce(other), self)

    def __mul__(self, other):
        return mul(self, self._coerce(other))

    def __rmul__(self, other):
        return mul(self._coerce(other), self)

    def __truediv__(self, other):
        return div(self, self._coerce(other))

    def __rtruediv__(self, other):
        return div(self._coerce(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, self._coerce(other))

    def __repr__(self):
        return f"Var(idx={self.idx}, shape={self.shape})"


class Tape:
    """Append-only computation record.

    Node parents always precede the node, so any suffix-to-prefix sweep is
    a valid reverse topological order.
    """

    def __init__(self):
        self.nodes: list[Node] = []

    def _append(self, op: str, value: Array, parents: tuple[int, ...], meta=None) -> Var:
        idx = len(self.nodes)
        if not np.all(np.isfinite(value)):
            raise NumericalFailure(f"non-finite value from op '{op}' at node {idx}", node_id=idx)
        self.nodes.append(Node(op, value, parents, meta))
        return Var(self, idx)

    def leaf(self, value) -> Var:
        """Record a differentiable root input."""
        return self._append(_LEAF, _as_f64(value), ())

    def constant(self, value) -> Var:
        """Record a non-differentiable value (gradients never flow into it)."""
        return self._append(_CONST, _as_f64(value), ())

    def is_leaf(self, v: Var) -> bool:
        return self.nodes[v.idx].op == _LEAF

    def __len__(self):
        return len(self.nodes)


def _as_f64(value) -> Array:
    arr = np.asarray(value, dtype=np.float64)
    return arr


# ---------------------------------------------------------------------------
# Forward primitives
# ---------------------------------------------------------------------------

def _binary(op: str, fn, a: Var, b: Var) -> Var:
    if a.tape is not b.tape:
        raise ContractViolation("operands recorded on different tapes")
    return a.tape._append(op, fn(a.value, b.value), (a.idx, b.idx))


def add(a: Var, b: Var) -> Var:
    return _binary("add", np.add, a, b)


def sub(a: Var, b: Var) -> Var:
    return _binary("sub", np.subtract, a, b)


def mul(a: Var, b: Var) -> Var:
    return _binary("mul", np.multiply, a, b)


def div(a: Var, b: Var) -> Var:
    return _binary("div", np.divide, a, b)


def minimum(a: Var, b: Var) -> Var:
    return _binary("minimum", np.minimum, a, b)


def maximum(a: Var, b: Var) -> Var:
    return _binary("maximum", np.maximum, a, b)


def matmul(a: Var, b: Var) -> Var:
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise ContractViolation("matmul expects 2-d operands")
    return _binary("matmul", np.matmul, a, b)


def neg(a: Var) -> Var:
    return a.tape._append("neg", np.negative(a.value), (a.idx,))


def exp(a: Var) -> Var:
    return a.tape._append("exp", np.exp(a.value), (a.idx,))


def log(a: Var) -> Var:
    return a.tape._append("log", np.log(a.value), (a.idx,))


def tanh(a: Var) -> Var:
    return a.tape._append("tanh", np.tanh(a.value), (a.idx,))


def square(a: Var) -> Var:
    return a.tape._append("square", np.square(a.value), (a.idx,))


def clip(a: Var, lo: float, hi: float) -> Var:
    return a.tape._append("clip", np.clip(a.value, lo, hi), (a.idx,), (float(lo), float(hi)))


def transpose(a: Var) -> Var:
    if a.value.ndim != 2:
        raise ContractViolation("transpose expects a 2-d operand")
    return a.tape._append("transpose", a.value.T.copy(), (a.idx,))


def reshape(a: Var, shape: tuple[int, ...]) -> Var:
    shape = tuple(shape)
    return a.tape._append("reshape", a.value.reshape(shape).copy(), (a.idx,), shape)


def vsum(a: Var, axis: int | None = None) -> Var:
    return a.tape._append("sum", np.sum(a.value, axis=axis), (a.idx,), axis)


def vmean(a: Var, axis: int | None = None) -> Var:
    return a.tape._append("mean", np.mean(a.value, axis=axis), (a.idx,), axis)


def broadcast_to(a: Var, shape: tuple[int, ...]) -> Var:
    shape = tuple(shape)
    return a.tape._append("broadcast_to", np.broadcast_to(a.value, shape).copy(), (a.idx,), shape)


def sum_to(a: Var, shape: tuple[int, ...]) -> Var:
    shape = tuple(shape)
    return a.tape._append("sum_to", _sum_to_value(a.value, shape), (a.idx,), shape)


def _sum_to_value(x: Array, shape: tuple[int, ...]) -> Array:
    """Reduce a broadcast result back to ``shape`` by summing expanded axes."""
    if x.shape == shape:
        return x
    while x.ndim > len(shape):
        x = x.sum(axis=0)
    for axis, (have, want) in enumerate(zip(x.shape, shape)):
        if want == 1 and have != 1:
            x = x.sum(axis=axis, keepdims=True)
    return x.reshape(shape)


_FORWARD: dict[str, Callable] = {
    "add": lambda vals, meta: np.add(*vals),
    "sub": lambda vals, meta: np.subtract(*vals),
    "mul": lambda vals, meta: np.multiply(*vals),
    "div": lambda vals, meta: np.divide(*vals),
    "minimum": lambda vals, meta: np.minimum(*vals),
    "maximum": lambda vals, meta: np.maximum(*vals),
    "matmul": lambda vals, meta: np.matmul(*vals),
    "neg": lambda vals, meta: np.negative(vals[0]),
    "exp": lambda vals, meta: np.exp(vals[0]),
    "log": lambda vals, meta: np.log(vals[0]),
    "tanh": lambda vals, meta: np.tanh(vals[0]),
    "square": lambda vals, meta: np.square(vals[0]),
    "clip": lambda vals, meta: np.clip(vals[0], meta[0], meta[1]),
    "transpose": lambda vals, meta: vals[0].T.copy(),
    "reshape": lambda vals, meta: vals[0].reshape(meta).copy(),
    "sum": lambda vals, meta: np.sum(vals[0], axis=meta),
    "mean": lambda vals, meta: np.mean(vals[0], axis=meta),
    "broadcast_to": lambda vals, meta: np.broadcast_to(vals[0], meta).copy(),
    "sum_to": lambda vals, meta: _sum_to_value(vals[0], meta),
}


def replay(tape: Tape) -> list[Array]:
    """Re-execute the record from its stored leaf/constant values.

    Returns the recomputed value of every node, in record order. On the
    same inputs this reproduces the recorded values bit-exactly.
    """
    values: list[Array] = []
    for node in tape.nodes:
        if node.op in (_LEAF, _CONST):
            values.append(node.value)
        else:
            values.append(_FORWARD[node.op]([values[p] for p in node.parents], node.meta))
    return values


# ---------------------------------------------------------------------------
# Reverse sweep
#
# Each vjp is written once against an executor interface and runs in two
# modes: raw (plain numpy, for the final gradient) and recorded (appends
# tape nodes, so the sweep itself stays differentiable).
# ---------------------------------------------------------------------------


class _RawExec:
    def __init__(self, tape: Tape):
        self._tape = tape

    def h(self, idx: int) -> Array:  # handle to an existing node's value
        return self._tape.nodes[idx].value

    def const(self, value) -> Array:
        return _as_f64(value)

    add = staticmethod(np.add)
    sub = staticmethod(np.subtract)
    mul = staticmethod(np.multiply)
    div = staticmethod(np.divide)
    neg = staticmethod(np.negative)
    matmul = staticmethod(np.matmul)

    @staticmethod
    def transpose(x):
        # contiguous copy so BLAS sees the same layout as the recorded path
        return x.T.copy()

    @staticmethod
    def reshape(x, shape):
        return x.reshape(shape)

    @staticmethod
    def broadcast_to(x, shape):
        return np.broadcast_to(x, shape)

    sum_to = staticmethod(_sum_to_value)

    @staticmethod
    def value_of(handle):
        return handle


class _TapeExec:
    def __init__(self, tape: Tape):
        self._tape = tape

    def h(self, idx: int) -> Var:
        return Var(self._tape, idx)

    def const(self, value) -> Var:
        return self._tape.constant(value)

    add = staticmethod(add)
    sub = staticmethod(sub)
    mul = staticmethod(mul)
    div = staticmethod(div)
    neg = staticmethod(neg)
    matmul = staticmethod(matmul)
    transpose = staticmethod(transpose)
    reshape = staticmethod(reshape)
    broadcast_to = staticmethod(broadcast_to)
    sum_to = staticmethod(sum_to)

    @staticmethod
    def value_of(handle: Var) -> Array:
        return handle.value


def _fit(ex, grad, shape: tuple[int, ...]):
    """Reduce a (possibly broadcast) gradient back to a parent's shape."""
    if ex.value_of(grad).shape == shape:
        return grad
    return ex.sum_to(grad, shape)


def _keepdims_shape(shape: tuple[int, ...], axis: int | None) -> tuple[int, ...]:
    if axis is None:
        return (1,) * len(shape)
    return shape[:axis] + (1,) + shape[axis + 1 :]


def _vjp(ex, tape: Tape, idx: int, node: Node, grad):
    """Yield (parent_idx, gradient contribution) pairs for one node."""
    op = node.op
    p = node.parents
    if op == "add":
        a, b = (tape.nodes[i].value.shape for i in p)
        return ((p[0], _fit(ex, grad, a)), (p[1], _fit(ex, grad, b)))
    if op == "sub":
        a, b = (tape.nodes[i].value.shape for i in p)
        return ((p[0], _fit(ex, grad, a)), (p[1], _fit(ex, ex.neg(grad), b)))
    if op == "mul":
        a, b = (tape.nodes[i].value.shape for i in p)
        return (
            (p[0], _fit(ex, ex.mul(grad, ex.h(p[1])), a)),
            (p[1], _fit(ex, ex.mul(grad, ex.h(p[0])), b)),
        )
    if op == "div":
        a, b = (tape.nodes[i].value.shape for i in p)
        gy = ex.neg(ex.div(ex.mul(grad, ex.h(p[0])), ex.mul(ex.h(p[1]), ex.h(p[1]))))
        return ((p[0], _fit(ex, ex.div(grad, ex.h(p[1])), a)), (p[1], _fit(ex, gy, b)))
    if op == "neg":
        return ((p[0], ex.neg(grad)),)
    if op == "exp":
        return ((p[0], ex.mul(grad, ex.h(idx))),)
    if op == "log":
        return ((p[0], ex.div(grad, ex.h(p[0]))),)
    if op == "tanh":
        t = ex.h(idx)
        one = ex.const(np.float64(1.0))
        return ((p[0], ex.mul(grad, ex.sub(one, ex.mul(t, t)))),)
    if op == "square":
        two = ex.const(np.float64(2.0))
        return ((p[0], ex.mul(grad, ex.mul(two, ex.h(p[0])))),)
    if op in ("minimum", "maximum"):
        av, bv = tape.nodes[p[0]].value, tape.nodes[p[1]].value
        # ties route to the first argument
        take_a = (av <= bv) if op == "minimum" else (av >= bv)
        mask = np.asarray(take_a, dtype=np.float64)
        ga = ex.mul(grad, ex.const(mask))
        gb = ex.mul(grad, ex.const(1.0 - mask))
        a, b = av.shape, bv.shape
        return ((p[0], _fit(ex, ga, a)), (p[1], _fit(ex, gb, b)))
    if op == "clip":
        lo, hi = node.meta
        xv = tape.nodes[p[0]].value
        mask = np.asarray((xv > lo) & (xv < hi), dtype=np.float64)
        return ((p[0], ex.mul(grad, ex.const(mask))),)
    if op == "matmul":
        return (
            (p[0], ex.matmul(grad, ex.transpose(ex.h(p[1])))),
            (p[1], ex.matmul(ex.transpose(ex.h(p[0])), grad)),
        )
    if op == "transpose":
        return ((p[0], ex.transpose(grad)),)
    if op == "reshape":
        return ((p[0], ex.reshape(grad, tape.nodes[p[0]].value.shape)),)
    if op in ("sum", "mean"):
        src_shape = tape.nodes[p[0]].value.shape
        axis = node.meta
        g = ex.reshape(grad, _keepdims_shape(src_shape, axis))
        g = ex.broadcast_to(g, src_shape)
        if op == "mean":
            n = np.prod(src_shape) if axis is None else src_shape[axis]
            g = ex.mul(g, ex.const(np.float64(1.0 / n)))
        return ((p[0], g),)
    if op == "broadcast_to":
        return ((p[0], ex.sum_to(grad, tape.nodes[p[0]].value.shape)),)
    if op == "sum_to":
        return ((p[0], ex.broadcast_to(grad, tape.nodes[p[0]].value.shape)),)
    raise AssertionError(f"no vjp for op '{op}'")


def _sweep(tape: Tape, output: Var, wrt_ids: Sequence[int], recorded: bool):
    """Reverse sweep from ``output``; returns one gradient handle per wrt id."""
    if output.tape is not tape:
        raise ContractViolation("output does not belong to the record")
    if output.value.size != 1:
        raise ContractViolation("gradient output must be a scalar")
    if not wrt_ids:
        return []
    ex = _TapeExec(tape) if recorded else _RawExec(tape)
    adjoints: dict[int, object] = {output.idx: ex.const(np.ones_like(output.value))}
    wrt_set = set(wrt_ids)
    results: dict[int, object] = {}
    for idx in range(output.idx, -1, -1):
        grad = adjoints.pop(idx, None)
        if grad is None:
            if not adjoints:
                break
            continue
        if idx in wrt_set:
            results[idx] = grad
            # a wrt target may still have parents (internal use); for leaves
            # the vjp step below is a no-op
        node = tape.nodes[idx]
        if node.op not in (_LEAF, _CONST):
            for pidx, contrib in _vjp(ex, tape, idx, node, grad):
                prev = adjoints.get(pidx)
                adjoints[pidx] = contrib if prev is None else ex.add(prev, contrib)
        if not adjoints:
            break
    return [results.get(i) for i in wrt_ids]


class GradientVector:
    """Gradients keyed by root-input node id; missing dependence is 0.0."""

    def __init__(self, entries: dict[int, Array]):
        self.entries = entries

    def wrt(self, var: Var) -> Array:
        return self.entries[var.idx]

    def __getitem__(self, var: Var) -> Array:
        return self.wrt(var)

    def __len__(self):
        return len(self.entries)


def _check_wrt(tape: Tape, wrt: Sequence[Var]) -> list[int]:
    ids = []
    for v in wrt:
        if v.tape is not tape or v.idx >= len(tape.nodes):
            raise ContractViolation("wrt contains ids not in the record")
        if tape.nodes[v.idx].op != _LEAF:
            raise ContractViolation(f"wrt node {v.idx} is not a root input")
        ids.append(v.idx)
    return ids


def record(f: Callable[..., Var], inputs: Iterable) -> tuple[Var, Tape]:
    """Run ``f`` on fresh leaves for ``inputs`` and return (output, record)."""
    tape = Tape()
    leaves = [tape.leaf(x) for x in inputs]
    out = f(*leaves)
    if not isinstance(out, Var) or out.tape is not tape:
        raise ContractViolation("recorded function must return a Var on the record")
    return out, tape


def gradient(tape: Tape, output: Var, wrt: Sequence[Var]) -> GradientVector:
    """d(output)/d(p) for each root input p in ``wrt``.

    Roots the output does not depend on get an exactly-zero gradient.
    """
    ids = _check_wrt(tape, wrt)
    handles = _sweep(tape, output, ids, recorded=False)
    entries = {}
    for var_id, h in zip(ids, handles):
        entries[var_id] = (
            np.zeros_like(tape.nodes[var_id].value) if h is None else np.asarray(h, dtype=np.float64)
        )
    return GradientVector(entries)


def recorded_gradient(tape: Tape, output: Var, wrt: Sequence[Var]) -> list[Var]:
    """Reverse sweep whose result is itself recorded: gradients come back as
    Vars on the same tape, so they can be differentiated again."""
    ids = [v.idx for v in wrt]
    handles = _sweep(tape, output, ids, recorded=True)
    out = []
    for var_id, h in zip(ids, handles):
        out.append(h if h is not None else tape.constant(np.zeros_like(tape.nodes[var_id].value)))
    return out


def grad_of_grad_dot(
    tape: Tape,
    inner_loss: Var,
    inner_params: Sequence[Var],
    v: Sequence[Array],
    wrt: Sequence[Var],
) -> GradientVector:
    """d(∇_{inner_params} inner_loss · v)/d(p) for each p in ``wrt``.

    ``v`` is treated as a constant: no gradient flows into it. This is the
    mixed second derivative needed to push an outer loss through an inner
    gradient step.
    """
    if len(v) != len(inner_params):
        raise ContractViolation("v must have one block per inner parameter")
    for blk, p in zip(v, inner_params):
        if np.shape(blk) != p.value.shape:
            raise ContractViolation("v block shape does not match inner parameter")
    _check_wrt(tape, wrt)
    grads = recorded_gradient(tape, inner_loss, inner_params)
    total: Var | None = None
    for g, blk in zip(grads, v):
        term = vsum(mul(g, tape.constant(blk)))
        total = term if total is None else add(total, term)
    assert total is not None
    return gradient(tape, total, wrt)
