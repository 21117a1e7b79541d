"""Reverse-mode automatic differentiation over dense 2-D float64 matrices.

A `Tape` records one forward pass (define-by-run) and is rebuilt for every
pass; `backward` walks the tape in reverse and accumulates gradients into the
`ParamStore` slots.  Accumulation is deliberate: calling `backward` on two
different tapes without a reset in between sums both contributions into the
same slots, which is exactly what the joint adaptation step needs to combine
task and adversarial gradients.  `ParamStore.reset_grads` zeroes every slot.

Everything is 64-bit: finite-difference checks at 1e-4 relative tolerance are
not reliable in float32.  All values must stay finite; any operation that
produces a NaN/Inf raises `NumericError` immediately.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    LabelError,
    NumericError,
    ParameterError,
    ShapeError,
    StateError,
)

# probabilities entering binary cross-entropy are clamped to [TAU, 1-TAU]
BCE_CLAMP = 1e-7


def _as_matrix(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {arr.shape}")
    return arr


class Param:
    """A named trainable matrix with a gradient slot and optimizer state.

    `m`, `v` are the first/second moment accumulators and `step` the
    per-parameter update count used for bias correction.
    """

    __slots__ = ("name", "value", "grad", "m", "v", "step")

    def __init__(self, name: str, value):
        self.name = name
        self.value = _as_matrix(value).copy()
        self.grad = np.zeros_like(self.value)
        self.m = np.zeros_like(self.value)
        self.v = np.zeros_like(self.value)
        self.step = 0

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.value.shape})"


class ParamStore:
    """Ordered mapping from hierarchical names to parameters.

    Iteration order is insertion order, which keeps every whole-store
    operation (global gradient norms, optimizer sweeps) deterministic.
    """

    def __init__(self):
        self._params: dict[str, Param] = {}

    def add(self, name: str, value) -> Param:
        if name in self._params:
            raise ParameterError(f"duplicate parameter name: {name}")
        p = Param(name, value)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Param:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def params(self) -> Iterable[Param]:
        return self._params.values()

    def reset_grads(self) -> None:
        """Zero every gradient slot."""
        for p in self._params.values():
            p.grad[...] = 0.0


class TapeNode:
    """One recorded value in a forward pass."""

    __slots__ = ("tape", "idx", "value", "parents", "vjp", "param")

    def __init__(self, tape, idx, value, parents, vjp, param):
        self.tape = tape
        self.idx = idx
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.param = param

    @property
    def shape(self):
        return self.value.shape


class Tape:
    """Define-by-run record of a single forward pass.

    Nodes are appended in execution order, so the list itself is a
    topological order and `backward` can walk it in reverse.
    """

    def __init__(self):
        self.nodes: list[TapeNode] = []

    def _record(
        self,
        value: np.ndarray,
        parents: tuple[TapeNode, ...],
        vjp: Callable[[np.ndarray], tuple[np.ndarray, ...]] | None,
        param: Param | None = None,
    ) -> TapeNode:
        if not np.all(np.isfinite(value)):
            raise NumericError("operation produced a non-finite value")
        node = TapeNode(self, len(self.nodes), value, parents, vjp, param)
        self.nodes.append(node)
        return node

    def constant(self, x) -> TapeNode:
        """Record a leaf that receives no gradient."""
        return self._record(_as_matrix(x), (), None)

    def watch(self, param: Param) -> TapeNode:
        """Record a leaf whose gradient accumulates into `param.grad`."""
        return self._record(param.value, (), None, param=param)


def _same_tape(*nodes: TapeNode) -> Tape:
    tape = nodes[0].tape
    for n in nodes[1:]:
        if n.tape is not tape:
            raise StateError("operands were recorded on different tapes")
    return tape


def matmul(a: TapeNode, b: TapeNode) -> TapeNode:
    """Matrix product a @ b.

    Backward: dL/da = g @ b^T, dL/db = a^T @ g.
    """
    tape = _same_tape(a, b)
    av, bv = a.value, b.value
    if av.shape[1] != bv.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {av.shape} x {bv.shape}")

    def vjp(g):
        return g @ bv.T, av.T @ g

    return tape._record(av @ bv, (a, b), vjp)


def affine(x: TapeNode, W: TapeNode, b: TapeNode) -> TapeNode:
    """x @ W + b, the bias row broadcast over rows of x."""
    tape = _same_tape(x, W, b)
    xv, Wv, bv = x.value, W.value, b.value
    if xv.shape[1] != Wv.shape[0]:
        raise ShapeError(f"affine inner dimensions disagree: {xv.shape} x {Wv.shape}")
    if bv.shape != (1, Wv.shape[1]):
        raise ShapeError(f"bias shape {bv.shape} does not match (1, {Wv.shape[1]})")

    def vjp(g):
        return g @ Wv.T, xv.T @ g, g.sum(axis=0, keepdims=True)

    return tape._record(xv @ Wv + bv, (x, W, b), vjp)


def activation(x: TapeNode, kind: str) -> TapeNode:
    """Elementwise tanh or relu."""
    if kind == "tanh":
        out = np.tanh(x.value)

        def vjp(g):
            return (g * (1.0 - out * out),)

    elif kind == "relu":
        mask = x.value > 0.0
        out = np.where(mask, x.value, 0.0)

        def vjp(g):
            return (g * mask,)

    else:
        raise ParameterError(f"unknown activation kind: {kind!r}")
    return x.tape._record(out, (x,), vjp)


def sigmoid(x: TapeNode) -> TapeNode:
    """Elementwise logistic function, computed in the overflow-safe split form."""
    xv = x.value
    out = np.where(xv >= 0.0, 1.0 / (1.0 + np.exp(-np.abs(xv))),
                   np.exp(-np.abs(xv)) / (1.0 + np.exp(-np.abs(xv))))

    def vjp(g):
        return (g * out * (1.0 - out),)

    return x.tape._record(out, (x,), vjp)


def hadamard(a: TapeNode, b: TapeNode) -> TapeNode:
    """Elementwise product of equal-shape matrices."""
    tape = _same_tape(a, b)
    av, bv = a.value, b.value
    if av.shape != bv.shape:
        raise ShapeError(f"hadamard shapes disagree: {av.shape} vs {bv.shape}")

    def vjp(g):
        return g * bv, g * av

    return tape._record(av * bv, (a, b), vjp)


def minimum(a: TapeNode, b: TapeNode) -> TapeNode:
    """Elementwise minimum; the gradient follows the active branch (ties to a)."""
    tape = _same_tape(a, b)
    av, bv = a.value, b.value
    if av.shape != bv.shape:
        raise ShapeError(f"minimum shapes disagree: {av.shape} vs {bv.shape}")
    mask = av <= bv

    def vjp(g):
        return g * mask, g * ~mask

    return tape._record(np.where(mask, av, bv), (a, b), vjp)


def summation(x: TapeNode) -> TapeNode:
    """Sum of all entries as a 1x1 matrix."""

    def vjp(g):
        return (np.full_like(x.value, g[0, 0]),)

    return x.tape._record(np.array([[x.value.sum()]]), (x,), vjp)


def grad_reverse(x: TapeNode, lam: float) -> TapeNode:
    """Identity forward; backward multiplies the upstream gradient by -lam.

    This turns a discriminator's minimization into the encoder's maximization
    within one backward pass.  With lam=0 the input receives zero gradient.

    >>> tape = Tape()
    >>> node = grad_reverse(tape.constant([[1.0, 2.0]]), lam=1.0)
    >>> node.value.tolist()
    [[1.0, 2.0]]
    """
    if lam < 0:
        raise ParameterError(f"grad_reverse lambda must be >= 0, got {lam}")
    lam = float(lam)

    def vjp(g):
        return (-lam * g,)

    # forward output shares the input array: bit-identical by construction
    return x.tape._record(x.value, (x,), vjp)


def softmax_cross_entropy(logits: TapeNode, labels) -> TapeNode:
    """Mean negative log-softmax at the labeled class, as a 1x1 matrix.

    Stabilized by row-max subtraction.  Backward is (softmax - onehot) / m.

    >>> tape = Tape()
    >>> loss = softmax_cross_entropy(tape.constant([[0.0, 0.0, 0.0]]), [1])
    >>> round(float(loss.value[0, 0]), 4)  # uniform logits: ln 3
    1.0986
    """
    lv = logits.value
    y = np.asarray(labels)
    if y.ndim != 1 or y.shape[0] != lv.shape[0]:
        raise ShapeError(f"labels must be a vector of length {lv.shape[0]}, got shape {y.shape}")
    if y.dtype.kind not in "iu":
        raise LabelError(f"labels must be integers, got dtype {y.dtype}")
    num_classes = lv.shape[1]
    if np.any(y < 0) or np.any(y >= num_classes):
        raise LabelError(f"labels must lie in [0, {num_classes}), got range "
                         f"[{y.min()}, {y.max()}]")
    m = lv.shape[0]
    shifted = lv - lv.max(axis=1, keepdims=True)
    exps = np.exp(shifted)
    total = exps.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(total)
    loss = -log_probs[np.arange(m), y].mean()
    softmax = exps / total

    def vjp(g):
        grad = softmax.copy()
        grad[np.arange(m), y] -= 1.0
        return (g[0, 0] * grad / m,)

    return logits.tape._record(np.array([[loss]]), (logits,), vjp)


def binary_cross_entropy(p: TapeNode, y) -> TapeNode:
    """Mean binary cross-entropy of probabilities p (m x 1) against labels y.

    Inputs are clamped to [1e-7, 1 - 1e-7] before the logs, so saturated
    probabilities never produce infinities; gradients are zero in the clamped
    region.

    >>> tape = Tape()
    >>> loss = binary_cross_entropy(tape.constant([[0.5], [0.5]]), [1, 0])
    >>> round(float(loss.value[0, 0]), 4)  # maximal confusion: ln 2
    0.6931
    """
    pv = p.value
    if pv.ndim != 2 or pv.shape[1] != 1:
        raise ShapeError(f"probabilities must be m x 1, got shape {pv.shape}")
    yv = np.asarray(y, dtype=np.float64).reshape(-1, 1)
    if yv.shape[0] != pv.shape[0]:
        raise ShapeError(f"labels must have length {pv.shape[0]}, got {yv.shape[0]}")
    if not np.all((yv == 0.0) | (yv == 1.0)):
        raise LabelError("binary labels must be 0 or 1")
    m = pv.shape[0]
    clamped = np.clip(pv, BCE_CLAMP, 1.0 - BCE_CLAMP)
    inside = (pv >= BCE_CLAMP) & (pv <= 1.0 - BCE_CLAMP)
    loss = -np.mean(yv * np.log(clamped) + (1.0 - yv) * np.log(1.0 - clamped))

    def vjp(g):
        local = (-yv / clamped + (1.0 - yv) / (1.0 - clamped)) / m
        return (g[0, 0] * local * inside,)

    return p.tape._record(np.array([[loss]]), (p,), vjp)


def backward(loss: TapeNode) -> None:
    """Accumulate d(loss)/d(param) into every watched parameter's grad slot.

    Walks the tape in reverse topological (creation) order, visiting each
    node at most once.  Repeated calls without `reset_grads` in between add
    their contributions.
    """
    if loss.value.shape != (1, 1):
        raise ShapeError(f"backward requires a scalar (1x1) loss, got shape {loss.value.shape}")
    grads: dict[int, np.ndarray] = {loss.idx: np.ones((1, 1))}
    for node in reversed(loss.tape.nodes[: loss.idx + 1]):
        g = grads.pop(node.idx, None)
        if g is None:
            continue
        if node.param is not None:
            node.param.grad += g
        if node.vjp is None:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if parent.idx in grads:
                grads[parent.idx] = grads[parent.idx] + pg
            else:
                grads[parent.idx] = pg


def finite_diff_check(
    loss_proc: Callable[[], TapeNode],
    store: ParamStore,
    h: float = 1e-5,
    names: Sequence[str] | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    `loss_proc` must build a fresh tape, read the current parameter values,
    and return a scalar loss node; it must be deterministic for fixed
    parameter values.  For each coordinate the numeric gradient is
    (f(w+h) - f(w-h)) / 2h and the reported error is
    |analytic - numeric| / max(1, |numeric|), maximized over coordinates.
    """
    if not (0.0 < h <= 1e-2):
        raise ParameterError(f"h must lie in (0, 1e-2], got {h}")
    chosen = list(names) if names is not None else store.names()

    store.reset_grads()
    backward(loss_proc())
    analytic = {n: store[n].grad.copy() for n in chosen}

    def value() -> float:
        out = loss_proc().value
        if out.shape != (1, 1):
            raise ShapeError(f"loss procedure must return a scalar, got shape {out.shape}")
        return float(out[0, 0])

    max_rel = 0.0
    for n in chosen:
        flat = store[n].value.ravel()
        flat_analytic = analytic[n].ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = value()
            flat[i] = orig - h
            f_minus = value()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            err = abs(flat_analytic[i] - numeric) / max(1.0, abs(numeric))
            max_rel = max(max_rel, err)
    return max_rel
