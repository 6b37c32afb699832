"""Dense float64 matrix arithmetic with define-by-run reverse-mode autodiff.

All values are 2-D row-major ``numpy.float64`` arrays; a column vector is an
``n x 1`` matrix.  There is NO implicit broadcasting: binary elementwise ops
require identical shapes, and any alignment must go through :func:`reshape`
and :func:`tile`.  The graph is rebuilt on every forward pass and traversed
in reverse creation order, so backward passes are deterministic and
bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError, DomainError, EvaluationError

_F64 = np.float64
_SIG_LO = 5e-324                 # smallest subnormal; keeps sigmoid in (0, 1)
_SIG_HI = float(np.nextafter(1.0, 0.0))


def ensure_matrix(data) -> np.ndarray:
    """Coerce ``data`` to a non-empty 2-D float64 array (copying as needed)."""
    arr = np.asarray(data, dtype=_F64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got ndim={arr.ndim}")
    if arr.size == 0:
        raise DomainError("empty matrix")
    return np.ascontiguousarray(arr)


class Tensor:
    """A node of the reverse-mode graph: a matrix value plus its parents,
    the local backward rule, and a gradient accumulator."""

    __slots__ = ("value", "grad", "parents", "_vjp", "index", "requires_grad")

    _counter = 0

    def __init__(self, value, parents=(), vjp=None, requires_grad=False):
        self.value = value
        self.grad = None
        self.parents = parents
        self._vjp = vjp
        self.requires_grad = requires_grad
        Tensor._counter += 1
        self.index = Tensor._counter

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        r, c = self.value.shape
        return f"Tensor({r}x{c}, requires_grad={self.requires_grad})"

    # operator sugar; all shape rules live in the free functions
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return multiply(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def parameter(data) -> Tensor:
    """A trainable leaf."""
    return Tensor(ensure_matrix(data), requires_grad=True)


def constant(data) -> Tensor:
    """A non-trainable leaf (inputs, adjacency matrices, targets)."""
    return Tensor(ensure_matrix(data))


def _node(value, parents, vjp) -> Tensor:
    req = any(p.requires_grad for p in parents)
    return Tensor(value, parents, vjp if req else None, req)


# ---------------------------------------------------------------------------
# ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    av, bv = a.value, b.value
    if av.shape[1] != bv.shape[0]:
        raise DimensionError(f"matmul: {av.shape} x {bv.shape}")
    out = av @ bv

    def vjp(g, a=a, b=b, av=av, bv=bv):
        if a.requires_grad:
            a.grad += g @ bv.T
        if b.requires_grad:
            b.grad += av.T @ g

    return _node(out, (a, b), vjp)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.value.shape != b.value.shape:
        raise DimensionError(f"add: {a.value.shape} vs {b.value.shape}")

    def vjp(g, a=a, b=b):
        if a.requires_grad:
            a.grad += g
        if b.requires_grad:
            b.grad += g

    return _node(a.value + b.value, (a, b), vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.value.shape != b.value.shape:
        raise DimensionError(f"sub: {a.value.shape} vs {b.value.shape}")

    def vjp(g, a=a, b=b):
        if a.requires_grad:
            a.grad += g
        if b.requires_grad:
            b.grad -= g

    return _node(a.value - b.value, (a, b), vjp)


def multiply(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product."""
    if a.value.shape != b.value.shape:
        raise DimensionError(f"multiply: {a.value.shape} vs {b.value.shape}")

    def vjp(g, a=a, b=b, av=a.value, bv=b.value):
        if a.requires_grad:
            a.grad += g * bv
        if b.requires_grad:
            b.grad += g * av

    return _node(a.value * b.value, (a, b), vjp)


hadamard = multiply


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a python scalar constant."""
    c = float(c)

    def vjp(g, a=a, c=c):
        if a.requires_grad:
            a.grad += g * c

    return _node(a.value * c, (a,), vjp)


def sigmoid(a: Tensor) -> Tensor:
    x = a.value
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    # clamp into the open interval so saturation never rounds to 0 or 1
    np.clip(out, _SIG_LO, _SIG_HI, out=out)

    def vjp(g, a=a, out=out):
        if a.requires_grad:
            a.grad += g * out * (1.0 - out)

    return _node(out, (a,), vjp)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.value)

    def vjp(g, a=a, out=out):
        if a.requires_grad:
            a.grad += g * (1.0 - out * out)

    return _node(out, (a,), vjp)


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.value, 0.0)

    def vjp(g, a=a, mask=a.value > 0):
        if a.requires_grad:
            a.grad += g * mask

    return _node(out, (a,), vjp)


def sum_all(a: Tensor) -> Tensor:
    out = np.array([[a.value.sum()]])

    def vjp(g, a=a):
        if a.requires_grad:
            a.grad += g[0, 0]

    return _node(out, (a,), vjp)


def mean_all(a: Tensor) -> Tensor:
    n = a.value.size
    out = np.array([[a.value.sum() / n]])

    def vjp(g, a=a, n=n):
        if a.requires_grad:
            a.grad += g[0, 0] / n

    return _node(out, (a,), vjp)


def mean_rows(a: Tensor) -> Tensor:
    """N x L -> N x 1, each entry the mean of its row."""
    c = a.value.shape[1]
    out = a.value.mean(axis=1, keepdims=True)

    def vjp(g, a=a, c=c):
        if a.requires_grad:
            a.grad += g / c

    return _node(out, (a,), vjp)


def sum_rows(a: Tensor) -> Tensor:
    out = a.value.sum(axis=1, keepdims=True)

    def vjp(g, a=a):
        if a.requires_grad:
            a.grad += g

    return _node(out, (a,), vjp)


def transpose(a: Tensor) -> Tensor:
    def vjp(g, a=a):
        if a.requires_grad:
            a.grad += g.T

    return _node(np.ascontiguousarray(a.value.T), (a,), vjp)


def reshape(a: Tensor, rows: int, cols: int) -> Tensor:
    if rows * cols != a.value.size:
        raise DimensionError(f"reshape: {a.value.shape} to ({rows}, {cols})")
    shp = a.value.shape

    def vjp(g, a=a, shp=shp):
        if a.requires_grad:
            a.grad += g.reshape(shp)

    return _node(a.value.reshape(rows, cols), (a,), vjp)


def tile(a: Tensor, reps_rows: int, reps_cols: int) -> Tensor:
    """Materialized broadcast: repeat a matrix in a (reps_rows, reps_cols) grid."""
    r, c = a.value.shape

    def vjp(g, a=a, r=r, c=c, rr=reps_rows, rc=reps_cols):
        if a.requires_grad:
            a.grad += g.reshape(rr, r, rc, c).sum(axis=(0, 2))

    return _node(np.tile(a.value, (reps_rows, reps_cols)), (a,), vjp)


def hstack(tensors) -> Tensor:
    tensors = tuple(tensors)
    rows = tensors[0].value.shape[0]
    for t in tensors:
        if t.value.shape[0] != rows:
            raise DimensionError(
                f"hstack: row mismatch {t.value.shape} vs {rows} rows")
    widths = [t.value.shape[1] for t in tensors]
    offsets = np.cumsum([0] + widths)

    def vjp(g, tensors=tensors, offsets=offsets):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t.grad += g[:, offsets[i]:offsets[i + 1]]

    return _node(np.hstack([t.value for t in tensors]), tensors, vjp)


def vstack(tensors) -> Tensor:
    tensors = tuple(tensors)
    cols = tensors[0].value.shape[1]
    for t in tensors:
        if t.value.shape[1] != cols:
            raise DimensionError(
                f"vstack: column mismatch {t.value.shape} vs {cols} cols")
    heights = [t.value.shape[0] for t in tensors]
    offsets = np.cumsum([0] + heights)

    def vjp(g, tensors=tensors, offsets=offsets):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t.grad += g[offsets[i]:offsets[i + 1], :]

    return _node(np.vstack([t.value for t in tensors]), tensors, vjp)


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    r = a.value.shape[0]
    if not (0 <= start < stop <= r):
        raise DimensionError(f"slice_rows [{start}:{stop}] of {a.value.shape}")

    def vjp(g, a=a, start=start, stop=stop):
        if a.requires_grad:
            a.grad[start:stop, :] += g

    return _node(np.ascontiguousarray(a.value[start:stop, :]), (a,), vjp)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    c = a.value.shape[1]
    if not (0 <= start < stop <= c):
        raise DimensionError(f"slice_cols [{start}:{stop}] of {a.value.shape}")

    def vjp(g, a=a, start=start, stop=stop):
        if a.requires_grad:
            a.grad[:, start:stop] += g

    return _node(np.ascontiguousarray(a.value[:, start:stop]), (a,), vjp)


# ---------------------------------------------------------------------------
# tagged dispatchers matching the module's operation surface

_ELEMENTWISE = {
    "add": add,
    "multiply": multiply,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "relu": relu,
}

_REDUCE = {
    "mean-all": mean_all,
    "mean-rows": mean_rows,
    "sum-all": sum_all,
}


def elementwise(op_tag: str, *operands: Tensor) -> Tensor:
    fn = _ELEMENTWISE.get(op_tag.replace("_", "-"))
    if fn is None:
        raise ContractError(f"unknown elementwise op {op_tag!r}")
    return fn(*operands)


def reduce(op_tag: str, m: Tensor) -> Tensor:
    fn = _REDUCE.get(op_tag.replace("_", "-"))
    if fn is None:
        raise ContractError(f"unknown reduce op {op_tag!r}")
    return fn(m)


# ---------------------------------------------------------------------------
# backward pass


def backward(loss: Tensor) -> None:
    """Accumulate dLoss/dNode into ``.grad`` of every reachable node that
    requires gradients.  Resets accumulators first, so repeated calls on the
    same graph give identical results."""
    if loss.value.shape != (1, 1):
        raise ContractError(f"loss must be 1x1, got {loss.value.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any trainable parameter")

    # collect the requires_grad subgraph
    nodes = []
    seen = set()
    stack = [loss]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        nodes.append(node)
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append(p)

    # reverse topological order: creation index strictly increases from
    # operand to result, so sorting by index descending is valid and
    # deterministic
    nodes.sort(key=lambda n: n.index, reverse=True)

    for node in nodes:
        node.grad = np.zeros_like(node.value)
    loss.grad[0, 0] = 1.0
    for node in nodes:
        if node._vjp is not None:
            node._vjp(node.grad)


# ---------------------------------------------------------------------------
# finite-difference checking


@dataclass
class GradCheckEntry:
    name: str
    max_rel_deviation: float
    checked: int
    failures: int


@dataclass
class GradCheckReport:
    entries: list[GradCheckEntry] = field(default_factory=list)
    tolerance: float = 0.0

    @property
    def passed(self) -> bool:
        return all(e.failures == 0 for e in self.entries)

    @property
    def max_rel_deviation(self) -> float:
        return max((e.max_rel_deviation for e in self.entries), default=0.0)


def _rel_dev(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


def grad_check(f, params, step=1e-5, tolerance=1e-4, names=None,
               max_entries=None, seed=0) -> GradCheckReport:
    """Compare backprop gradients of scalar ``f(params)`` against central
    finite differences.

    ``f`` must rebuild its graph on every call.  When ``max_entries`` is set,
    a seeded random subset of entries is probed per parameter (every
    parameter still gets checked).
    """
    if step <= 0:
        raise ContractError("step must be positive")
    params = list(params)
    if names is None:
        names = [f"param{i}" for i in range(len(params))]

    loss = f(params)
    base = float(loss.value[0, 0])
    if not math.isfinite(base):
        raise EvaluationError("function produced a non-finite value")
    backward(loss)
    analytic = [p.grad.copy() for p in params]

    rng = np.random.default_rng(seed)
    report = GradCheckReport(tolerance=tolerance)
    for p, g, name in zip(params, analytic, names):
        flat = p.value.reshape(-1)
        gflat = g.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        worst = 0.0
        failures = 0
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            up = float(f(params).value[0, 0])
            flat[i] = orig - step
            dn = float(f(params).value[0, 0])
            flat[i] = orig
            if not (math.isfinite(up) and math.isfinite(dn)):
                raise EvaluationError("function produced a non-finite value")
            numeric = (up - dn) / (2.0 * step)
            dev = _rel_dev(gflat[i], numeric)
            worst = max(worst, dev)
            if dev > tolerance:
                failures += 1
        report.entries.append(
            GradCheckEntry(name, worst, int(len(idx)), failures))
    return report
