"""Dense float64 tensors with reverse-mode automatic differentiation.

The op set is deliberately small: matrix products, elementwise arithmetic,
activations, row/segment softmaxes, gathers and concatenations. Every op
records its inputs and a backward closure on the output tensor; calling
:meth:`Tensor.backward` on a scalar walks the recorded graph in reverse
topological order and accumulates gradients into every participating
tensor. There is no broadcasting beyond the few documented cases and no
higher-order differentiation.

All data is float64. Segment ops (``segment_sum``, ``segment_softmax``,
``segment_logsumexp``) operate on flat edge/candidate arrays grouped by an
integer segment id, which is how variable-size neighborhoods and
per-anchor candidate lists are vectorized without ragged tensors.
"""

from __future__ import annotations

import contextlib
import hashlib
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigError, ContractError, ShapeError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A dense float64 array with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn: Callable[[np.ndarray], tuple] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """A constant tensor sharing this tensor's values."""
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Populate ``grad`` on every tensor that participated in this value.

        Only defined for scalars (one element). Gradients accumulate, so a
        tensor used several times receives the sum of its contributions.
        """
        if self.data.size != 1:
            raise ContractError(
                f"backward() requires a scalar loss, got shape {self.shape}"
            )
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward_fn is None:
                continue
            grads = node._backward_fn(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.array(g, dtype=np.float64)
                else:
                    parent.grad += g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward_fn = backward_fn
    return out


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


# ---------------------------------------------------------------------------
# Core ops
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two 2-D tensors."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes incompatible: {a.shape} x {b.shape}")

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return _result(a.data @ b.data, (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; also supports adding a (n,) bias row to an (m, n) matrix."""
    if a.shape == b.shape:

        def backward(g):
            return g, g

        return _result(a.data + b.data, (a, b), backward)
    if a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]:

        def backward(g):
            return g, g.sum(axis=0)

        return _result(a.data + b.data, (a, b), backward)
    raise ShapeError(f"add shapes incompatible: {a.shape} + {b.shape}")


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, scale(b, -1.0))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of same-shape tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"mul shapes incompatible: {a.shape} * {b.shape}")

    def backward(g):
        return g * b.data, g * a.data

    return _result(a.data * b.data, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a python scalar constant."""
    c = float(c)

    def backward(g):
        return (g * c,)

    return _result(a.data * c, (a,), backward)


def add_const(a: Tensor, c) -> Tensor:
    """Add a constant array or scalar (no gradient for the constant)."""
    c = np.asarray(c, dtype=np.float64)

    def backward(g):
        return (g,)

    return _result(a.data + c, (a,), backward)


def reduce_sum(a: Tensor, axis: int | None = None) -> Tensor:
    """Sum all entries (axis=None, scalar output) or along one axis of a matrix."""
    if axis is None:

        def backward(g):
            return (np.full_like(a.data, float(g)),)

        return _result(np.sum(a.data), (a,), backward)
    if a.data.ndim != 2 or axis not in (0, 1):
        raise ShapeError(f"reduce_sum axis={axis} on shape {a.shape}")
    if axis == 0:

        def backward(g):
            return (np.broadcast_to(g, a.shape).copy(),)

        return _result(a.data.sum(axis=0), (a,), backward)

    def backward(g):
        return (np.broadcast_to(g[:, None], a.shape).copy(),)

    return _result(a.data.sum(axis=1), (a,), backward)


def mean(a: Tensor) -> Tensor:
    return scale(reduce_sum(a), 1.0 / a.data.size)


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    """Stack 2-D tensors with equal column counts along axis 0."""
    parts = list(parts)
    sizes = [p.shape[0] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(g[offsets[i] : offsets[i + 1]] for i in range(len(parts)))

    return _result(np.concatenate([p.data for p in parts], axis=0), tuple(parts), backward)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate 2-D tensors with equal row counts along axis 1."""
    parts = list(parts)
    widths = [p.shape[1] for p in parts]
    offsets = np.cumsum([0] + widths)

    def backward(g):
        return tuple(g[:, offsets[i] : offsets[i + 1]] for i in range(len(parts)))

    return _result(np.concatenate([p.data for p in parts], axis=1), tuple(parts), backward)


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous row slice of a matrix (or 1-D slice of a vector)."""

    def backward(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        return (full,)

    return _result(a.data[start:stop].copy(), (a,), backward)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous column slice of a matrix."""
    if a.data.ndim != 2:
        raise ShapeError(f"slice_cols expects a matrix, got {a.shape}")

    def backward(g):
        full = np.zeros_like(a.data)
        full[:, start:stop] = g
        return (full,)

    return _result(a.data[:, start:stop].copy(), (a,), backward)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got {a.shape}")

    def backward(g):
        return (g.T,)

    return _result(a.data.T.copy(), (a,), backward)


def gather_rows(a: Tensor, index) -> Tensor:
    """Select rows of a 2-D tensor (repeats allowed; grads accumulate)."""
    idx = np.asarray(index, dtype=np.int64)
    if a.data.ndim != 2:
        raise ShapeError(f"gather_rows expects a matrix, got {a.shape}")

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return _result(a.data[idx], (a,), backward)


def gather_vec(a: Tensor, index) -> Tensor:
    """Select entries of a 1-D tensor."""
    idx = np.asarray(index, dtype=np.int64)
    if a.data.ndim != 1:
        raise ShapeError(f"gather_vec expects a vector, got {a.shape}")

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return _result(a.data[idx], (a,), backward)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    def backward(g):
        return (g.reshape(a.shape),)

    return _result(a.data.reshape(shape), (a,), backward)


def scale_rows(m: Tensor, s: Tensor) -> Tensor:
    """Multiply each row of an (n, d) matrix by the matching entry of an (n,) vector."""
    if m.data.ndim != 2 or s.data.ndim != 1 or m.shape[0] != s.shape[0]:
        raise ShapeError(f"scale_rows shapes incompatible: {m.shape}, {s.shape}")

    def backward(g):
        return g * s.data[:, None], np.sum(g * m.data, axis=1)

    return _result(m.data * s.data[:, None], (m, s), backward)


def rows_dot(a: Tensor, b: Tensor) -> Tensor:
    """Rowwise dot product of two (n, d) matrices, giving an (n,) vector."""
    return reduce_sum(mul(a, b), axis=1)


def maximum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise max; on ties the gradient routes to the first argument."""
    if a.shape != b.shape:
        raise ShapeError(f"maximum shapes incompatible: {a.shape}, {b.shape}")
    take_a = a.data >= b.data

    def backward(g):
        return g * take_a, g * (~take_a)

    return _result(np.maximum(a.data, b.data), (a, b), backward)


# ---------------------------------------------------------------------------
# Nonlinearities
# ---------------------------------------------------------------------------

LEAKY_SLOPE = 0.01


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def apply_activation(kind: str, x: Tensor) -> Tensor:
    """Elementwise activation: ``sigmoid``, ``leaky_relu`` (slope 0.01) or ``identity``."""
    if kind == "identity":
        return x
    if kind == "sigmoid":
        y = _sigmoid(x.data)

        def backward(g):
            return (g * y * (1.0 - y),)

        return _result(y, (x,), backward)
    if kind == "leaky_relu":
        pos = x.data > 0
        slope = np.where(pos, 1.0, LEAKY_SLOPE)

        def backward(g):
            return (g * slope,)

        return _result(np.where(pos, x.data, LEAKY_SLOPE * x.data), (x,), backward)
    raise ConfigError(f"unknown activation kind: {kind!r}")


def sigmoid(x: Tensor) -> Tensor:
    return apply_activation("sigmoid", x)


def softplus(x: Tensor) -> Tensor:
    """log(1 + exp(x)), computed without overflow."""
    y = np.maximum(x.data, 0.0) + np.log1p(np.exp(-np.abs(x.data)))
    s = _sigmoid(x.data)

    def backward(g):
        return (g * s,)

    return _result(y, (x,), backward)


def softmax_rows(x: Tensor) -> Tensor:
    """Row-stable softmax of a 2-D tensor; each output row sums to one."""
    if x.data.ndim != 2:
        raise ShapeError(f"softmax_rows expects a matrix, got {x.shape}")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        dot = np.sum(g * y, axis=1, keepdims=True)
        return (y * (g - dot),)

    return _result(y, (x,), backward)


def l2_normalize_rows(x: Tensor) -> Tensor:
    """Scale each row to unit L2 norm; all-zero rows stay zero."""
    if x.data.ndim != 2:
        raise ShapeError(f"l2_normalize_rows expects a matrix, got {x.shape}")
    norms = np.linalg.norm(x.data, axis=1)
    safe = np.where(norms > 0.0, norms, 1.0)
    y = x.data / safe[:, None]

    def backward(g):
        dot = np.sum(g * y, axis=1, keepdims=True)
        return ((g - y * dot) / safe[:, None],)

    return _result(y, (x,), backward)


# ---------------------------------------------------------------------------
# Segment ops
# ---------------------------------------------------------------------------


def _segment_counts(segment_ids: np.ndarray, num_segments: int) -> np.ndarray:
    return np.bincount(segment_ids, minlength=num_segments)


def segment_sum(values: Tensor, segment_ids, num_segments: int) -> Tensor:
    """Sum entries (1-D) or rows (2-D) of ``values`` grouped by segment id."""
    seg = np.asarray(segment_ids, dtype=np.int64)
    if values.data.ndim == 1:
        out = np.zeros(num_segments)
        np.add.at(out, seg, values.data)
    elif values.data.ndim == 2:
        out = np.zeros((num_segments, values.shape[1]))
        np.add.at(out, seg, values.data)
    else:
        raise ShapeError(f"segment_sum expects 1-D or 2-D values, got {values.shape}")

    def backward(g):
        return (g[seg],)

    return _result(out, (values,), backward)


def segment_softmax(scores: Tensor, segment_ids, num_segments: int) -> Tensor:
    """Softmax of a flat score vector within each segment.

    Every segment must be non-empty: an empty neighborhood upstream is a
    contract violation (self-loops guarantee at least one incident edge).
    """
    seg = np.asarray(segment_ids, dtype=np.int64)
    if scores.data.ndim != 1:
        raise ShapeError(f"segment_softmax expects a vector, got {scores.shape}")
    counts = _segment_counts(seg, num_segments)
    if np.any(counts == 0):
        raise ContractError("segment_softmax: empty segment (missing self-loop?)")
    seg_max = np.full(num_segments, -np.inf)
    np.maximum.at(seg_max, seg, scores.data)
    e = np.exp(scores.data - seg_max[seg])
    denom = np.zeros(num_segments)
    np.add.at(denom, seg, e)
    alpha = e / denom[seg]

    def backward(g):
        weighted = np.zeros(num_segments)
        np.add.at(weighted, seg, g * alpha)
        return (alpha * (g - weighted[seg]),)

    return _result(alpha, (scores,), backward)


def segment_logsumexp(scores: Tensor, segment_ids, num_segments: int) -> Tensor:
    """log-sum-exp of a flat score vector within each segment."""
    seg = np.asarray(segment_ids, dtype=np.int64)
    if scores.data.ndim != 1:
        raise ShapeError(f"segment_logsumexp expects a vector, got {scores.shape}")
    counts = _segment_counts(seg, num_segments)
    if np.any(counts == 0):
        raise ContractError("segment_logsumexp: empty segment")
    seg_max = np.full(num_segments, -np.inf)
    np.maximum.at(seg_max, seg, scores.data)
    e = np.exp(scores.data - seg_max[seg])
    denom = np.zeros(num_segments)
    np.add.at(denom, seg, e)
    out = seg_max + np.log(denom)
    softw = e / denom[seg]

    def backward(g):
        return (g[seg] * softw,)

    return _result(out, (scores,), backward)


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout with a seeded mask; rate 0 is the identity."""
    if rate <= 0.0:
        return x
    keep = 1.0 - rate
    mask = (rng.random(x.shape) < keep) / keep
    mask_t = Tensor(mask)
    if x.data.ndim == 1:
        return mul(x, mask_t)
    return mul(x, mask_t)


# ---------------------------------------------------------------------------
# Parameters and Adam
# ---------------------------------------------------------------------------


def _name_seed(master_seed: int, name: str) -> np.random.SeedSequence:
    digest = hashlib.blake2s(name.encode("utf-8"), digest_size=8).digest()
    return np.random.SeedSequence((master_seed, int.from_bytes(digest, "little")))


def glorot_limit(shape: tuple[int, ...]) -> float:
    fan_in = shape[0]
    fan_out = shape[1] if len(shape) > 1 else 1
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


class ParameterSet:
    """Named trainable tensors plus per-entry Adam state.

    Creation is seeded per name, so the same (seed, name, shape) always
    yields the same initial values regardless of creation order.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.entries: dict[str, Tensor] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self._step: dict[str, int] = {}

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def __getitem__(self, name: str) -> Tensor:
        return self.entries[name]

    def names(self) -> list[str]:
        return sorted(self.entries)

    def create(self, name: str, shape: tuple[int, ...], init: str = "glorot") -> Tensor:
        """Create (or return, if present with the same shape) a parameter."""
        if name in self.entries:
            existing = self.entries[name]
            if existing.shape != tuple(shape):
                raise ContractError(
                    f"parameter {name!r} exists with shape {existing.shape}, "
                    f"requested {tuple(shape)}"
                )
            return existing
        if init == "zeros":
            data = np.zeros(shape)
        elif init == "glorot":
            rng = np.random.Generator(np.random.PCG64(_name_seed(self.seed, name)))
            lim = glorot_limit(tuple(shape))
            data = rng.uniform(-lim, lim, size=shape)
        else:
            raise ConfigError(f"unknown init: {init!r}")
        t = Tensor(data, requires_grad=True)
        self.entries[name] = t
        self._m[name] = np.zeros(shape)
        self._v[name] = np.zeros(shape)
        self._step[name] = 0
        return t

    def add(self, name: str, data: np.ndarray) -> Tensor:
        """Install an externally produced array as a parameter (checkpoint load)."""
        t = Tensor(np.array(data, dtype=np.float64), requires_grad=True)
        self.entries[name] = t
        self._m[name] = np.zeros(t.shape)
        self._v[name] = np.zeros(t.shape)
        self._step[name] = 0
        return t

    def zero_grads(self, names: Iterable[str] | None = None) -> None:
        for name in names if names is not None else self.entries:
            self.entries[name].grad = np.zeros_like(self.entries[name].data)

    def clear_grads(self) -> None:
        for t in self.entries.values():
            t.grad = None

    def reset_optimizer_state(self) -> None:
        for name, t in self.entries.items():
            self._m[name] = np.zeros(t.shape)
            self._v[name] = np.zeros(t.shape)
            self._step[name] = 0

    def step_count(self, name: str) -> int:
        return self._step[name]

    def copy(self) -> "ParameterSet":
        dup = ParameterSet(self.seed)
        for name, t in self.entries.items():
            dup.add(name, t.data)
            dup._m[name] = self._m[name].copy()
            dup._v[name] = self._v[name].copy()
            dup._step[name] = self._step[name]
        return dup

    def adam_step(
        self,
        lr: float,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        names: Iterable[str] | None = None,
    ) -> None:
        """One bias-corrected Adam update; grads must be populated and are cleared."""
        b1, b2 = betas
        targets = sorted(names) if names is not None else self.names()
        for name in targets:
            t = self.entries[name]
            if t.grad is None:
                raise ContractError(f"adam_step: parameter {name!r} has no gradient")
        for name in targets:
            t = self.entries[name]
            g = t.grad
            self._step[name] += 1
            step = self._step[name]
            self._m[name] = b1 * self._m[name] + (1 - b1) * g
            self._v[name] = b2 * self._v[name] + (1 - b2) * g * g
            m_hat = self._m[name] / (1 - b1**step)
            v_hat = self._v[name] / (1 - b2**step)
            t.data = t.data - lr * m_hat / (np.sqrt(v_hat) + eps)
            t.grad = None


def adam_step(
    params: ParameterSet,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    names: Iterable[str] | None = None,
) -> ParameterSet:
    """Module-level convenience wrapper around :meth:`ParameterSet.adam_step`."""
    params.adam_step(lr, betas, eps, names)
    return params


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------


def grad_check(
    f: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    h: float = 1e-6,
) -> float:
    """Compare backward() gradients of a scalar function against central differences.

    ``f`` must recompute its value from the current contents of ``inputs``
    each time it is called. Returns the largest per-coordinate deviation,
    relative to the largest gradient magnitude seen (so a uniformly tiny
    gradient field is compared on an absolute scale).
    """
    inputs = list(inputs)
    restore = [t.requires_grad for t in inputs]
    for t in inputs:
        t.requires_grad = True
        t.grad = None
    try:
        out = f()
        if out.data.size != 1:
            raise ContractError(f"grad_check requires scalar f, got shape {out.shape}")
        out.backward()
        analytic = [
            np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs
        ]
        numeric = [np.zeros_like(t.data) for t in inputs]
        for k, t in enumerate(inputs):
            flat = t.data.reshape(-1)
            num_flat = numeric[k].reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                f_plus = f().item()
                flat[i] = orig - h
                f_minus = f().item()
                flat[i] = orig
                num_flat[i] = (f_plus - f_minus) / (2.0 * h)
        scale_ref = max(
            max((np.max(np.abs(a)) for a in analytic), default=0.0),
            max((np.max(np.abs(n)) for n in numeric), default=0.0),
            1e-8,
        )
        worst = 0.0
        for a, n in zip(analytic, numeric):
            if a.size:
                worst = max(worst, float(np.max(np.abs(a - n))) / scale_ref)
        return worst
    finally:
        for t, rq in zip(inputs, restore):
            t.requires_grad = rq
            t.grad = None
