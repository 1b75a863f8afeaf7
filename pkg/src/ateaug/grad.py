"""Define-by-run reverse-mode autodiff over dense numpy arrays.

A :class:`Tape` records every operation applied to tensors created from it.
``Tape.backward`` walks the records in reverse and returns gradients for the
requested leaves only; branches that do not lead to a requested leaf are
skipped, so asking for the input gradient alone never touches weight
gradients.

Raw ``numpy`` arrays passed to an operation are treated as constants.
"""

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ContractError, DimensionError, LabelIndexError, UnknownLeafError

PROB_FLOOR = 1e-12


class Tensor:
    """An array value, optionally bound to a tape position."""

    __slots__ = ("data", "tape", "index", "name")

    def __init__(self, data, tape=None, index=None, name=None):
        self.data = data
        self.tape = tape
        self.index = index
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def __repr__(self):
        where = "detached" if self.tape is None else f"node {self.index}"
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, {where})"


@dataclass
class _Node:
    kind: str
    parents: tuple
    backward: Optional[Callable]
    leaf: Optional[str] = None


class GradientMap(dict):
    """Leaf index -> gradient array. Also indexable by the leaf tensor itself."""

    def __getitem__(self, key):
        if isinstance(key, Tensor):
            key = key.index
        return super().__getitem__(key)

    def __contains__(self, key):
        if isinstance(key, Tensor):
            key = key.index
        return super().__contains__(key)


def as_float_array(value, dtype=None):
    """Convert to a float ndarray; float64 arrays keep their precision, the rest become float32."""
    if dtype is not None:
        return np.asarray(value, dtype=dtype)
    if isinstance(value, np.ndarray) and value.dtype == np.float64:
        return value
    return np.asarray(value, dtype=np.float32)


class Tape:
    """Append-only operation record for one forward/backward pass."""

    def __init__(self):
        self.nodes = []
        self.consumed = False

    def __len__(self):
        return len(self.nodes)

    def _append(self, node, value, name=None):
        if self.consumed:
            raise ContractError("tape already consumed by backward(); create a new tape")
        self.nodes.append(node)
        return Tensor(value, self, len(self.nodes) - 1, name)

    def data(self, value, dtype=None, name=None):
        """Register an input-data leaf (gradients w.r.t. inputs, as ATE needs)."""
        return self._append(_Node("leaf", (), None, "data"), as_float_array(value, dtype), name)

    def param(self, value, dtype=None, name=None):
        return self._append(_Node("leaf", (), None, "param"), as_float_array(value, dtype), name)

    def record(self, kind, value, parents, backward):
        return self._append(_Node(kind, tuple(parents), backward), value)

    def backward(self, root, leaves):
        """Gradients of the scalar ``root`` with respect to each tensor in ``leaves``.

        Consumes the tape.
        """
        if not isinstance(root, Tensor) or root.tape is not self:
            raise ContractError("root is not recorded on this tape")
        if root.data.size != 1:
            raise ContractError(f"backward root must be scalar, got shape {root.data.shape}")
        leaves = list(leaves)
        for leaf in leaves:
            if (not isinstance(leaf, Tensor) or leaf.tape is not self
                    or self.nodes[leaf.index].leaf is None):
                raise UnknownLeafError(f"{leaf!r} is not a leaf of this tape")

        n = len(self.nodes)
        wanted = np.zeros(n, dtype=bool)
        for leaf in leaves:
            wanted[leaf.index] = True
        for i, node in enumerate(self.nodes):
            if node.leaf is None:
                wanted[i] = any(p is not None and wanted[p.index] for p in node.parents)

        grads = {root.index: np.ones_like(root.data)}
        result = GradientMap()
        for i in range(root.index, -1, -1):
            g = grads.pop(i, None)
            if g is None or not wanted[i]:
                continue
            node = self.nodes[i]
            if node.leaf is not None:
                result[i] = g
                continue
            needs = tuple(p is not None and wanted[p.index] for p in node.parents)
            for parent, pg, need in zip(node.parents, node.backward(g, needs), needs):
                if not need:
                    continue
                if parent.index in grads:
                    grads[parent.index] = grads[parent.index] + pg
                else:
                    grads[parent.index] = pg

        for leaf in leaves:
            if leaf.index not in result:
                result[leaf.index] = np.zeros_like(leaf.data)
        self.nodes.clear()
        self.consumed = True
        return result


def backward(root, leaves):
    """Module-level convenience for ``root.tape.backward(root, leaves)``."""
    if not isinstance(root, Tensor) or root.tape is None:
        raise ContractError("root is not recorded on any tape")
    return root.tape.backward(root, leaves)


def _split(*items):
    """Unwrap operands into arrays, the tensors (None for constants), and their common tape."""
    arrays, tensors, tape = [], [], None
    for item in items:
        if isinstance(item, Tensor):
            arrays.append(item.data)
            if item.tape is not None:
                if tape is not None and item.tape is not tape:
                    raise ContractError("operands are recorded on different tapes")
                tape = item.tape
                tensors.append(item)
            else:
                tensors.append(None)
        else:
            arrays.append(as_float_array(item))
            tensors.append(None)
    return arrays, tensors, tape


def _emit(kind, value, tensors, tape, backward_fn):
    if tape is None or all(t is None for t in tensors):
        return Tensor(value)
    return tape.record(kind, value, tensors, backward_fn)


def _check_activation(activation):
    if activation not in (None, "none", "relu"):
        raise ContractError(f"unknown activation {activation!r}")
    return activation == "relu"


# -- linear algebra ---------------------------------------------------------

def affine(x, weight, bias, activation=None):
    """``act(x @ weight + bias)`` for ``x`` of shape [batch, in_dim]."""
    (xa, wa, ba), tensors, tape = _split(x, weight, bias)
    if xa.ndim != 2 or wa.ndim != 2 or ba.ndim != 1 or xa.shape[1] != wa.shape[0] \
            or wa.shape[1] != ba.shape[0]:
        raise DimensionError(
            f"affine: input {xa.shape} incompatible with weight {wa.shape} / bias {ba.shape}")
    relu = _check_activation(activation)
    out = xa @ wa + ba
    if relu:
        out = np.maximum(out, 0)

    def back(g, needs):
        if relu:
            g = g * (out > 0)
        return (g @ wa.T if needs[0] else None,
                xa.T @ g if needs[1] else None,
                g.sum(axis=0) if needs[2] else None)

    return _emit("affine", out, tensors, tape, back)


def conv_output_geometry(size, kernel, stride, padding):
    """Output length and (before, after) padding along one spatial axis."""
    if padding == "same":
        out = -(-size // stride)
        total = max((out - 1) * stride + kernel - size, 0)
        return out, total // 2, total - total // 2
    if padding == "valid":
        if kernel > size:
            raise DimensionError(f"kernel extent {kernel} exceeds input extent {size}")
        return (size - kernel) // stride + 1, 0, 0
    raise ContractError(f"unknown padding {padding!r}")


def conv2d(x, kernel, bias, stride=(1, 1), padding="same", activation=None):
    """2-D cross-correlation, NCHW layout.

    The forward sum runs over (in_channel, kernel_row, kernel_col) in that
    order, one elementwise multiply-add per tap, so results are reproducible
    bit-for-bit by a scalar loop with the same order.
    """
    (xa, ka, ba), tensors, tape = _split(x, kernel, bias)
    if xa.ndim != 4 or ka.ndim != 4 or ba.ndim != 1:
        raise DimensionError(
            f"conv2d: expected 4-D input and kernel, got input {xa.shape}, kernel {ka.shape}")
    bsz, cin, height, width = xa.shape
    cout, kcin, kh, kw = ka.shape
    if kcin != cin or ba.shape[0] != cout:
        raise DimensionError(
            f"conv2d: input {xa.shape} incompatible with kernel {ka.shape} / bias {ba.shape}")
    sh, sw = stride
    if sh < 1 or sw < 1:
        raise ContractError(f"stride must be positive, got {stride}")
    relu = _check_activation(activation)
    ho, top, bottom = conv_output_geometry(height, kh, sh, padding)
    wo, left, right = conv_output_geometry(width, kw, sw, padding)
    if kh > height + top + bottom or kw > width + left + right:
        raise DimensionError(f"conv2d: kernel {ka.shape} larger than padded input {xa.shape}")
    xp = np.pad(xa, ((0, 0), (0, 0), (top, bottom), (left, right))) if top + bottom + left + right else xa
    hspan = sh * (ho - 1) + 1
    wspan = sw * (wo - 1) + 1

    acc = np.zeros((bsz, cout, ho, wo), dtype=np.result_type(xa, ka))
    tmp = np.empty_like(acc)
    for ci in range(cin):
        for ki in range(kh):
            for kj in range(kw):
                tap = xp[:, ci, ki:ki + hspan:sh, kj:kj + wspan:sw]
                np.multiply(tap[:, None], ka[:, ci, ki, kj][None, :, None, None], out=tmp)
                acc += tmp
    out = acc + ba[None, :, None, None]
    if relu:
        out = np.maximum(out, 0)

    def back(g, needs):
        if relu:
            g = g * (out > 0)
        gx = np.zeros_like(xp) if needs[0] else None
        gk = np.empty_like(ka) if needs[1] else None
        for ki in range(kh):
            for kj in range(kw):
                if needs[0]:
                    # (B, Ho, Wo, Cin) -> (B, Cin, Ho, Wo)
                    contrib = np.tensordot(g, ka[:, :, ki, kj], axes=([1], [0]))
                    gx[:, :, ki:ki + hspan:sh, kj:kj + wspan:sw] += contrib.transpose(0, 3, 1, 2)
                if needs[1]:
                    taps = xp[:, :, ki:ki + hspan:sh, kj:kj + wspan:sw]
                    gk[:, :, ki, kj] = np.tensordot(g, taps, axes=([0, 2, 3], [0, 2, 3]))
        if gx is not None:
            gx = gx[:, :, top:top + height, left:left + width]
        return gx, gk, g.sum(axis=(0, 2, 3)) if needs[2] else None

    return _emit("conv2d", out, tensors, tape, back)


# -- shape and elementwise ----------------------------------------------------

def reshape(x, shape):
    (xa,), tensors, tape = _split(x)
    out = xa.reshape(shape)
    return _emit("reshape", out, tensors, tape, lambda g, needs: (g.reshape(xa.shape),))


def flatten(x):
    """Collapse every axis after the batch axis."""
    (xa,), _, _ = _split(x)
    return reshape(x, (xa.shape[0], -1))


def scale(x, factor):
    (xa,), tensors, tape = _split(x)
    return _emit("scale", xa * factor, tensors, tape, lambda g, needs: (g * factor,))


def square(x):
    (xa,), tensors, tape = _split(x)
    return _emit("square", xa * xa, tensors, tape, lambda g, needs: (2 * xa * g,))


def total(x):
    """Sum of all elements as a 0-d tensor."""
    (xa,), tensors, tape = _split(x)
    return _emit("total", np.asarray(xa.sum()), tensors, tape,
                 lambda g, needs: (np.broadcast_to(g, xa.shape).copy(),))


# -- probabilistic heads --------------------------------------------------------

def softmax(logits):
    (za,), tensors, tape = _split(logits)
    if za.ndim != 2 or za.shape[1] < 2:
        raise ContractError(f"softmax expects [batch, N>=2] logits, got {za.shape}")
    e = np.exp(za - za.max(axis=1, keepdims=True))
    s = e / e.sum(axis=1, keepdims=True)

    def back(g, needs):
        return (s * (g - (g * s).sum(axis=1, keepdims=True)),)

    return _emit("softmax", s, tensors, tape, back)


def label_matrix(labels, n_classes, dtype=np.float32):
    """Class indices or per-row distributions -> [batch, n_classes] target matrix."""
    labels = np.asarray(labels)
    if labels.ndim == 1:
        if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
            raise LabelIndexError(f"label index out of range for {n_classes} classes")
        out = np.zeros((labels.shape[0], n_classes), dtype=dtype)
        out[np.arange(labels.shape[0]), labels.astype(np.int64)] = 1
        return out
    if labels.ndim != 2 or labels.shape[1] != n_classes:
        raise DimensionError(f"labels {labels.shape} do not match {n_classes} classes")
    return labels.astype(dtype, copy=False)


def cross_entropy(probs, labels):
    """Batch mean of ``-sum(y * ln p)``; labels are class indices or soft rows."""
    (pa,), tensors, tape = _split(probs)
    if pa.ndim != 2:
        raise DimensionError(f"cross_entropy expects [batch, N] probabilities, got {pa.shape}")
    y = label_matrix(labels, pa.shape[1], pa.dtype)
    if y.shape[0] != pa.shape[0]:
        raise DimensionError(f"labels for {y.shape[0]} rows but probabilities {pa.shape}")
    clamped = np.clip(pa, PROB_FLOOR, 1.0)
    bsz = pa.shape[0]
    value = np.asarray(-(y * np.log(clamped)).sum() / bsz + 0.0, dtype=pa.dtype)

    def back(g, needs):
        live = (pa >= PROB_FLOOR) & (pa <= 1.0)
        return (-(g / bsz) * y / clamped * live,)

    return _emit("cross_entropy", value, tensors, tape, back)


def entropy(probs, reduction="mean"):
    """Shannon entropy (natural log) of each row, reduced by ``mean``, ``sum`` or ``none``.

    ``0 ln 0`` is taken as 0 by flooring the probability inside the log only.
    """
    (pa,), tensors, tape = _split(probs)
    if pa.ndim != 2:
        raise DimensionError(f"entropy expects [batch, N] probabilities, got {pa.shape}")
    if reduction not in ("mean", "sum", "none"):
        raise ContractError(f"unknown reduction {reduction!r}")
    logp = np.log(np.maximum(pa, PROB_FLOOR))
    if reduction == "none":
        value = np.asarray(-(pa * logp).sum(axis=1) + 0.0, dtype=pa.dtype)

        def back(g, needs):
            return (-g[:, None] * (logp + (pa > PROB_FLOOR)),)

        return _emit("entropy", value, tensors, tape, back)
    norm = pa.shape[0] if reduction == "mean" else 1
    value = np.asarray(-(pa * logp).sum() / norm + 0.0, dtype=pa.dtype)

    def back(g, needs):
        return (-(g / norm) * (logp + (pa > PROB_FLOOR)),)

    return _emit("entropy", value, tensors, tape, back)


# -- verification helpers ---------------------------------------------------------

def finite_difference_gradient(f, x, h=1e-6):
    """Central-difference gradient of scalar ``f`` at ``x``, computed in float64."""
    if h <= 0:
        raise ContractError("step h must be positive")
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = float(f(x))
        flat[i] = orig - h
        down = float(f(x))
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return grad


def max_relative_error(actual, expected, floor=1e-7):
    """Largest ``|a - b| / max(|a|, |b|, floor)`` over all elements."""
    a = np.asarray(actual, dtype=np.float64)
    b = np.asarray(expected, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float((np.abs(a - b) / denom).max())


def check_gradients(build: Callable, inputs: Sequence[np.ndarray], h=1e-6):
    """Compare reverse-mode and central-difference gradients of ``build``.

    ``build(tape, *leaves)`` must return a scalar tensor. Returns the largest
    relative error over all inputs.
    """
    inputs = [np.array(a, dtype=np.float64) for a in inputs]
    tape = Tape()
    leaves = [tape.data(a) for a in inputs]
    grads = tape.backward(build(tape, *leaves), leaves)
    worst = 0.0
    for i, leaf in enumerate(leaves):
        def f(xi, i=i):
            args = list(inputs)
            args[i] = xi
            return build(None, *args).item()
        numeric = finite_difference_gradient(f, inputs[i], h)
        worst = max(worst, max_relative_error(grads[leaf], numeric))
    return worst
