"""Dense float64 tensor math with reverse-mode differentiation and Adam.

A deliberately small op set: dense layers, ReLU, concatenation, row
reductions (sum and stabilized LogSumExp, also in segmented form for
aggregating variable-size message groups), row gathering, and L1 loss and
penalty terms.  Everything is float64 with fixed summation orders, so runs
are reproducible given a seed.  Subgradients of |x| and relu at 0 are 0.
"""

from __future__ import annotations

import json
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractViolation, FormatError

_GRAD_ENABLED = True
_DEBUG_FINITE = bool(os.environ.get("RELPLAN_DEBUG"))


def set_debug(enabled: bool):
    """Check every op output for NaN/Inf (slow; meant for tests)."""
    global _DEBUG_FINITE
    _DEBUG_FINITE = enabled


@contextmanager
def no_grad():
    """Run forward computations without recording the tape."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bw", "_spent")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _bw=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents if _GRAD_ENABLED else ()
        self._bw = _bw if _GRAD_ENABLED else None
        self._spent = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, grad={'set' if self.grad is not None else 'none'})"


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _make(data, parents, bw) -> Tensor:
    if _DEBUG_FINITE and not np.all(np.isfinite(data)):
        raise ContractViolation("op produced a non-finite value on finite inputs")
    return Tensor(data, _parents=parents, _bw=bw)


def _check_shapes(op: str, *pairs):
    for expected, got in pairs:
        if expected != got:
            raise ContractViolation(f"{op}: shape mismatch, expected {expected}, got {got}")


# ── Ops ──────────────────────────────────────────────────────────────────────


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """x @ weight + bias for x of shape (n,) or (rows, n)."""
    x, weight, bias = _as_tensor(x), _as_tensor(weight), _as_tensor(bias)
    n_in = x.data.shape[-1]
    if weight.data.ndim != 2 or weight.data.shape[0] != n_in:
        raise ContractViolation(
            f"dense: shape mismatch, input {x.data.shape} vs weight {weight.data.shape}"
        )
    _check_shapes("dense", ((weight.data.shape[1],), bias.data.shape))
    out = x.data @ weight.data + bias.data

    def bw(g):
        if x.data.ndim == 1:
            return g @ weight.data.T, np.outer(x.data, g), g
        return g @ weight.data.T, x.data.T @ g, g.sum(axis=0)

    return _make(out, (x, weight, bias), bw)


def relu(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    mask = x.data > 0

    def bw(g):
        return (g * mask,)

    return _make(np.where(mask, x.data, 0.0), (x,), bw)


def concat(parts, axis: int = 0) -> Tensor:
    """Concatenate tensors along an axis."""
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise ContractViolation("concat: empty input list")
    sizes = [p.data.shape[axis] for p in parts]
    out = np.concatenate([p.data for p in parts], axis=axis)
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        slicer = [slice(None)] * g.ndim
        grads = []
        for i in range(len(parts)):
            slicer[axis] = slice(offsets[i], offsets[i + 1])
            grads.append(g[tuple(slicer)])
        return tuple(grads)

    return _make(out, tuple(parts), bw)


def sum_rows(x: Tensor) -> Tensor:
    """Column-wise sum of a stack of row vectors: (rows, k) -> (k,)."""
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise ContractViolation(f"sum_rows: expected 2-d input, got shape {x.data.shape}")

    def bw(g):
        return (np.broadcast_to(g, x.data.shape),)

    return _make(x.data.sum(axis=0), (x,), bw)


def logsumexp_rows(x: Tensor) -> Tensor:
    """Column-wise smooth maximum of a stack of row vectors, stabilized."""
    x = _as_tensor(x)
    if x.data.ndim != 2 or x.data.shape[0] == 0:
        raise ContractViolation(f"logsumexp_rows: need a non-empty 2-d stack, got {x.data.shape}")
    m = x.data.max(axis=0)
    out = m + np.log(np.exp(x.data - m).sum(axis=0))

    def bw(g):
        return (g * np.exp(x.data - out),)

    return _make(out, (x,), bw)


def gather_rows(x: Tensor, indices) -> Tensor:
    """Select rows of x by an integer index vector (duplicates allowed)."""
    x = _as_tensor(x)
    idx = np.asarray(indices, dtype=np.intp)

    def bw(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return (gx,)

    return _make(x.data[idx], (x,), bw)


def segment_sum(x: Tensor, segments, num_segments: int) -> Tensor:
    """Sum rows of x into their segment; empty segments give zero vectors."""
    x = _as_tensor(x)
    seg = np.asarray(segments, dtype=np.intp)
    _check_shapes("segment_sum", ((x.data.shape[0],), seg.shape))
    out = np.zeros((num_segments,) + x.data.shape[1:])
    np.add.at(out, seg, x.data)

    def bw(g):
        return (g[seg],)

    return _make(out, (x,), bw)


def segment_logsumexp(x: Tensor, segments, num_segments: int) -> Tensor:
    """Per-segment stabilized LogSumExp of rows; empty segments give zeros."""
    x = _as_tensor(x)
    seg = np.asarray(segments, dtype=np.intp)
    _check_shapes("segment_logsumexp", ((x.data.shape[0],), seg.shape))
    shape = (num_segments,) + x.data.shape[1:]
    m = np.full(shape, -np.inf)
    np.maximum.at(m, seg, x.data)
    empty = np.isinf(m)
    m = np.where(empty, 0.0, m)
    sums = np.zeros(shape)
    np.add.at(sums, seg, np.exp(x.data - m[seg]))
    out = np.where(empty, 0.0, m + np.log(np.where(empty, 1.0, sums)))

    def bw(g):
        return ((g * np.exp(x.data - out[seg]) if x.data.size else g[seg]),)

    return _make(out, (x,), bw)


def reshape(x: Tensor, shape) -> Tensor:
    x = _as_tensor(x)
    original = x.data.shape

    def bw(g):
        return (g.reshape(original),)

    return _make(x.data.reshape(shape), (x,), bw)


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape != b.data.shape and a.data.shape != () and b.data.shape != ():
        raise ContractViolation(f"add: shape mismatch, {a.data.shape} vs {b.data.shape}")

    def bw(g):
        ga = g if a.data.shape == g.shape else np.sum(g)
        gb = g if b.data.shape == g.shape else np.sum(g)
        return ga, gb

    return _make(a.data + b.data, (a, b), bw)


def scale(x: Tensor, factor: float) -> Tensor:
    x = _as_tensor(x)
    c = float(factor)

    def bw(g):
        return (g * c,)

    return _make(x.data * c, (x,), bw)


def l1_loss(pred: Tensor, target) -> Tensor:
    """Sum of absolute deviations; subgradient at exact hits is 0."""
    pred = _as_tensor(pred)
    target = np.asarray(target, dtype=np.float64)
    if target.shape != pred.data.shape and target.shape != ():
        raise ContractViolation(f"l1_loss: shape mismatch, {pred.data.shape} vs {target.shape}")
    diff = pred.data - target

    def bw(g):
        return (g * np.sign(diff),)

    return _make(np.abs(diff).sum(), (pred,), bw)


def l1_penalty(store: "ParamStore", coefficient: float) -> Tensor:
    """coefficient times the summed absolute value of all parameters."""
    params = list(store.tensors())
    c = float(coefficient)
    total = c * sum(np.abs(p.data).sum() for p in params)

    def bw(g):
        return tuple(g * c * np.sign(p.data) for p in params)

    return _make(np.float64(total), tuple(params), bw)


# ── Reverse pass ─────────────────────────────────────────────────────────────


def backward(loss: Tensor):
    """Populate gradients of every reachable requires_grad leaf."""
    if loss.data.size != 1:
        raise ContractViolation(f"backward: loss must be scalar, got shape {loss.data.shape}")
    if loss._spent:
        raise ContractViolation("backward: tape already consumed; rebuild the graph first")
    if not loss._parents and loss._bw is None and not loss.requires_grad:
        raise ContractViolation("backward: loss was computed outside the tape (no_grad?)")
    loss._spent = True

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            stack.append((parent, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad and not node._parents:
            node.grad = g.copy() if node.grad is None else node.grad + g
        if node._bw is None:
            continue
        for parent, pg in zip(node._parents, node._bw(g)):
            if pg is None:
                continue
            acc = grads.get(id(parent))
            grads[id(parent)] = pg.copy() if acc is None else acc + pg


# ── Parameters and Adam ──────────────────────────────────────────────────────


class ParamStore:
    """Named trainable parameters with their gradient accumulators."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, array) -> Tensor:
        if name in self._params:
            raise ContractViolation(f"duplicate parameter name {name!r}")
        t = Tensor(array, requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def tensors(self):
        return self._params.values()

    def zero_grads(self):
        for t in self._params.values():
            t.grad = None

    def copy_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._params.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]):
        if set(arrays) != set(self._params):
            raise ContractViolation("parameter names do not match the store")
        for name, value in arrays.items():
            _check_shapes(f"load_arrays[{name}]", (self._params[name].data.shape, np.asarray(value).shape))
            self._params[name].data = np.array(value, dtype=np.float64)


def init_dense(store: ParamStore, prefix: str, fan_in: int, fan_out: int, rng) -> tuple[Tensor, Tensor]:
    """Glorot-uniform weight, zero bias."""
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    w = store.add(f"{prefix}.w", rng.uniform(-bound, bound, size=(fan_in, fan_out)))
    b = store.add(f"{prefix}.b", np.zeros(fan_out))
    return w, b


@dataclass
class AdamState:
    learning_rate: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(store: ParamStore, state: AdamState):
    """One bias-corrected Adam update over every parameter in the store."""
    for name, p in store.items():
        if p.grad is None:
            raise ContractViolation(f"adam_step: parameter {name!r} has no gradient")
    state.step += 1
    t = state.step
    for name, p in store.items():
        g = p.grad
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
        v = state.v.get(name)
        if v is None:
            v = state.v[name] = np.zeros_like(p.data)
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * g * g
        m_hat = m / (1 - state.beta1**t)
        v_hat = v / (1 - state.beta2**t)
        p.data = p.data - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)


# ── Checkpoints ──────────────────────────────────────────────────────────────

_CHECKPOINT_FORMAT = "relplan-checkpoint"
_CHECKPOINT_VERSION = 1


def save_checkpoint(path: str | Path, store: ParamStore, extra: dict | None = None):
    """Versioned container: JSON header + raw little-endian float64 payload."""
    manifest = []
    blobs = []
    for name, t in store.items():
        manifest.append({"name": name, "shape": list(t.data.shape)})
        blobs.append(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    header = {
        "format": _CHECKPOINT_FORMAT,
        "version": _CHECKPOINT_VERSION,
        "extra": extra or {},
        "params": manifest,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode())
        fh.write(b"\n")
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    newline = raw.find(b"\n")
    if newline < 0:
        raise FormatError(f"{path}: missing checkpoint header")
    try:
        header = json.loads(raw[:newline].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable checkpoint header: {exc}") from exc
    if header.get("format") != _CHECKPOINT_FORMAT:
        raise FormatError(f"{path}: not a checkpoint file")
    if header.get("version") != _CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {header.get('version')}")
    payload = raw[newline + 1 :]
    arrays: dict[str, np.ndarray] = {}
    offset = 0
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(payload):
            raise FormatError(f"{path}: truncated checkpoint payload")
        arrays[entry["name"]] = np.frombuffer(payload[offset:end], dtype="<f8").reshape(shape).copy()
        offset = end
    if offset != len(payload):
        raise FormatError(f"{path}: trailing bytes in checkpoint payload")
    return arrays, header["extra"]
