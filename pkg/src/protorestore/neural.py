"""Two-layer dense networks with hand-written backprop and Adam.

The forward map is y = W2 @ relu(W1 @ x + b1) + b2.  Gradients are
derived by hand and kept honest by `grad_check`, which compares every
parameter block against central finite differences.  No autograd
framework is involved anywhere.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import RngStream, softmax

CKPT_MAGIC = b"DNW1"
CKPT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sIIII")

PARAM_ORDER = ("W1", "b1", "W2", "b2")


@dataclass
class DenseNet2:
    """Parameter container for a two-layer dense network."""

    W1: np.ndarray  # (hidden, in)
    b1: np.ndarray  # (hidden,)
    W2: np.ndarray  # (out, hidden)
    b2: np.ndarray  # (out,)

    @property
    def in_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def out_dim(self) -> int:
        return self.W2.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}

    def copy(self) -> "DenseNet2":
        return DenseNet2(self.W1.copy(), self.b1.copy(),
                         self.W2.copy(), self.b2.copy())


def init_net(in_dim: int, hidden_dim: int, out_dim: int,
             stream: RngStream) -> DenseNet2:
    """Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases."""
    if min(in_dim, hidden_dim, out_dim) <= 0:
        raise ValueError("all layer sizes must be positive")
    gen = stream.generator()
    lim1 = np.sqrt(6.0 / (in_dim + hidden_dim))
    lim2 = np.sqrt(6.0 / (hidden_dim + out_dim))
    return DenseNet2(
        W1=gen.uniform(-lim1, lim1, size=(hidden_dim, in_dim)),
        b1=np.zeros(hidden_dim),
        W2=gen.uniform(-lim2, lim2, size=(out_dim, hidden_dim)),
        b2=np.zeros(out_dim),
    )


def forward(net: DenseNet2, x: np.ndarray):
    """Run the network; x is one vector or a (batch, in) stack.

    Returns (y, cache); pass the cache to `backward`.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.shape[1] != net.in_dim:
        raise ValueError(f"input dim {xb.shape[1]} != network in_dim {net.in_dim}")
    z1 = xb @ net.W1.T + net.b1
    h = np.maximum(z1, 0.0)
    y = h @ net.W2.T + net.b2
    cache = (xb, z1, h, single)
    return (y[0] if single else y), cache


def backward(net: DenseNet2, cache, dy: np.ndarray):
    """Backpropagate dL/dy; returns (grads dict, dL/dx).

    `dy` rows carry any loss scaling (e.g. 1/batch for a mean), so the
    returned gradients are exact for the corresponding scalar loss.
    """
    xb, z1, h, single = cache
    dyb = np.asarray(dy, dtype=np.float64)
    if single:
        dyb = dyb[None, :]
    dW2 = dyb.T @ h
    db2 = dyb.sum(axis=0)
    dh = dyb @ net.W2
    dz1 = dh * (z1 > 0.0)
    dW1 = dz1.T @ xb
    db1 = dz1.sum(axis=0)
    dx = dz1 @ net.W1
    grads = {"W1": dW1, "b1": db1, "W2": dW2, "b2": db2}
    return grads, (dx[0] if single else dx)


@dataclass
class TrainConfig:
    """Shared optimizer settings for the training loops."""

    learning_rate: float = 1e-3
    epochs: int = 200
    batch_size: int = 32
    schedule: str = "fixed"          # "fixed" | "halve_every"
    halve_every: int = 20            # epochs, for the halving schedule
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("learning_rate, epochs and batch_size must be positive")
        if self.schedule not in ("fixed", "halve_every"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.schedule == "halve_every" and self.halve_every <= 0:
            raise ValueError("halve_every must be positive")

    def lr_at(self, epoch: int) -> float:
        if self.schedule == "halve_every":
            return self.learning_rate * 0.5 ** (epoch // self.halve_every)
        return self.learning_rate


@dataclass
class AdamState:
    """Bias-corrected Adam moments, one (m, v) pair per parameter block."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(state: AdamState, params: dict[str, np.ndarray],
              grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """One in-place Adam update over every parameter block."""
    state.step += 1
    t = state.step
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in block {name!r}")
        if name not in state.m:
            state.m[name] = np.zeros_like(params[name])
            state.v[name] = np.zeros_like(params[name])
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * g * g
        m_hat = m / (1 - state.beta1 ** t)
        v_hat = v / (1 - state.beta2 ** t)
        params[name] -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params


def loss_sq_euclidean(y: np.ndarray, target: np.ndarray):
    """Plain squared Euclidean loss (no half factor); returns (loss, dy)."""
    y = np.asarray(y, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    d = y - target
    return float(np.sum(d * d)), 2.0 * d


def loss_cross_entropy(y: np.ndarray, label: int):
    """Softmax cross-entropy of one logit vector; returns (loss, dy)."""
    p = softmax(y)
    loss = -float(np.log(max(p[label], 1e-300)))
    dy = p.copy()
    dy[label] -= 1.0
    return loss, dy


_LOSSES = {
    "sq_euclidean": lambda y, ref: loss_sq_euclidean(y, ref),
    "cross_entropy": lambda y, ref: loss_cross_entropy(y, int(ref)),
}


def grad_check(net: DenseNet2, loss: str, sample, h: float = 1e-4) -> float:
    """Max relative error between analytic and central-difference gradients.

    `sample` is (x, target_vector) for "sq_euclidean" or (x, label) for
    "cross_entropy".  Relative error per entry is
    |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
    """
    if loss not in _LOSSES:
        raise ValueError(f"unknown loss {loss!r}")
    loss_fn = _LOSSES[loss]
    x, ref = sample

    y, cache = forward(net, x)
    _, dy = loss_fn(y, ref)
    grads, _ = backward(net, cache, dy)

    worst = 0.0
    for name, param in net.params().items():
        flat = param.reshape(-1)
        gflat = grads[name].reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            lp, _ = loss_fn(forward(net, x)[0], ref)
            flat[i] = keep - h
            lm, _ = loss_fn(forward(net, x)[0], ref)
            flat[i] = keep
            numeric = (lp - lm) / (2.0 * h)
            analytic = gflat[i]
            rel = abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))
            worst = max(worst, rel)
    return worst


def save_net(net: DenseNet2, path, meta: dict | None = None) -> Path:
    """Write a DNW1 checkpoint plus a JSON metadata sidecar.

    Layout: magic, version u32, (in, hidden, out) u32, then W1, b1, W2,
    b2 as little-endian float32 in row-major order.
    """
    path = Path(path)
    header = _CKPT_HEADER.pack(CKPT_MAGIC, CKPT_VERSION,
                               net.in_dim, net.hidden_dim, net.out_dim)
    blocks = b"".join(np.ascontiguousarray(net.params()[name], dtype="<f4").tobytes()
                      for name in PARAM_ORDER)
    path.write_bytes(header + blocks)
    doc = {"shape": [net.in_dim, net.hidden_dim, net.out_dim]}
    doc.update(meta or {})
    meta_path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n",
                               encoding="utf-8")
    return path


def meta_path(path) -> Path:
    return Path(path).with_suffix(".meta.json")


def load_net(path) -> tuple[DenseNet2, dict]:
    """Read a DNW1 checkpoint; returns (net, metadata dict)."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _CKPT_HEADER.size:
        raise ValueError("checkpoint shorter than its header")
    magic, version, in_dim, hidden_dim, out_dim = _CKPT_HEADER.unpack_from(raw)
    if magic != CKPT_MAGIC:
        raise ValueError(f"bad checkpoint magic {magic!r}")
    if version != CKPT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    shapes = {"W1": (hidden_dim, in_dim), "b1": (hidden_dim,),
              "W2": (out_dim, hidden_dim), "b2": (out_dim,)}
    need = sum(int(np.prod(s)) for s in shapes.values())
    body = np.frombuffer(raw, dtype="<f4", offset=_CKPT_HEADER.size)
    if body.size != need:
        raise ValueError(f"checkpoint holds {body.size} floats, expected {need}")
    parts = {}
    at = 0
    for name in PARAM_ORDER:
        size = int(np.prod(shapes[name]))
        parts[name] = body[at:at + size].astype(np.float64).reshape(shapes[name])
        at += size
    meta = {}
    mpath = meta_path(path)
    if mpath.exists():
        meta = json.loads(mpath.read_text(encoding="utf-8"))
    return DenseNet2(**parts), meta
