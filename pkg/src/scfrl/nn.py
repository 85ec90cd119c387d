"""Dense feed-forward networks with hand-written backprop and Adam.

Row-major convention: a batch is an ``(n, d_in)`` matrix and every layer
computes ``act(x @ W + b)`` with ``W`` of shape ``(d_in, d_out)``.
"""

from __future__ import annotations

import json
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, NonFiniteLoss

FORMAT_TAG = "scfrl-net/1"

ACTIVATIONS = ("relu", "tanh", "sigmoid", "identity")


def _sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return _sigmoid(z)
    if name == "identity":
        return z
    raise ValueError(f"unknown activation {name!r}")


def activation_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    """d act / d z, given pre-activation ``z`` and output ``a``."""
    if name == "relu":
        return (z > 0).astype(z.dtype)
    if name == "tanh":
        return 1.0 - a * a
    if name == "sigmoid":
        return a * (1.0 - a)
    if name == "identity":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class Layer:
    W: np.ndarray
    b: np.ndarray
    activation: str


class NeuralNet:
    """A stack of dense layers plus Adam moment buffers."""

    beta1 = 0.9
    beta2 = 0.999
    eps = 1e-8

    def __init__(self, layers: Sequence[Layer]):
        self.layers = list(layers)
        if not self.layers:
            raise ValueError("network needs at least one layer")
        for i, layer in enumerate(self.layers):
            if layer.activation not in ACTIVATIONS:
                raise ValueError(f"unknown activation {layer.activation!r}")
            layer.W = np.asarray(layer.W, dtype=np.float64)
            layer.b = np.asarray(layer.b, dtype=np.float64).reshape(-1)
            if layer.W.ndim != 2 or layer.b.shape[0] != layer.W.shape[1]:
                raise DimensionMismatch(f"layer {i}: W {layer.W.shape} vs b {layer.b.shape}")
            if i and self.layers[i - 1].W.shape[1] != layer.W.shape[0]:
                raise DimensionMismatch(f"layer {i} input {layer.W.shape[0]} does not chain")
        self.reset_optimizer()

    @classmethod
    def build(cls, sizes: Sequence[int], hidden: str = "relu", output: str = "identity",
              rng: Optional[np.random.Generator] = None) -> "NeuralNet":
        """Glorot-uniform weights, zero biases. ``sizes`` = [in, h1, ..., out]."""
        rng = np.random.default_rng() if rng is None else rng
        layers = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            act = output if i == len(sizes) - 2 else hidden
            layers.append(Layer(rng.uniform(-limit, limit, size=(fan_in, fan_out)), np.zeros(fan_out), act))
        return cls(layers)

    # -- shape helpers ------------------------------------------------------

    @property
    def in_dim(self) -> int:
        return self.layers[0].W.shape[0]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].W.shape[1]

    @property
    def sizes(self) -> list[int]:
        return [self.in_dim] + [layer.W.shape[1] for layer in self.layers]

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.W, layer.b]
        return out

    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def copy(self) -> "NeuralNet":
        net = NeuralNet([Layer(l.W.copy(), l.b.copy(), l.activation) for l in self.layers])
        net.m = [m.copy() for m in self.m]
        net.v = [v.copy() for v in self.v]
        net.t = self.t
        return net

    def reset_optimizer(self):
        self.m = [np.zeros_like(p) for p in self.params()]
        self.v = [np.zeros_like(p) for p in self.params()]
        self.t = 0

    def all_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.params())

    # -- forward / backward -------------------------------------------------

    def forward(self, x, cache: bool = False):
        """Evaluate the net. With ``cache=True`` returns ``(output, cache)``."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.ndim != 2 or h.shape[1] != self.in_dim:
            raise DimensionMismatch(f"expected input width {self.in_dim}, got shape {x.shape}")
        trace = [h]
        zs = []
        for layer in self.layers:
            z = h @ layer.W + layer.b
            h = activate(layer.activation, z)
            zs.append(z)
            trace.append(h)
        out = h[0] if single else h
        if cache:
            return out, (trace, zs, single)
        return out

    __call__ = forward

    def backward(self, cache, grad_out, grad_wrt_preactivation: bool = False):
        """Backpropagate ``grad_out`` (dL/d output).

        Returns ``(param_grads, grad_input)`` with ``param_grads`` aligned to
        :meth:`params`. With ``grad_wrt_preactivation`` the incoming gradient is
        taken as dL/dz of the last layer (skips its activation derivative).
        """
        trace, zs, single = cache
        g = np.asarray(grad_out, dtype=np.float64)
        if single:
            g = g[None, :]
        if g.shape != trace[-1].shape:
            raise DimensionMismatch(f"grad shape {g.shape} vs output {trace[-1].shape}")
        grads = [None] * (2 * len(self.layers))
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            if not (grad_wrt_preactivation and i == len(self.layers) - 1):
                g = g * activation_grad(layer.activation, zs[i], trace[i + 1])
            grads[2 * i] = trace[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ layer.W.T
        return grads, (g[0] if single else g)

    def input_gradient(self, x, grad_out) -> np.ndarray:
        _, c = self.forward(x, cache=True)
        return self.backward(c, grad_out)[1]

    def apply_gradients(self, grads: Sequence[np.ndarray], lr: float):
        """One Adam update (descent direction)."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(self.params(), grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    # -- supervised training ------------------------------------------------

    def loss_and_grads(self, inputs, targets, loss: str = "mse", sample_weight=None):
        """Mean batch loss and parameter gradients, without updating."""
        x = np.asarray(inputs, dtype=np.float64)
        y = np.asarray(targets, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if y.ndim == 1:
            y = y.reshape(x.shape[0], -1)
        if x.shape[0] < 1 or y.shape[0] != x.shape[0]:
            raise DimensionMismatch(f"batch inputs {x.shape} vs targets {y.shape}")
        if y.shape[1] != self.out_dim:
            raise DimensionMismatch(f"targets width {y.shape[1]} vs output {self.out_dim}")
        n = x.shape[0]
        w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
        w = w[:, None]
        out, c = self.forward(x, cache=True)
        pre = False
        if loss == "mse":
            per = (out - y) ** 2
            value = float((w * per).sum() / per.size)
            g = w * 2.0 * (out - y) / per.size
        elif loss == "bce":
            if self.layers[-1].activation == "sigmoid":
                z = c[1][-1]
                per = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
                g = w * (out - y) / per.size
                pre = True
            else:
                per = binary_cross_entropy(out, y, reduce=False)
                with np.errstate(divide="ignore", invalid="ignore"):
                    g = w * (out - y) / (out * (1.0 - out)) / per.size
            value = float((w * per).sum() / per.size)
        else:
            raise ValueError(f"unknown loss {loss!r}")
        if not np.isfinite(value):
            raise NonFiniteLoss(f"{loss} loss is {value}")
        grads, _ = self.backward(c, g, grad_wrt_preactivation=pre)
        return value, grads

    def train_step(self, inputs, targets, loss: str = "mse", lr: float = 1e-3, sample_weight=None) -> float:
        """One Adam step on the batch; returns the pre-update mean loss."""
        if not lr > 0:
            raise ValueError("lr must be positive")
        value, grads = self.loss_and_grads(inputs, targets, loss, sample_weight)
        self.apply_gradients(grads, lr)
        if not self.all_finite():
            raise NonFiniteLoss("parameters became non-finite")
        return value

    # -- persistence --------------------------------------------------------

    def state_arrays(self, prefix: str = "") -> dict:
        arrays = {}
        for i, layer in enumerate(self.layers):
            arrays[f"{prefix}W{i}"] = layer.W
            arrays[f"{prefix}b{i}"] = layer.b
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            arrays[f"{prefix}adam_m{i}"] = m
            arrays[f"{prefix}adam_v{i}"] = v
        return arrays

    def meta(self) -> dict:
        return {"sizes": self.sizes, "activations": [l.activation for l in self.layers], "adam_t": self.t}

    @classmethod
    def from_state(cls, meta: dict, arrays, prefix: str = "") -> "NeuralNet":
        n = len(meta["activations"])
        net = cls([Layer(np.array(arrays[f"{prefix}W{i}"]), np.array(arrays[f"{prefix}b{i}"]),
                         meta["activations"][i]) for i in range(n)])
        if net.sizes != list(meta["sizes"]):
            raise DimensionMismatch("checkpoint sizes do not match stored arrays")
        if f"{prefix}adam_m0" in arrays:
            net.m = [np.array(arrays[f"{prefix}adam_m{i}"]) for i in range(2 * n)]
            net.v = [np.array(arrays[f"{prefix}adam_v{i}"]) for i in range(2 * n)]
            net.t = int(meta.get("adam_t", 0))
        return net

    def save(self, path, extra: Optional[dict] = None):
        save_checkpoint(path, {"kind": "net", "net": self.meta(), **(extra or {})}, self.state_arrays())

    @classmethod
    def load(cls, path) -> "NeuralNet":
        meta, arrays = load_checkpoint(path)
        return cls.from_state(meta["net"], arrays)


def binary_cross_entropy(p, y, reduce: bool = True):
    """BCE on probabilities; ``0 * log 0`` counts as 0."""
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(y > 0, y * np.log(p), 0.0)
        b = np.where(y < 1, (1.0 - y) * np.log1p(-p), 0.0)
    per = -(a + b)
    return float(per.mean()) if reduce else per


def mse(pred, y) -> float:
    return float(np.mean((np.asarray(pred) - np.asarray(y)) ** 2))


def gradient_check(net: NeuralNet, inputs, targets, loss: str = "mse", step: float = 1e-5,
                   grad_fn=None, floor: float = 1e-7) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``grad_fn(net, inputs, targets, loss) -> grads`` overrides the analytic
    route (used to inject corrupted gradients in tests). Entries where both
    gradients are below ``floor`` are compared absolutely.
    """
    if grad_fn is None:
        _, analytic = net.loss_and_grads(inputs, targets, loss)
    else:
        analytic = grad_fn(net, inputs, targets, loss)
    worst = 0.0
    for p, g in zip(net.params(), analytic):
        flat = p.reshape(-1)
        gflat = np.asarray(g).reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + step
            up = net.loss_and_grads(inputs, targets, loss)[0]
            flat[i] = old - step
            down = net.loss_and_grads(inputs, targets, loss)[0]
            flat[i] = old
            num = (up - down) / (2.0 * step)
            err = abs(num - gflat[i]) / max(abs(num), abs(gflat[i]), floor)
            worst = max(worst, err)
    return worst


# -- checkpoint files -------------------------------------------------------


def save_checkpoint(path, meta: dict, arrays: dict):
    """Write an ``.npz`` with a JSON metadata record tagged :data:`FORMAT_TAG`.

    The write goes to a temporary file first and is renamed into place.
    """
    from .io import atomic_path

    meta = {"format": FORMAT_TAG, **meta}
    if "__meta__" in arrays:
        raise ValueError("reserved array name '__meta__'")
    arrays = {"__meta__": np.array(json.dumps(meta, sort_keys=True)), **arrays}
    with atomic_path(path) as tmp:
        # hand-rolled npz: fixed entry timestamps keep reruns byte-identical
        with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_STORED) as zf:
            for name, arr in arrays.items():
                info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
                with zf.open(info, "w", force_zip64=True) as fh:
                    np.lib.format.write_array(fh, np.asarray(arr), allow_pickle=False)


def load_checkpoint(path) -> tuple[dict, dict]:
    with np.load(Path(path), allow_pickle=False) as z:
        meta = json.loads(str(z["__meta__"]))
        if meta.get("format") != FORMAT_TAG:
            raise ValueError(f"{path}: unsupported checkpoint format {meta.get('format')!r}")
        arrays = {k: z[k] for k in z.files if k != "__meta__"}
    return meta, arrays
