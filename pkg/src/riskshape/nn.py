"""Small dense networks with hand-written backprop, and an Adam optimizer."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

ACTIVATIONS = ("relu", "tanh", "identity", "softmax")
CHECKPOINT_FORMAT = "riskshape-checkpoint"
CHECKPOINT_VERSION = 1


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "identity":
        return z
    # softmax with max-subtraction so no probability underflows to exactly zero on sane logits
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _activation_grad(z: np.ndarray, a: np.ndarray, g: np.ndarray, kind: str) -> np.ndarray:
    """Gradient w.r.t. the pre-activation `z`, given gradient `g` w.r.t. output `a`."""
    if kind == "relu":
        return g * (z > 0)
    if kind == "tanh":
        return g * (1.0 - a * a)
    if kind == "identity":
        return g
    return a * (g - np.sum(g * a, axis=1, keepdims=True))


class DenseNet:
    """Fully connected network: `sizes` lists layer widths from input to output.

    Weights are stored (in, out) so that a forward pass is `x @ W + b`.
    """

    def __init__(self, sizes, activations, seed: int = 0, out_scale: float = 1.0):
        sizes = [int(s) for s in sizes]
        activations = list(activations)
        if len(activations) != len(sizes) - 1:
            raise ValueError("need one activation per layer")
        for a in activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        if "softmax" in activations[:-1]:
            raise ValueError("softmax is only allowed on the final layer")
        self.sizes = sizes
        self.activations = activations
        self.out_scale = float(out_scale)
        rng = np.random.default_rng(seed)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            if i == len(sizes) - 2:
                bound *= out_scale
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()])

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.size != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {flat.size}")
        i = 0
        for p in self.params():
            p[...] = flat[i:i + p.size].reshape(p.shape)
            i += p.size

    def copy(self) -> "DenseNet":
        other = DenseNet.__new__(DenseNet)
        other.sizes = list(self.sizes)
        other.activations = list(self.activations)
        other.out_scale = self.out_scale
        other.weights = [w.copy() for w in self.weights]
        other.biases = [b.copy() for b in self.biases]
        return other

    def forward(self, x: np.ndarray):
        """Returns (outputs, cache); the cache feeds `backward`."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.in_dim:
            raise ValueError(f"input width {x.shape[1]} != network input dimension {self.in_dim}")
        cache = []
        a = x
        for w, b, kind in zip(self.weights, self.biases, self.activations):
            z = a @ w + b
            out = _activate(z, kind)
            cache.append((a, z, out))
            a = out
        return a, cache

    def predict(self, x: np.ndarray) -> np.ndarray:
        a = np.atleast_2d(np.asarray(x, dtype=float))
        for w, b, kind in zip(self.weights, self.biases, self.activations):
            a = _activate(a @ w + b, kind)
        return a

    def backward(self, cache, grad_out: np.ndarray):
        """Reverse pass: returns ([dW0, db0, dW1, db1, ...], d_input)."""
        if len(cache) != len(self.weights):
            raise ValueError("cache does not belong to this network")
        g = np.atleast_2d(grad_out)
        if g.shape != cache[-1][2].shape:
            raise ValueError(f"output gradient shape {g.shape} != cached output {cache[-1][2].shape}")
        grads: list[np.ndarray] = [None] * (2 * len(self.weights))
        for i in reversed(range(len(self.weights))):
            a_in, z, out = cache[i]
            if a_in.shape[1] != self.weights[i].shape[0]:
                raise ValueError("stale cache: layer shapes changed")
            gz = _activation_grad(z, out, g, self.activations[i])
            grads[2 * i] = a_in.T @ gz
            grads[2 * i + 1] = gz.sum(axis=0)
            g = gz @ self.weights[i].T
        return grads, g

    def arch(self) -> dict:
        return {"sizes": self.sizes, "activations": self.activations, "out_scale": self.out_scale}

    def to_dict(self) -> dict:
        return {"arch": self.arch(), "params": self.get_flat().tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "DenseNet":
        arch = d["arch"]
        net = cls(arch["sizes"], arch["activations"], seed=0, out_scale=arch.get("out_scale", 1.0))
        net.set_flat(np.array(d["params"], dtype=float))
        return net


class Adam:
    """Adaptive-moment optimizer holding per-parameter first/second moments."""

    def __init__(self, net: DenseNet, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, max_grad_norm: float | None = None):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.max_grad_norm = max_grad_norm
        self.t = 0
        self.m = [np.zeros_like(p) for p in net.params()]
        self.v = [np.zeros_like(p) for p in net.params()]

    def step(self, net: DenseNet, grads) -> bool:
        """Apply one update in place. Returns False (and skips) on non-finite gradients."""
        params = net.params()
        if len(grads) != len(params) or any(g.shape != p.shape for g, p in zip(grads, params)):
            raise ValueError("gradients are not shaped like the parameters")
        if not all(np.all(np.isfinite(g)) for g in grads):
            log.warning("non-finite gradient; optimizer step %d skipped", self.t + 1)
            return False
        if self.max_grad_norm is not None:
            norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
            if norm > self.max_grad_norm:
                grads = [g * (self.max_grad_norm / norm) for g in grads]
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return True

    def to_dict(self) -> dict:
        return {
            "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps,
            "max_grad_norm": self.max_grad_norm, "t": self.t,
            "m": np.concatenate([x.ravel() for x in self.m]).tolist(),
            "v": np.concatenate([x.ravel() for x in self.v]).tolist(),
        }

    def load_dict(self, d: dict) -> None:
        self.lr, self.beta1, self.beta2, self.eps = d["lr"], d["beta1"], d["beta2"], d["eps"]
        self.max_grad_norm = d["max_grad_norm"]
        self.t = int(d["t"])
        for name in ("m", "v"):
            flat = np.array(d[name], dtype=float)
            i = 0
            for x in getattr(self, name):
                x[...] = flat[i:i + x.size].reshape(x.shape)
                i += x.size


def optim_step(net: DenseNet, grads, state: Adam):
    state.step(net, grads)
    return net, state


def save_checkpoint(path, payload: dict) -> None:
    blob = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, **payload}
    Path(path).write_text(json.dumps(blob))


def load_checkpoint(path) -> dict:
    blob = json.loads(Path(path).read_text())
    if blob.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a riskshape checkpoint")
    if blob.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {blob.get('version')}")
    return blob
