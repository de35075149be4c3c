"""Small dense networks with hand-written backpropagation.

Weights are stored ``(out, in)`` so a layer computes ``x @ W.T + b``.  Every
routine accepts either one input vector or a batch of row vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RELU = "relu"
IDENTITY = "identity"


class TrainingError(RuntimeError):
    """Raised when a loss, gradient or network output stops being finite."""


@dataclass
class Layer:
    weights: np.ndarray
    biases: np.ndarray
    activation: str = RELU

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape


class Mlp:
    def __init__(self, layers: list[Layer]):
        if not layers:
            raise ValueError("network needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.weights.shape[0] != b.weights.shape[1]:
                raise ValueError(f"layer size mismatch: {a.shape} -> {b.shape}")
        for layer in layers:
            if layer.activation not in (RELU, IDENTITY):
                raise ValueError(f"unknown activation {layer.activation!r}")
            if layer.biases.shape != (layer.weights.shape[0],):
                raise ValueError("bias length must equal layer output size")
        self.layers = layers

    @property
    def sizes(self) -> list[int]:
        return [self.layers[0].weights.shape[1]] + [l.weights.shape[0] for l in self.layers]

    @property
    def n_inputs(self) -> int:
        return self.layers[0].weights.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.layers[-1].weights.shape[0]

    @property
    def param_count(self) -> int:
        return sum(l.weights.size + l.biases.size for l in self.layers)

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.weights, layer.biases]
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()])

    def load_flat(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.param_count,):
            raise ValueError(f"expected {self.param_count} parameters, got {vec.shape}")
        i = 0
        for p in self.parameters():
            p[...] = vec[i:i + p.size].reshape(p.shape)
            i += p.size

    def copy(self) -> "Mlp":
        return Mlp([Layer(l.weights.copy(), l.biases.copy(), l.activation) for l in self.layers])

    def copy_from(self, other: "Mlp") -> None:
        for dst, src in zip(self.parameters(), other.parameters()):
            dst[...] = src

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list]:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n_inputs:
            raise ValueError(f"input has {x.shape[-1]} features, network expects {self.n_inputs}")
        cache = []
        a = x
        for layer in self.layers:
            z = a @ layer.weights.T + layer.biases
            cache.append((a, z))
            a = np.maximum(z, 0.0) if layer.activation == RELU else z
        return a, cache

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache: list, grad_out: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        """Reverse pass.  Returns gradients in :meth:`parameters` order and the
        gradient with respect to the network input."""
        if len(cache) != len(self.layers):
            raise ValueError("cache does not belong to this network")
        g = np.asarray(grad_out, dtype=np.float64)
        if g.shape != cache[-1][1].shape:
            raise ValueError(f"output gradient shape {g.shape} != output shape {cache[-1][1].shape}")
        grads: list[np.ndarray] = [None] * (2 * len(self.layers))
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            a, z = cache[i]
            if layer.activation == RELU:
                g = g * (z > 0.0)
            if g.ndim == 1:
                grads[2 * i] = np.outer(g, a)
                grads[2 * i + 1] = g.copy()
            else:
                grads[2 * i] = g.T @ a
                grads[2 * i + 1] = g.sum(axis=0)
            g = g @ layer.weights
        return grads, g

    def state_dict(self) -> dict:
        return {"sizes": self.sizes,
                "activations": [l.activation for l in self.layers],
                "params": self.flat()}

    @classmethod
    def from_state_dict(cls, state: dict) -> "Mlp":
        sizes = [int(s) for s in state["sizes"]]
        layers = [Layer(np.zeros((o, i)), np.zeros(o), act)
                  for i, o, act in zip(sizes[:-1], sizes[1:], state["activations"])]
        net = cls(layers)
        net.load_flat(state["params"])
        return net


def count_params(sizes: list[int]) -> int:
    return sum(i * o + o for i, o in zip(sizes[:-1], sizes[1:]))


def init_network(sizes: list[int], seed: int | np.random.Generator = 0,
                 output_scale: float = 1.0, output_activation: str = IDENTITY) -> Mlp:
    """ReLU network; the output layer uses ``output_activation``.

    Weights are He-uniform, ``U(-sqrt(6/fan_in), sqrt(6/fan_in))``; the last
    layer is additionally multiplied by ``output_scale``.  Biases start at 0.
    """
    sizes = list(sizes)
    if len(sizes) < 2 or any(int(s) != s or s < 1 for s in sizes):
        raise ValueError(f"need at least two positive integer layer sizes, got {sizes}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    layers = []
    for k, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        last = k == len(sizes) - 2
        bound = np.sqrt(6.0 / n_in) * (output_scale if last else 1.0)
        w = rng.uniform(-bound, bound, size=(n_out, n_in))
        layers.append(Layer(w, np.zeros(n_out), output_activation if last else RELU))
    return Mlp(layers)


def global_norm(grads: list[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads)))


def clip_grad_norm(grads: list[np.ndarray], max_norm: float) -> tuple[list[np.ndarray], float]:
    norm = global_norm(grads)
    if not np.isfinite(norm):
        raise TrainingError("non-finite gradient")
    if max_norm is not None and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        grads = [g * scale for g in grads]
    return grads, norm


def sgd_step(net: Mlp, grads: list[np.ndarray], lr: float, max_grad_norm: float | None = None) -> None:
    grads, _ = clip_grad_norm(grads, max_grad_norm)
    for p, g in zip(net.parameters(), grads):
        p -= lr * g


class Adam:
    """Bias-corrected Adam over a fixed list of parameter arrays (updated in place)."""

    def __init__(self, params: list[np.ndarray], lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, max_grad_norm: float | None = None):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.max_grad_norm = max_grad_norm
        self.params = list(params)
        # moments live in flat vectors so one update is a handful of array ops
        n = sum(p.size for p in self.params)
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self._grad = np.empty(n)
        self._buf = np.empty(n)
        bounds = np.cumsum([0] + [p.size for p in self.params])
        self._slices = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> float:
        """Apply one bias-corrected Adam update; returns the pre-clip gradient norm."""
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match the network")
        for p, g in zip(self.params, grads):
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        norm = global_norm(grads)
        if not np.isfinite(norm):
            raise TrainingError("non-finite gradient")
        g, buf, m, v = self._grad, self._buf, self.m, self.v
        np.concatenate([x.ravel() for x in grads], out=g)
        if self.max_grad_norm is not None and norm > self.max_grad_norm:
            g *= self.max_grad_norm / (norm + 1e-12)
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        step = self.lr * np.sqrt(1.0 - b2 ** self.t) / (1.0 - b1 ** self.t)
        eps_hat = self.eps * np.sqrt(1.0 - b2 ** self.t)
        m *= b1
        np.multiply(g, 1.0 - b1, out=buf)
        m += buf
        v *= b2
        np.multiply(g, g, out=buf)
        buf *= 1.0 - b2
        v += buf
        np.sqrt(v, out=buf)
        buf += eps_hat
        np.divide(m, buf, out=buf)
        buf *= step
        for p, sl in zip(self.params, self._slices):
            p -= buf[sl].reshape(p.shape)
        if self.t % 1000 == 0:
            # moments of dead units decay geometrically into subnormals, where
            # every flop is ~100x slower; their update is far below resolution
            for a in (m, v):
                a[np.abs(a) < 1e-200] = 0.0
        return norm

    def state_dict(self) -> dict:
        return {"t": self.t, "m": self.m.copy(), "v": self.v.copy()}

    def load_state_dict(self, state: dict) -> None:
        for name in ("m", "v"):
            flat = np.asarray(state[name], dtype=np.float64)
            if flat.shape != self.m.shape:
                raise ValueError(f"optimizer state {name} has shape {flat.shape}, expected {self.m.shape}")
            getattr(self, name)[...] = flat
        self.t = int(state["t"])


def huber(pred: np.ndarray, target: np.ndarray, delta: float = 1.0) -> tuple[float, np.ndarray]:
    """Mean Huber loss and its gradient with respect to ``pred``."""
    pred = np.asarray(pred, dtype=np.float64)
    diff = pred - np.asarray(target, dtype=np.float64)
    quad = np.abs(diff) <= delta
    loss = np.where(quad, 0.5 * diff * diff, delta * (np.abs(diff) - 0.5 * delta))
    grad = np.where(quad, diff, delta * np.sign(diff))
    n = max(diff.size, 1)
    return float(loss.sum() / n), grad / n


def mse(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    diff = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    n = max(diff.size, 1)
    return float((diff * diff).sum() / n), 2.0 * diff / n


def log_softmax(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape[-1] == 0:
        raise ValueError("empty logits")
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape[-1] == 0:
        raise ValueError("empty logits")
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def entropy(probs: np.ndarray) -> np.ndarray | float:
    p = np.asarray(probs, dtype=np.float64)
    h = -np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0).sum(axis=-1)
    return float(h) if h.ndim == 0 else h


def categorical_sample(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw using one uniform from ``rng``."""
    cdf = np.cumsum(probs)
    i = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(i, len(cdf) - 1)
