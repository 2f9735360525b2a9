"""Small fully-connected networks trained from scratch with numpy.

Just enough machinery for the three task hierarchies: dense layers with
tanh hidden activations, a stable softmax, the cross-entropy and
mean-squared-error losses with analytic gradients (verified against central
finite differences in the tests), and a plain Adam update.
"""

from __future__ import annotations

import numpy as np


def softmax(scores: np.ndarray) -> np.ndarray:
    """Row-wise softmax, shifted by the row max for overflow safety."""
    z = np.asarray(scores, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(scores, true_class: int) -> float:
    """-log softmax(scores)[true_class] for a single score vector."""
    z = np.asarray(scores, dtype=float)
    if z.ndim != 1:
        raise ValueError("scores must be a 1-D vector")
    if not np.all(np.isfinite(z)):
        raise ValueError("scores must be finite")
    if not 0 <= true_class < z.shape[0]:
        raise ValueError(f"true_class {true_class} out of range for {z.shape[0]} classes")
    shifted = z - z.max()
    log_probs = shifted - np.log(np.exp(shifted).sum())
    return float(-log_probs[true_class])


def mse(predictions, targets) -> float:
    """Mean squared error over paired samples."""
    p = np.asarray(predictions, dtype=float).ravel()
    t = np.asarray(targets, dtype=float).ravel()
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {t.shape}")
    if p.size == 0:
        raise ValueError("need at least one sample")
    return float(np.mean((t - p) ** 2))


class Dense:
    """One affine layer with an optional tanh on top."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, tanh: bool):
        scale = 1.0 / np.sqrt(n_in)
        self.w = rng.normal(0.0, scale, size=(n_in, n_out))
        self.b = np.zeros(n_out)
        self.tanh = tanh

    def forward(self, x: np.ndarray) -> np.ndarray:
        z = x @ self.w + self.b
        return np.tanh(z) if self.tanh else z

    def backward(self, x, out, grad_out):
        """Gradients given the cached input and output of forward."""
        if self.tanh:
            grad_out = grad_out * (1.0 - out ** 2)
        gw = x.T @ grad_out
        gb = grad_out.sum(axis=0)
        gx = grad_out @ self.w.T
        return gx, gw, gb

    def params(self):
        return [self.w, self.b]

    def copy_from(self, other: "Dense") -> None:
        self.w = other.w.copy()
        self.b = other.b.copy()
        self.tanh = other.tanh


class Mlp:
    """A stack of Dense layers with a linear final layer."""

    def __init__(self, sizes: list[int], rng: np.random.Generator):
        self.layers = [
            Dense(a, b, rng, tanh=i < len(sizes) - 2)
            for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]))
        ]

    def forward(self, x: np.ndarray, upto: int | None = None) -> np.ndarray:
        for layer in self.layers[:upto]:
            x = layer.forward(x)
        return x

    def forward_cached(self, x: np.ndarray):
        acts = [x]
        for layer in self.layers:
            acts.append(layer.forward(acts[-1]))
        return acts

    def backward(self, acts, grad_out):
        grads = [None] * len(self.layers)
        for i in reversed(range(len(self.layers))):
            layer = self.layers[i]
            grad_out, gw, gb = layer.backward(acts[i], acts[i + 1], grad_out)
            grads[i] = (gw, gb)
        return grads

    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out


def classification_loss_and_grad(net: Mlp, x: np.ndarray, labels: np.ndarray):
    """Batch-mean cross-entropy and its gradients w.r.t. every parameter."""
    acts = net.forward_cached(x)
    probs = softmax(acts[-1])
    n = x.shape[0]
    eps_probs = np.maximum(probs[np.arange(n), labels], 1e-300)
    loss = float(-np.log(eps_probs).mean())
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    return loss, net.backward(acts, grad)


def regression_loss_and_grad(net: Mlp, x: np.ndarray, targets: np.ndarray):
    """Batch MSE and its gradients w.r.t. every parameter."""
    acts = net.forward_cached(x)
    pred = acts[-1].ravel()
    n = x.shape[0]
    loss = float(np.mean((targets - pred) ** 2))
    grad = (2.0 / n) * (pred - targets).reshape(-1, 1)
    return loss, net.backward(acts, grad)


class Adam:
    """Standard Adam with the usual default moments."""

    def __init__(self, params, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def update(self, grads) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            mhat = m / (1 - b1 ** self.t)
            vhat = v / (1 - b2 ** self.t)
            p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def flat_grads(grads) -> list[np.ndarray]:
    out = []
    for gw, gb in grads:
        out.extend([gw, gb])
    return out
