"""Small fully-connected networks with explicit backprop, plus the pieces
around them: diagonal-Gaussian action distribution, Adam, and a running
observation normalizer.

Everything is float64 numpy. Gradients are written out by hand and checked
against central finite differences in the test suite, which is the point of
not reaching for an autograd framework here.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Mlp",
    "orthogonal",
    "gaussian_log_prob",
    "gaussian_entropy",
    "Adam",
    "RunningNorm",
    "LOG_STD_MIN",
    "LOG_STD_MAX",
]

LOG_STD_MIN = -5.0
LOG_STD_MAX = 1.0

LOG_2PI = np.log(2.0 * np.pi)


def orthogonal(rng: np.random.Generator, shape: tuple, gain: float = 1.0) -> np.ndarray:
    """Orthogonal init (QR of a Gaussian), rows-or-columns orthonormal."""
    rows, cols = shape
    a = rng.normal(size=(max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return np.ascontiguousarray(gain * q[:rows, :cols])


class Mlp:
    """Tanh MLP: input -> hidden*len(hidden) -> out, linear output layer."""

    def __init__(self, in_dim: int, hidden: tuple, out_dim: int,
                 rng: np.random.Generator, final_gain: float = 1.0):
        sizes = [in_dim, *hidden, out_dim]
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for k in range(len(sizes) - 1):
            gain = final_gain if k == len(sizes) - 2 else np.sqrt(2.0)
            self.weights.append(orthogonal(rng, (sizes[k], sizes[k + 1]), gain))
            self.biases.append(np.zeros(sizes[k + 1]))

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def forward(self, x: np.ndarray, want_cache: bool = False):
        """Returns output (and the activation cache when asked)."""
        h = x
        cache = [x] if want_cache else None
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = z if k == last else np.tanh(z)
            if want_cache and k != last:
                cache.append(h)
        return (h, cache) if want_cache else h

    def backward(self, cache: list, grad_out: np.ndarray) -> list[np.ndarray]:
        """Gradients for every parameter given dL/d(output); matches .params order."""
        grads = [None] * (2 * len(self.weights))
        g = grad_out
        for k in range(len(self.weights) - 1, -1, -1):
            h_in = cache[k]
            grads[2 * k] = h_in.T @ g
            grads[2 * k + 1] = g.sum(axis=0)
            if k > 0:
                g = (g @ self.weights[k].T) * (1.0 - h_in * h_in)
        return grads


def gaussian_log_prob(mean: np.ndarray, log_std: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """Log density of a diagonal Gaussian, summed over action dims."""
    z = (actions - mean) / np.exp(log_std)
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std) - 0.5 * LOG_2PI * mean.shape[-1]


def gaussian_entropy(log_std: np.ndarray) -> float:
    """Entropy of the diagonal Gaussian; depends only on the scales."""
    return float(np.sum(log_std + 0.5 * (LOG_2PI + 1.0)))


class Adam:
    """Adam over a list of parameter arrays, moments kept per array."""

    def __init__(self, params: list[np.ndarray], lr: float = 3e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


class RunningNorm:
    """Running mean/variance over observation batches (parallel Welford).

    Frozen at evaluation time by simply not calling update().
    """

    def __init__(self, dim: int, clip: float = 10.0):
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = 1e-4
        self.clip = clip

    def update(self, batch: np.ndarray) -> None:
        batch = batch.reshape(-1, batch.shape[-1])
        n = batch.shape[0]
        b_mean = batch.mean(axis=0)
        b_var = batch.var(axis=0)
        delta = b_mean - self.mean
        tot = self.count + n
        self.mean = self.mean + delta * (n / tot)
        m_a = self.var * self.count
        m_b = b_var * n
        self.var = (m_a + m_b + delta * delta * (self.count * n / tot)) / tot
        self.count = tot

    def normalize(self, x: np.ndarray) -> np.ndarray:
        z = (x - self.mean) / np.sqrt(self.var + 1e-8)
        return np.clip(z, -self.clip, self.clip)
