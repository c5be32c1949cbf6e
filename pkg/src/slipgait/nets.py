"""Small fully connected networks with hand-rolled backprop, Adam, and a
running observation normalizer. numpy only; gradients are exact and checked
against finite differences in the test suite."""

from __future__ import annotations

import numpy as np


class Mlp:
    """Feed-forward ReLU network with a linear output layer.

    Parameters live in ``weights``/``biases`` lists. ``forward`` returns the
    output and a cache that ``backward`` consumes to produce parameter
    gradients (and optionally the input gradient).
    """

    def __init__(self, sizes, rng=None, final_scale=1.0):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        rng = rng or np.random.default_rng(0)
        self.sizes = list(sizes)
        self.weights = []
        self.biases = []
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            scale = np.sqrt(2.0 / n_in)
            if i == len(sizes) - 2:
                scale *= final_scale
            self.weights.append(rng.normal(0.0, scale, size=(n_in, n_out)))
            self.biases.append(np.zeros(n_out))

    @property
    def n_layers(self):
        return len(self.weights)

    def forward(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        activations = [x]
        for i in range(self.n_layers):
            z = activations[-1] @ self.weights[i] + self.biases[i]
            if i < self.n_layers - 1:
                z = np.maximum(z, 0.0)
            activations.append(z)
        return activations[-1], activations

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, activations, grad_out):
        """Gradients of sum(grad_out * output) w.r.t. parameters and input."""
        grad_out = np.atleast_2d(np.asarray(grad_out, dtype=float))
        grads_w = [None] * self.n_layers
        grads_b = [None] * self.n_layers
        delta = grad_out
        for i in reversed(range(self.n_layers)):
            grads_w[i] = activations[i].T @ delta
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (activations[i] > 0.0)
        return grads_w, grads_b, delta @ self.weights[0].T if self.n_layers else delta

    # -- flat parameter views (finite-difference checks, serialization) ----
    def get_flat(self):
        return np.concatenate([w.ravel() for w in self.weights]
                              + [b.ravel() for b in self.biases])

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=float)
        pos = 0
        for w in self.weights:
            w[...] = flat[pos : pos + w.size].reshape(w.shape)
            pos += w.size
        for b in self.biases:
            b[...] = flat[pos : pos + b.size]
            pos += b.size
        if pos != flat.size:
            raise ValueError("flat vector size mismatch")

    def flat_grads(self, grads_w, grads_b):
        return np.concatenate([g.ravel() for g in grads_w]
                              + [g.ravel() for g in grads_b])

    def to_dict(self):
        return {
            "sizes": self.sizes,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d):
        net = cls(d["sizes"])
        for w, stored in zip(net.weights, d["weights"]):
            arr = np.asarray(stored, dtype=float)
            if arr.shape != w.shape:
                raise ValueError("checkpoint layer shape mismatch")
            w[...] = arr
        for b, stored in zip(net.biases, d["biases"]):
            b[...] = np.asarray(stored, dtype=float)
        return net


class Adam:
    """Adam on a list of parameter arrays (paired with same-shaped grads)."""

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-5):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m[...] = self.beta1 * m + (1.0 - self.beta1) * g
            v[...] = self.beta2 * v + (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


class RunningNorm:
    """Streaming mean/variance (Welford) for observation normalization.

    Statistics only move at explicit ``update`` calls, so workers normalizing
    with a snapshot stay mutually consistent within a collection batch.
    """

    def __init__(self, dim, clip=10.0):
        self.dim = dim
        self.clip = clip
        self.count = 0.0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def update(self, batch):
        batch = np.atleast_2d(np.asarray(batch, dtype=float))
        n = batch.shape[0]
        if n == 0:
            return
        b_mean = batch.mean(axis=0)
        b_m2 = ((batch - b_mean) ** 2).sum(axis=0)
        if self.count == 0:
            self.count = float(n)
            self.mean = b_mean
            self.m2 = b_m2
            return
        total = self.count + n
        delta = b_mean - self.mean
        self.mean = self.mean + delta * (n / total)
        self.m2 = self.m2 + b_m2 + delta**2 * (self.count * n / total)
        self.count = total

    @property
    def std(self):
        if self.count < 2:
            return np.ones(self.dim)
        return np.sqrt(np.maximum(self.m2 / self.count, 1e-8))

    def normalize(self, x):
        if self.count < 2:
            return np.asarray(x, dtype=float)
        z = (np.asarray(x, dtype=float) - self.mean) / self.std
        return np.clip(z, -self.clip, self.clip)

    def to_dict(self):
        return {
            "count": self.count,
            "mean": self.mean.tolist(),
            "m2": self.m2.tolist(),
            "clip": self.clip,
        }

    @classmethod
    def from_dict(cls, d):
        norm = cls(len(d["mean"]), clip=d.get("clip", 10.0))
        norm.count = float(d["count"])
        norm.mean = np.asarray(d["mean"], dtype=float)
        norm.m2 = np.asarray(d["m2"], dtype=float)
        return norm
