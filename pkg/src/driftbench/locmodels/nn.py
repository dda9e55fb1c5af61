"""Minimal float64 neural-network layers with explicit backward passes.

Every layer exposes ``forward(x, train) -> (y, cache)`` and
``backward(cache, dy) -> (dx, grads)``.  Forward never mutates parameters;
only BatchNorm updates its running statistics, and only when ``train`` is
true.
"""

import numpy as np

from ..rng import RngStream


class Linear:
    kind = "linear"

    def __init__(self, n_in, n_out, stream=None):
        self.n_in = n_in
        self.n_out = n_out
        bound = 1.0 / np.sqrt(n_in)
        if stream is None:
            self.params = {"W": np.zeros((n_in, n_out)), "b": np.zeros(n_out)}
        else:
            w = stream.uniforms(n_in * n_out, -bound, bound).reshape(n_in, n_out)
            b = stream.uniforms(n_out, -bound, bound)
            self.params = {"W": w, "b": b}

    def forward(self, x, train=False):
        return x @ self.params["W"] + self.params["b"], x

    def backward(self, x, dy):
        grads = {"W": x.T @ dy, "b": dy.sum(axis=0)}
        return dy @ self.params["W"].T, grads


class ELU:
    kind = "elu"

    def __init__(self, alpha=1.0):
        self.alpha = alpha
        self.params = {}

    def forward(self, x, train=False):
        y = np.where(x > 0, x, self.alpha * np.expm1(np.minimum(x, 0.0)))
        return y, x

    def backward(self, x, dy):
        slope = np.where(x > 0, 1.0, self.alpha * np.exp(np.minimum(x, 0.0)))
        return dy * slope, {}


class BatchNorm:
    """Per-feature batch normalization with affine scale and shift.

    Training uses batch statistics (biased variance) and folds them into
    running estimates with ``momentum``; the running variance uses the
    unbiased batch variance.  Inference uses the running estimates only.
    """

    kind = "batchnorm"

    def __init__(self, n_features, momentum=0.1, eps=1e-5):
        self.n_features = n_features
        self.momentum = momentum
        self.eps = eps
        self.params = {"gamma": np.ones(n_features), "beta": np.zeros(n_features)}
        self.running_mean = np.zeros(n_features)
        self.running_var = np.ones(n_features)

    def forward(self, x, train=False):
        if train:
            n = x.shape[0]
            mu = x.mean(axis=0)
            var = x.var(axis=0)
            m = self.momentum
            self.running_mean = (1.0 - m) * self.running_mean + m * mu
            unbiased = var * n / (n - 1) if n > 1 else var
            self.running_var = (1.0 - m) * self.running_var + m * unbiased
        else:
            mu, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu) * inv_std
        y = self.params["gamma"] * xhat + self.params["beta"]
        return y, (xhat, inv_std, train)

    def backward(self, cache, dy):
        xhat, inv_std, train = cache
        grads = {"gamma": (dy * xhat).sum(axis=0), "beta": dy.sum(axis=0)}
        dxhat = dy * self.params["gamma"]
        if not train:
            return dxhat * inv_std, grads
        n = dy.shape[0]
        dx = (inv_std / n) * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
        return dx, grads


def forward_stack(layers, x, train=False):
    caches = []
    for layer in layers:
        x, cache = layer.forward(x, train)
        caches.append(cache)
    return x, caches


def backward_stack(layers, caches, dy):
    """Backpropagate through ``layers``; returns (dx, per-layer grad dicts)."""
    grads = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        dy, grads[i] = layers[i].backward(caches[i], dy)
    return dy, grads


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, targets):
    """Mean cross-entropy of integer ``targets``; returns (loss, dlogits)."""
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(log_z - shifted[np.arange(n), targets]))
    grad = softmax(logits)
    grad[np.arange(n), targets] -= 1.0
    return loss, grad / n


def mse_loss(pred, target):
    """Mean squared error over all elements; returns (loss, dpred)."""
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


class Adam:
    """Adam with bias correction, stepping a list of layers in place."""

    def __init__(self, layers, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.layers = layers
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [{k: np.zeros_like(v) for k, v in l.params.items()} for l in layers]
        self.v = [{k: np.zeros_like(v) for k, v in l.params.items()} for l in layers]
        self._scratch = [{k: np.empty_like(v) for k, v in l.params.items()} for l in layers]

    def step(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        # lr * (m / c1) / (sqrt(v / c2) + eps) rewritten with scalar factors
        # so the update needs one scratch buffer and no temporaries
        step_scale = self.lr * np.sqrt(c2) / c1
        eps_scaled = self.eps * np.sqrt(c2)
        for layer, g, m, v, buf in zip(self.layers, grads, self.m, self.v, self._scratch):
            for name, p in layer.params.items():
                gi, mi, vi, tmp = g[name], m[name], v[name], buf[name]
                mi *= b1
                np.multiply(gi, 1.0 - b1, out=tmp)
                mi += tmp
                vi *= b2
                np.multiply(gi, gi, out=tmp)
                tmp *= 1.0 - b2
                vi += tmp
                np.sqrt(vi, out=tmp)
                tmp += eps_scaled
                np.divide(mi, tmp, out=tmp)
                tmp *= step_scale
                p -= tmp


def layer_stream(seed, index):
    return RngStream(seed, index)
