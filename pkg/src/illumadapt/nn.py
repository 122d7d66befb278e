"""Minimal neural-network building blocks on numpy arrays.

Layers follow a functional protocol: ``forward(x) -> (y, cache)`` and
``backward(cache, dy) -> (dx, grads)``. Parameters live on the layer object
and are mutated in place by the optimizers; activations never do, so one
layer instance can appear several times inside a single objective (as the
generators do in cycle losses) with each call keeping its own cache.

Array layout is NHWC throughout: batches of H x W x C images. All math is
float64; determinism then comes down to seeding.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ValidationError


def he_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def gaussian_init(rng: np.random.Generator, shape: tuple[int, ...], std: float = 0.02) -> np.ndarray:
    return rng.normal(0.0, std, size=shape)


class Layer:
    """Base layer: parameter-free unless a subclass overrides params()."""

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def forward(self, x):
        raise NotImplementedError

    def backward(self, cache, dy):
        raise NotImplementedError


class Conv2d(Layer):
    """2D convolution over NHWC input, zero padding, square stride.

    Weights have shape (kh, kw, cin, cout). The im2col patches are built
    with stride tricks, so forward is one matmul; backward scatters the
    patch gradient back with a kh*kw loop.
    """

    def __init__(self, cin: int, cout: int, kernel: int, stride: int = 1,
                 pad: int | None = None, init: str = "he",
                 rng: np.random.Generator | None = None, bias: bool = True):
        rng = rng or np.random.default_rng(0)
        self.cin, self.cout, self.kernel, self.stride = cin, cout, kernel, stride
        self.pad = kernel // 2 if pad is None else pad
        shape = (kernel, kernel, cin, cout)
        fan_in = kernel * kernel * cin
        if init == "he":
            self.w = he_init(rng, shape, fan_in)
        elif init == "gaussian":
            self.w = gaussian_init(rng, shape)
        elif init == "zero":
            self.w = np.zeros(shape)
        else:
            raise ValidationError(f"unknown init {init!r}")
        self.b = np.zeros(cout) if bias else None

    def params(self):
        out = {"w": self.w}
        if self.b is not None:
            out["b"] = self.b
        return out

    @staticmethod
    def _cols(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
        """im2col patches flattened to (B*ho*wo, C*k*k), channel-major."""
        win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))
        win = win[:, ::stride, ::stride][:, :ho, :wo]  # (B, ho, wo, C, k, k)
        b = xp.shape[0]
        return win.reshape(b * ho * wo, -1)

    def forward(self, x):
        if x.ndim != 4 or x.shape[3] != self.cin:
            raise ValidationError(
                f"conv expects (B, H, W, {self.cin}), got {x.shape}")
        b, h, w, _ = x.shape
        k, s, p = self.kernel, self.stride, self.pad
        ho = (h + 2 * p - k) // s + 1
        wo = (w + 2 * p - k) // s + 1
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
        cols = self._cols(xp, k, s, ho, wo)
        # weight flattened to match the (cin, k, k) patch order
        y = cols @ self.w.transpose(2, 0, 1, 3).reshape(-1, self.cout)
        if self.b is not None:
            y = y + self.b
        return y.reshape(b, ho, wo, self.cout), (cols, x.shape)

    def backward(self, cache, dy):
        cols, x_shape = cache
        b, h, w, _ = x_shape
        k, s, p = self.kernel, self.stride, self.pad
        _, ho, wo, _ = dy.shape
        dy_flat = dy.reshape(b * ho * wo, self.cout)
        dw = (cols.T @ dy_flat).reshape(self.cin, k, k, self.cout)
        grads = {"w": dw.transpose(1, 2, 0, 3)}
        if self.b is not None:
            grads["b"] = dy_flat.sum(axis=0)
        dcols = (dy_flat @ self.w.transpose(2, 0, 1, 3).reshape(-1, self.cout).T)
        dcols = dcols.reshape(b, ho, wo, self.cin, k, k)
        dxp = np.zeros((b, h + 2 * p, w + 2 * p, self.cin))
        for i in range(k):
            for j in range(k):
                dxp[:, i:i + s * ho:s, j:j + s * wo:s] += dcols[:, :, :, :, i, j]
        dx = dxp[:, p:p + h, p:p + w] if p else dxp
        return dx, grads


class InstanceNorm(Layer):
    """Per-sample, per-channel normalization over the spatial axes."""

    def __init__(self, channels: int, eps: float = 1e-5):
        self.gamma = np.ones(channels)
        self.beta = np.zeros(channels)
        self.eps = eps

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def forward(self, x):
        mu = x.mean(axis=(1, 2), keepdims=True)
        var = x.var(axis=(1, 2), keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu) * inv
        return self.gamma * xhat + self.beta, (xhat, inv)

    def backward(self, cache, dy):
        xhat, inv = cache
        m = dy.shape[1] * dy.shape[2]
        grads = {
            "gamma": (dy * xhat).sum(axis=(0, 1, 2)),
            "beta": dy.sum(axis=(0, 1, 2)),
        }
        dxhat = dy * self.gamma
        # Standard normalized-gradient identity, per (sample, channel) group.
        dx = inv / m * (
            m * dxhat
            - dxhat.sum(axis=(1, 2), keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=(1, 2), keepdims=True)
        )
        return dx, grads


class ReLU(Layer):
    def forward(self, x):
        mask = x > 0
        return x * mask, mask

    def backward(self, cache, dy):
        return dy * cache, {}


class LeakyReLU(Layer):
    def __init__(self, slope: float = 0.2):
        self.slope = slope

    def forward(self, x):
        mask = x > 0
        return np.where(mask, x, self.slope * x), mask

    def backward(self, cache, dy):
        return np.where(cache, dy, self.slope * dy), {}


class Tanh(Layer):
    def forward(self, x):
        y = np.tanh(x)
        return y, y

    def backward(self, cache, dy):
        return dy * (1.0 - cache ** 2), {}


class Upsample2x(Layer):
    """Nearest-neighbour spatial doubling."""

    def forward(self, x):
        return x.repeat(2, axis=1).repeat(2, axis=2), x.shape

    def backward(self, cache, dy):
        b, h, w, c = cache
        return dy.reshape(b, h, 2, w, 2, c).sum(axis=(2, 4)), {}


class GlobalAvgPool(Layer):
    """(B, H, W, C) -> (B, C) spatial mean."""

    def forward(self, x):
        return x.mean(axis=(1, 2)), x.shape

    def backward(self, cache, dy):
        b, h, w, c = cache
        return np.broadcast_to(dy[:, None, None, :] / (h * w), (b, h, w, c)).copy(), {}


class Dense(Layer):
    def __init__(self, din: int, dout: int, init: str = "he",
                 rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        if init == "he":
            self.w = he_init(rng, (din, dout), din)
        elif init == "gaussian":
            self.w = gaussian_init(rng, (din, dout))
        elif init == "zero":
            self.w = np.zeros((din, dout))
        else:
            raise ValidationError(f"unknown init {init!r}")
        self.b = np.zeros(dout)

    def params(self):
        return {"w": self.w, "b": self.b}

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.w.shape[0]:
            raise ValidationError(
                f"dense expects (B, {self.w.shape[0]}), got {x.shape}")
        return x @ self.w + self.b, x

    def backward(self, cache, dy):
        return dy @ self.w.T, {"w": cache.T @ dy, "b": dy.sum(axis=0)}


class Sequential(Layer):
    """Named layer chain; parameter names are '<layer>.<param>'."""

    def __init__(self, layers: list[tuple[str, Layer]]):
        names = [n for n, _ in layers]
        if len(set(names)) != len(names):
            raise ValidationError(f"duplicate layer names in {names}")
        self.layers = layers

    def params(self):
        out = {}
        for name, layer in self.layers:
            for pname, arr in layer.params().items():
                out[f"{name}.{pname}"] = arr
        return out

    def forward(self, x):
        caches = []
        for _, layer in self.layers:
            x, cache = layer.forward(x)
            caches.append(cache)
        return x, caches

    def backward(self, caches, dy):
        grads = {}
        for (name, layer), cache in zip(reversed(self.layers), reversed(caches)):
            dy, layer_grads = layer.backward(cache, dy)
            for pname, g in layer_grads.items():
                grads[f"{name}.{pname}"] = g
        return dy, grads


def accumulate(into: dict[str, np.ndarray], grads: dict[str, np.ndarray],
               scale: float = 1.0) -> None:
    """Sum a gradient dict into an accumulator, scaling on the way in."""
    for name, g in grads.items():
        if name in into:
            into[name] = into[name] + scale * g
        else:
            into[name] = scale * g


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean multi-class cross-entropy and its gradient w.r.t. logits."""
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ValidationError(
            f"cross_entropy expects (B, C) logits and (B,) labels, "
            f"got {logits.shape} and {labels.shape}")
    b = logits.shape[0]
    probs = softmax(logits)
    loss = float(-np.log(probs[np.arange(b), labels] + 1e-300).mean())
    dlogits = probs.copy()
    dlogits[np.arange(b), labels] -= 1.0
    return loss, dlogits / b


def numerical_grad(f, x: np.ndarray, h: float = 1e-3) -> np.ndarray:
    """Central finite differences of a scalar function, elementwise."""
    g = np.zeros_like(x)
    flat = x.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return g


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(np.abs(a).max(), np.abs(b).max(), 1e-12)
    return float(np.abs(a - b).max() / denom)


def save_params(path, params: dict[str, np.ndarray], meta: dict) -> None:
    """Write parameters plus a JSON metadata blob to one npz file."""
    arrays = dict(params)
    arrays["__meta__"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_params(path) -> tuple[dict[str, np.ndarray], dict]:
    if not Path(path).exists():
        raise ValidationError(f"no checkpoint at {path}")
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        params = {k: data[k] for k in data.files if k != "__meta__"}
    return params, meta


def set_params(layer: Layer, values: dict[str, np.ndarray]) -> None:
    """Copy stored arrays into a model's live parameters, shape-checked."""
    live = layer.params()
    missing = set(live) - set(values)
    if missing:
        raise ValidationError(f"checkpoint missing parameters: {sorted(missing)}")
    for name, arr in live.items():
        if values[name].shape != arr.shape:
            raise ValidationError(
                f"parameter {name} shape {values[name].shape} != {arr.shape}")
        arr[...] = values[name]
