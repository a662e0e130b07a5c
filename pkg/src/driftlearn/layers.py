"""Trainable layers with analytic gradients.

Everything here is plain numpy with explicit forward/backward passes so the
gradients can be checked against finite differences. Convolution is
cross-correlation (no kernel flip), the usual deep-learning convention.
Parameter updates use classical SGD momentum:

    v <- momentum * v - rate * grad
    p <- p + v
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, DimensionError
from .tensor import DEFAULT_DTYPE, check_finite, xavier_uniform


def relu(z):
    return np.maximum(z, 0.0)


def _relu_grad(z):
    return (z > 0.0).astype(z.dtype)


def sigmoid(z):
    # split by sign to avoid overflow in exp
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _sigmoid_grad(z):
    s = sigmoid(z)
    return s * (1.0 - s)


ACTIVATIONS = {
    "relu": (relu, _relu_grad),
    "sigmoid": (sigmoid, _sigmoid_grad),
    "identity": (lambda z: z, lambda z: np.ones_like(z)),
}


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, shifted by the row max for stability."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, targets: np.ndarray) -> float:
    """Mean cross-entropy of softmax outputs against one-hot targets."""
    if probs.shape != targets.shape:
        raise DimensionError(f"probs shape {probs.shape} vs targets shape {targets.shape}")
    p = np.clip(probs, 1e-300, None)
    return float(-(targets * np.log(p)).sum() / probs.shape[0])


def momentum_step(param, grad, vel, rate: float, momentum: float):
    vel *= momentum
    vel -= rate * grad
    param += vel


class SgdConfig:
    """Learning-rate/momentum pair with domain validation."""

    def __init__(self, learning_rate: float = 0.02, momentum: float = 0.95):
        if not (0.0 < learning_rate <= 1.0):
            raise ConfigError(f"learning_rate must be in (0, 1], got {learning_rate}")
        if not (0.0 <= momentum < 1.0):
            raise ConfigError(f"momentum must be in [0, 1), got {momentum}")
        self.learning_rate = float(learning_rate)
        self.momentum = float(momentum)


class DenseLayer:
    """Fully connected layer: act(x @ W + b), weights [n_in, n_out]."""

    def __init__(self, n_in: int, n_out: int, activation: str = "relu", *,
                 rng: np.random.Generator, dtype=DEFAULT_DTYPE):
        if activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {activation!r}")
        self.activation = activation
        self.weights = xavier_uniform(rng, (n_in, n_out), n_in, n_out, dtype)
        self.bias = np.zeros(n_out, dtype=dtype)
        self.vel_w = np.zeros_like(self.weights)
        self.vel_b = np.zeros_like(self.bias)
        self.grad_w = None
        self.grad_b = None
        self._cache = None

    @property
    def n_in(self):
        return self.weights.shape[0]

    @property
    def n_out(self):
        return self.weights.shape[1]

    def forward(self, x: np.ndarray, cache: bool = False) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=self.weights.dtype))
        if x.shape[1] != self.n_in:
            raise DimensionError(
                f"dense input shape {x.shape} incompatible with weights {self.weights.shape}")
        z = x @ self.weights + self.bias
        if cache:
            self._cache = (x, z)
        return ACTIVATIONS[self.activation][0](z)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x, z = self._cache
        dz = grad_out * ACTIVATIONS[self.activation][1](z)
        self.grad_w = x.T @ dz
        self.grad_b = dz.sum(axis=0)
        return dz @ self.weights.T

    def apply_step(self, rate: float, momentum: float):
        momentum_step(self.weights, self.grad_w, self.vel_w, rate, momentum)
        momentum_step(self.bias, self.grad_b, self.vel_b, rate, momentum)

    def params(self):
        return [("weights", self.weights), ("bias", self.bias)]

    def grads(self):
        return [("weights", self.grad_w), ("bias", self.grad_b)]

    # -- structural edits (used by the evolving classifier) ------------

    def widen(self, rng: np.random.Generator):
        """Append one unit: a Xavier weight column and a zero bias entry."""
        n_in, n_out = self.weights.shape
        col = xavier_uniform(rng, (n_in, 1), n_in, n_out + 1, self.weights.dtype)
        self.weights = np.hstack([self.weights, col])
        self.bias = np.concatenate([self.bias, np.zeros(1, dtype=self.bias.dtype)])
        self.vel_w = np.hstack([self.vel_w, np.zeros((n_in, 1), dtype=self.vel_w.dtype)])
        self.vel_b = np.concatenate([self.vel_b, np.zeros(1, dtype=self.vel_b.dtype)])

    def drop_unit(self, idx: int):
        """Remove output unit ``idx`` (weight column + bias entry)."""
        if not (0 <= idx < self.n_out):
            raise DimensionError(f"unit index {idx} out of range for width {self.n_out}")
        keep = [j for j in range(self.n_out) if j != idx]
        self.weights = self.weights[:, keep]
        self.bias = self.bias[keep]
        self.vel_w = self.vel_w[:, keep]
        self.vel_b = self.vel_b[keep]

    def add_input(self, rng: np.random.Generator):
        """Append one input row (Xavier), used when the previous layer grew."""
        n_in, n_out = self.weights.shape
        row = xavier_uniform(rng, (1, n_out), n_in + 1, n_out, self.weights.dtype)
        self.weights = np.vstack([self.weights, row])
        self.vel_w = np.vstack([self.vel_w, np.zeros((1, n_out), dtype=self.vel_w.dtype)])

    def drop_input(self, idx: int):
        if not (0 <= idx < self.n_in):
            raise DimensionError(f"input index {idx} out of range for fan-in {self.n_in}")
        keep = [j for j in range(self.n_in) if j != idx]
        self.weights = self.weights[keep, :]
        self.vel_w = self.vel_w[keep, :]


class SoftmaxHead:
    """Output layer: softmax(h @ W + c). Cross-entropy gradients built in."""

    def __init__(self, n_in: int, n_classes: int, *, rng: np.random.Generator,
                 dtype=DEFAULT_DTYPE):
        self.weights = xavier_uniform(rng, (n_in, n_classes), n_in, n_classes, dtype)
        self.bias = np.zeros(n_classes, dtype=dtype)
        self.vel_w = np.zeros_like(self.weights)
        self.vel_b = np.zeros_like(self.bias)
        self.grad_w = None
        self.grad_b = None
        self._cache = None

    @property
    def n_in(self):
        return self.weights.shape[0]

    @property
    def n_classes(self):
        return self.weights.shape[1]

    def forward(self, h: np.ndarray, cache: bool = False) -> np.ndarray:
        h = np.atleast_2d(np.asarray(h, dtype=self.weights.dtype))
        if h.shape[1] != self.n_in:
            raise DimensionError(
                f"head input shape {h.shape} incompatible with weights {self.weights.shape}")
        probs = softmax(h @ self.weights + self.bias)
        if cache:
            self._cache = (h, probs)
        return probs

    def backward_from_targets(self, targets: np.ndarray) -> np.ndarray:
        """Gradient of mean cross-entropy; returns grad wrt the head input."""
        h, probs = self._cache
        dlogits = (probs - targets) / probs.shape[0]
        self.grad_w = h.T @ dlogits
        self.grad_b = dlogits.sum(axis=0)
        return dlogits @ self.weights.T

    def apply_step(self, rate: float, momentum: float):
        momentum_step(self.weights, self.grad_w, self.vel_w, rate, momentum)
        momentum_step(self.bias, self.grad_b, self.vel_b, rate, momentum)

    def params(self):
        return [("weights", self.weights), ("bias", self.bias)]

    def grads(self):
        return [("weights", self.grad_w), ("bias", self.grad_b)]

    def drop_input(self, idx: int):
        keep = [j for j in range(self.n_in) if j != idx]
        self.weights = self.weights[keep, :]
        self.vel_w = self.vel_w[keep, :]

    def add_input(self, rng: np.random.Generator):
        n_in, n_out = self.weights.shape
        row = xavier_uniform(rng, (1, n_out), n_in + 1, n_out, self.weights.dtype)
        self.weights = np.vstack([self.weights, row])
        self.vel_w = np.vstack([self.vel_w, np.zeros((1, n_out), dtype=self.vel_w.dtype)])


def _check_shortcut(shortcut, stride, padding, kernel, in_ch, out_ch):
    if shortcut not in (None, "identity", "projection"):
        raise ConfigError(f"unknown shortcut {shortcut!r}")
    if shortcut is not None and 2 * padding != kernel - 1:
        raise ConfigError("shortcuts need 'same' geometry: 2*padding == kernel-1")
    if shortcut == "identity":
        if in_ch != out_ch:
            raise ConfigError(
                f"identity shortcut needs matching channels, got {in_ch} -> {out_ch}")
        if stride != 1:
            raise ConfigError("identity shortcut needs stride 1")


class Conv1dLayer:
    """1-D cross-correlation over [batch, channels, length] with optional shortcut."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int = 3, *, stride: int = 1,
                 padding: int = 1, shortcut: str | None = None,
                 rng: np.random.Generator, dtype=DEFAULT_DTYPE):
        if kernel < 1 or stride < 1 or padding < 0:
            raise ConfigError("kernel/stride must be >= 1 and padding >= 0")
        _check_shortcut(shortcut, stride, padding, kernel, in_ch, out_ch)
        fan_in, fan_out = in_ch * kernel, out_ch * kernel
        self.filters = xavier_uniform(rng, (out_ch, in_ch, kernel), fan_in, fan_out, dtype)
        self.bias = np.zeros(out_ch, dtype=dtype)
        self.stride = stride
        self.padding = padding
        self.shortcut = shortcut
        self.projection = None
        if shortcut == "projection":
            self.projection = xavier_uniform(rng, (out_ch, in_ch), in_ch, out_ch, dtype)
            self.vel_p = np.zeros_like(self.projection)
            self.grad_p = None
        self.vel_f = np.zeros_like(self.filters)
        self.vel_b = np.zeros_like(self.bias)
        self.grad_f = None
        self.grad_b = None
        self._cache = None

    @property
    def in_ch(self):
        return self.filters.shape[1]

    @property
    def out_ch(self):
        return self.filters.shape[0]

    @property
    def kernel(self):
        return self.filters.shape[2]

    def forward(self, x: np.ndarray, cache: bool = False) -> np.ndarray:
        x = np.asarray(x, dtype=self.filters.dtype)
        single = x.ndim == 2
        if single:
            x = x[None]
        if x.ndim != 3 or x.shape[1] != self.in_ch:
            raise DimensionError(
                f"conv1d input shape {x.shape} incompatible with filters {self.filters.shape}")
        g, s, p = self.kernel, self.stride, self.padding
        xp = np.pad(x, ((0, 0), (0, 0), (p, p))) if p else x
        if xp.shape[2] < g:
            raise DimensionError(f"padded length {xp.shape[2]} shorter than kernel {g}")
        win = sliding_window_view(xp, g, axis=2)[:, :, ::s, :]  # [N, C, L', g]
        out = np.einsum("nclg,ocg->nol", win, self.filters, optimize=True)
        out += self.bias[:, None]
        if self.shortcut == "identity":
            out += x
        elif self.shortcut == "projection":
            xs = x[:, :, ::s]
            out += np.einsum("oc,ncl->nol", self.projection, xs)
        if cache:
            self._cache = (x, win)
        return out[0] if single else out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x, win = self._cache
        d = np.asarray(grad_out, dtype=self.filters.dtype)
        if d.ndim == 2:
            d = d[None]
        g, s, p = self.kernel, self.stride, self.padding
        n, c, length = x.shape
        lp = length + 2 * p
        self.grad_f = np.einsum("nol,nclg->ocg", d, win, optimize=True)
        self.grad_b = d.sum(axis=(0, 2))
        dxp = np.zeros((n, c, lp), dtype=x.dtype)
        lo = d.shape[2]
        for j in range(g):
            dxp[:, :, j:j + s * (lo - 1) + 1:s] += np.einsum(
                "nol,oc->ncl", d, self.filters[:, :, j])
        dx = dxp[:, :, p:lp - p] if p else dxp
        if self.shortcut == "identity":
            dx = dx + d
        elif self.shortcut == "projection":
            xs = x[:, :, ::s]
            self.grad_p = np.einsum("nol,ncl->oc", d, xs, optimize=True)
            dxs = np.einsum("nol,oc->ncl", d, self.projection)
            dx = dx.copy()
            dx[:, :, ::s] += dxs
        return dx

    def apply_step(self, rate: float, momentum: float):
        momentum_step(self.filters, self.grad_f, self.vel_f, rate, momentum)
        momentum_step(self.bias, self.grad_b, self.vel_b, rate, momentum)
        if self.shortcut == "projection":
            momentum_step(self.projection, self.grad_p, self.vel_p, rate, momentum)

    def params(self):
        out = [("filters", self.filters), ("bias", self.bias)]
        if self.shortcut == "projection":
            out.append(("projection", self.projection))
        return out

    def grads(self):
        out = [("filters", self.grad_f), ("bias", self.grad_b)]
        if self.shortcut == "projection":
            out.append(("projection", self.grad_p))
        return out


class Conv2dLayer:
    """2-D cross-correlation over [batch, channels, height, width] with optional shortcut."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int = 3, *, stride: int = 1,
                 padding: int = 1, shortcut: str | None = None,
                 rng: np.random.Generator, dtype=DEFAULT_DTYPE):
        if kernel < 1 or stride < 1 or padding < 0:
            raise ConfigError("kernel/stride must be >= 1 and padding >= 0")
        _check_shortcut(shortcut, stride, padding, kernel, in_ch, out_ch)
        fan_in, fan_out = in_ch * kernel * kernel, out_ch * kernel * kernel
        self.filters = xavier_uniform(rng, (out_ch, in_ch, kernel, kernel), fan_in, fan_out, dtype)
        self.bias = np.zeros(out_ch, dtype=dtype)
        self.stride = stride
        self.padding = padding
        self.shortcut = shortcut
        self.projection = None
        if shortcut == "projection":
            self.projection = xavier_uniform(rng, (out_ch, in_ch), in_ch, out_ch, dtype)
            self.vel_p = np.zeros_like(self.projection)
            self.grad_p = None
        self.vel_f = np.zeros_like(self.filters)
        self.vel_b = np.zeros_like(self.bias)
        self.grad_f = None
        self.grad_b = None
        self._cache = None

    @property
    def in_ch(self):
        return self.filters.shape[1]

    @property
    def out_ch(self):
        return self.filters.shape[0]

    @property
    def kernel(self):
        return self.filters.shape[2]

    def forward(self, x: np.ndarray, cache: bool = False) -> np.ndarray:
        x = np.asarray(x, dtype=self.filters.dtype)
        single = x.ndim == 3
        if single:
            x = x[None]
        if x.ndim != 4 or x.shape[1] != self.in_ch:
            raise DimensionError(
                f"conv2d input shape {x.shape} incompatible with filters {self.filters.shape}")
        g, s, p = self.kernel, self.stride, self.padding
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        if xp.shape[2] < g or xp.shape[3] < g:
            raise DimensionError(f"padded size {xp.shape[2:]} smaller than kernel {g}")
        win = sliding_window_view(xp, (g, g), axis=(2, 3))[:, :, ::s, ::s, :, :]
        out = np.einsum("nchwij,ocij->nohw", win, self.filters, optimize=True)
        out += self.bias[:, None, None]
        if self.shortcut == "identity":
            out += x
        elif self.shortcut == "projection":
            xs = x[:, :, ::s, ::s]
            out += np.einsum("oc,nchw->nohw", self.projection, xs)
        if cache:
            self._cache = (x, win)
        return out[0] if single else out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        x, win = self._cache
        d = np.asarray(grad_out, dtype=self.filters.dtype)
        if d.ndim == 3:
            d = d[None]
        g, s, p = self.kernel, self.stride, self.padding
        n, c, hh, ww = x.shape
        hp, wp = hh + 2 * p, ww + 2 * p
        self.grad_f = np.einsum("nohw,nchwij->ocij", d, win, optimize=True)
        self.grad_b = d.sum(axis=(0, 2, 3))
        dxp = np.zeros((n, c, hp, wp), dtype=x.dtype)
        ho, wo = d.shape[2], d.shape[3]
        for i in range(g):
            for j in range(g):
                dxp[:, :, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s] += np.einsum(
                    "nohw,oc->nchw", d, self.filters[:, :, i, j])
        dx = dxp[:, :, p:hp - p, p:wp - p] if p else dxp
        if self.shortcut == "identity":
            dx = dx + d
        elif self.shortcut == "projection":
            xs = x[:, :, ::s, ::s]
            self.grad_p = np.einsum("nohw,nchw->oc", d, xs, optimize=True)
            dxs = np.einsum("nohw,oc->nchw", d, self.projection)
            dx = dx.copy()
            dx[:, :, ::s, ::s] += dxs
        return dx

    def apply_step(self, rate: float, momentum: float):
        momentum_step(self.filters, self.grad_f, self.vel_f, rate, momentum)
        momentum_step(self.bias, self.grad_b, self.vel_b, rate, momentum)
        if self.shortcut == "projection":
            momentum_step(self.projection, self.grad_p, self.vel_p, rate, momentum)

    def params(self):
        out = [("filters", self.filters), ("bias", self.bias)]
        if self.shortcut == "projection":
            out.append(("projection", self.projection))
        return out

    def grads(self):
        out = [("filters", self.grad_f), ("bias", self.grad_b)]
        if self.shortcut == "projection":
            out.append(("projection", self.grad_p))
        return out


def conv_forward(layer, x, cache: bool = False):
    """Convenience wrapper: run a conv layer forward (single sample or batch)."""
    return layer.forward(x, cache=cache)


def dense_forward(layer: DenseLayer, x, cache: bool = False):
    return layer.forward(x, cache=cache)


def softmax_head(h, weights, bias):
    """Functional head: softmax(h @ weights + bias)."""
    h = np.atleast_2d(np.asarray(h, dtype=float))
    if h.shape[1] != weights.shape[0]:
        raise DimensionError(f"head input width {h.shape[1]} vs weight rows {weights.shape[0]}")
    out = softmax(h @ weights + bias)
    return check_finite(out, "softmax head output")
