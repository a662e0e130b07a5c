"""Convolutional feature extraction for sensor windows and optional images.

The sensor path stacks 1-D convolutions with ReLU after every layer. Each
sample carries ``u`` sensor readings; by default those readings are treated
as ``u`` input channels over a length-1 (or length-``window``) axis, so the
first layer's in-channel count equals ``u``. The alternative reading, a
single channel over a length-``u`` sequence, is available as
``sensor_layout="sequence"``.

The image path is a small trainable residual 2-D stack (stride-2 blocks,
projection shortcut when the channel count changes) followed by global
average pooling. Fusion concatenates whichever paths are configured.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError
from .layers import Conv1dLayer, Conv2dLayer, relu
from .tensor import DEFAULT_DTYPE

FUSIONS = ("sensor", "image", "concat")


@dataclass
class ExtractorConfig:
    """Static description of the extractor topology."""

    fusion: str = "sensor"
    conv1d_channels: list = field(default_factory=lambda: [(48, 60), (60, 40), (40, 20)])
    conv1d_kernel: int = 3
    sensor_layout: str = "channels"
    sensor_shortcuts: bool = True
    conv2d_channels: tuple = (3, 8, 16)
    conv2d_kernel: int = 3
    conv2d_stride: int = 2
    window: int = 1
    passthrough: bool = False

    def validate(self, u: int):
        if self.fusion not in FUSIONS:
            raise ConfigError(f"fusion must be one of {FUSIONS}, got {self.fusion!r}")
        if self.sensor_layout not in ("channels", "sequence"):
            raise ConfigError(f"sensor_layout must be 'channels' or 'sequence', got {self.sensor_layout!r}")
        if self.passthrough:
            return
        if self.fusion in ("sensor", "concat"):
            if not self.conv1d_channels:
                raise ConfigError("sensor path requires at least one conv layer")
            first_in = self.conv1d_channels[0][0]
            if self.sensor_layout == "channels" and first_in != u:
                raise ConfigError(
                    f"first conv in-channel count {first_in} must equal sensor count {u}")
            if self.sensor_layout == "sequence" and first_in != 1:
                raise ConfigError(
                    f"sequence layout expects 1 input channel, got {first_in}")
            for (_, prev_out), (nxt_in, _) in zip(self.conv1d_channels, self.conv1d_channels[1:]):
                if prev_out != nxt_in:
                    raise ConfigError(
                        f"conv1d channel chain broken: {prev_out} feeds layer expecting {nxt_in}")
        if self.fusion in ("image", "concat") and len(self.conv2d_channels) < 2:
            raise ConfigError("image path requires at least one 2-D block")


class FeatureExtractor:
    """Trainable extractor mapping raw batches to flat feature vectors."""

    def __init__(self, cfg: ExtractorConfig, u: int, *, rng: np.random.Generator,
                 dtype=DEFAULT_DTYPE):
        cfg.validate(u)
        self.cfg = cfg
        self.u = u
        self.dtype = dtype
        self.sensor_convs: list[Conv1dLayer] = []
        self.image_convs: list[Conv2dLayer] = []
        self._cache = None
        if cfg.passthrough:
            self.feature_width = u * cfg.window
            return
        width = 0
        if cfg.fusion in ("sensor", "concat"):
            for in_ch, out_ch in cfg.conv1d_channels:
                if not cfg.sensor_shortcuts:
                    shortcut = None
                elif in_ch == out_ch:
                    shortcut = "identity"
                else:
                    shortcut = "projection"
                self.sensor_convs.append(Conv1dLayer(
                    in_ch, out_ch, cfg.conv1d_kernel, stride=1,
                    padding=(cfg.conv1d_kernel - 1) // 2, shortcut=shortcut,
                    rng=rng, dtype=dtype))
            length = cfg.window if cfg.sensor_layout == "channels" else u * cfg.window
            width += cfg.conv1d_channels[-1][1] * length
        if cfg.fusion in ("image", "concat"):
            chans = cfg.conv2d_channels
            for in_ch, out_ch in zip(chans, chans[1:]):
                shortcut = "identity" if (in_ch == out_ch and cfg.conv2d_stride == 1) else "projection"
                self.image_convs.append(Conv2dLayer(
                    in_ch, out_ch, cfg.conv2d_kernel, stride=cfg.conv2d_stride,
                    padding=(cfg.conv2d_kernel - 1) // 2, shortcut=shortcut,
                    rng=rng, dtype=dtype))
            width += chans[-1]
        self.feature_width = width

    # ------------------------------------------------------------ forward

    def _shape_sensors(self, sensors):
        x = np.asarray(sensors, dtype=self.dtype)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim == 2:
            x = x[:, :, None] if self.cfg.window == 1 else x.reshape(
                x.shape[0], self.u, self.cfg.window)
        if self.cfg.sensor_layout == "sequence":
            x = x.reshape(x.shape[0], 1, -1)
        return x

    def forward(self, sensors=None, images=None, cache: bool = False) -> np.ndarray:
        """Extract features for a batch; caches activations when training."""
        cfg = self.cfg
        need_sensor = cfg.fusion in ("sensor", "concat") or cfg.passthrough
        if need_sensor and sensors is None:
            raise InputError("fusion mode requires the sensor modality")
        if cfg.fusion in ("image", "concat") and not cfg.passthrough and images is None:
            raise InputError("fusion mode requires the image modality")
        if cfg.passthrough:
            x = np.asarray(sensors, dtype=self.dtype)
            out = x.reshape(x.shape[0], -1) if x.ndim > 1 else x[None, :]
            if cache:
                self._cache = None
            return out

        parts = []
        sensor_zs = []
        image_zs = []
        x1 = None
        if self.sensor_convs:
            h = self._shape_sensors(sensors)
            x1 = h
            for layer in self.sensor_convs:
                z = layer.forward(h, cache=cache)
                sensor_zs.append(z)
                h = relu(z)
            parts.append(h.reshape(h.shape[0], -1))
        pooled_shape = None
        if self.image_convs:
            h = np.asarray(images, dtype=self.dtype)
            if h.ndim == 3:
                h = h[None]
            for layer in self.image_convs:
                z = layer.forward(h, cache=cache)
                image_zs.append(z)
                h = relu(z)
            pooled_shape = h.shape
            parts.append(h.mean(axis=(2, 3)))
        if cache:
            self._cache = (sensor_zs, image_zs, pooled_shape)
        return parts[0] if len(parts) == 1 else np.hstack(parts)

    def extract(self, sensors=None, images=None) -> np.ndarray:
        """Pure feature extraction (no training cache)."""
        return self.forward(sensors, images, cache=False)

    # ------------------------------------------------------------ backward

    def backward(self, d_features: np.ndarray):
        """Backpropagate through both paths; populates layer gradients."""
        if self.cfg.passthrough:
            return
        sensor_zs, image_zs, pooled_shape = self._cache
        offset = 0
        if self.sensor_convs:
            last = sensor_zs[-1]
            n = last.shape[0]
            width = last.shape[1] * last.shape[2]
            d = d_features[:, :width].reshape(last.shape)
            for layer, z in zip(reversed(self.sensor_convs), reversed(sensor_zs)):
                d = layer.backward(d * (z > 0.0))
            offset = width
        if self.image_convs:
            n, c, hh, ww = pooled_shape
            d = d_features[:, offset:offset + c]
            d = np.broadcast_to(d[:, :, None, None], pooled_shape) / (hh * ww)
            for layer, z in zip(reversed(self.image_convs), reversed(image_zs)):
                d = layer.backward(d * (z > 0.0))

    def apply_step(self, rate: float, momentum: float):
        for layer in self.sensor_convs + self.image_convs:
            layer.apply_step(rate, momentum)

    # ------------------------------------------------------------ plumbing

    def conv_layer_count(self) -> int:
        return len(self.sensor_convs) + len(self.image_convs)

    def named_layers(self):
        for i, layer in enumerate(self.sensor_convs):
            yield f"sensor_conv{i}", layer
        for i, layer in enumerate(self.image_convs):
            yield f"image_conv{i}", layer
