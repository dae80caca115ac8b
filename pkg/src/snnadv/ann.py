"""Conventional differentiable classifiers: dense / conv / ReLU stacks with
hand-written backward passes, checked against the finite-difference oracle."""

from __future__ import annotations

from typing import Optional

import numpy as np

from . import numerics
from .errors import ConfigError, DimensionError


class Dense:
    type_name = "dense"

    def __init__(self, w: np.ndarray, b: Optional[np.ndarray] = None):
        self.w = np.asarray(w)
        if self.w.ndim != 2:
            raise DimensionError(f"dense weights must be 2-d, got {self.w.shape}")
        self.b = np.zeros(self.w.shape[1], dtype=self.w.dtype) if b is None else np.asarray(b)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)

    def forward(self, x):
        if x.shape[1] != self.w.shape[0]:
            raise DimensionError(f"dense input width {x.shape[1]} != {self.w.shape[0]}")
        return x @ self.w + self.b, x

    def backward(self, dout, cache):
        x = cache
        self.dw = x.T @ dout
        self.db = dout.sum(axis=0)
        return dout @ self.w.T

    def params(self):
        return [("w", self.w, self.dw), ("b", self.b, self.db)]

    def astype(self, dtype):
        return Dense(self.w.astype(dtype), self.b.astype(dtype))

    def descriptor(self):
        return {"type": self.type_name, "in": int(self.w.shape[0]), "out": int(self.w.shape[1])}


class ReLU:
    type_name = "relu"

    def forward(self, x):
        return np.maximum(x, 0.0), x > 0

    def backward(self, dout, cache):
        return dout * cache

    def params(self):
        return []

    def astype(self, dtype):
        return self

    def descriptor(self):
        return {"type": self.type_name}


class Conv2d:
    """2-d convolution, stride 1, via im2col. Inputs are [n, c, h, w]."""

    type_name = "conv2d"

    def __init__(self, w: np.ndarray, b: Optional[np.ndarray] = None, pad: int = 1):
        self.w = np.asarray(w)  # [out_c, in_c, kh, kw]
        if self.w.ndim != 4:
            raise DimensionError(f"conv weights must be 4-d, got {self.w.shape}")
        self.b = np.zeros(self.w.shape[0], dtype=self.w.dtype) if b is None else np.asarray(b)
        self.pad = pad
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)

    def _cols(self, x):
        n, c, h, w = x.shape
        oc, ic, kh, kw = self.w.shape
        if c != ic:
            raise DimensionError(f"conv input channels {c} != {ic}")
        p = self.pad
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        oh, ow = h + 2 * p - kh + 1, w + 2 * p - kw + 1
        cols = np.empty((n, oh, ow, ic * kh * kw), dtype=x.dtype)
        idx = 0
        for ci in range(ic):
            for i in range(kh):
                for j in range(kw):
                    cols[..., idx] = xp[:, ci, i:i + oh, j:j + ow]
                    idx += 1
        return cols, (n, c, h, w, oh, ow)

    def forward(self, x):
        cols, geom = self._cols(x)
        n, c, h, w, oh, ow = geom
        wf = self.w.reshape(self.w.shape[0], -1).T  # [ic*kh*kw, oc]
        out = cols.reshape(-1, wf.shape[0]) @ wf + self.b
        return out.reshape(n, oh, ow, -1).transpose(0, 3, 1, 2), (cols, geom)

    def backward(self, dout, cache):
        cols, geom = cache
        n, c, h, w, oh, ow = geom
        oc, ic, kh, kw = self.w.shape
        dflat = dout.transpose(0, 2, 3, 1).reshape(-1, oc)
        cflat = cols.reshape(-1, ic * kh * kw)
        self.dw = (cflat.T @ dflat).T.reshape(self.w.shape)
        self.db = dflat.sum(axis=0)
        dcols = (dflat @ self.w.reshape(oc, -1)).reshape(n, oh, ow, ic * kh * kw)
        p = self.pad
        dxp = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=dout.dtype)
        idx = 0
        for ci in range(ic):
            for i in range(kh):
                for j in range(kw):
                    dxp[:, ci, i:i + oh, j:j + ow] += dcols[..., idx]
                    idx += 1
        return dxp[:, :, p:p + h, p:p + w] if p else dxp

    def params(self):
        return [("w", self.w, self.dw), ("b", self.b, self.db)]

    def astype(self, dtype):
        return Conv2d(self.w.astype(dtype), self.b.astype(dtype), pad=self.pad)

    def descriptor(self):
        oc, ic, kh, kw = (int(d) for d in self.w.shape)
        return {"type": self.type_name, "out_c": oc, "in_c": ic, "kh": kh, "kw": kw,
                "pad": int(self.pad)}


class AvgPool2d:
    """2x2 average pooling, stride 2; spatial extents must be even."""

    type_name = "avgpool2"

    def forward(self, x):
        n, c, h, w = x.shape
        if h % 2 or w % 2:
            raise DimensionError(f"avgpool needs even extents, got {h}x{w}")
        out = x.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))
        return out, (h, w)

    def backward(self, dout, cache):
        h, w = cache
        return np.repeat(np.repeat(dout, 2, axis=2), 2, axis=3) / 4.0

    def params(self):
        return []

    def astype(self, dtype):
        return self

    def descriptor(self):
        return {"type": self.type_name}


class Flatten:
    type_name = "flatten"

    def forward(self, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dout, cache):
        return dout.reshape(cache)

    def params(self):
        return []

    def astype(self, dtype):
        return self

    def descriptor(self):
        return {"type": self.type_name}


class AnnNet:
    """Ordered layer stack ending in class logits."""

    kind = "ann"

    def __init__(self, layers: list, input_shape: Optional[tuple] = None):
        if not layers:
            raise ConfigError("network needs at least one layer")
        self.layers = layers
        self.input_shape = tuple(input_shape) if input_shape else None

    @property
    def n_classes(self) -> int:
        for layer in reversed(self.layers):
            if isinstance(layer, Dense):
                return layer.w.shape[1]
        raise ConfigError("no dense layer to read the class count from")

    def _shape_input(self, x):
        x = np.asarray(x, dtype=self._dtype())
        if self.input_shape and x.shape[1:] != self.input_shape:
            x = x.reshape((x.shape[0],) + self.input_shape)
        if self.input_shape is None and x.ndim > 2:
            x = x.reshape(x.shape[0], -1)
        return x

    def _dtype(self):
        for layer in self.layers:
            if layer.params():
                return layer.params()[0][1].dtype
        return numerics.DEFAULT_DTYPE

    def forward(self, x):
        return self.forward_cached(x)[0]

    def forward_cached(self, x):
        x = self._shape_input(x)
        numerics.require_finite(x, "network input")
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x)
            caches.append(cache)
        numerics.require_finite(x, "network logits")
        return x, caches

    def backward(self, caches, dlogits):
        d = np.asarray(dlogits, dtype=self._dtype())
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            d = layer.backward(d, cache)
        numerics.require_finite(d, "input gradient")
        return d.reshape(d.shape[0], -1)

    def predict(self, x):
        return np.argmax(self.forward(x), axis=1)

    def zero_grads(self):
        for layer in self.layers:
            for _, p, g in layer.params():
                g[...] = 0.0

    def param_pairs(self):
        pairs = []
        for i, layer in enumerate(self.layers):
            for name, p, g in layer.params():
                pairs.append((f"layer{i}.{name}", p, g))
        return pairs

    def astype(self, dtype):
        return AnnNet([l.astype(dtype) for l in self.layers], input_shape=self.input_shape)


def build_mlp(dims: list, seed: int = 0, dtype=numerics.DEFAULT_DTYPE) -> AnnNet:
    """Dense/ReLU stack: ReLU between layers, raw logits at the end."""
    if len(dims) < 2:
        raise ConfigError("need at least input and output widths")
    rng = np.random.default_rng(seed)
    layers = []
    for i, (d_in, d_out) in enumerate(zip(dims, dims[1:])):
        bound = np.sqrt(6.0 / d_in)
        layers.append(Dense(rng.uniform(-bound, bound, size=(d_in, d_out)).astype(dtype)))
        if i < len(dims) - 2:
            layers.append(ReLU())
    return AnnNet(layers)


def build_cnn(image_shape: tuple, channels: list, hidden: int, n_classes: int,
              seed: int = 0, dtype=numerics.DEFAULT_DTYPE) -> AnnNet:
    """Small conv net: [conv3x3 + relu + pool] blocks, then dense head."""
    rng = np.random.default_rng(seed)
    c, h, w = image_shape
    layers = []
    in_c = c
    for out_c in channels:
        fan_in = in_c * 9
        bound = np.sqrt(6.0 / fan_in)
        layers.append(Conv2d(rng.uniform(-bound, bound, size=(out_c, in_c, 3, 3)).astype(dtype)))
        layers.append(ReLU())
        layers.append(AvgPool2d())
        in_c = out_c
        h, w = h // 2, w // 2
    layers.append(Flatten())
    flat = in_c * h * w
    bound = np.sqrt(6.0 / flat)
    layers.append(Dense(rng.uniform(-bound, bound, size=(flat, hidden)).astype(dtype)))
    layers.append(ReLU())
    bound = np.sqrt(6.0 / hidden)
    layers.append(Dense(rng.uniform(-bound, bound, size=(hidden, n_classes)).astype(dtype)))
    return AnnNet(layers, input_shape=image_shape)
