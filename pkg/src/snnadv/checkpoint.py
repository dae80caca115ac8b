"""Binary model checkpoints ("SNNM" format).

Layout, all integers little-endian: 4-byte magic, u32 format version, model
kind tag, architecture descriptor (JSON), configuration echo (JSON), u64
training seed, then named tensors (dims as u32 counts, data as little-endian
float32/float64). Loading a saved model reproduces bit-identical weights.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .ann import AnnNet, AvgPool2d, Conv2d, Dense, Flatten, ReLU
from .attention import TinyAttentionNet
from .dynamics import NeuronConfig, SpikingLayer, SpikingNet, SynapseConfig
from .errors import FormatError
from .surrogate import SurrogateSpec

MAGIC = b"SNNM"
VERSION = 1

_DTYPE_TAGS = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_TAG_DTYPES = {v: k for k, v in _DTYPE_TAGS.items()}


def _write_str(fh, text: str, width: str = "<H") -> None:
    raw = text.encode("utf-8")
    fh.write(struct.pack(width, len(raw)))
    fh.write(raw)


def _read_exact(fh, count: int, what: str) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise FormatError(f"truncated checkpoint: expected {count} bytes for {what}")
    return data


def _read_str(fh, width: str, what: str) -> str:
    size = struct.calcsize(width)
    (length,) = struct.unpack(width, _read_exact(fh, size, what))
    return _read_exact(fh, length, what).decode("utf-8")


def describe(model) -> dict:
    if isinstance(model, SpikingNet):
        return {
            "T": model.T, "readout": model.readout, "encoding": model.encoding,
            "detach_reset": model.detach_reset,
            "surrogate": asdict(model.surrogate),
            "layers": [{
                "in": layer.in_width, "out": layer.out_width,
                "neuron": {"leak": layer.neuron.leak, "threshold": layer.neuron.threshold,
                           "reset": layer.neuron.reset,
                           "adapt_decay": layer.neuron.adapt_decay},
                "synapse": {"alphas": list(layer.synapse.alphas),
                            "betas": list(layer.synapse.betas)},
            } for layer in model.layers],
        }
    if isinstance(model, AnnNet):
        return {"input_shape": list(model.input_shape) if model.input_shape else None,
                "layers": [layer.descriptor() for layer in model.layers]}
    if isinstance(model, TinyAttentionNet):
        return {"image_shape": list(model.image_shape), "patch": model.patch,
                "embed": model.embed, "n_layers": model.n_layers, "n_heads": model.n_heads,
                "n_classes": model.n_classes, "ffn_hidden": model.ffn_hidden}
    raise FormatError(f"cannot checkpoint model type {type(model).__name__}")


def _rebuild(kind: str, arch: dict):
    if kind == "snn":
        layers = []
        for spec in arch["layers"]:
            neuron = NeuronConfig(**spec["neuron"])
            synapse = SynapseConfig(alphas=tuple(spec["synapse"]["alphas"]),
                                    betas=tuple(spec["synapse"]["betas"]))
            w = np.zeros((spec["in"], spec["out"]), dtype=np.float32)
            layers.append(SpikingLayer(w, neuron=neuron, synapse=synapse))
        return SpikingNet(layers, T=arch["T"], surrogate=SurrogateSpec(**arch["surrogate"]),
                          readout=arch["readout"], encoding=arch["encoding"],
                          detach_reset=arch["detach_reset"])
    if kind == "ann":
        builders = {
            "dense": lambda d: Dense(np.zeros((d["in"], d["out"]), dtype=np.float32)),
            "relu": lambda d: ReLU(),
            "flatten": lambda d: Flatten(),
            "avgpool2": lambda d: AvgPool2d(),
            "conv2d": lambda d: Conv2d(np.zeros((d["out_c"], d["in_c"], d["kh"], d["kw"]),
                                                dtype=np.float32), pad=d["pad"]),
        }
        layers = []
        for spec in arch["layers"]:
            if spec["type"] not in builders:
                raise FormatError(f"unknown ann layer type {spec['type']!r}")
            layers.append(builders[spec["type"]](spec))
        shape = tuple(arch["input_shape"]) if arch.get("input_shape") else None
        return AnnNet(layers, input_shape=shape)
    if kind == "attention":
        return TinyAttentionNet(image_shape=tuple(arch["image_shape"]), patch=arch["patch"],
                                embed=arch["embed"], n_layers=arch["n_layers"],
                                n_heads=arch["n_heads"], n_classes=arch["n_classes"],
                                ffn_hidden=arch["ffn_hidden"])
    raise FormatError(f"unknown model kind {kind!r}")


def save_model(path, model, seed: int = 0, config_echo: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tensors = [(name, np.ascontiguousarray(p)) for name, p, _ in model.param_pairs()]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        _write_str(fh, model.kind)
        _write_str(fh, json.dumps(describe(model), sort_keys=True), "<I")
        _write_str(fh, json.dumps(config_echo or {}, sort_keys=True), "<I")
        fh.write(struct.pack("<Q", seed))
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors:
            if arr.dtype not in _DTYPE_TAGS:
                raise FormatError(f"unsupported tensor dtype {arr.dtype} for {name}")
            _write_str(fh, name)
            fh.write(struct.pack("<B", _DTYPE_TAGS[arr.dtype]))
            fh.write(struct.pack("<I", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(arr.astype(arr.dtype.newbyteorder("<")).tobytes())
    return path


def load_model(path):
    """Returns (model, metadata dict with kind/seed/config_echo/arch)."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != MAGIC:
            raise FormatError(f"bad checkpoint magic: expected {MAGIC!r}, observed {magic!r}")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        kind = _read_str(fh, "<H", "kind")
        arch = json.loads(_read_str(fh, "<I", "architecture"))
        config_echo = json.loads(_read_str(fh, "<I", "config echo"))
        (seed,) = struct.unpack("<Q", _read_exact(fh, 8, "seed"))
        (count,) = struct.unpack("<I", _read_exact(fh, 4, "tensor count"))
        tensors = {}
        for _ in range(count):
            name = _read_str(fh, "<H", "tensor name")
            (tag,) = struct.unpack("<B", _read_exact(fh, 1, "dtype tag"))
            if tag not in _TAG_DTYPES:
                raise FormatError(f"unknown tensor dtype tag {tag}")
            dtype = _TAG_DTYPES[tag]
            (ndim,) = struct.unpack("<I", _read_exact(fh, 4, "rank"))
            dims = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim, "dims"))
            raw = _read_exact(fh, int(np.prod(dims)) * dtype.itemsize, f"tensor {name}")
            tensors[name] = np.frombuffer(raw, dtype=dtype.newbyteorder("<")) \
                .astype(dtype).reshape(dims)
        trailing = fh.read(1)
        if trailing:
            raise FormatError("trailing bytes after checkpoint payload")
    model = _rebuild(kind, arch)
    pairs = {name: p for name, p, _ in model.param_pairs()}
    if set(pairs) != set(tensors):
        raise FormatError("checkpoint tensors do not match the architecture descriptor")
    for name, arr in tensors.items():
        if pairs[name].shape != arr.shape:
            raise FormatError(f"tensor {name} shape {arr.shape} != expected {pairs[name].shape}")
        pairs[name][...] = arr
    meta = {"kind": kind, "seed": seed, "config_echo": config_echo, "arch": arch}
    return model, meta
