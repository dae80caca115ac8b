"""Leaky integrate-and-fire layers simulated over discrete time, with a
hand-written reverse-time (BPTT) gradient.

Neuron variants: hard reset (potential zeroed after a spike), soft reset
(threshold subtracted), and an adaptation variable that self-inhibits after
firing. Synapses are either stateless (identity) or IIR filters over the
spike stream. Inputs use direct coding: the raw input is presented as a
constant current at every timestep. The readout layer is a non-spiking leaky
integrator read at the final step (spike-count readout selectable).

The backward pass substitutes a surrogate kernel for the Heaviside
derivative and, unless ``detach_reset`` is set, differentiates the
reset/inhibition terms through both the potential and the spike paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import numerics
from .errors import ConfigError, DimensionError, StateError
from .surrogate import SurrogateSpec, antiderivative, heaviside, surrogate_grad

HARD_ZERO = "hard_zero"
SOFT_SUBTRACT = "soft_subtract"

READOUT_MEMBRANE = "membrane"
READOUT_SPIKE_COUNT = "spike_count"


@dataclass(frozen=True)
class NeuronConfig:
    """Leak, firing threshold, reset rule, and optional adaptation decay.

    ``adapt_decay`` (phi) switches the neuron to the self-inhibition dynamic,
    which supersedes the reset rule.
    """

    leak: float = 1.0
    threshold: float = 1.0
    reset: str = HARD_ZERO
    adapt_decay: Optional[float] = None

    def __post_init__(self):
        if not 0.0 < self.leak <= 1.0:
            raise ConfigError(f"leak must be in (0, 1], got {self.leak}")
        if not self.threshold > 0.0:
            raise ConfigError(f"threshold must be > 0, got {self.threshold}")
        if self.reset not in (HARD_ZERO, SOFT_SUBTRACT):
            raise ConfigError(f"reset must be {HARD_ZERO!r} or {SOFT_SUBTRACT!r}")
        if self.adapt_decay is not None and not 0.0 <= self.adapt_decay < 1.0:
            raise ConfigError(f"adapt_decay must be in [0, 1), got {self.adapt_decay}")

    @property
    def adaptive(self) -> bool:
        return self.adapt_decay is not None


@dataclass(frozen=True)
class SynapseConfig:
    """IIR synapse coefficients: feedback alphas (order P), feedforward betas
    (order Q, beta_0 first). The default encodes the stateless identity
    synapse. Unstable feedback sets are rejected at construction."""

    alphas: tuple = ()
    betas: tuple = (1.0,)

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if not self.betas:
            raise ConfigError("synapse needs at least beta_0")
        if self.alphas:
            # roots of 1 - sum(alpha_p z^-p) must lie strictly inside the unit circle
            poly = np.array([1.0] + [-a for a in self.alphas])
            roots = np.roots(poly)
            if roots.size and np.max(np.abs(roots)) >= 1.0:
                raise ConfigError(f"unstable IIR feedback coefficients {self.alphas}")

    @property
    def is_identity(self) -> bool:
        return not self.alphas and self.betas == (1.0,)


def step_lif_hard(v_prev: np.ndarray, o_prev: np.ndarray, input_current: np.ndarray,
                  cfg: NeuronConfig) -> tuple[np.ndarray, np.ndarray]:
    """One hard-reset step: the (1 - o_prev) gate zeroes the potential of
    neurons that fired."""
    numerics.require_finite(input_current, "input current")
    v = cfg.leak * (1.0 - o_prev) * v_prev + input_current
    return v, heaviside(v, cfg.threshold)


def step_lif_soft(v_prev: np.ndarray, o_prev: np.ndarray, input_current: np.ndarray,
                  cfg: NeuronConfig) -> tuple[np.ndarray, np.ndarray]:
    """One soft-reset step: the threshold is subtracted after a spike."""
    numerics.require_finite(input_current, "input current")
    v = cfg.leak * v_prev + input_current - cfg.threshold * o_prev
    return v, heaviside(v, cfg.threshold)


def step_adaptive(v_prev: np.ndarray, k_prev: np.ndarray, o_prev: np.ndarray,
                  input_current: np.ndarray, cfg: NeuronConfig
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One adaptive step: inhibition k decays by phi and is recharged by the
    previous spike; the potential is inhibited by theta * k_prev."""
    numerics.require_finite(input_current, "input current")
    phi = cfg.adapt_decay if cfg.adapt_decay is not None else 0.0
    v = cfg.leak * v_prev + input_current - cfg.threshold * k_prev
    k = phi * k_prev + o_prev
    return v, k, heaviside(v, cfg.threshold)


def synapse_iir(cfg: SynapseConfig, spike_history: list, state_history: list) -> np.ndarray:
    """Next synapse state from past values.

    ``spike_history`` holds S[1..t] (current last), ``state_history`` holds
    X[1..t-1]; values before t=1 are zero-padded.
    """
    if not spike_history:
        raise StateError("spike history must contain the current input")
    x_t = cfg.betas[0] * np.asarray(spike_history[-1])
    for q, beta in enumerate(cfg.betas[1:], start=1):
        if len(spike_history) > q:
            x_t = x_t + beta * spike_history[-1 - q]
    for p, alpha in enumerate(cfg.alphas, start=1):
        if len(state_history) >= p:
            x_t = x_t + alpha * state_history[-p]
    return x_t


def synapse_filter(cfg: SynapseConfig, spikes: np.ndarray) -> np.ndarray:
    """Apply the IIR filter along the leading (time) axis."""
    spikes = np.asarray(spikes)
    if cfg.is_identity:
        return spikes
    out = np.zeros_like(spikes)
    T = spikes.shape[0]
    for t in range(T):
        x_t = cfg.betas[0] * spikes[t]
        for q, beta in enumerate(cfg.betas[1:], start=1):
            if t - q >= 0:
                x_t = x_t + beta * spikes[t - q]
        for p, alpha in enumerate(cfg.alphas, start=1):
            if t - p >= 0:
                x_t = x_t + alpha * out[t - p]
        out[t] = x_t
    return out


def _synapse_backward(cfg: SynapseConfig, dx_ext: np.ndarray) -> np.ndarray:
    """Reverse-time gradient through the IIR filter: returns dS given the
    gradients arriving at each X[t]."""
    if cfg.is_identity:
        return dx_ext
    T = dx_ext.shape[0]
    dx_tot = np.zeros_like(dx_ext)
    for t in range(T - 1, -1, -1):
        acc = dx_ext[t].copy()
        for p, alpha in enumerate(cfg.alphas, start=1):
            if t + p < T:
                acc += alpha * dx_tot[t + p]
        dx_tot[t] = acc
    ds = np.zeros_like(dx_ext)
    for t in range(T):
        acc = cfg.betas[0] * dx_tot[t]
        for q, beta in enumerate(cfg.betas[1:], start=1):
            if t + q < T:
                acc = acc + beta * dx_tot[t + q]
        ds[t] = acc
    return ds


class SpikingLayer:
    """Fully connected synapse weights plus one neuron population."""

    def __init__(self, w: np.ndarray, b: Optional[np.ndarray] = None,
                 neuron: NeuronConfig = NeuronConfig(),
                 synapse: SynapseConfig = SynapseConfig()):
        self.w = np.asarray(w)
        if self.w.ndim != 2:
            raise DimensionError(f"layer weights must be 2-d, got {self.w.shape}")
        self.b = np.zeros(self.w.shape[1], dtype=self.w.dtype) if b is None else np.asarray(b)
        if self.b.shape != (self.w.shape[1],):
            raise DimensionError(f"bias shape {self.b.shape} does not match width {self.w.shape[1]}")
        self.neuron = neuron
        self.synapse = synapse
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)

    @property
    def in_width(self) -> int:
        return self.w.shape[0]

    @property
    def out_width(self) -> int:
        return self.w.shape[1]


@dataclass
class LayerTrace:
    """Per-timestep state buffers for one layer, time-major [T, n, width]."""

    v: np.ndarray
    o: np.ndarray
    x: np.ndarray          # post-synapse input state (pre-weight)
    k: Optional[np.ndarray] = None


@dataclass
class ForwardTrace:
    layers: list = field(default_factory=list)
    fingerprint: tuple = ()
    x_input: Optional[np.ndarray] = None


class SpikingNet:
    """Feed-forward stack of spiking layers simulated for T timesteps.

    ``relaxed`` replaces the hard threshold with the surrogate kernel's exact
    antiderivative in the forward pass (gradient-oracle mode only; normal
    forward output never depends on the surrogate choice).
    """

    kind = "snn"

    def __init__(self, layers: list, T: int = 8,
                 surrogate: SurrogateSpec = SurrogateSpec(),
                 readout: str = READOUT_MEMBRANE,
                 encoding: str = "direct",
                 detach_reset: bool = False,
                 relaxed: bool = False):
        if T < 1:
            raise ConfigError(f"timestep count T must be >= 1, got {T}")
        if readout not in (READOUT_MEMBRANE, READOUT_SPIKE_COUNT):
            raise ConfigError(f"unknown readout {readout!r}")
        if encoding != "direct":
            raise ConfigError("only direct (constant-current) input coding is implemented")
        if not layers:
            raise ConfigError("network needs at least one layer")
        for lo, hi in zip(layers, layers[1:]):
            if lo.out_width != hi.in_width:
                raise DimensionError(f"layer widths mismatch: {lo.out_width} -> {hi.in_width}")
        self.layers = layers
        self.T = T
        self.surrogate = surrogate
        self.readout = readout
        self.encoding = encoding
        self.detach_reset = detach_reset
        self.relaxed = relaxed

    @property
    def n_classes(self) -> int:
        return self.layers[-1].out_width

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.forward(x), axis=1)

    def zero_grads(self) -> None:
        for layer in self.layers:
            layer.dw[...] = 0.0
            layer.db[...] = 0.0

    def param_pairs(self) -> list:
        pairs = []
        for i, layer in enumerate(self.layers):
            pairs.append((f"layer{i}.w", layer.w, layer.dw))
            pairs.append((f"layer{i}.b", layer.b, layer.db))
        return pairs

    def astype(self, dtype) -> "SpikingNet":
        layers = [SpikingLayer(l.w.astype(dtype), l.b.astype(dtype), l.neuron, l.synapse)
                  for l in self.layers]
        return SpikingNet(layers, T=self.T, surrogate=self.surrogate, readout=self.readout,
                          encoding=self.encoding, detach_reset=self.detach_reset,
                          relaxed=self.relaxed)

    def _fingerprint(self) -> tuple:
        return (self.T, len(self.layers), self.readout, self.relaxed,
                tuple((l.in_width, l.out_width) for l in self.layers))

    def _spike(self, v: np.ndarray, threshold: float) -> np.ndarray:
        if self.relaxed:
            return antiderivative(self.surrogate, v, threshold=threshold)
        return heaviside(v, threshold)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.forward_cached(x)[0]

    def forward_cached(self, x: np.ndarray) -> tuple[np.ndarray, ForwardTrace]:
        x = np.asarray(x, dtype=self.layers[0].w.dtype)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim > 2:
            x = x.reshape(x.shape[0], -1)
        if x.shape[1] != self.layers[0].in_width:
            raise DimensionError(f"input width {x.shape[1]} != layer width {self.layers[0].in_width}")
        numerics.require_finite(x, "network input")
        n = x.shape[0]
        T = self.T
        trace = ForwardTrace(fingerprint=self._fingerprint(), x_input=x)
        # direct coding: constant current per timestep
        spikes = np.broadcast_to(x, (T,) + x.shape)
        for li, layer in enumerate(self.layers):
            is_readout = li == len(self.layers) - 1 and self.readout == READOUT_MEMBRANE
            cfg = layer.neuron
            xs = synapse_filter(layer.synapse, spikes)
            v_buf = np.zeros((T, n, layer.out_width), dtype=layer.w.dtype)
            o_buf = np.zeros_like(v_buf)
            k_buf = np.zeros_like(v_buf) if cfg.adaptive else None
            v = np.zeros((n, layer.out_width), dtype=layer.w.dtype)
            o = np.zeros_like(v)
            k = np.zeros_like(v) if cfg.adaptive else None
            for t in range(T):
                current = xs[t] @ layer.w + layer.b
                if is_readout:
                    v = cfg.leak * v + current
                elif cfg.adaptive:
                    v = cfg.leak * v + current - cfg.threshold * k
                    k = cfg.adapt_decay * k + o
                    o = self._spike(v, cfg.threshold)
                    k_buf[t] = k
                elif cfg.reset == HARD_ZERO:
                    v = cfg.leak * (1.0 - o) * v + current
                    o = self._spike(v, cfg.threshold)
                else:
                    v = cfg.leak * v + current - cfg.threshold * o
                    o = self._spike(v, cfg.threshold)
                v_buf[t] = v
                if not is_readout:
                    o_buf[t] = o
            trace.layers.append(LayerTrace(v=v_buf, o=o_buf, x=xs, k=k_buf))
            spikes = o_buf
        last = trace.layers[-1]
        if self.readout == READOUT_MEMBRANE:
            logits = last.v[-1] / T
        else:
            logits = last.o.sum(axis=0) / T
        numerics.require_finite(logits, "network logits")
        return logits, trace

    def backward(self, trace: ForwardTrace, dlogits: np.ndarray) -> np.ndarray:
        """Reverse-time accumulation through the unrolled recurrence.

        Fills each layer's dw/db (overwriting) and returns the gradient with
        respect to the flattened input.
        """
        if trace.fingerprint != self._fingerprint():
            raise StateError("trace does not match this network configuration")
        dlogits = np.asarray(dlogits, dtype=self.layers[0].w.dtype)
        T = self.T
        n = dlogits.shape[0]
        d_spikes = None  # gradient w.r.t. layer output stream [T, n, width]
        for li in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[li]
            lt = trace.layers[li]
            cfg = layer.neuron
            is_readout = li == len(self.layers) - 1 and self.readout == READOUT_MEMBRANE
            di = np.zeros((T, n, layer.out_width), dtype=layer.w.dtype)
            if is_readout:
                # v[t] = leak * v[t-1] + i[t]; logits = v[T] / T
                dv = dlogits / T
                for t in range(T - 1, -1, -1):
                    di[t] = dv
                    dv = cfg.leak * dv
            else:
                if li == len(self.layers) - 1:
                    do_ext = np.broadcast_to(dlogits / T, (T, n, layer.out_width))
                else:
                    do_ext = d_spikes
                grad_k = surrogate_grad(self.surrogate, lt.v, threshold=cfg.threshold)
                dv_next = np.zeros((n, layer.out_width), dtype=layer.w.dtype)
                dk_next = np.zeros_like(dv_next)
                for t in range(T - 1, -1, -1):
                    do_tot = np.array(do_ext[t], dtype=layer.w.dtype, copy=True)
                    if cfg.adaptive:
                        if not self.detach_reset:
                            do_tot += dk_next       # o[t] recharges k[t+1]
                        dv = grad_k[t] * do_tot + cfg.leak * dv_next
                        dk = -cfg.threshold * dv_next + cfg.adapt_decay * dk_next
                        dk_next = dk
                    elif cfg.reset == HARD_ZERO:
                        if not self.detach_reset:
                            do_tot += -cfg.leak * lt.v[t] * dv_next
                        dv = grad_k[t] * do_tot + cfg.leak * (1.0 - lt.o[t]) * dv_next
                    else:
                        if not self.detach_reset:
                            do_tot += -cfg.threshold * dv_next
                        dv = grad_k[t] * do_tot + cfg.leak * dv_next
                    di[t] = dv
                    dv_next = dv
            # through the weights and the synapse filter
            di_flat = di.reshape(T * n, layer.out_width)
            x_flat = lt.x.reshape(T * n, layer.in_width)
            layer.dw = x_flat.T @ di_flat
            layer.db = di_flat.sum(axis=0)
            dx_ext = di @ layer.w.T
            d_spikes = _synapse_backward(layer.synapse, dx_ext)
        dinput = d_spikes.sum(axis=0)  # constant current fans out to every timestep
        numerics.require_finite(dinput, "input gradient")
        return dinput


def build_snn_mlp(dims: list, T: int = 8, seed: int = 0,
                  neuron: NeuronConfig = NeuronConfig(),
                  synapse: SynapseConfig = SynapseConfig(),
                  surrogate: SurrogateSpec = SurrogateSpec(),
                  readout: str = READOUT_MEMBRANE,
                  dtype=numerics.DEFAULT_DTYPE) -> SpikingNet:
    """Seeded fully connected spiking net; Kaiming-uniform fan-in init."""
    if len(dims) < 2:
        raise ConfigError("need at least input and output widths")
    rng = np.random.default_rng(seed)
    layers = []
    for d_in, d_out in zip(dims, dims[1:]):
        bound = np.sqrt(6.0 / d_in)
        w = rng.uniform(-bound, bound, size=(d_in, d_out)).astype(dtype)
        layers.append(SpikingLayer(w, neuron=neuron, synapse=synapse))
    return SpikingNet(layers, T=T, surrogate=surrogate, readout=readout)
