"""Surrogate spike-derivative kernels.

The forward pass of a spiking layer always thresholds with the hard Heaviside
step; only the backward pass substitutes one of these kernels for the step's
derivative. Seven kernels are provided, all centered on the firing threshold,
plus each kernel's exact antiderivative (the "relaxed" soft spike used by the
finite-difference gradient oracle).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import erf

from .errors import ConfigError, EvaluationError

SIGMOID = "sigmoid"
ERFC = "erfc"
ARCTAN = "arctan"
PIECEWISE_LINEAR = "piecewise_linear"
FAST_SIGMOID = "fast_sigmoid"
PIECEWISE_EXP = "piecewise_exp"
RECTANGULAR = "rectangular"

KINDS = (SIGMOID, ERFC, ARCTAN, PIECEWISE_LINEAR, FAST_SIGMOID, PIECEWISE_EXP, RECTANGULAR)

# common shorthand seen in configs / tables; "actfun" is the rectangular
# window under its original implementation name
_ALIASES = {
    "pwl": PIECEWISE_LINEAR,
    "linear": PIECEWISE_LINEAR,
    "fastsigmoid": FAST_SIGMOID,
    "pwe": PIECEWISE_EXP,
    "actfun": RECTANGULAR,
    "rectangle": RECTANGULAR,
}


def canonical_kind(name: str) -> str:
    key = name.strip().lower().replace("-", "_")
    key = _ALIASES.get(key, key)
    if key not in KINDS:
        raise ConfigError(f"unknown surrogate kind {name!r}; choose one of {', '.join(KINDS)}")
    return key


@dataclass(frozen=True)
class SurrogateSpec:
    """Which kernel the backward pass substitutes, plus its hyperparameters.

    ``threshold`` is the default centering; layers with their own firing
    threshold center the kernel there instead. ``pwe_literal`` selects the
    printed reciprocal form of the piecewise-exponential (divergent away from
    threshold; study only). ``fs_conventional`` selects 1/(1+|d|)^2 for
    fast-sigmoid instead of the printed 1/(1+(1+|d|)^2).
    """

    kind: str = ARCTAN
    threshold: float = 1.0
    sigma: float = 0.4
    alpha: float = 1.0
    beta: float = 5.0
    pwe_literal: bool = False
    fs_conventional: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", canonical_kind(self.kind))
        for name in ("threshold", "sigma", "alpha", "beta"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"surrogate {name} must be > 0, got {getattr(self, name)}")

    def with_kind(self, kind: str) -> "SurrogateSpec":
        return replace(self, kind=canonical_kind(kind))


def heaviside(v: np.ndarray, threshold: float) -> np.ndarray:
    """Hard spike: 1 where v >= threshold (boundary inclusive), else 0."""
    if not np.isfinite(threshold):
        raise EvaluationError("threshold must be finite")
    v = np.asarray(v)
    return (v >= threshold).astype(v.dtype)


def surrogate_grad(spec: SurrogateSpec, v: np.ndarray,
                   threshold: float | None = None) -> np.ndarray:
    """Kernel value per element, the stand-in for d(spike)/d(potential).

    ``threshold`` overrides the spec's default centering (layers pass their
    own firing threshold).
    """
    v = np.asarray(v)
    theta = spec.threshold if threshold is None else threshold
    d = v - theta
    kind = spec.kind
    if kind == SIGMOID:
        # e^(θ-v) / (1+e^(θ-v))^2 == s(d)(1-s(d)) with s the logistic
        s = _logistic(d)
        return s * (1.0 - s)
    if kind == ERFC:
        return np.exp(-(d * d) / (2.0 * spec.sigma**2)) / (np.sqrt(2.0 * np.pi) * spec.sigma)
    if kind == ARCTAN:
        return 1.0 / (1.0 + np.pi**2 * d * d)
    if kind == PIECEWISE_LINEAR:
        return np.maximum(0.0, 1.0 - np.abs(d)).astype(v.dtype)
    if kind == FAST_SIGMOID:
        if spec.fs_conventional:
            return 1.0 / np.square(1.0 + np.abs(d))
        return 1.0 / (1.0 + np.square(1.0 + np.abs(d)))
    if kind == PIECEWISE_EXP:
        if spec.pwe_literal:
            # printed reciprocal form; grows without bound, kept for study.
            # Evaluated and returned in 64-bit: its range overflows float32.
            out = np.exp(spec.beta * np.abs(d).astype(np.float64)) / spec.alpha
            if not np.all(np.isfinite(out)):
                raise EvaluationError("literal piecewise-exp overflowed; use the default form")
            return out
        return spec.alpha * np.exp(-spec.beta * np.abs(d))
    if kind == RECTANGULAR:
        return (np.abs(d) < spec.alpha / 2.0).astype(v.dtype) / spec.alpha
    raise ConfigError(f"unknown surrogate kind {kind!r}")


def antiderivative(spec: SurrogateSpec, v: np.ndarray,
                   threshold: float | None = None) -> np.ndarray:
    """Exact antiderivative of the kernel: the relaxed (soft) spike.

    Replacing the Heaviside with this function makes the whole network
    smooth with the kernel as its true derivative, which is what the
    finite-difference oracle for the unrolled backward pass checks against.
    """
    v = np.asarray(v)
    theta = spec.threshold if threshold is None else threshold
    d = v - theta
    kind = spec.kind
    if kind == SIGMOID:
        return _logistic(d)
    if kind == ERFC:
        return 0.5 * (1.0 + erf(d / (np.sqrt(2.0) * spec.sigma)))
    if kind == ARCTAN:
        return np.arctan(np.pi * d) / np.pi + 0.5
    if kind == PIECEWISE_LINEAR:
        out = np.where(d < 0.0, 0.5 * np.square(1.0 + np.clip(d, -1.0, 0.0)),
                       1.0 - 0.5 * np.square(1.0 - np.clip(d, 0.0, 1.0)))
        return out.astype(v.dtype)
    if kind == FAST_SIGMOID:
        if spec.fs_conventional:
            # d/dv of sign(d)(1 - 1/(1+|d|)) is 1/(1+|d|)^2
            return 0.5 + np.sign(d) * 0.5 * (1.0 - 1.0 / (1.0 + np.abs(d)))
        return 0.5 + np.sign(d) * (np.arctan(1.0 + np.abs(d)) - np.pi / 4.0)
    if kind == PIECEWISE_EXP:
        if spec.pwe_literal:
            raise ConfigError("literal piecewise-exp has no bounded antiderivative")
        scale = spec.alpha / spec.beta
        return np.where(d < 0.0, scale * np.exp(spec.beta * np.minimum(d, 0.0)),
                        scale * (2.0 - np.exp(-spec.beta * np.maximum(d, 0.0)))).astype(v.dtype)
    if kind == RECTANGULAR:
        return np.clip((d + spec.alpha / 2.0) / spec.alpha, 0.0, 1.0)
    raise ConfigError(f"unknown surrogate kind {kind!r}")


def kink_distance(spec: SurrogateSpec, v: np.ndarray,
                  threshold: float | None = None) -> np.ndarray:
    """Distance from each potential to the kernel's nearest non-smooth point.

    Finite-difference comparisons must skip coordinates closer than ~10h to a
    kink. Smooth kernels return +inf everywhere.
    """
    v = np.asarray(v, dtype=np.float64)
    theta = spec.threshold if threshold is None else threshold
    d = np.abs(v - theta)
    kind = spec.kind
    if kind in (SIGMOID, ERFC, ARCTAN):
        return np.full_like(d, np.inf)
    if kind == PIECEWISE_LINEAR:
        return np.minimum(d, np.abs(d - 1.0))
    if kind == RECTANGULAR:
        return np.abs(d - spec.alpha / 2.0)
    # fast-sigmoid and piecewise-exp kink only at the threshold itself
    return d


def _logistic(x: np.ndarray) -> np.ndarray:
    # split by sign to avoid exp overflow
    out = np.empty_like(x, dtype=np.result_type(x, np.float32))
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out.astype(x.dtype) if np.asarray(x).dtype.kind == "f" else out
