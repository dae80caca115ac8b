"""Dense-tensor primitives every other module builds on.

Tensors are plain numpy ndarrays in row-major order: float32 is the working
precision for training and attacks, float64 is reserved for gradient oracles
(central finite differences are unreliable in 32-bit). Every public operation
checks shapes at the boundary and surfaces NaN/Inf as an error instead of
propagating it.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import DimensionError, EvaluationError, IndexRangeError

DEFAULT_DTYPE = np.float32
GRAD_CHECK_DTYPE = np.float64


def require_finite(arr: np.ndarray, what: str = "result") -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise EvaluationError(f"non-finite values in {what}")
    return arr


def as_tensor(values, dtype=DEFAULT_DTYPE) -> np.ndarray:
    return require_finite(np.asarray(values, dtype=dtype), "tensor literal")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Checked 2-d matrix product."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} x {b.shape}")
    return require_finite(a @ b, "matmul result")


def _check_pair(a: np.ndarray, b) -> None:
    if np.ndim(b) == 0:
        return
    if np.shape(a) != np.shape(b):
        raise DimensionError(f"elementwise shapes differ: {np.shape(a)} vs {np.shape(b)}")


def add(a, b):
    _check_pair(a, b)
    return require_finite(np.add(a, b), "add result")


def sub(a, b):
    _check_pair(a, b)
    return require_finite(np.subtract(a, b), "sub result")


def mul(a, b):
    _check_pair(a, b)
    return require_finite(np.multiply(a, b), "mul result")


def clamp(a, lo, hi):
    return require_finite(np.clip(a, lo, hi), "clamp result")


def sign(a):
    # numpy convention sign(0) = 0; attacks leave zero-gradient pixels alone
    return np.sign(np.asarray(a))


def absolute(a):
    return require_finite(np.abs(a), "abs result")


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stabilized by max subtraction."""
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits.

    Returns ``(loss, dlogits)`` with ``dlogits = (softmax - onehot) / n``.
    """
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise DimensionError(f"logits must be 2-d (batch x classes), got {logits.shape}")
    n, c = logits.shape
    if labels.shape != (n,):
        raise DimensionError(f"labels shape {labels.shape} does not match batch {n}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise IndexRangeError(f"labels must lie in [0, {c})")
    z = logits - np.max(logits, axis=1, keepdims=True)
    logsumexp = np.log(np.sum(np.exp(z), axis=1, keepdims=True))
    logp = z - logsumexp
    rows = np.arange(n)
    loss = float(-np.mean(logp[rows, labels]))
    dlogits = np.exp(logp)
    dlogits[rows, labels] -= 1.0
    dlogits /= n
    require_finite(dlogits, "cross-entropy gradient")
    if not np.isfinite(loss):
        raise EvaluationError("non-finite cross-entropy loss")
    return loss, dlogits.astype(logits.dtype)


def finite_difference_grad(f: Callable[[np.ndarray], float], x: np.ndarray,
                           h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function, computed in 64-bit.

    The testing oracle for all hand-written backward passes; ``f`` must be
    pure.
    """
    if h <= 0:
        raise EvaluationError("finite-difference step h must be positive")
    x = np.array(x, dtype=GRAD_CHECK_DTYPE)
    grad = np.zeros_like(x)
    flat_x = x.reshape(-1)
    flat_g = grad.reshape(-1)
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + h
        fp = float(f(x))
        flat_x[i] = orig - h
        fm = float(f(x))
        flat_x[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise EvaluationError("non-finite objective value during finite differences")
        flat_g[i] = (fp - fm) / (2.0 * h)
    return grad


def max_rel_err(got: np.ndarray, want: np.ndarray) -> float:
    """Max absolute deviation scaled by the reference magnitude."""
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    scale = max(float(np.max(np.abs(want))) if want.size else 0.0, 1e-12)
    return float(np.max(np.abs(got - want))) / scale if got.size else 0.0
