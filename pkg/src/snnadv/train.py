"""Deterministic mini-batch training and evaluation for every model kind."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import numerics
from .dynamics import SpikingNet
from .errors import EvaluationError, TrainingError
from .surrogate import SurrogateSpec


class SGD:
    def __init__(self, lr: float = 0.05, momentum: float = 0.9):
        self.lr = lr
        self.momentum = momentum
        self._velocity = {}

    def step(self, param_pairs):
        for name, p, g in param_pairs:
            v = self._velocity.get(name)
            if v is None:
                v = np.zeros_like(p)
            v = self.momentum * v - self.lr * g
            self._velocity[name] = v
            p += v


class Adam:
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m = {}
        self._v = {}
        self._t = 0

    def step(self, param_pairs):
        self._t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p, g in param_pairs:
            m = self._m.get(name, np.zeros_like(p))
            v = self._v.get(name, np.zeros_like(p))
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            self._m[name] = m
            self._v[name] = v
            mhat = m / (1 - b1**self._t)
            vhat = v / (1 - b2**self._t)
            p -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.dtype)


@dataclass
class History:
    epochs: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    test_acc: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"epochs": self.epochs, "train_loss": self.train_loss,
                "train_acc": self.train_acc, "test_acc": self.test_acc}


@dataclass
class EvalResult:
    accuracy: float
    per_class_total: np.ndarray
    per_class_correct: np.ndarray


def evaluate(model, x: np.ndarray, y: np.ndarray, n_classes: Optional[int] = None,
             batch_size: int = 256) -> EvalResult:
    """Accuracy plus per-class sample/correct counts for balance checks."""
    y = np.asarray(y)
    if y.size == 0:
        raise TrainingError("cannot evaluate on empty data")
    c = n_classes if n_classes is not None else model.n_classes
    total = np.zeros(c, dtype=np.int64)
    correct = np.zeros(c, dtype=np.int64)
    for start in range(0, y.size, batch_size):
        xb = x[start:start + batch_size]
        yb = y[start:start + batch_size]
        pred = model.predict(xb)
        for cls in range(c):
            sel = yb == cls
            total[cls] += int(sel.sum())
            correct[cls] += int((pred[sel] == cls).sum())
    return EvalResult(float(correct.sum() / total.sum()), total, correct)


def train_epochs(model, train_x, train_y, *, epochs: int, optimizer=None, seed: int = 0,
                 batch_size: int = 128, spec: Optional[SurrogateSpec] = None,
                 test_x=None, test_y=None, verbose: bool = True) -> History:
    """Softmax cross-entropy training loop, bit-reproducible given the seed.

    Spiking models require a surrogate spec (it is installed on the model for
    the duration of training and left in place).
    """
    if isinstance(model, SpikingNet):
        if spec is None:
            raise TrainingError("spiking models need a surrogate spec for training")
        model.surrogate = spec
    if optimizer is None:
        optimizer = Adam() if isinstance(model, SpikingNet) else SGD()
    train_y = np.asarray(train_y)
    rng = np.random.default_rng(seed)
    history = History()
    n = train_y.size
    for epoch in range(epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            try:
                logits, cache = model.forward_cached(train_x[idx])
                loss, dlogits = numerics.softmax_cross_entropy(logits, train_y[idx])
            except EvaluationError as exc:
                raise TrainingError(f"loss diverged at epoch {epoch}: {exc}") from exc
            if not np.isfinite(loss):
                raise TrainingError(f"loss diverged at epoch {epoch}")
            losses.append(loss)
            model.zero_grads()
            model.backward(cache, dlogits)
            optimizer.step(model.param_pairs())
        train_acc = evaluate(model, train_x, train_y).accuracy
        test_acc = float("nan")
        if test_x is not None:
            test_acc = evaluate(model, test_x, test_y).accuracy
        history.epochs.append(epoch)
        history.train_loss.append(float(np.mean(losses)))
        history.train_acc.append(train_acc)
        history.test_acc.append(test_acc)
        if verbose:
            line = f"epoch {epoch} loss {history.train_loss[-1]:.4f} train_acc {train_acc:.4f}"
            if test_x is not None:
                line += f" test_acc {test_acc:.4f}"
            print(line)
    return history
