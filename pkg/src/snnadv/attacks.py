"""White-box attack suite: single-model FGSM / PGD / MIM, the fixed-weight
multi-model blend (SAGA), and the self-tuning variant that re-derives the
per-model blend coefficients every iteration (Auto-SAGA).

Every attack keeps its iterates inside the l-inf ball of radius eps_max
around the clean input and inside the valid pixel range [0, 1]. Spiking
models are differentiated through their configured surrogate kernel.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import numerics
from .attention import ones_mask
from .errors import ConfigError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AttackConfig:
    """Shared attack knobs.

    ``eps_step`` drives PGD/SAGA steps; MIM always steps by eps_max/n_iter as
    its update rule prescribes. ``coeff_lr`` (r) and ``fit_u`` (u) only matter
    for the self-tuning blend. ``normalize_alphas=False`` keeps the raw
    unconstrained coefficient walk for fidelity studies.
    """

    eps_max: float = 0.031
    eps_step: float = 0.01
    n_iter: int = 40
    mu: float = 1.0
    kappa: float = 0.0
    coeff_lr: float = 10_000.0
    fit_u: float = 1.0
    alphas: Optional[tuple] = None
    random_start: bool = True
    seed: int = 0
    normalize_alphas: bool = True
    keep_trace: bool = False

    def __post_init__(self):
        if not 0.0 <= self.eps_max <= 1.0:
            raise ConfigError(f"eps_max must be in [0, 1], got {self.eps_max}")
        if self.eps_step <= 0.0:
            raise ConfigError(f"eps_step must be > 0, got {self.eps_step}")
        if self.eps_max > 0.0 and self.eps_step > self.eps_max:
            raise ConfigError(f"eps_step {self.eps_step} exceeds eps_max {self.eps_max}")
        if self.n_iter < 1:
            raise ConfigError(f"n_iter must be >= 1, got {self.n_iter}")
        if self.mu < 0.0:
            raise ConfigError(f"mu must be >= 0, got {self.mu}")
        if self.kappa < 0.0:
            raise ConfigError(f"kappa must be >= 0, got {self.kappa}")
        if self.coeff_lr <= 0.0 or self.fit_u <= 0.0:
            raise ConfigError("coefficient learning rate and fitting factor must be > 0")
        if self.alphas is not None and any(a < 0 for a in self.alphas):
            raise ConfigError("blend coefficients must be non-negative")


@dataclass
class AttackReport:
    """Per-sample outcomes and aggregate success rates for a model set."""

    model_names: list
    success: np.ndarray          # [n_models, n] bool
    linf: np.ndarray             # [n]
    iterations: int
    per_model_rate: np.ndarray   # [n_models]
    joint_rate: float

    @classmethod
    def build(cls, models: Sequence, x: np.ndarray, x_adv: np.ndarray, labels: np.ndarray,
              iterations: int, names: Optional[Sequence[str]] = None) -> "AttackReport":
        names = list(names) if names else [f"model{i}" for i in range(len(models))]
        success = np.stack([model.predict(x_adv) != labels for model in models])
        flat_delta = (np.asarray(x_adv, dtype=np.float64)
                      - np.asarray(x, dtype=np.float64)).reshape(len(labels), -1)
        linf = np.max(np.abs(flat_delta), axis=1)
        per_model = success.mean(axis=1)
        joint = float(np.all(success, axis=0).mean())
        return cls(names, success, linf, iterations, per_model, joint)

    def as_dict(self) -> dict:
        return {"models": self.model_names,
                "per_model_success_rate": [float(r) for r in self.per_model_rate],
                "joint_success_rate": self.joint_rate,
                "iterations": self.iterations,
                "max_linf": float(self.linf.max()) if self.linf.size else 0.0,
                "per_sample_success": self.success.astype(int).tolist(),
                "per_sample_linf": [float(v) for v in self.linf]}


def project(x_adv: np.ndarray, x: np.ndarray, eps_max: float) -> np.ndarray:
    """Clamp into the l-inf ball around x, then into the pixel range."""
    x_adv = np.asarray(x_adv)
    x = np.asarray(x)
    if x_adv.shape != x.shape:
        raise ConfigError(f"projection shapes differ: {x_adv.shape} vs {x.shape}")
    out = np.clip(x_adv, x - eps_max, x + eps_max)
    return np.clip(out, 0.0, 1.0)


def loss_input_grad(model, x: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Cross-entropy loss and its gradient w.r.t. the (flattened) input."""
    logits, cache = model.forward_cached(x)
    loss, dlogits = numerics.softmax_cross_entropy(logits, labels)
    dinput = model.backward(cache, dlogits)
    return loss, dinput.reshape(np.asarray(x).shape)


def margin_loss(logits: np.ndarray, labels: np.ndarray, kappa: float
                ) -> tuple[np.ndarray, np.ndarray]:
    """Best-other-class softmax margin, floored at -kappa, per sample.

    Returns the margin values and the seed gradient w.r.t. the logits. At
    kappa=0 the margin is negative exactly when the sample is misclassified.
    """
    s = numerics.softmax(np.asarray(logits, dtype=np.float64))
    n, c = s.shape
    rows = np.arange(n)
    s_true = s[rows, labels]
    masked = s.copy()
    masked[rows, labels] = -np.inf
    best_other = np.argmax(masked, axis=1)
    s_other = s[rows, best_other]
    margin = s_other - s_true
    value = np.maximum(margin, -kappa)
    active = margin > -kappa
    # d(s_j - s_t)/dlogits via the softmax Jacobian s_j (delta_jk - s_k)
    dlogits = (s_true - s_other)[:, None] * s
    dlogits[rows, best_other] += s_other
    dlogits[rows, labels] -= s_true
    dlogits[~active] = 0.0
    return value, dlogits.astype(np.asarray(logits).dtype)


def fgsm(model, x: np.ndarray, labels: np.ndarray, eps: float) -> np.ndarray:
    """Single signed step of size eps, then pixel-range clip."""
    if eps < 0:
        raise ConfigError(f"eps must be >= 0, got {eps}")
    x = np.asarray(x)
    _, grad = loss_input_grad(model, x, labels)
    return np.clip(x + eps * numerics.sign(grad).astype(x.dtype), 0.0, 1.0)


def pgd(model, x: np.ndarray, labels: np.ndarray, cfg: AttackConfig,
        trace: Optional[list] = None) -> np.ndarray:
    """Random start inside the ball (seeded), then iterated signed steps,
    each followed by projection."""
    x = np.asarray(x)
    if cfg.eps_max == 0.0:
        return np.clip(x, 0.0, 1.0)
    if cfg.random_start:
        rng = np.random.default_rng(cfg.seed)
        x_adv = x + rng.uniform(-cfg.eps_max, cfg.eps_max, size=x.shape).astype(x.dtype)
        x_adv = project(x_adv, x, cfg.eps_max)
    else:
        x_adv = np.clip(x, 0.0, 1.0)
    for _ in range(cfg.n_iter):
        _, grad = loss_input_grad(model, x_adv, labels)
        x_adv = project(x_adv + cfg.eps_step * numerics.sign(grad).astype(x.dtype),
                        x, cfg.eps_max)
        if trace is not None:
            trace.append(x_adv.copy())
    return x_adv


def mim(model, x: np.ndarray, labels: np.ndarray, cfg: AttackConfig,
        trace: Optional[list] = None) -> np.ndarray:
    """Momentum-accumulated signed steps of size eps_max/n_iter with
    L1-normalized gradients; a zero gradient skips the normalization."""
    x = np.asarray(x)
    if cfg.eps_max == 0.0:
        return np.clip(x, 0.0, 1.0)
    step = cfg.eps_max / cfg.n_iter
    x_adv = np.clip(x, 0.0, 1.0)
    g = np.zeros_like(x)
    axes = tuple(range(1, x.ndim))
    for _ in range(cfg.n_iter):
        _, grad = loss_input_grad(model, x_adv, labels)
        l1 = np.sum(np.abs(grad), axis=axes, keepdims=True)
        normed = np.divide(grad, l1, out=np.zeros_like(grad), where=l1 > 0)
        g = cfg.mu * g + normed
        x_adv = project(x_adv + step * numerics.sign(g).astype(x.dtype), x, cfg.eps_max)
        if trace is not None:
            trace.append(x_adv.copy())
    return x_adv


def _mask_for(model, x: np.ndarray) -> np.ndarray:
    rollout = getattr(model, "rollout_mask", None)
    if rollout is None:
        return ones_mask(x)
    return rollout(x)


def saga(models: Sequence, alphas: Sequence[float], x: np.ndarray, labels: np.ndarray,
         cfg: AttackConfig, trace: Optional[list] = None) -> np.ndarray:
    """Fixed-coefficient multi-model blend: attention models contribute their
    rollout-masked gradients, the rest plain gradients. Coefficients stay
    constant for every sample and iteration."""
    if len(models) < 1:
        raise ConfigError("need at least one model")
    if len(alphas) != len(models):
        raise ConfigError(f"{len(alphas)} coefficients for {len(models)} models")
    if any(a < 0 for a in alphas):
        raise ConfigError("blend coefficients must be non-negative")
    x = np.asarray(x)
    if cfg.eps_max == 0.0:
        return np.clip(x, 0.0, 1.0)
    x_adv = np.clip(x, 0.0, 1.0)
    for _ in range(cfg.n_iter):
        blend = np.zeros_like(x)
        for model, alpha in zip(models, alphas):
            if alpha == 0.0:
                continue
            _, grad = loss_input_grad(model, x_adv, labels)
            blend += alpha * _mask_for(model, x_adv) * grad
        x_adv = project(x_adv + cfg.eps_step * numerics.sign(blend).astype(x.dtype),
                        x, cfg.eps_max)
        if trace is not None:
            trace.append(x_adv.copy())
    return x_adv


def auto_saga(models: Sequence, x: np.ndarray, labels: np.ndarray, cfg: AttackConfig,
              trace: Optional[list] = None) -> tuple[np.ndarray, np.ndarray]:
    """Self-tuning multi-model blend.

    Per iteration: step the adversarial example along the coefficient-weighted
    masked-gradient blend, project, then walk each coefficient down the
    margin-loss slope (the sign is smoothed by u*sech^2(u*sum of gradients)
    for the coefficient derivative). Coefficients are per sample, clamped
    non-negative and renormalized to sum one (unless normalize_alphas=False);
    fully collapsed rows reset to uniform.

    Returns the adversarial batch and the coefficient trajectory
    [n_iter + 1, n, n_models].
    """
    m_count = len(models)
    if m_count < 1:
        raise ConfigError("need at least one model")
    x = np.asarray(x)
    n = x.shape[0]
    if cfg.alphas is not None:
        if len(cfg.alphas) != m_count:
            raise ConfigError(f"{len(cfg.alphas)} coefficients for {m_count} models")
        alphas = np.tile(np.asarray(cfg.alphas, dtype=np.float64), (n, 1))
    else:
        alphas = np.full((n, m_count), 1.0 / m_count)
    history = [alphas.copy()]
    if cfg.eps_max == 0.0:
        return np.clip(x, 0.0, 1.0), np.asarray(history)
    x_adv = np.clip(x, 0.0, 1.0)
    grad_axes = tuple(range(1, x.ndim))
    bshape = (n,) + (1,) * (x.ndim - 1)
    collapse_events = 0
    for _ in range(cfg.n_iter):
        grads = []
        margin_grads = []
        blend = np.zeros_like(x)
        for mi, model in enumerate(models):
            logits, cache = model.forward_cached(x_adv)
            _, ce_dlogits = numerics.softmax_cross_entropy(logits, labels)
            grad = model.backward(cache, ce_dlogits).reshape(x.shape)
            _, f_dlogits = margin_loss(logits, labels, cfg.kappa)
            f_grad = model.backward(cache, f_dlogits).reshape(x.shape)
            grads.append(grad)
            margin_grads.append(f_grad)
            blend += alphas[:, mi].reshape(bshape).astype(x.dtype) \
                * _mask_for(model, x_adv) * grad
        x_next = project(x_adv + cfg.eps_step * numerics.sign(blend).astype(x.dtype),
                         x, cfg.eps_max)
        # coefficient update from the pre-projection iterate quantities
        grad_sum = np.sum(grads, axis=0, dtype=np.float64)
        # sech^2 underflows to 0 beyond ~350 anyway; clip to keep cosh finite
        sech2 = 1.0 / np.square(np.cosh(np.clip(cfg.fit_u * grad_sum, -350.0, 350.0)))
        df_dx = np.sum(margin_grads, axis=0, dtype=np.float64)
        for mi in range(m_count):
            dx_dalpha = cfg.fit_u * cfg.eps_step * sech2 * grads[mi]
            df_dalpha = np.sum(df_dx * dx_dalpha, axis=grad_axes)
            alphas[:, mi] -= cfg.coeff_lr * df_dalpha
        if cfg.normalize_alphas:
            alphas = np.maximum(alphas, 0.0)
            row_sum = alphas.sum(axis=1)
            collapsed = row_sum <= 0.0
            if np.any(collapsed):
                collapse_events += int(collapsed.sum())
                alphas[collapsed] = 1.0 / m_count
                row_sum[collapsed] = 1.0
            alphas /= row_sum[:, None]
        history.append(alphas.copy())
        x_adv = x_next
        if trace is not None:
            trace.append(x_adv.copy())
    if collapse_events:
        log.warning("blend coefficients collapsed to zero %d times across %d samples; "
                    "reset to uniform each time", collapse_events, n)
    return x_adv, np.asarray(history)


ATTACK_KINDS = ("fgsm", "pgd", "mim", "saga", "autosaga")


def run_attack(kind: str, models: Sequence, x: np.ndarray, labels: np.ndarray,
               cfg: AttackConfig) -> np.ndarray:
    """Uniform dispatch used by the harness and the CLI."""
    kind = kind.lower()
    if kind == "fgsm":
        return fgsm(models[0], x, labels, cfg.eps_max)
    if kind == "pgd":
        return pgd(models[0], x, labels, cfg)
    if kind == "mim":
        return mim(models[0], x, labels, cfg)
    if kind == "saga":
        alphas = cfg.alphas if cfg.alphas is not None else [1.0 / len(models)] * len(models)
        return saga(models, alphas, x, labels, cfg)
    if kind == "autosaga":
        return auto_saga(models, x, labels, cfg)[0]
    raise ConfigError(f"unknown attack kind {kind!r}; choose one of {', '.join(ATTACK_KINDS)}")
