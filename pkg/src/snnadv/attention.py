"""Toy attention classifier with recorded attention weights, plus the
depth-wise attention rollout that turns those records into an input-space
saliency mask.

The rollout mixes each recorded matrix with the identity (half and half),
averages heads, multiplies the per-layer matrices in depth order, and reads
the class-token row as per-patch saliency. The row is peak-normalized,
upsampled to pixels, and multiplied into the input. Non-attention models use
the all-ones mask, which is the identity under elementwise multiplication.
"""

from __future__ import annotations

import numpy as np

from . import numerics
from .errors import ConfigError, DimensionError


def ones_mask(x: np.ndarray) -> np.ndarray:
    return np.ones_like(np.asarray(x))


def rollout_matrix(records: list) -> np.ndarray:
    """Chain head-averaged, identity-mixed attention matrices in depth order."""
    if not records:
        raise DimensionError("need at least one recorded attention layer")
    first = np.asarray(records[0])
    tokens = first.shape[-1]
    n = first.shape[0]
    eye = np.eye(tokens, dtype=first.dtype)
    result = np.broadcast_to(eye, (n, tokens, tokens)).copy()
    for rec in records:
        rec = np.asarray(rec)
        if rec.shape[-1] != tokens or rec.shape[-2] != tokens:
            raise DimensionError("attention records have inconsistent token counts")
        mixed = 0.5 * rec.mean(axis=1) + 0.5 * eye
        result = mixed @ result
    return result


def attention_rollout(records: list, x: np.ndarray) -> np.ndarray:
    """Saliency-masked input, shaped like ``x`` ([n, c, h, w] or [n, h, w]).

    Degenerate records that put no class-token mass on patch tokens fall back
    to uniform patch weights so the mask never silently zeroes a gradient.
    """
    x = np.asarray(x)
    if x.ndim == 3:
        imgs = x[:, None, :, :]
    elif x.ndim == 4:
        imgs = x
    else:
        raise DimensionError(f"expected image input, got shape {x.shape}")
    n, c, h, w = imgs.shape
    chain = rollout_matrix(records)
    row = chain[:, 0, 1:].astype(numerics.GRAD_CHECK_DTYPE)
    n_patches = row.shape[1]
    # square patches: patch side follows from the patch count and image area
    ph = int(round(np.sqrt(h * w / n_patches)))
    if ph < 1 or h % ph or w % ph or (h // ph) * (w // ph) != n_patches:
        raise DimensionError(f"cannot map {n_patches} patches onto {h}x{w} image")
    gh, gw = h // ph, w // ph
    degenerate = row.sum(axis=1) <= 1e-12
    row[degenerate] = 1.0
    peak = row.max(axis=1, keepdims=True)
    row = row / peak
    mask = row.reshape(n, gh, gw)
    mask = np.repeat(np.repeat(mask, ph, axis=1), ph, axis=2)
    mask = np.broadcast_to(mask[:, None, :, :], imgs.shape).astype(x.dtype)
    out = mask * imgs
    return out[:, 0] if x.ndim == 3 else out


def layernorm_forward(x, gamma, beta, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    return xhat * gamma + beta, (xhat, inv)


def layernorm_backward(dy, cache, gamma):
    xhat, inv = cache
    axes = tuple(range(dy.ndim - 1))
    dgamma = (dy * xhat).sum(axis=axes)
    dbeta = dy.sum(axis=axes)
    dxhat = dy * gamma
    dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dgamma, dbeta


class AttnBlock:
    def __init__(self, wq, wk, wv, wo, w1, b1, w2, b2, ln1_g, ln1_b, ln2_g, ln2_b):
        self.wq, self.wk, self.wv, self.wo = wq, wk, wv, wo
        self.w1, self.b1, self.w2, self.b2 = w1, b1, w2, b2
        self.ln1_g, self.ln1_b, self.ln2_g, self.ln2_b = ln1_g, ln1_b, ln2_g, ln2_b
        for name, arr in self.named():
            setattr(self, "d" + name, np.zeros_like(arr))

    def named(self):
        return [("wq", self.wq), ("wk", self.wk), ("wv", self.wv), ("wo", self.wo),
                ("w1", self.w1), ("b1", self.b1), ("w2", self.w2), ("b2", self.b2),
                ("ln1_g", self.ln1_g), ("ln1_b", self.ln1_b),
                ("ln2_g", self.ln2_g), ("ln2_b", self.ln2_b)]


class TinyAttentionNet:
    """Patch embedding + class token + residual attention/FFN blocks.

    Attention matrices (post-softmax, per layer and head) are recorded on
    every forward pass; each row is non-negative and sums to one.
    """

    kind = "attention"

    def __init__(self, image_shape: tuple = (1, 28, 28), patch: int = 4, embed: int = 32,
                 n_layers: int = 2, n_heads: int = 2, n_classes: int = 10,
                 ffn_hidden: int = 64, seed: int = 0, dtype=numerics.DEFAULT_DTYPE):
        if len(image_shape) == 2:
            image_shape = (1,) + tuple(image_shape)
        c, h, w = image_shape
        if h % patch or w % patch:
            raise ConfigError(f"image {h}x{w} not divisible into {patch}x{patch} patches")
        if embed % n_heads:
            raise ConfigError(f"embed width {embed} not divisible by {n_heads} heads")
        self.image_shape = (c, h, w)
        self.patch = patch
        self.embed = embed
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.n_classes = n_classes
        self.ffn_hidden = ffn_hidden
        self.n_tokens = (h // patch) * (w // patch) + 1

        rng = np.random.default_rng(seed)
        patch_dim = c * patch * patch

        def init(shape, fan_in):
            bound = np.sqrt(6.0 / fan_in)
            return rng.uniform(-bound, bound, size=shape).astype(dtype)

        self.wp = init((patch_dim, embed), patch_dim)
        self.bp = np.zeros(embed, dtype=dtype)
        self.cls = init((embed,), embed)
        self.pos = (0.02 * rng.standard_normal((self.n_tokens, embed))).astype(dtype)
        self.blocks = []
        for _ in range(n_layers):
            self.blocks.append(AttnBlock(
                init((embed, embed), embed), init((embed, embed), embed),
                init((embed, embed), embed), init((embed, embed), embed),
                init((embed, ffn_hidden), embed), np.zeros(ffn_hidden, dtype=dtype),
                init((ffn_hidden, embed), ffn_hidden), np.zeros(embed, dtype=dtype),
                np.ones(embed, dtype=dtype), np.zeros(embed, dtype=dtype),
                np.ones(embed, dtype=dtype), np.zeros(embed, dtype=dtype)))
        self.lnf_g = np.ones(embed, dtype=dtype)
        self.lnf_b = np.zeros(embed, dtype=dtype)
        self.wc = init((embed, n_classes), embed)
        self.bc = np.zeros(n_classes, dtype=dtype)
        self.dwp = np.zeros_like(self.wp)
        self.dbp = np.zeros_like(self.bp)
        self.dcls = np.zeros_like(self.cls)
        self.dpos = np.zeros_like(self.pos)
        self.dlnf_g = np.zeros_like(self.lnf_g)
        self.dlnf_b = np.zeros_like(self.lnf_b)
        self.dwc = np.zeros_like(self.wc)
        self.dbc = np.zeros_like(self.bc)
        self.last_records = []

    # -- plumbing ---------------------------------------------------------

    def _shape_input(self, x):
        x = np.asarray(x, dtype=self.wp.dtype)
        c, h, w = self.image_shape
        if x.ndim == 2 and x.shape[1] == c * h * w:
            x = x.reshape(x.shape[0], c, h, w)
        elif x.ndim == 3:
            x = x[:, None, :, :]
        if x.shape[1:] != (c, h, w):
            raise DimensionError(f"input shape {x.shape[1:]} != image {self.image_shape}")
        return x

    def _to_patches(self, imgs):
        n, c, h, w = imgs.shape
        p = self.patch
        gh, gw = h // p, w // p
        pat = imgs.reshape(n, c, gh, p, gw, p).transpose(0, 2, 4, 1, 3, 5)
        return pat.reshape(n, gh * gw, c * p * p)

    def _from_patches(self, dpat, n):
        c, h, w = self.image_shape
        p = self.patch
        gh, gw = h // p, w // p
        d = dpat.reshape(n, gh, gw, c, p, p).transpose(0, 3, 1, 4, 2, 5)
        return d.reshape(n, c, h, w)

    # -- forward / backward ----------------------------------------------

    def forward(self, x):
        return self.forward_cached(x)[0]

    def forward_cached(self, x):
        imgs = self._shape_input(x)
        numerics.require_finite(imgs, "network input")
        n = imgs.shape[0]
        H, E = self.n_heads, self.embed
        dh = E // H
        patches = self._to_patches(imgs)
        tok = patches @ self.wp + self.bp
        t = np.concatenate([np.broadcast_to(self.cls, (n, 1, E)), tok], axis=1)
        t = t + self.pos
        caches = []
        records = []
        for blk in self.blocks:
            tin = t
            l1, ln1_cache = layernorm_forward(tin, blk.ln1_g, blk.ln1_b)
            q = l1 @ blk.wq
            k = l1 @ blk.wk
            v = l1 @ blk.wv
            qh = q.reshape(n, -1, H, dh).transpose(0, 2, 1, 3)
            kh = k.reshape(n, -1, H, dh).transpose(0, 2, 1, 3)
            vh = v.reshape(n, -1, H, dh).transpose(0, 2, 1, 3)
            scores = qh @ kh.transpose(0, 1, 3, 2) / np.sqrt(dh).astype(tin.dtype)
            att = numerics.softmax(scores)
            records.append(att)
            ctx = att @ vh
            ctxm = ctx.transpose(0, 2, 1, 3).reshape(n, -1, E)
            y = tin + ctxm @ blk.wo
            l2, ln2_cache = layernorm_forward(y, blk.ln2_g, blk.ln2_b)
            h1 = l2 @ blk.w1 + blk.b1
            relu_mask = h1 > 0
            r = h1 * relu_mask
            t = y + r @ blk.w2 + blk.b2
            caches.append((l1, ln1_cache, qh, kh, vh, att, ctxm, l2, ln2_cache,
                           relu_mask, r))
        feat, lnf_cache = layernorm_forward(t[:, 0], self.lnf_g, self.lnf_b)
        logits = feat @ self.wc + self.bc
        numerics.require_finite(logits, "network logits")
        self.last_records = records
        return logits, (imgs, patches, caches, feat, lnf_cache, records)

    def backward(self, cache, dlogits):
        imgs, patches, caches, feat, lnf_cache, _ = cache
        n = imgs.shape[0]
        H, E = self.n_heads, self.embed
        dh = E // H
        dlogits = np.asarray(dlogits, dtype=self.wp.dtype)
        self.dwc = feat.T @ dlogits
        self.dbc = dlogits.sum(axis=0)
        dfeat = dlogits @ self.wc.T
        dcls_tok, self.dlnf_g, self.dlnf_b = layernorm_backward(dfeat, lnf_cache, self.lnf_g)
        dt = np.zeros((n, self.n_tokens, E), dtype=self.wp.dtype)
        dt[:, 0] = dcls_tok
        for blk, c in zip(reversed(self.blocks), reversed(caches)):
            l1, ln1_cache, qh, kh, vh, att, ctxm, l2, ln2_cache, relu_mask, r = c
            # FFN branch: t = y + relu(LN2(y) w1 + b1) w2 + b2
            dz = dt
            blk.dw2 = r.reshape(-1, r.shape[-1]).T @ dz.reshape(-1, E)
            blk.db2 = dz.sum(axis=(0, 1))
            dr = dz @ blk.w2.T
            dh1 = dr * relu_mask
            blk.dw1 = l2.reshape(-1, E).T @ dh1.reshape(-1, dh1.shape[-1])
            blk.db1 = dh1.sum(axis=(0, 1))
            dl2 = dh1 @ blk.w1.T
            dy_ffn, blk.dln2_g, blk.dln2_b = layernorm_backward(dl2, ln2_cache, blk.ln2_g)
            dy = dz + dy_ffn
            # attention branch: y = tin + (att @ vh merged) wo with q,k,v from LN1(tin)
            dattn_out = dy
            blk.dwo = ctxm.reshape(-1, E).T @ dattn_out.reshape(-1, E)
            dctxm = dattn_out @ blk.wo.T
            dctx = dctxm.reshape(n, -1, H, dh).transpose(0, 2, 1, 3)
            datt = dctx @ vh.transpose(0, 1, 3, 2)
            dvh = att.transpose(0, 1, 3, 2) @ dctx
            dscores = att * (datt - (datt * att).sum(axis=-1, keepdims=True))
            scale = np.sqrt(dh).astype(l1.dtype)
            dqh = dscores @ kh / scale
            dkh = dscores.transpose(0, 1, 3, 2) @ qh / scale
            dq = dqh.transpose(0, 2, 1, 3).reshape(n, -1, E)
            dk = dkh.transpose(0, 2, 1, 3).reshape(n, -1, E)
            dv = dvh.transpose(0, 2, 1, 3).reshape(n, -1, E)
            l1_flat = l1.reshape(-1, E)
            blk.dwq = l1_flat.T @ dq.reshape(-1, E)
            blk.dwk = l1_flat.T @ dk.reshape(-1, E)
            blk.dwv = l1_flat.T @ dv.reshape(-1, E)
            dl1 = dq @ blk.wq.T + dk @ blk.wk.T + dv @ blk.wv.T
            dtin_att, blk.dln1_g, blk.dln1_b = layernorm_backward(dl1, ln1_cache, blk.ln1_g)
            dt = dy + dtin_att
        self.dpos = dt.sum(axis=0)
        self.dcls = dt[:, 0].sum(axis=0)
        dtok = dt[:, 1:]
        self.dwp = patches.reshape(-1, patches.shape[-1]).T @ dtok.reshape(-1, E)
        self.dbp = dtok.sum(axis=(0, 1))
        dpat = dtok @ self.wp.T
        dx = self._from_patches(dpat, n)
        numerics.require_finite(dx, "input gradient")
        return dx.reshape(n, -1)

    # -- classifier conveniences -------------------------------------------

    def predict(self, x):
        return np.argmax(self.forward(x), axis=1)

    def zero_grads(self):
        for _, p, g in self.param_pairs():
            g[...] = 0.0

    def param_pairs(self):
        pairs = [("wp", self.wp, self.dwp), ("bp", self.bp, self.dbp),
                 ("cls", self.cls, self.dcls), ("pos", self.pos, self.dpos)]
        for i, blk in enumerate(self.blocks):
            for name, arr in blk.named():
                pairs.append((f"block{i}.{name}", arr, getattr(blk, "d" + name)))
        pairs.append(("lnf_g", self.lnf_g, self.dlnf_g))
        pairs.append(("lnf_b", self.lnf_b, self.dlnf_b))
        pairs.append(("wc", self.wc, self.dwc))
        pairs.append(("bc", self.bc, self.dbc))
        return pairs

    def rollout_mask(self, x):
        """Saliency-masked input for the multi-model attacks, shaped like x."""
        x = np.asarray(x)
        imgs = self._shape_input(x)
        self.forward_cached(imgs)
        phi = attention_rollout(self.last_records, imgs)
        return phi.reshape(x.shape)

    def astype(self, dtype):
        other = TinyAttentionNet(self.image_shape, self.patch, self.embed, self.n_layers,
                                 self.n_heads, self.n_classes, self.ffn_hidden, dtype=dtype)
        for (_, dst, _), (_, src, _) in zip(other.param_pairs(), self.param_pairs()):
            dst[...] = src.astype(dtype)
        return other
