"""End-to-end Broad Mamba model with a hand-written backward pass.

Per modality: Conv1D + position encoding -> BiSSM layer(s) -> broad nodes
``Y = [Z | H]``. The modality representations are fused and classified.
Learnable tensors live in ``params`` (flat dict, dotted names); frozen broad
node maps and the per-epoch ridge solutions live in ``buffers``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import bidir_mamba, broad_learning
from ..bidir_mamba import BiSSMBlock
from ..broad_learning import BroadSpace
from ..embedding import Conv1DLayer, conv1d_backward, conv1d_forward, positional_encoding
from ..fusion_head import (
    emotion_loss_from_logits,
    fuse,
    init_mlp,
    mlp_backward,
    mlp_forward,
    sigmoid,
)
from .synthetic import EmotionBatch


@dataclass
class StepResult:
    norm_loss: float
    emo_loss: float
    probs: np.ndarray
    grads: dict[str, np.ndarray] | None = None

    @property
    def loss(self) -> float:
        return self.norm_loss + self.emo_loss


class NumericAbort(RuntimeError):
    """Raised when the loss or the broad features stop being finite."""


def ablation_fuse(mode: str, Y_t, Y_a, Y_v, w_t=None, w_a=None, w_v=None) -> np.ndarray:
    """Fusion baselines: ``add`` sums, ``concat`` stacks columns, ``probability`` weights."""
    if mode == "add":
        if not (np.shape(Y_t)[-1] == np.shape(Y_a)[-1] == np.shape(Y_v)[-1]):
            raise ValueError("add fusion needs equal widths")
        return np.asarray(Y_t) + np.asarray(Y_a) + np.asarray(Y_v)
    if mode == "concat":
        return np.concatenate([Y_t, Y_a, Y_v], axis=-1)
    if mode == "probability":
        if w_t is None or w_a is None or w_v is None:
            raise ValueError("probability fusion needs the three modality weights")
        return fuse(Y_t, Y_a, Y_v, w_t, w_a, w_v)
    raise ValueError(f"unknown fusion mode {mode!r}")


def _sub(d: dict, prefix: str) -> dict:
    n = len(prefix)
    return {k[n:]: v for k, v in d.items() if k.startswith(prefix)}


class BroadMambaModel:
    def __init__(self, params, buffers, *, modalities, n_classes, layers, discretization="zoh",
                 fusion="probability", bls_target="self", lam=1e-2, n=10, m=30, d_z=16, d_h=16):
        self.params = params
        self.buffers = buffers
        self.modalities = list(modalities)
        self.n_classes = n_classes
        self.layers = layers
        self.discretization = discretization
        self.fusion = fusion
        self.bls_target = bls_target
        self.lam = lam
        self.n, self.m, self.d_z, self.d_h = n, m, d_z, d_h
        self._norm_cache = {}

    @classmethod
    def from_config(cls, cfg, in_widths: dict[str, int], n_classes: int) -> "BroadMambaModel":
        """Initialize from a ``RunConfig``; all draws come from ``cfg.seed``."""
        rng = np.random.default_rng(cfg.seed)
        mods = cfg.modality_list()
        params, buffers = {}, {}
        width = cfg.n_feature_nodes * cfg.d_z + cfg.m_enhance_nodes * cfg.d_h
        for mod in mods:
            conv = Conv1DLayer.random(mod, in_widths[mod], cfg.d_m, rng, k=cfg.conv_width)
            params[f"{mod}.conv.weight"] = conv.weight
            params[f"{mod}.conv.bias"] = conv.bias
            for layer in range(cfg.layers):
                block = BiSSMBlock.random(cfg.d_m, cfg.state_size, rng)
                for k, v in block.params().items():
                    params[f"{mod}.bissm{layer}.{k}"] = v
            space = BroadSpace.random(cfg.d_m, cfg.n_feature_nodes, cfg.m_enhance_nodes,
                                      cfg.d_z, cfg.d_h, cfg.lam, rng)
            for k in ("Wz", "bz", "Wh", "bh"):
                buffers[f"{mod}.bls.{k}"] = getattr(space, k)
        if cfg.fusion == "probability":
            for mod in mods:
                for k, v in init_mlp(width, cfg.gate_hidden, 1, rng).items():
                    params[f"gate.{mod}.{k}"] = v
        cls_in = width * len(mods) if cfg.fusion == "concat" else width
        for k, v in init_mlp(cls_in, cfg.cls_hidden, n_classes, rng).items():
            params[f"cls.{k}"] = v
        return cls(params, buffers, modalities=mods, n_classes=n_classes, layers=cfg.layers,
                   discretization=cfg.discretization, fusion=cfg.fusion, bls_target=cfg.bls_target,
                   lam=cfg.lam, n=cfg.n_feature_nodes, m=cfg.m_enhance_nodes, d_z=cfg.d_z, d_h=cfg.d_h)

    @property
    def param_count(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def space(self, mod: str) -> BroadSpace:
        b = self.buffers
        return BroadSpace(self.n, self.m, self.d_z, self.d_h, b[f"{mod}.bls.Wz"], b[f"{mod}.bls.bz"],
                          b[f"{mod}.bls.Wh"], b[f"{mod}.bls.bh"], self.lam)

    def ridge_weights(self, mod: str):
        return self.buffers.get(f"{mod}.bls.Wb")

    def _norm_form(self, mod, Wb):
        cached = self._norm_cache.get(mod)
        if cached is None or cached[0] is not Wb:
            cached = (Wb, *broad_learning.self_norm_form(Wb, self.lam))
            self._norm_cache[mod] = cached
        return cached[1], cached[2]

    # forward pieces

    def modality_features(self, mod: str, x: np.ndarray):
        """Broad representation ``Y`` of one modality and the cache for backward."""
        p = self.params
        w = p[f"{mod}.conv.weight"]
        e = conv1d_forward(w, p[f"{mod}.conv.bias"], x) + positional_encoding(x.shape[0], w.shape[2])
        u = e
        block_caches = []
        for layer in range(self.layers):
            u, c = bidir_mamba.forward(_sub(p, f"{mod}.bissm{layer}."), u, self.discretization)
            block_caches.append(c)
        space = self.space(mod)
        Y, mask = broad_learning.forward(space, u)
        return Y, (x, block_caches, space, mask)

    def _modality_backward(self, mod, cache, dY, grads):
        x, block_caches, space, mask = cache
        du = broad_learning.backward(space, mask, dY)
        for layer in reversed(range(self.layers)):
            prefix = f"{mod}.bissm{layer}."
            g, du = bidir_mamba.backward(_sub(self.params, prefix), block_caches[layer], du,
                                         self.discretization)
            grads.update({prefix + k: v for k, v in g.items()})
        dW, db, _ = conv1d_backward(self.params[f"{mod}.conv.weight"], x, du)
        grads[f"{mod}.conv.weight"] = dW
        grads[f"{mod}.conv.bias"] = db

    def step(self, batch: EmotionBatch, grad: bool = True) -> StepResult:
        """Total loss on one dialogue, optionally with gradients for every parameter.

        The ridge solutions ``W_b`` are constants here; without them the
        broad-norm term is zero.
        """
        p = self.params
        Ys, caches, dYs = {}, {}, {}
        norm = 0.0
        onehot = np.eye(self.n_classes)[batch.labels]
        for mod in self.modalities:
            Y, caches[mod] = self.modality_features(mod, batch.features[mod])
            Ys[mod] = Y
            Wb = self.ridge_weights(mod)
            if Wb is not None:
                if self.bls_target == "self":
                    G, const = self._norm_form(mod, Wb)
                    value, dYs[mod] = broad_learning.self_norm_loss_grad(Y, G, const)
                else:
                    value, dYs[mod] = broad_learning.norm_loss_grad(Y, Wb, self.lam, onehot)
                norm += value
            else:
                dYs[mod] = np.zeros_like(Y)

        gate_caches, omegas = {}, {}
        if self.fusion == "probability":
            h = 0.0
            for mod in self.modalities:
                s, gate_caches[mod] = mlp_forward(_sub(p, f"gate.{mod}."), Ys[mod])
                omegas[mod] = sigmoid(s[:, 0])
                h = h + omegas[mod][:, None] * Ys[mod]
        elif self.fusion == "add":
            h = sum(Ys[mod] for mod in self.modalities)
        else:
            h = np.concatenate([Ys[mod] for mod in self.modalities], axis=1)

        logits, cls_cache = mlp_forward(_sub(p, "cls."), h)
        emo, dlogits = emotion_loss_from_logits(logits, batch.labels)
        probs = np.exp(logits - logits.max(axis=1, keepdims=True))
        probs /= probs.sum(axis=1, keepdims=True)
        if not grad:
            return StepResult(norm, emo, probs)

        grads = {}
        g, dh = mlp_backward(_sub(p, "cls."), cls_cache, dlogits)
        grads.update({"cls." + k: v for k, v in g.items()})
        if self.fusion == "probability":
            for mod in self.modalities:
                w = omegas[mod]
                dYs[mod] += w[:, None] * dh
                ds = (np.einsum("tk,tk->t", dh, Ys[mod]) * w * (1.0 - w))[:, None]
                g, dY_gate = mlp_backward(_sub(p, f"gate.{mod}."), gate_caches[mod], ds)
                grads.update({f"gate.{mod}." + k: v for k, v in g.items()})
                dYs[mod] += dY_gate
        elif self.fusion == "add":
            for mod in self.modalities:
                dYs[mod] += dh
        else:
            widths = np.cumsum([Ys[mod].shape[1] for mod in self.modalities])[:-1]
            for mod, part in zip(self.modalities, np.split(dh, widths, axis=1)):
                dYs[mod] += part

        for mod in self.modalities:
            self._modality_backward(mod, caches[mod], dYs[mod], grads)
        return StepResult(norm, emo, probs, grads)

    def predict(self, batch: EmotionBatch) -> np.ndarray:
        return np.argmax(self.step(batch, grad=False).probs, axis=1)

    def refresh_ridge(self, dataset, probe_size: int = 256):
        """Re-solve ``W_b`` per modality on the first ``probe_size`` utterances of ``dataset``."""
        rows = {mod: [] for mod in self.modalities}
        labels = []
        count = 0
        for batch in dataset:
            if count >= probe_size:
                break
            for mod in self.modalities:
                Y, _ = self.modality_features(mod, batch.features[mod])
                rows[mod].append(Y)
            labels.append(batch.labels)
            count += batch.T
        labels = np.concatenate(labels)[:probe_size]
        onehot = np.eye(self.n_classes)[labels]
        for mod in self.modalities:
            F = np.concatenate(rows[mod])[:probe_size]
            target = F if self.bls_target == "self" else onehot
            with np.errstate(over="ignore", invalid="ignore"):
                try:
                    Wb = broad_learning.ridge_solve(F, target, self.lam)
                except (ValueError, np.linalg.LinAlgError) as exc:
                    raise NumericAbort(f"{mod} ridge refresh failed ({exc}); "
                                       "check learning rate and initialization") from exc
            self.buffers[f"{mod}.bls.Wb"] = Wb
