"""Broad learning layer on top of BiSSM outputs.

Feature nodes are random linear maps of the sequence (no activation),
enhancement nodes are ReLU of random maps of all feature nodes, and the
broad representation is ``[Z | H]``. The output map ``W_b`` is obtained in
closed form by ridge regression.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


@dataclass
class BroadSpace:
    """Frozen random node maps, stored pre-concatenated.

    ``Wz`` is ``(d_m, n*d_z)`` (group ``i`` owns columns ``i*d_z:(i+1)*d_z``),
    ``Wh`` is ``(n*d_z, m*d_h)``.
    """

    n: int
    m: int
    d_z: int
    d_h: int
    Wz: np.ndarray
    bz: np.ndarray
    Wh: np.ndarray
    bh: np.ndarray
    lam: float = 1e-2

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("need at least one feature and one enhancement group")
        if self.lam <= 0:
            raise ValueError("ridge coefficient must be positive")
        if self.Wz.shape[1] != self.n * self.d_z or self.Wh.shape != (self.n * self.d_z, self.m * self.d_h):
            raise ValueError("node map shapes do not match group sizes")

    @classmethod
    def random(cls, d_m, n, m, d_z, d_h, lam, rng: np.random.Generator):
        Wz = rng.normal(0.0, 1.0 / np.sqrt(d_m), size=(d_m, n * d_z))
        bz = rng.normal(0.0, 1.0 / np.sqrt(d_m), size=n * d_z)
        Wh = rng.normal(0.0, 1.0 / np.sqrt(n * d_z), size=(n * d_z, m * d_h))
        bh = rng.normal(0.0, 1.0 / np.sqrt(n * d_z), size=m * d_h)
        return cls(n, m, d_z, d_h, Wz, bz, Wh, bh, lam)

    @property
    def in_width(self) -> int:
        return self.Wz.shape[0]

    @property
    def width(self) -> int:
        return self.n * self.d_z + self.m * self.d_h

    def feature_group(self, i: int):
        sl = slice(i * self.d_z, (i + 1) * self.d_z)
        return self.Wz[:, sl], self.bz[sl]

    def enhancement_group(self, j: int):
        sl = slice(j * self.d_h, (j + 1) * self.d_h)
        return self.Wh[:, sl], self.bh[sl]


@dataclass
class BroadFeatures:
    Z: np.ndarray
    H: np.ndarray

    @property
    def Y(self) -> np.ndarray:
        return np.concatenate([self.Z, self.H], axis=1)


def feature_nodes(space: BroadSpace, u) -> np.ndarray:
    u = np.asarray(getattr(u, "data", u), dtype=np.float64)
    if u.shape[1] != space.in_width:
        raise ValueError(f"input width {u.shape[1]} != {space.in_width}")
    return u @ space.Wz + space.bz


def enhancement_nodes(space: BroadSpace, Z: np.ndarray) -> np.ndarray:
    if Z.shape[1] != space.n * space.d_z:
        raise ValueError(f"feature width {Z.shape[1]} != {space.n * space.d_z}")
    return np.maximum(Z @ space.Wh + space.bh, 0.0)


def broad_features(space: BroadSpace, u) -> BroadFeatures:
    Z = feature_nodes(space, u)
    return BroadFeatures(Z, enhancement_nodes(space, Z))


def ridge_solve(F: np.ndarray, target: np.ndarray, lam: float) -> np.ndarray:
    """Minimizer of ``||F W - target||^2 + lam ||W||^2``.

    Solves ``(F^T F + lam I) W = F^T target`` by Cholesky; the system is
    symmetric positive definite for any ``lam > 0``.
    """
    if lam <= 0:
        raise ValueError(f"ridge coefficient must be positive, got {lam}")
    F = np.asarray(F, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    squeeze = target.ndim == 1
    if squeeze:
        target = target[:, None]
    G = F.T @ F
    G[np.diag_indices_from(G)] += lam
    W = scipy.linalg.solve(G, F.T @ target, assume_a="pos")
    return W[:, 0] if squeeze else W


def bls_norm_loss(space: BroadSpace, Y, W_b: np.ndarray, target=None, lam=None) -> float:
    """``||Y W_b - target||^2 + lam ||W_b||^2``; ``target`` defaults to ``Y`` itself."""
    Y = Y.Y if isinstance(Y, BroadFeatures) else np.asarray(Y, dtype=np.float64)
    target = Y if target is None else target
    lam = space.lam if lam is None else lam
    R = Y @ W_b - target
    return float(np.sum(R * R) + lam * np.sum(W_b * W_b))


# Differentiable pieces for the trainer.


def forward(space: BroadSpace, u: np.ndarray):
    Z = u @ space.Wz + space.bz
    pre = Z @ space.Wh + space.bh
    mask = pre > 0
    Y = np.concatenate([Z, pre * mask], axis=1)
    return Y, mask


def backward(space: BroadSpace, mask: np.ndarray, dY: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the block input ``u``; the node maps are frozen."""
    split = space.n * space.d_z
    dZ = dY[:, :split] + (dY[:, split:] * mask) @ space.Wh.T
    return dZ @ space.Wz.T


def norm_loss_grad(Y: np.ndarray, W_b: np.ndarray, lam: float, target=None):
    """Value and ``dL/dY`` with ``W_b`` held constant."""
    self_target = target is None
    R = Y @ W_b - (Y if self_target else target)
    loss = float(np.sum(R * R) + lam * np.sum(W_b * W_b))
    dY = 2.0 * R @ W_b.T
    if self_target:
        dY -= 2.0 * R
    return loss, dY


def self_norm_form(W_b: np.ndarray, lam: float):
    """Precompute ``(G, c)`` so the self-target loss is ``sum(Y * (Y @ G)) + c``.

    ``G = (W_b - I)(W_b - I)^T``; the gradient is then ``2 Y G``.
    """
    M = W_b - np.eye(W_b.shape[0])
    return M @ M.T, float(lam * np.sum(W_b * W_b))


def self_norm_loss_grad(Y: np.ndarray, G: np.ndarray, const: float):
    Q = Y @ G
    return float(np.sum(Y * Q) + const), 2.0 * Q
