"""Probability-guided fusion, the emotion classifier and the training losses."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
# incremented whenever emotion_loss clamps a zero true-class probability
diagnostics: Counter = Counter()


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def init_mlp(d_in: int, hidden: int, d_out: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    return {
        "w1": rng.normal(0.0, np.sqrt(2.0 / d_in), size=(d_in, hidden)),
        "b1": np.zeros(hidden),
        "w2": rng.normal(0.0, np.sqrt(1.0 / hidden), size=(hidden, d_out)),
        "b2": np.zeros(d_out),
    }


def mlp_forward(p, x):
    pre = x @ p["w1"] + p["b1"]
    hid = np.maximum(pre, 0.0)
    return hid @ p["w2"] + p["b2"], (x, hid, pre > 0)


def mlp_backward(p, cache, grad_out):
    x, hid, mask = cache
    dhid = (grad_out @ p["w2"].T) * mask
    grads = {
        "w2": hid.T @ grad_out,
        "b2": grad_out.sum(axis=0),
        "w1": x.T @ dhid,
        "b1": dhid.sum(axis=0),
    }
    return grads, dhid @ p["w1"].T


@dataclass
class FusionHead:
    """One scalar-output gate MLP per modality plus a K-way classifier MLP."""

    gates: dict[str, dict[str, np.ndarray]]
    classifier: dict[str, np.ndarray]
    extra: dict = field(default_factory=dict)

    @classmethod
    def random(cls, modalities, width, n_classes, rng, gate_hidden=64, cls_hidden=128, cls_in=None):
        gates = {m: init_mlp(width, gate_hidden, 1, rng) for m in modalities}
        classifier = init_mlp(cls_in or width, cls_hidden, n_classes, rng)
        return cls(gates, classifier)

    @property
    def n_classes(self) -> int:
        return self.classifier["w2"].shape[1]


def modality_weight(head: FusionHead, modality: str, Y) -> np.ndarray:
    """Per-utterance confidence in ``(0, 1)`` for one modality."""
    out, _ = mlp_forward(head.gates[modality], np.asarray(Y, dtype=np.float64))
    return sigmoid(out[:, 0])


def fuse(Y_t, Y_a, Y_v, w_t, w_a, w_v) -> np.ndarray:
    """Weighted sum of the three modality representations; weights broadcast per row."""
    terms = [(Y_t, w_t), (Y_a, w_a), (Y_v, w_v)]
    widths = {np.shape(Y)[-1] for Y, _ in terms}
    if len(widths) != 1:
        raise ValueError(f"modality widths differ: {sorted(widths)}")
    return sum(np.asarray(w, dtype=np.float64)[..., None] * np.asarray(Y, dtype=np.float64)
               for Y, w in terms)


def classify(head: FusionHead, h) -> tuple[np.ndarray, np.ndarray]:
    """Class probabilities and argmax labels (ties go to the lowest index)."""
    logits, _ = mlp_forward(head.classifier, np.asarray(h, dtype=np.float64))
    probs = softmax(logits)
    return probs, np.argmax(probs, axis=-1)


def emotion_loss(probs, labels) -> float:
    """Mean negative log-probability of the true class."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    p_true = probs[np.arange(len(labels)), labels]
    clamped = int(np.count_nonzero(p_true < PROB_FLOOR))
    if clamped:
        diagnostics["clamped_probabilities"] += clamped
        log.warning("clamped %d true-class probabilities at %g", clamped, PROB_FLOOR)
    return float(-np.mean(np.log(np.maximum(p_true, PROB_FLOOR))))


def emotion_loss_from_logits(logits, labels):
    """Cross-entropy value and ``dL/dlogits`` (mean over rows)."""
    logp = log_softmax(logits)
    n = len(labels)
    rows = np.arange(n)
    loss = float(-np.mean(np.maximum(logp[rows, labels], np.log(PROB_FLOOR))))
    grad = np.exp(logp)
    grad[rows, labels] -= 1.0
    return loss, grad / n


def total_loss(norm_loss: float, emo_loss: float) -> float:
    return norm_loss + emo_loss
