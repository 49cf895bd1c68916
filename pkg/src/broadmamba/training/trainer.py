"""Training loop, evaluation and gradient checking."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from .metrics import MetricsReport, compute_metrics
from .model import BroadMambaModel, NumericAbort
from .optim import AdamW
from .synthetic import EmotionBatch, generate

log = logging.getLogger(__name__)


@dataclass
class EpochLog:
    epoch: int
    norm_loss: float
    emo_loss: float
    loss: float
    w_acc: float
    w_f1: float

    HEADER = ("epoch", "L_norm", "L_emo", "L", "W-Acc", "W-F1")

    def row(self) -> tuple:
        return (self.epoch, self.norm_loss, self.emo_loss, self.loss, self.w_acc, self.w_f1)


def input_widths(dataset) -> dict[str, int]:
    return {m: f.shape[1] for m, f in dataset[0].features.items()}


def load_datasets(cfg):
    """Train and held-out dialogues, either synthetic or from dataset directories."""
    if cfg.train_data:
        from ..cli_io.dataset_io import read_dataset

        train = read_dataset(cfg.train_data, cfg.classes)
        test = read_dataset(cfg.test_data, cfg.classes) if cfg.test_data else []
        return train, test
    spec = cfg.synthetic_spec()
    return generate(spec, "train"), generate(spec, "test")


def train(cfg, train_set: list[EmotionBatch] | None = None, callback=None):
    """Fit a model; returns ``(model, history)`` with one ``EpochLog`` per epoch.

    Each epoch re-solves the ridge maps on a fixed probe subset, then takes
    one AdamW step per dialogue in a seeded shuffle order.
    """
    if train_set is None:
        train_set, _ = load_datasets(cfg)
    if not train_set:
        raise ValueError("empty training set")
    model = BroadMambaModel.from_config(cfg, input_widths(train_set), cfg.classes)
    opt = AdamW(model.params, lr=cfg.lr, weight_decay=cfg.weight_decay, betas=(cfg.beta1, cfg.beta2),
                eps=cfg.adam_eps)
    order_rng = np.random.default_rng([cfg.seed, 7])
    history = []
    for epoch in range(1, cfg.epochs + 1):
        model.refresh_ridge(train_set, cfg.probe_size)
        norm_sum = emo_sum = 0.0
        labels, preds = [], []
        for idx in order_rng.permutation(len(train_set)):
            batch = train_set[idx]
            res = model.step(batch)
            if not np.isfinite(res.loss):
                raise NumericAbort(
                    f"non-finite loss at epoch {epoch} (L_norm={res.norm_loss}, L_emo={res.emo_loss}); "
                    "check learning rate and initialization"
                )
            opt.step(res.grads)
            norm_sum += res.norm_loss
            emo_sum += res.emo_loss
            labels.append(batch.labels)
            preds.append(np.argmax(res.probs, axis=1))
        n = len(train_set)
        report = compute_metrics(np.concatenate(labels), np.concatenate(preds), cfg.classes)
        entry = EpochLog(epoch, norm_sum / n, emo_sum / n, norm_sum / n + emo_sum / n,
                         report.w_acc, report.w_f1)
        history.append(entry)
        log.info("epoch %d L_norm=%.4f L_emo=%.4f W-Acc=%.3f", epoch, entry.norm_loss,
                 entry.emo_loss, entry.w_acc)
        if callback is not None:
            callback(model, entry)
    return model, history


def evaluate(model: BroadMambaModel, dataset) -> MetricsReport:
    if not dataset:
        raise ValueError("cannot evaluate on an empty dataset")
    start = time.perf_counter()
    labels = np.concatenate([b.labels for b in dataset])
    preds = np.concatenate([model.predict(b) for b in dataset])
    return compute_metrics(labels, preds, model.n_classes, model.param_count,
                           time.perf_counter() - start)


def grad_check(model: BroadMambaModel, batch: EmotionBatch, eps: float = 1e-4):
    """Compare analytic gradients of the total loss with central differences.

    Returns ``(max_rel_err, worst_name, per_param)`` where the error of a
    tensor is ``|g_a - g_n| / max(|g_a|, |g_n|, 1e-12)`` in the 2-norm.
    """
    analytic = model.step(batch).grads
    errors = {}
    for name, p in model.params.items():
        numeric = np.zeros_like(p)
        flat = p.reshape(-1)
        nflat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = model.step(batch, grad=False).loss
            flat[i] = orig - eps
            down = model.step(batch, grad=False).loss
            flat[i] = orig
            nflat[i] = (up - down) / (2 * eps)
        a = analytic[name]
        scale = max(np.linalg.norm(a), np.linalg.norm(numeric), 1e-12)
        errors[name] = float(np.linalg.norm(a - numeric) / scale)
    worst = max(errors, key=errors.get)
    return errors[worst], worst, errors
