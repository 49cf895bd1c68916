"""Datasets on disk: one tensor file per modality plus a label CSV.

``labels.csv`` has header ``dialogue,utterance,label``; row ``i`` labels row
``i`` of every ``<modality>.bmtf``. Rows of one dialogue are contiguous.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from ..training.synthetic import MODALITIES, EmotionBatch
from .tensorfile import atomic_write, read_tensor, write_tensor


class DatasetError(ValueError):
    pass


def write_dataset(dataset: list[EmotionBatch], directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    mods = [m for m in MODALITIES if m in dataset[0].features]
    for mod in mods:
        write_tensor(directory / f"{mod}.bmtf", np.concatenate([b.features[mod] for b in dataset]))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("dialogue", "utterance", "label"))
    for d, batch in enumerate(dataset):
        for u, label in enumerate(batch.labels):
            writer.writerow((d, u, int(label)))
    atomic_write(directory / "labels.csv", buf.getvalue().encode())


def read_dataset(directory, n_classes: int) -> list[EmotionBatch]:
    directory = Path(directory)
    try:
        rows = list(csv.DictReader((directory / "labels.csv").read_text().splitlines()))
    except OSError as exc:
        raise DatasetError(f"cannot read labels in {directory}: {exc}") from exc
    if not rows:
        raise DatasetError(f"empty dataset {directory}")
    feats = {}
    for mod in MODALITIES:
        path = directory / f"{mod}.bmtf"
        if path.exists():
            arr = read_tensor(path).astype(np.float64)
            if arr.ndim != 2 or arr.shape[0] != len(rows):
                raise DatasetError(f"{path} does not have one row per label")
            feats[mod] = arr
    if not feats:
        raise DatasetError(f"no modality tensors in {directory}")
    dialogue = np.array([r["dialogue"] for r in rows])
    labels = np.array([int(r["label"]) for r in rows])
    starts = np.flatnonzero(np.r_[True, dialogue[1:] != dialogue[:-1]])
    bounds = np.r_[starts, len(rows)]
    out = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        out.append(EmotionBatch({m: f[lo:hi] for m, f in feats.items()}, labels[lo:hi], n_classes))
    return out
