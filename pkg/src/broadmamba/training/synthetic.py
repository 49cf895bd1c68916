"""Synthetic multi-modal conversations with class prototypes shared across modalities."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MODALITIES = ("text", "audio", "video")
PROTOTYPE_WIDTH = 16


@dataclass
class SyntheticSpec:
    classes: int = 4
    utterances: int = 10
    dialogues: int = 200
    test_dialogues: int = 50
    widths: dict = field(default_factory=lambda: {"text": 32, "audio": 24, "video": 16})
    sigma: float = 0.1
    # per-modality overrides of ``sigma``
    sigmas: dict = field(default_factory=dict)
    separation: float = 1.0
    seed: int = 0
    # each (utterance, modality) row is independently replaced by noise of
    # scale ``corrupt_sigma`` around its centre with probability ``corrupt_prob``
    corrupt_prob: float = 0.0
    corrupt_sigma: float = 4.0

    def __post_init__(self):
        if self.classes < 2:
            raise ValueError("need at least two classes")
        if self.utterances < 1 or self.dialogues < 0 or self.test_dialogues < 0:
            raise ValueError("utterance and dialogue counts must be positive")
        if any(w < 1 for w in self.widths.values()):
            raise ValueError("modality widths must be >= 1")
        if self.separation <= 0 or min([self.sigma, *self.sigmas.values()]) < 0:
            raise ValueError("separation must be positive and noise non-negative")
        if not 0.0 <= self.corrupt_prob <= 1.0 or self.corrupt_sigma < 0:
            raise ValueError("corrupt_prob must lie in [0, 1] and corrupt_sigma be non-negative")

    def noise(self, modality: str) -> float:
        return self.sigmas.get(modality, self.sigma)


@dataclass
class EmotionBatch:
    """One dialogue: aligned per-modality feature rows and integer labels."""

    features: dict[str, np.ndarray]
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        lengths = {f.shape[0] for f in self.features.values()}
        if lengths != {len(self.labels)}:
            raise ValueError("modalities and labels must share the utterance count")
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise ValueError("label out of range")

    @property
    def T(self) -> int:
        return len(self.labels)


def _structure(spec: SyntheticSpec):
    """Prototypes and modality maps; depend on the seed only, never on the split."""
    rng = np.random.default_rng([spec.seed, 0])
    signs = rng.choice([-1.0, 1.0], size=(spec.classes, PROTOTYPE_WIDTH))
    prototypes = spec.separation * signs
    maps = {m: rng.normal(0.0, 1.0 / np.sqrt(PROTOTYPE_WIDTH), size=(PROTOTYPE_WIDTH, spec.widths[m]))
            for m in MODALITIES}
    return prototypes, maps


def class_centres(spec: SyntheticSpec) -> dict[str, np.ndarray]:
    """Noise-free modality rows per class, shape ``(K, width)``."""
    prototypes, maps = _structure(spec)
    return {m: prototypes @ maps[m] for m in MODALITIES}


def generate(spec: SyntheticSpec, split: str = "train") -> list[EmotionBatch]:
    """Draw dialogues; ``split="test"`` gives held-out dialogues from the same classes."""
    stream = {"train": 1, "test": 2}[split]
    count = spec.dialogues if split == "train" else spec.test_dialogues
    centres = class_centres(spec)
    rng = np.random.default_rng([spec.seed, stream])
    out = []
    for _ in range(count):
        labels = rng.integers(0, spec.classes, size=spec.utterances)
        feats = {}
        for m in MODALITIES:
            noise = rng.standard_normal((spec.utterances, spec.widths[m]))
            scale = np.full((spec.utterances, 1), spec.noise(m))
            if spec.corrupt_prob > 0:
                scale[rng.random(spec.utterances) < spec.corrupt_prob] = spec.corrupt_sigma
            feats[m] = centres[m][labels] + scale * noise
        out.append(EmotionBatch(feats, labels, spec.classes))
    return out
