"""Per-modality Conv1D front-end and sinusoidal position encoding."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class ConfigError(ValueError):
    pass


class Modality(str, Enum):
    TEXT = "text"
    AUDIO = "audio"
    VIDEO = "video"

    @classmethod
    def parse(cls, value) -> "Modality":
        if isinstance(value, cls):
            return value
        short = {"t": cls.TEXT, "a": cls.AUDIO, "v": cls.VIDEO}
        if value in short:
            return short[value]
        return cls(value)


@dataclass
class ModalitySequence:
    modality: Modality
    data: np.ndarray

    def __post_init__(self):
        self.modality = Modality.parse(self.modality)
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.shape[0] < 1:
            raise ValueError(f"sequence must be (T>=1, d), got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("sequence contains non-finite values")

    @property
    def T(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass
class Conv1DLayer:
    """Same-length 1-D convolution along the utterance axis.

    ``weight`` has shape ``(k, d_in, d_out)`` with odd ``k``; tap ``s`` reads
    the input row at offset ``s - k//2``.
    """

    modality: Modality
    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.modality = Modality.parse(self.modality)
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 3 or self.weight.shape[0] % 2 == 0:
            raise ConfigError("conv weight must be (k, d_in, d_out) with odd k")
        if self.bias.shape != (self.weight.shape[2],):
            raise ConfigError("bias length must equal output width")

    @property
    def k(self) -> int:
        return self.weight.shape[0]

    @property
    def in_width(self) -> int:
        return self.weight.shape[1]

    @property
    def out_width(self) -> int:
        return self.weight.shape[2]

    @classmethod
    def random(cls, modality, d_in: int, d_out: int, rng: np.random.Generator, k: int = 3):
        w = rng.normal(0.0, 1.0 / np.sqrt(k * d_in), size=(k, d_in, d_out))
        return cls(modality, w, np.zeros(d_out))


def _shifted(x: np.ndarray, k: int) -> np.ndarray:
    """Stack of zero-padded shifts, shape ``(k, T, d)``; slot ``s`` holds ``x[t + s - k//2]``."""
    T, d = x.shape
    half = k // 2
    padded = np.zeros((T + 2 * half, d))
    padded[half : half + T] = x
    return np.stack([padded[s : s + T] for s in range(k)])


def conv1d_forward(weight: np.ndarray, bias: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.einsum("ktd,kde->te", _shifted(x, weight.shape[0]), weight) + bias


def conv1d_backward(weight: np.ndarray, x: np.ndarray, grad_out: np.ndarray):
    """Returns ``(d_weight, d_bias, d_x)``."""
    k = weight.shape[0]
    half = k // 2
    dW = np.einsum("ktd,te->kde", _shifted(x, k), grad_out)
    db = grad_out.sum(axis=0)
    # dx[t] = sum_s grad_out[t - s + half] @ W[s].T
    T = x.shape[0]
    gpad = np.zeros((T + 2 * half, grad_out.shape[1]))
    gpad[half : half + T] = grad_out
    dx = np.zeros_like(x, dtype=np.float64)
    for s in range(k):
        start = 2 * half - s
        dx += gpad[start : start + T] @ weight[s].T
    return dW, db, dx


def conv1d(layer: Conv1DLayer, x: ModalitySequence) -> ModalitySequence:
    if x.modality != layer.modality:
        raise ConfigError(f"layer is for {layer.modality.value}, input is {x.modality.value}")
    if x.width != layer.in_width:
        raise ConfigError(f"input width {x.width} != layer in-width {layer.in_width}")
    return ModalitySequence(x.modality, conv1d_forward(layer.weight, layer.bias, x.data))


def positional_encoding(T: int, D: int) -> np.ndarray:
    """Sinusoidal table: column ``2i`` is ``sin(pos / 10000**(2i/D))``, ``2i+1`` the cosine."""
    if D % 2:
        raise ConfigError(f"position-encoding width must be even, got {D}")
    pos = np.arange(T, dtype=np.float64)[:, None]
    freq = 10000.0 ** (np.arange(0, D, 2, dtype=np.float64) / D)
    angle = pos / freq
    pe = np.empty((T, D))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return pe


def embed(layer: Conv1DLayer, x: ModalitySequence) -> ModalitySequence:
    if layer.out_width % 2:
        raise ConfigError(f"embedding width must be even, got {layer.out_width}")
    out = conv1d(layer, x)
    return ModalitySequence(out.modality, out.data + positional_encoding(x.T, layer.out_width))
