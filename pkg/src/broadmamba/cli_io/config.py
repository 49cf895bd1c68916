"""Plain-text ``key = value`` run configuration."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from ..embedding import ConfigError
from ..training.synthetic import MODALITIES, SyntheticSpec

__all__ = ["ConfigError", "RunConfig", "format_config", "load_config", "parse_config"]


CHOICES = {
    "discretization": ("zoh", "taylor"),
    "fusion": ("probability", "add", "concat"),
    "bls_target": ("self", "labels"),
}


@dataclass
class RunConfig:
    seed: int = 0
    classes: int = 4
    epochs: int = 200
    lr: float = 1e-4
    weight_decay: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.99
    adam_eps: float = 1e-8
    d_m: int = 32
    state_size: int = 16
    layers: int = 1
    conv_width: int = 3
    n_feature_nodes: int = 10
    m_enhance_nodes: int = 30
    d_z: int = 16
    d_h: int = 16
    lam: float = field(default=1e-2, metadata={"key": "lambda"})
    gate_hidden: int = 64
    cls_hidden: int = 128
    discretization: str = "zoh"
    fusion: str = "probability"
    bls_target: str = "self"
    probe_size: int = 256
    modalities: str = "t,a,v"
    # external dataset directories; empty means synthetic
    train_data: str = ""
    test_data: str = ""
    # synthetic task
    data_seed: int = 0
    dialogues: int = 200
    test_dialogues: int = 50
    utterances: int = 10
    d_text: int = 32
    d_audio: int = 24
    d_video: int = 16
    sigma: float = 0.1
    sigma_text: float | None = None
    sigma_audio: float | None = None
    sigma_video: float | None = None
    separation: float = 1.0
    corrupt_prob: float = 0.0
    corrupt_sigma: float = 4.0

    def __post_init__(self):
        for key, allowed in CHOICES.items():
            if getattr(self, key) not in allowed:
                raise ConfigError(f"{key} must be one of {allowed}, got {getattr(self, key)!r}")
        if self.lr < 0 or self.weight_decay < 0 or self.lam <= 0:
            raise ConfigError("lr and weight_decay must be >= 0 and lambda > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.adam_eps > 0):
            raise ConfigError("beta1 and beta2 must lie in [0, 1) and adam_eps be positive")
        if self.d_m % 2:
            raise ConfigError("d_m must be even")
        if self.conv_width % 2 == 0:
            raise ConfigError("conv_width must be odd")
        if self.epochs < 0 or min(self.layers, self.n_feature_nodes, self.m_enhance_nodes, self.d_z,
                                  self.d_h, self.state_size, self.d_m, self.probe_size) < 1:
            raise ConfigError("sizes must be positive")
        if self.classes < 2:
            raise ConfigError("classes must be >= 2")
        self.modality_list()

    def modality_list(self) -> list[str]:
        names = []
        for tok in self.modalities.split(","):
            tok = tok.strip()
            full = {"t": "text", "a": "audio", "v": "video"}.get(tok, tok)
            if full not in MODALITIES or full in names:
                raise ConfigError(f"bad modality list {self.modalities!r}")
            names.append(full)
        if not names:
            raise ConfigError("at least one modality required")
        # canonical order
        return [m for m in MODALITIES if m in names]

    def synthetic_spec(self) -> SyntheticSpec:
        sigmas = {m: s for m, s in (("text", self.sigma_text), ("audio", self.sigma_audio),
                                    ("video", self.sigma_video)) if s is not None}
        try:
            return self._spec(sigmas)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def _spec(self, sigmas) -> SyntheticSpec:
        return SyntheticSpec(
            classes=self.classes,
            utterances=self.utterances,
            dialogues=self.dialogues,
            test_dialogues=self.test_dialogues,
            widths={"text": self.d_text, "audio": self.d_audio, "video": self.d_video},
            sigma=self.sigma,
            sigmas=sigmas,
            separation=self.separation,
            seed=self.data_seed,
            corrupt_prob=self.corrupt_prob,
            corrupt_sigma=self.corrupt_sigma,
        )

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def _keys():
    return {f.metadata.get("key", f.name): f for f in dataclasses.fields(RunConfig)}


def _parse_value(f: dataclasses.Field, raw: str):
    kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    if "None" in kind and raw.lower() in ("none", ""):
        return None
    try:
        if kind.startswith("int"):
            return int(raw)
        if kind.startswith("float"):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {f.name}: {raw!r}") from exc
    return raw


def parse_config(text: str, **overrides) -> RunConfig:
    keys = _keys()
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in keys:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[keys[key].name] = _parse_value(keys[key], raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, **overrides) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, **overrides)


def format_config(cfg: RunConfig) -> str:
    """Fully resolved config; parsing it back gives an equal ``RunConfig``."""
    lines = []
    for key, f in _keys().items():
        value = getattr(cfg, f.name)
        if value is None:
            value = "none"
        lines.append(f"{key} = {value if isinstance(value, str) else repr(value)}")
    return "\n".join(lines) + "\n"
