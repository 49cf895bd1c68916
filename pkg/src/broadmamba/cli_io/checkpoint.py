"""Model checkpoints: a directory of tensor files plus a manifest and the config."""

from __future__ import annotations

import csv
import io
from pathlib import Path

from ..training.model import BroadMambaModel
from .config import ConfigError, RunConfig, format_config, load_config
from .tensorfile import TensorFileError, atomic_write, read_tensor, write_tensor

MANIFEST = "manifest.csv"
CONFIG = "config.txt"


class CheckpointError(ValueError):
    pass


def save_checkpoint(model: BroadMambaModel, cfg: RunConfig, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("name", "kind", "file"))
    for kind, tensors in (("param", model.params), ("buffer", model.buffers)):
        for name in sorted(tensors):
            fname = f"{name}.bmtf"
            write_tensor(directory / fname, tensors[name], dtype="<f8")
            writer.writerow((name, kind, fname))
    atomic_write(directory / CONFIG, format_config(cfg).encode())
    atomic_write(directory / MANIFEST, buf.getvalue().encode())


def load_checkpoint(directory, cfg: RunConfig | None = None) -> tuple[BroadMambaModel, RunConfig]:
    """Rebuild a model; ``cfg`` (if given) must describe the same architecture."""
    directory = Path(directory)
    try:
        saved_cfg = load_config(directory / CONFIG)
        rows = list(csv.DictReader((directory / MANIFEST).read_text().splitlines()))
    except (OSError, ConfigError) as exc:
        raise CheckpointError(f"unreadable checkpoint {directory}: {exc}") from exc
    cfg = cfg or saved_cfg
    params, buffers = {}, {}
    try:
        for row in rows:
            target = params if row["kind"] == "param" else buffers
            target[row["name"]] = read_tensor(directory / row["file"]).astype(float)
    except (KeyError, TensorFileError) as exc:
        raise CheckpointError(str(exc)) from exc

    widths = {}
    for mod in cfg.modality_list():
        key = f"{mod}.conv.weight"
        if key not in params:
            raise CheckpointError(f"checkpoint has no {mod} front-end")
        widths[mod] = params[key].shape[1]
    if "cls.b2" not in params:
        raise CheckpointError("checkpoint has no classifier")
    n_classes = params["cls.b2"].shape[0]
    if n_classes != cfg.classes:
        raise CheckpointError(f"checkpoint has {n_classes} classes, config says {cfg.classes}")
    template = BroadMambaModel.from_config(cfg, widths, n_classes)
    for kind, expected, got in (("param", template.params, params), ("buffer", template.buffers, buffers)):
        for name, arr in expected.items():
            if name not in got or got[name].shape != arr.shape:
                raise CheckpointError(f"{kind} {name} missing or mis-shaped in checkpoint")
        extra = set(got) - set(expected) - {f"{m}.bls.Wb" for m in cfg.modality_list()}
        if extra:
            raise CheckpointError(f"unexpected tensors in checkpoint: {sorted(extra)[:3]}")
    template.params = params
    template.buffers = buffers
    return template, cfg
