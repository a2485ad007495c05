"""Checkpoint container shared by the change detector and the VSE model.

On disk a checkpoint is a zip archive holding ``meta.json`` (format version,
model kind, model spec, training config, loss history, extra metadata) and
``weights.pt`` (a ``torch.save``'d state dict).
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import torch

from .errors import DataError

FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    kind: str
    model_spec: dict
    train_config: dict
    history: list[float]
    weights: dict
    extra: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    def meta(self) -> dict:
        return {
            "format_version": self.format_version,
            "kind": self.kind,
            "model_spec": self.model_spec,
            "train_config": self.train_config,
            "history": self.history,
            "extra": self.extra,
        }


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.BytesIO()
    torch.save(ckpt.weights, buf)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        zf.writestr(_entry("meta.json"), json.dumps(ckpt.meta(), indent=2, sort_keys=True))
        zf.writestr(_entry("weights.pt"), buf.getvalue())
    return path


def _entry(name: str) -> zipfile.ZipInfo:
    # fixed timestamp keeps identical checkpoints byte-identical
    return zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    try:
        with zipfile.ZipFile(path) as zf:
            meta = json.loads(zf.read("meta.json"))
            weights = torch.load(io.BytesIO(zf.read("weights.pt")), map_location="cpu", weights_only=True)
    except (zipfile.BadZipFile, KeyError) as exc:
        raise DataError(f"{path} is not a valid checkpoint: {exc}") from exc
    if meta.get("format_version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint format {meta.get('format_version')}")
    return Checkpoint(
        kind=meta["kind"],
        model_spec=meta["model_spec"],
        train_config=meta["train_config"],
        history=meta["history"],
        weights=weights,
        extra=meta.get("extra", {}),
    )
