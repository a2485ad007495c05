"""Training and inference helpers for the change-detection U-Net."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
import torch

from ..checkpoint import Checkpoint
from ..errors import ArgumentError, DataError, TrainingError
from ..imagery import StackedPair
from .losses import dice_loss
from .model import ChangeUNet, ModelSpec, build_model

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 1e-3
    batch_size: int = 8
    seed: int = 0
    loss: str = "dice"

    def __post_init__(self):
        if self.epochs < 1:
            raise ArgumentError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate < 0:
            raise ArgumentError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ArgumentError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.loss != "dice":
            raise ArgumentError(f"unsupported loss {self.loss!r}")


def to_tensor(batch) -> torch.Tensor:
    """NHWC array, a single StackedPair, or a list of them -> float32 NCHW tensor."""
    if isinstance(batch, StackedPair):
        batch = [batch]
    if isinstance(batch, (list, tuple)):
        arr = np.stack([p.input if isinstance(p, StackedPair) else np.asarray(p) for p in batch])
    else:
        arr = np.asarray(batch)
        if arr.ndim == 3:
            arr = arr[None]
    if arr.ndim != 4:
        raise ArgumentError(f"expected N x H x W x C input, got shape {arr.shape}")
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(0, 3, 1, 2), dtype=np.float32))


def mask_tensor(pairs: Sequence[StackedPair]) -> torch.Tensor:
    if any(p.mask is None for p in pairs):
        missing = [p.tile_id for p in pairs if p.mask is None][:5]
        raise DataError(f"training pairs without masks: {missing}")
    return torch.from_numpy(np.stack([p.mask for p in pairs]).astype(np.float32)[:, None])


def train(model: ChangeUNet, train_pairs: Sequence[StackedPair], cfg: TrainConfig,
          extra: dict | None = None) -> Checkpoint:
    """Adam + dice loss; one mean loss per epoch in the returned history."""
    if not train_pairs:
        raise ArgumentError("training set is empty")
    x_all = to_tensor(list(train_pairs))
    y_all = mask_tensor(train_pairs)
    n = len(train_pairs)

    torch.manual_seed(cfg.seed)
    gen = torch.Generator().manual_seed(cfg.seed)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    history: list[float] = []
    model.train()
    for epoch in range(1, cfg.epochs + 1):
        order = torch.randperm(n, generator=gen)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss = dice_loss(model(x_all[idx]), y_all[idx])
            if not torch.isfinite(loss):
                raise TrainingError(f"non-finite dice loss at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        history.append(total / n)
        log.info("epoch %d/%d dice loss %.5f", epoch, cfg.epochs, history[-1])
    model.eval()
    return Checkpoint(
        kind="cdnet",
        model_spec=model.spec.to_dict(),
        train_config=asdict(cfg),
        history=history,
        weights={k: v.detach().clone() for k, v in model.state_dict().items()},
        extra=dict(extra or {}),
    )


def load_model(ckpt: Checkpoint) -> ChangeUNet:
    if ckpt.kind != "cdnet":
        raise DataError(f"expected a cdnet checkpoint, got {ckpt.kind!r}")
    model = build_model(ModelSpec.from_dict(ckpt.model_spec))
    model.load_state_dict(ckpt.weights)
    return model.eval()


@torch.no_grad()
def forward(model: ChangeUNet, batch, batch_size: int = 16) -> np.ndarray:
    """Eval-mode probabilities, returned as N x H x W x 1."""
    model.eval()
    x = to_tensor(batch)
    outs = [model(x[i:i + batch_size]) for i in range(0, len(x), batch_size)]
    return torch.cat(outs).permute(0, 2, 3, 1).numpy()


def predict_mask(model: ChangeUNet, pair, threshold: float = 0.5) -> np.ndarray:
    """Binary change mask(s): ``probability >= threshold``.

    A single pair gives an H x W mask, a batch gives N x H x W.
    """
    if not 0.0 <= threshold <= 1.0 or math.isnan(threshold):
        raise ArgumentError(f"threshold must lie in [0, 1], got {threshold}")
    prob = forward(model, pair)[..., 0]
    mask = (prob >= threshold).astype(np.uint8)
    single = isinstance(pair, StackedPair) or (not isinstance(pair, (list, tuple)) and np.ndim(pair) == 3)
    return mask[0] if single else mask


@torch.no_grad()
def encoder_features(model, pair) -> np.ndarray:
    """Bottleneck feature map, H/16 x W/16 x C (N-prefixed for batches)."""
    model.eval()
    x = to_tensor(pair)
    feats = model.encode(x)[-1].permute(0, 2, 3, 1).numpy()
    single = isinstance(pair, StackedPair) or (not isinstance(pair, (list, tuple)) and np.ndim(pair) == 3)
    return feats[0] if single else feats
