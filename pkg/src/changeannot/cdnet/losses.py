import torch

from ..errors import ArgumentError

DICE_SMOOTH = 1.0


def dice_loss(pred: torch.Tensor, target: torch.Tensor, eps: float = DICE_SMOOTH) -> torch.Tensor:
    """``1 - (2 sum(p t) + eps) / (sum(p) + sum(t) + eps)`` over all elements."""
    if pred.shape != target.shape:
        raise ArgumentError(f"shape mismatch: pred {tuple(pred.shape)} vs target {tuple(target.shape)}")
    target = target.to(pred.dtype)
    inter = (pred * target).sum()
    return 1.0 - (2.0 * inter + eps) / (pred.sum() + target.sum() + eps)
