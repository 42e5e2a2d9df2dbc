"""Cross-entropy, inverse-frequency weighted cross-entropy and focal loss."""

from __future__ import annotations

from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F


def class_weights(class_counts: Sequence[int]) -> np.ndarray:
    """Inverse-frequency weights w_c = N / (K * n_c)."""
    counts = np.asarray(class_counts, dtype=float)
    if np.any(counts <= 0):
        empty = [i for i, c in enumerate(counts) if c <= 0]
        raise ValueError(f"cannot weight classes with zero training samples: {empty}")
    return counts.sum() / (len(counts) * counts)


def cross_entropy(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    return F.cross_entropy(logits, labels)


def weighted_ce(logits: torch.Tensor, labels: torch.Tensor, class_counts: Sequence[int]) -> torch.Tensor:
    """Batch mean of w_y * -log softmax(logits)_y (not normalised by the weight sum)."""
    w = torch.as_tensor(class_weights(class_counts), dtype=logits.dtype, device=logits.device)
    nll = -F.log_softmax(logits, dim=1).gather(1, labels[:, None]).squeeze(1)
    return (w[labels] * nll).mean()


def focal(logits: torch.Tensor, labels: torch.Tensor, gamma: float = 2.0,
          alpha: Sequence[float] | float = 1.0) -> torch.Tensor:
    """Batch mean of -alpha_y * (1 - p_y)^gamma * log p_y."""
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    logp = F.log_softmax(logits, dim=1).gather(1, labels[:, None]).squeeze(1)
    p = logp.exp()
    a = torch.as_tensor(alpha, dtype=logits.dtype, device=logits.device)
    a_y = a[labels] if a.ndim else a
    return (-a_y * (1.0 - p).pow(gamma) * logp).mean()


def make_loss(name: str, train_labels: Sequence[int], num_classes: int = 4,
              gamma: float = 2.0, alpha: Sequence[float] | None = None):
    """Loss callable ``f(logits, labels)`` configured from the train split."""
    counts = np.bincount(np.asarray(train_labels, dtype=int), minlength=num_classes)
    if name == "cross_entropy":
        return cross_entropy
    if name == "weighted_ce":
        weights_from = counts.copy()
        return lambda logits, labels: weighted_ce(logits, labels, weights_from)
    if name == "focal":
        a = class_weights(counts) if alpha is None else np.asarray(alpha, dtype=float)
        return lambda logits, labels: focal(logits, labels, gamma, a)
    raise ValueError(f"unknown loss {name!r}")
