"""Masked-cell pretraining of a behaviour encoder for soft-prompt tuning.

The encoder learns to reconstruct randomly hidden (day, feature) cells of
z-scored windows. A linear projector maps its pooled output to the width of
the target LLM's embedding space; the projector is left untrained because it
is fitted jointly with the frozen LLM outside this package.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from ..core import Dataset
from ..features import Normalizer, fit_normalizer
from ..models_neural import TrainingDivergedError


class MaskedEncoder(nn.Module):
    def __init__(self, input_dim: int, width: int = 32, depth: int = 2, heads: int = 4, max_len: int = 64):
        super().__init__()
        # value channel plus a mask indicator per feature
        self.inp = nn.Linear(2 * input_dim, width)
        self.pos = nn.Parameter(torch.zeros(max_len, width))
        nn.init.normal_(self.pos, std=0.02)
        layer = nn.TransformerEncoderLayer(width, heads, 2 * width, dropout=0.0, batch_first=True)
        self.body = nn.TransformerEncoder(layer, depth, enable_nested_tensor=False)
        self.head = nn.Linear(width, input_dim)

    def encode(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        h = self.inp(torch.cat([x * ~mask, mask.float()], dim=-1))
        return self.body(h + self.pos[: x.shape[1]])

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        return self.head(self.encode(x, mask))

    def embed(self, x: torch.Tensor) -> torch.Tensor:
        """Pooled window embedding with nothing masked."""
        return self.encode(x, torch.zeros_like(x, dtype=torch.bool)).mean(dim=1)


@dataclass
class PretrainedEncoder:
    encoder: MaskedEncoder
    projector: nn.Linear
    normalizer: Normalizer
    mask_fraction: float
    losses: list[float] = field(default_factory=list)

    def soft_prompt(self, values: np.ndarray) -> torch.Tensor:
        """(N, T, D) raw windows -> (N, projector width) vectors for the LLM input."""
        x = torch.as_tensor(self.normalizer.apply(values), dtype=torch.float32)
        with torch.no_grad():
            return self.projector(self.encoder.embed(x))


def random_mask(shape: tuple[int, ...], fraction: float, gen: torch.Generator) -> torch.Tensor:
    mask = torch.rand(shape, generator=gen) < fraction
    # every window keeps at least one hidden cell so the loss is always defined
    flat = mask.view(shape[0], -1)
    empty = ~flat.any(dim=1)
    if empty.any():
        idx = torch.randint(flat.shape[1], (int(empty.sum()),), generator=gen)
        flat[empty.nonzero().squeeze(1), idx] = True
    return mask


def _check_fraction(mask_fraction: float) -> None:
    if not 0.0 < mask_fraction < 1.0:
        raise ValueError(f"mask_fraction must lie in (0, 1), got {mask_fraction}")


def pretrain_prompt_encoder(train: Dataset, mask_fraction: float = 0.15, epochs: int = 30, width: int = 32,
                            depth: int = 2, heads: int = 4, projector_dim: int = 64, lr: float = 3e-3,
                            batch_size: int = 64, seed: int = 0) -> PretrainedEncoder:
    """Train with mean-squared error on masked cells only."""
    _check_fraction(mask_fraction)
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    torch.manual_seed(seed)
    gen = torch.Generator().manual_seed(seed)
    raw = train.values()
    norm = fit_normalizer(raw)
    x = torch.as_tensor(norm.apply(raw), dtype=torch.float32)
    enc = MaskedEncoder(x.shape[-1], width, depth, heads)
    opt = torch.optim.Adam(enc.parameters(), lr=lr)
    losses = []
    for _ in range(epochs):
        enc.train()
        order = torch.randperm(len(x), generator=gen)
        total, cells = 0.0, 0
        for i in range(0, len(x), batch_size):
            xb = x[order[i:i + batch_size]]
            mask = random_mask(xb.shape, mask_fraction, gen)
            err = (enc(xb, mask) - xb)[mask]
            loss = (err ** 2).mean()
            if not torch.isfinite(loss):
                raise TrainingDivergedError("masked reconstruction loss is not finite")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * err.numel()
            cells += err.numel()
        losses.append(total / cells)
    enc.eval()
    projector = nn.Linear(width, projector_dim)
    return PretrainedEncoder(enc, projector, norm, mask_fraction, losses)


def masked_reconstruction_error(model: PretrainedEncoder, windows: np.ndarray, mask_fraction: float | None = None,
                                seed: int = 0) -> tuple[float, float]:
    """(encoder MSE, train-mean baseline MSE) on masked cells of held-out raw windows.

    In z-space the train mean is zero, so the baseline error is the mean
    square of the hidden cells.
    """
    fraction = model.mask_fraction if mask_fraction is None else mask_fraction
    _check_fraction(fraction)
    x = torch.as_tensor(model.normalizer.apply(np.asarray(windows, dtype=float)), dtype=torch.float32)
    mask = random_mask(x.shape, fraction, torch.Generator().manual_seed(seed))
    with torch.no_grad():
        pred = model.encoder(x, mask)
    return float(((pred - x)[mask] ** 2).mean()), float((x[mask] ** 2).mean())
