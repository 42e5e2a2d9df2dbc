"""Neural sequence classifiers with optional per-user embeddings.

Every model takes a padded batch ``x`` of shape (B, T, D), the valid
``lengths`` (B,) and user row indices (B,) where -1 marks a user unseen in
training (served the mean embedding). Output is (B, 4) logits.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import torch
from torch import nn

from .core import NUM_CLASSES
from .losses import make_loss

KINDS = ("mlp", "tcn", "lstm_attention", "transformer_encoder")
LOSSES = ("cross_entropy", "weighted_ce", "focal")


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class NeuralSpec:
    kind: str = "transformer_encoder"
    width: int = 32
    depth: int = 1
    heads: int = 2
    kernel: int = 3
    dropout: float = 0.1
    personalization: str = "agnostic"  # agnostic | user_embedding
    embedding_dim: int = 8
    loss: str = "cross_entropy"
    gamma: float = 2.0
    alpha: tuple[float, ...] | None = None
    lr: float = 3e-3
    weight_decay: float = 1e-4
    batch_size: int = 64
    max_epochs: int = 50
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        problems = []
        if self.kind not in KINDS:
            problems.append(f"unknown kind {self.kind!r}; expected one of {KINDS}")
        if self.width < 1 or self.depth < 1:
            problems.append("width and depth must be >= 1")
        if self.kind == "transformer_encoder" and self.width % self.heads:
            problems.append(f"heads ({self.heads}) must divide width ({self.width})")
        if self.kind == "tcn" and self.kernel < 2:
            problems.append("tcn kernel must be >= 2")
        if not 0.0 <= self.dropout < 1.0:
            problems.append("dropout must lie in [0, 1)")
        if self.personalization not in ("agnostic", "user_embedding"):
            problems.append(f"unknown personalization {self.personalization!r}")
        if self.personalization == "user_embedding" and self.embedding_dim < 1:
            problems.append("embedding_dim must be >= 1")
        if self.loss not in LOSSES:
            problems.append(f"unknown loss {self.loss!r}")
        if self.gamma < 0:
            problems.append("gamma must be >= 0")
        if problems:
            raise ValueError("; ".join(problems))
        if self.alpha is not None:
            object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))

    @property
    def user_dim(self) -> int:
        return self.embedding_dim if self.personalization == "user_embedding" else 0

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["alpha"] is not None:
            d["alpha"] = list(d["alpha"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> NeuralSpec:
        return cls(**d)


def length_mask(lengths: torch.Tensor, t: int) -> torch.Tensor:
    """(B, T) boolean, True on valid steps."""
    return torch.arange(t, device=lengths.device)[None, :] < lengths[:, None]


class UserEmbeddingTable(nn.Module):
    """Learnable per-user vectors; index -1 returns the mean of the learned rows."""

    def __init__(self, num_users: int, dim: int):
        super().__init__()
        self.table = nn.Embedding(num_users, dim)
        nn.init.normal_(self.table.weight, std=0.1)

    def forward(self, user_idx: torch.Tensor) -> torch.Tensor:
        known = user_idx >= 0
        out = self.table(user_idx.clamp(min=0))
        if not bool(known.all()):
            mean = self.table.weight.mean(dim=0)
            out = torch.where(known[:, None], out, mean.expand_as(out))
        return out


class _Base(nn.Module):
    def __init__(self, spec: NeuralSpec, input_dim: int, num_users: int):
        super().__init__()
        self.spec = spec
        self.users = UserEmbeddingTable(num_users, spec.user_dim) if spec.user_dim else None
        # first projection, widened by the user embedding when present
        self.inp = nn.Linear(input_dim + spec.user_dim, spec.width)

    def embed(self, x: torch.Tensor, user_idx: torch.Tensor | None) -> torch.Tensor:
        if self.users is not None:
            if user_idx is None:
                raise ValueError("user-aware model needs user indices")
            u = self.users(user_idx)[:, None, :].expand(-1, x.shape[1], -1)
            x = torch.cat([x, u], dim=-1)
        return self.inp(x)


class MLP(_Base):
    """Aggregates the valid steps by mean, then a plain feed-forward stack."""

    def __init__(self, spec, input_dim, num_users):
        super().__init__(spec, input_dim, num_users)
        layers = []
        for _ in range(spec.depth - 1):
            layers += [nn.ReLU(), nn.Dropout(spec.dropout), nn.Linear(spec.width, spec.width)]
        self.body = nn.Sequential(*layers, nn.ReLU(), nn.Dropout(spec.dropout))
        self.head = nn.Linear(spec.width, NUM_CLASSES)

    def forward(self, x, lengths, user_idx=None):
        mask = length_mask(lengths, x.shape[1]).to(x.dtype)[..., None]
        pooled = (x * mask).sum(1) / mask.sum(1)
        return self.head(self.body(self.embed(pooled[:, None, :], user_idx)[:, 0]))


class _CausalBlock(nn.Module):
    def __init__(self, width: int, kernel: int, dilation: int, dropout: float):
        super().__init__()
        self.pad = (kernel - 1) * dilation
        self.conv1 = nn.Conv1d(width, width, kernel, dilation=dilation)
        self.conv2 = nn.Conv1d(width, width, kernel, dilation=dilation)
        self.drop = nn.Dropout(dropout)

    def forward(self, h):  # (B, C, T)
        y = self.drop(torch.relu(self.conv1(nn.functional.pad(h, (self.pad, 0)))))
        y = self.drop(torch.relu(self.conv2(nn.functional.pad(y, (self.pad, 0)))))
        return torch.relu(h + y)


class TCN(_Base):
    """Dilated causal convolutions; reads out the last valid step."""

    def __init__(self, spec, input_dim, num_users):
        super().__init__(spec, input_dim, num_users)
        self.blocks = nn.Sequential(*[_CausalBlock(spec.width, spec.kernel, 2 ** i, spec.dropout)
                                      for i in range(spec.depth)])
        self.head = nn.Linear(spec.width, NUM_CLASSES)

    def step_features(self, x, user_idx=None):
        """Per-step hidden states (B, T, width); step t only sees steps <= t."""
        h = self.embed(x, user_idx).transpose(1, 2)
        return self.blocks(h).transpose(1, 2)

    def forward(self, x, lengths, user_idx=None):
        h = self.step_features(x, user_idx)
        last = h[torch.arange(len(h)), lengths - 1]
        return self.head(last)


class LSTMAttention(_Base):
    """LSTM over the steps, additive attention pooling over valid hidden states."""

    def __init__(self, spec, input_dim, num_users):
        super().__init__(spec, input_dim, num_users)
        self.lstm = nn.LSTM(spec.width, spec.width, num_layers=spec.depth, batch_first=True,
                            dropout=spec.dropout if spec.depth > 1 else 0.0)
        self.att_proj = nn.Linear(spec.width, spec.width)
        self.att_v = nn.Linear(spec.width, 1, bias=False)
        self.drop = nn.Dropout(spec.dropout)
        self.head = nn.Linear(spec.width, NUM_CLASSES)

    def forward(self, x, lengths, user_idx=None):
        h, _ = self.lstm(self.embed(x, user_idx))
        scores = self.att_v(torch.tanh(self.att_proj(h))).squeeze(-1)
        scores = scores.masked_fill(~length_mask(lengths, x.shape[1]), float("-inf"))
        weights = torch.softmax(scores, dim=1)
        context = (weights[..., None] * h).sum(1)
        return self.head(self.drop(context))


class TransformerClassifier(_Base):
    """Encoder-only transformer with learned positions and masked mean pooling."""

    max_len = 64

    def __init__(self, spec, input_dim, num_users):
        super().__init__(spec, input_dim, num_users)
        self.pos = nn.Parameter(torch.zeros(self.max_len, spec.width))
        nn.init.normal_(self.pos, std=0.02)
        layer = nn.TransformerEncoderLayer(spec.width, spec.heads, dim_feedforward=2 * spec.width,
                                           dropout=spec.dropout, batch_first=True)
        self.encoder = nn.TransformerEncoder(layer, spec.depth, enable_nested_tensor=False)
        self.head = nn.Linear(spec.width, NUM_CLASSES)

    def forward(self, x, lengths, user_idx=None):
        t = x.shape[1]
        if t > self.max_len:
            raise ValueError(f"sequence length {t} exceeds {self.max_len}")
        valid = length_mask(lengths, t)
        h = self.encoder(self.embed(x, user_idx) + self.pos[:t], src_key_padding_mask=~valid)
        m = valid.to(h.dtype)[..., None]
        return self.head((h * m).sum(1) / m.sum(1))


_MODELS = {"mlp": MLP, "tcn": TCN, "lstm_attention": LSTMAttention,
           "transformer_encoder": TransformerClassifier}


def build(spec: NeuralSpec, input_dim: int, num_users: int) -> nn.Module:
    if spec.user_dim and num_users < 1:
        raise ValueError("user_embedding needs num_users >= 1")
    torch.manual_seed(spec.seed)
    return _MODELS[spec.kind](spec, input_dim, max(num_users, 1))


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


# ------------------------------------------------------------------ training

@dataclass
class Batchable:
    """Tensors for one split: padded inputs, lengths, user rows, labels."""

    x: torch.Tensor
    lengths: torch.Tensor
    users: torch.Tensor
    y: torch.Tensor

    @classmethod
    def from_arrays(cls, x: np.ndarray, labels: Sequence[int], user_rows: Sequence[int] | None = None,
                    lengths: Sequence[int] | None = None) -> Batchable:
        x = np.asarray(x, dtype=np.float32)
        n, t = x.shape[:2]
        return cls(
            torch.from_numpy(x),
            torch.as_tensor(lengths if lengths is not None else [t] * n, dtype=torch.long),
            torch.as_tensor(user_rows if user_rows is not None else [-1] * n, dtype=torch.long),
            torch.as_tensor(np.asarray(labels, dtype=np.int64)),
        )

    def __len__(self) -> int:
        return len(self.y)


@dataclass
class History:
    rows: list[dict] = field(default_factory=list)
    best_epoch: int = -1

    def to_csv(self) -> str:
        buf = io.StringIO()
        if self.rows:
            w = csv.DictWriter(buf, fieldnames=list(self.rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(self.rows)
        return buf.getvalue()

    @property
    def best_val_macro_f1(self) -> float:
        return self.rows[self.best_epoch - 1]["val_macro_f1"] if self.best_epoch > 0 else float("nan")


@torch.no_grad()
def predict_logits(model: nn.Module, data: Batchable, batch_size: int = 512) -> torch.Tensor:
    model.eval()
    out = [model(data.x[i:i + batch_size], data.lengths[i:i + batch_size], data.users[i:i + batch_size])
           for i in range(0, len(data), batch_size)]
    return torch.cat(out) if out else torch.zeros(0, NUM_CLASSES)


def train(model: nn.Module, train_data: Batchable, val_data: Batchable,
          spec: NeuralSpec | None = None) -> tuple[nn.Module, History]:
    """Adam with early stopping on validation macro-F1; restores the best epoch."""
    from .evaluation import score

    spec = spec or model.spec
    torch.manual_seed(spec.seed)
    rng = np.random.default_rng(spec.seed)
    loss_fn = make_loss(spec.loss, train_data.y.numpy(), gamma=spec.gamma, alpha=spec.alpha)
    opt = torch.optim.Adam(model.parameters(), lr=spec.lr, weight_decay=spec.weight_decay)
    hist = History()
    best_f1, best_state, stale = -1.0, None, 0
    for epoch in range(1, spec.max_epochs + 1):
        model.train()
        order = rng.permutation(len(train_data))
        total, seen = 0.0, 0
        for i in range(0, len(order), spec.batch_size):
            idx = torch.as_tensor(order[i:i + spec.batch_size])
            logits = model(train_data.x[idx], train_data.lengths[idx], train_data.users[idx])
            loss = loss_fn(logits, train_data.y[idx])
            if not torch.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss {loss.item()} at epoch {epoch}, batch {i // spec.batch_size}; "
                    f"lr={spec.lr}, loss={spec.loss}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
            seen += len(idx)
        val_logits = predict_logits(model, val_data)
        val_loss = float(loss_fn(val_logits, val_data.y)) if len(val_data) else float("nan")
        rep = score(val_logits.argmax(1).numpy(), val_data.y.numpy())
        hist.rows.append({"epoch": epoch, "train_loss": total / max(seen, 1), "val_loss": val_loss,
                          "val_macro_f1": rep.macro_f1, "val_accuracy": rep.accuracy})
        if rep.macro_f1 > best_f1:
            best_f1, stale, hist.best_epoch = rep.macro_f1, 0, epoch
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        else:
            stale += 1
            if stale >= spec.patience:
                break
    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    return model, hist


def state_bytes(model: nn.Module) -> bytes:
    buf = io.BytesIO()
    torch.save(model.state_dict(), buf)
    return buf.getvalue()


def load_state_bytes(model: nn.Module, blob: bytes) -> nn.Module:
    model.load_state_dict(torch.load(io.BytesIO(blob), weights_only=True))
    return model
