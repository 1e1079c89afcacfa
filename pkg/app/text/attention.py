"""Single-layer scaled dot-product attention classifier over complaint tokens.

softmax(Q K^T / sqrt(d_k)) V, mean-pooled over the sequence, then a linear
5-way head. Runs on CPU in float64.
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from app.constants import N_LEVELS
from app.errors import ConfigError, DataError, TrainingError
from app.text.tokenize import tokenize

logger = logging.getLogger(__name__)

UNK = 0
PAD = 1
DTYPE = torch.float64


@dataclass(frozen=True)
class AttentionConfig:
    d_model: int = 32
    d_k: int = 16
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 0.01
    optimizer: str = "adam"
    max_tokens: int = 32
    min_count: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.d_k < 1:
            raise ConfigError(f"d_k must be >= 1, got {self.d_k}")
        if self.d_model < 1:
            raise ConfigError(f"d_model must be >= 1, got {self.d_model}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer '{self.optimizer}'")
        if self.max_tokens < 1 or self.min_count < 1:
            raise ConfigError("max_tokens and min_count must be >= 1")


def configure_threads(n: int) -> None:
    if n > 0:
        torch.set_num_threads(n)


def build_vocabulary(corpus: Sequence[Sequence[str]], min_count: int = 1) -> dict[str, int]:
    counts = Counter(t for tokens in corpus for t in tokens)
    kept = sorted(t for t, c in counts.items() if c >= min_count)
    return {t: i + 2 for i, t in enumerate(kept)}


class AttentionTextModel(nn.Module):
    def __init__(self, vocabulary: dict[str, int], d_model: int, d_k: int, max_tokens: int = 32):
        super().__init__()
        if d_k < 1:
            raise ConfigError(f"d_k must be >= 1, got {d_k}")
        self.vocabulary = dict(vocabulary)
        self.d_k = d_k
        self.max_tokens = max_tokens
        n_tokens = len(self.vocabulary) + 2
        self.embedding = nn.Embedding(n_tokens, d_model, padding_idx=PAD, dtype=DTYPE)
        self.query = nn.Linear(d_model, d_k, bias=False, dtype=DTYPE)
        self.key = nn.Linear(d_model, d_k, bias=False, dtype=DTYPE)
        self.value = nn.Linear(d_model, d_k, bias=False, dtype=DTYPE)
        self.head = nn.Linear(d_k, N_LEVELS, dtype=DTYPE)

    def reset_parameters(self, generator: torch.Generator) -> None:
        with torch.no_grad():
            for name, param in self.named_parameters():
                if name.endswith("bias"):
                    param.zero_()
                    continue
                fan_in = param.shape[1]
                scale = 0.1 if name.startswith("embedding") else 1.0 / math.sqrt(fan_in)
                param.copy_(torch.randn(param.shape, generator=generator, dtype=DTYPE) * scale)
            self.embedding.weight[PAD].zero_()

    def encode(self, tokens: Sequence[str]) -> list[int]:
        if not tokens:
            raise DataError("cannot encode an empty token list")
        return [self.vocabulary.get(t, UNK) for t in tokens[: self.max_tokens]]

    def batch(self, sequences: Sequence[Sequence[str]]) -> tuple[torch.Tensor, torch.Tensor]:
        encoded = [self.encode(tokens) for tokens in sequences]
        width = max(len(ids) for ids in encoded)
        ids = torch.full((len(encoded), width), PAD, dtype=torch.long)
        mask = torch.zeros((len(encoded), width), dtype=torch.bool)
        for i, row in enumerate(encoded):
            ids[i, : len(row)] = torch.tensor(row, dtype=torch.long)
            mask[i, : len(row)] = True
        return ids, mask

    def attend(self, x: torch.Tensor, mask: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Attention outputs and weights for embedded input x of shape (B, L, d_model)."""
        q, k, v = self.query(x), self.key(x), self.value(x)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.d_k)
        scores = scores.masked_fill(~mask[:, None, :], -math.inf)
        weights = torch.softmax(scores, dim=-1)
        return weights @ v, weights

    def forward(self, ids: torch.Tensor, mask: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        out, weights = self.attend(self.embedding(ids), mask)
        m = mask.to(DTYPE)[..., None]
        pooled = (out * m).sum(dim=1) / m.sum(dim=1)
        return self.head(pooled), weights

    @torch.no_grad()
    def predict_proba_tokens(self, sequences: Sequence[Sequence[str]], batch_size: int = 512) -> np.ndarray:
        chunks = []
        for start in range(0, len(sequences), batch_size):
            ids, mask = self.batch(sequences[start : start + batch_size])
            logits, _ = self(ids, mask)
            chunks.append(torch.softmax(logits, dim=-1).numpy())
        if not chunks:
            return np.zeros((0, N_LEVELS))
        return np.concatenate(chunks, axis=0)

    def predict_proba(self, texts: Sequence[str]) -> np.ndarray:
        return self.predict_proba_tokens([tokenize(t) for t in texts])


@torch.no_grad()
def attention_forward(model: AttentionTextModel, tokens: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    """Class probabilities and the n x n attention matrix for one token sequence."""
    ids, mask = model.batch([tokens])
    logits, weights = model(ids, mask)
    return torch.softmax(logits, dim=-1)[0].numpy(), weights[0].numpy()


def train_attention(
    corpus: Sequence[Sequence[str]],
    labels,
    cfg: Optional[AttentionConfig] = None,
) -> AttentionTextModel:
    cfg = cfg or AttentionConfig()
    labels = np.asarray(labels, dtype=np.int64)
    if len(corpus) == 0:
        raise TrainingError("empty training set")
    if len(corpus) != labels.shape[0]:
        raise DataError(f"{len(corpus)} notes but {labels.shape[0]} labels")

    generator = torch.Generator().manual_seed(cfg.seed)
    model = AttentionTextModel(
        build_vocabulary(corpus, cfg.min_count), cfg.d_model, cfg.d_k, cfg.max_tokens
    )
    model.reset_parameters(generator)

    ids, mask = model.batch(corpus)
    targets = torch.as_tensor(labels - 1, dtype=torch.long)
    if cfg.optimizer == "adam":
        optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    else:
        optimizer = torch.optim.SGD(model.parameters(), lr=cfg.learning_rate)

    model.train()
    n = len(corpus)
    for epoch in range(cfg.epochs):
        order = torch.randperm(n, generator=generator)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            rows = order[start : start + cfg.batch_size]
            logits, _ = model(ids[rows], mask[rows])
            loss = F.cross_entropy(logits, targets[rows])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += loss.item() * rows.shape[0]
        logger.debug("epoch %d mean loss %.5f", epoch + 1, total / n)

    model.eval()
    return model
