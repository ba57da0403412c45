"""Whitespace vocabulary and a small trainable transformer with a tied MLM head.

The encoder is trained from scratch: learned token and position embeddings,
post-norm self-attention blocks with GELU feed-forwards, and an output head
whose projection shares the token embedding matrix (logits = h @ E^T + b).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import torch
from torch import nn

from .errors import ConfigError, LengthError

PAD_TOKEN = "[PAD]"
UNK_TOKEN = "[UNK]"
MASK_TOKEN = "[MASK]"
E1_START = "[E1S]"
E1_END = "[E1E]"
E2_START = "[E2S]"
E2_END = "[E2E]"
SOFT_TOKENS = ("[L1]", "[L2]", "[L3]", "[L4]", "[L5]", "[L6]")

SPECIAL_TOKENS = (
    PAD_TOKEN,
    UNK_TOKEN,
    MASK_TOKEN,
    E1_START,
    E1_END,
    E2_START,
    E2_END,
) + SOFT_TOKENS


class Vocabulary:
    """Token/id table: specials first, then text tokens, then virtual tokens.

    Virtual tokens (trainable label words) are appended after construction and
    are never produced by text tokenization; neither are the specials.
    """

    def __init__(self, tokens: Iterable[str]):
        self._id_to_token: list[str] = list(SPECIAL_TOKENS)
        seen = set(self._id_to_token)
        for tok in tokens:
            if tok in seen:
                raise ConfigError(f"duplicate vocabulary token {tok!r}")
            seen.add(tok)
            self._id_to_token.append(tok)
        self._token_to_id = {t: i for i, t in enumerate(self._id_to_token)}
        self._base_size = len(self._id_to_token)

    @property
    def size(self) -> int:
        return len(self._id_to_token)

    @property
    def base_size(self) -> int:
        return self._base_size

    @property
    def pad_id(self) -> int:
        return self._token_to_id[PAD_TOKEN]

    @property
    def unk_id(self) -> int:
        return self._token_to_id[UNK_TOKEN]

    @property
    def mask_id(self) -> int:
        return self._token_to_id[MASK_TOKEN]

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id

    def id(self, token: str) -> int:
        """Exact lookup (specials and virtual tokens included); UNK fallback."""
        return self._token_to_id.get(token, self.unk_id)

    def token(self, idx: int) -> str:
        return self._id_to_token[idx]

    def is_reserved(self, token: str) -> bool:
        """True for specials and virtual tokens, which text never produces."""
        idx = self._token_to_id.get(token)
        if idx is None:
            return False
        return idx < len(SPECIAL_TOKENS) or idx >= self._base_size

    def text_id(self, token: str) -> int:
        """Lookup for corpus text: reserved names map to UNK, never themselves."""
        if self.is_reserved(token):
            return self.unk_id
        return self._token_to_id.get(token, self.unk_id)

    def add_virtual(self, name: str) -> int:
        if name in self._token_to_id:
            raise ConfigError(f"virtual token name {name!r} already registered")
        idx = len(self._id_to_token)
        self._id_to_token.append(name)
        self._token_to_id[name] = idx
        return idx

    def virtual_tokens(self) -> list[str]:
        return self._id_to_token[self._base_size :]

    def tokens(self) -> list[str]:
        return list(self._id_to_token)

    def save(self, path: str | Path) -> None:
        lines = [f"{tok}\t{i}" for i, tok in enumerate(self._id_to_token)]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def restore(cls, tokens: Sequence[str], base_size: int) -> "Vocabulary":
        """Rebuild a vocabulary (including virtual tokens) from its token list."""
        if list(tokens[: len(SPECIAL_TOKENS)]) != list(SPECIAL_TOKENS):
            raise ConfigError("token list does not start with the special inventory")
        vocab = cls(tokens[len(SPECIAL_TOKENS) : base_size])
        for name in tokens[base_size:]:
            vocab.add_virtual(name)
        return vocab


def build_vocab(
    docs: Iterable, min_count: int = 1, extra_tokens: Sequence[str] = ()
) -> Vocabulary:
    """Vocabulary over a corpus: specials, declared extras, then corpus tokens
    with frequency >= min_count in first-occurrence order."""
    if min_count < 1:
        raise ConfigError("min_count must be at least 1")
    counts: Counter[str] = Counter()
    order: dict[str, None] = {}
    for doc in docs:
        for tok in doc.tokens():
            counts[tok] += 1
            order.setdefault(tok, None)
    tokens: list[str] = []
    seen = set(SPECIAL_TOKENS)
    for tok in extra_tokens:
        if tok not in seen:
            seen.add(tok)
            tokens.append(tok)
    for tok in order:
        if counts[tok] >= min_count and tok not in seen:
            seen.add(tok)
            tokens.append(tok)
    return Vocabulary(tokens)


def tokenize(text_tokens: Sequence[str], vocab: Vocabulary) -> list[int]:
    """Map pre-split text tokens to ids; unknown (and reserved names) become UNK."""
    return [vocab.text_id(t) for t in text_tokens]


@dataclass
class EncoderConfig:
    layers: int = 2
    hidden: int = 64
    heads: int = 4
    ffn: int = 256
    max_positions: int = 512
    dtype: str = "float64"

    def torch_dtype(self) -> torch.dtype:
        try:
            return {"float32": torch.float32, "float64": torch.float64}[self.dtype]
        except KeyError:
            raise ConfigError(f"unsupported dtype {self.dtype!r}") from None

    def validate(self) -> None:
        if self.hidden % self.heads != 0:
            raise ConfigError("hidden size must be divisible by the head count")
        if min(self.layers, self.hidden, self.heads, self.ffn, self.max_positions) < 1:
            raise ConfigError("encoder dimensions must be positive")
        self.torch_dtype()

    def to_dict(self) -> dict:
        return {
            "layers": self.layers,
            "hidden": self.hidden,
            "heads": self.heads,
            "ffn": self.ffn,
            "max_positions": self.max_positions,
            "dtype": self.dtype,
        }


class _Block(nn.Module):
    """Post-norm transformer block: self-attention then feed-forward."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.heads = cfg.heads
        self.head_dim = cfg.hidden // cfg.heads
        self.qkv = nn.Linear(cfg.hidden, 3 * cfg.hidden)
        self.out = nn.Linear(cfg.hidden, cfg.hidden)
        self.norm1 = nn.LayerNorm(cfg.hidden)
        self.fc1 = nn.Linear(cfg.hidden, cfg.ffn)
        self.fc2 = nn.Linear(cfg.ffn, cfg.hidden)
        self.norm2 = nn.LayerNorm(cfg.hidden)

    def forward(self, x: torch.Tensor, pad_mask: torch.Tensor | None) -> torch.Tensor:
        bsz, length, hidden = x.shape
        qkv = self.qkv(x).view(bsz, length, 3, self.heads, self.head_dim)
        q, k, v = (qkv[:, :, i].transpose(1, 2) for i in range(3))
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        if pad_mask is not None:
            scores = scores.masked_fill(pad_mask[:, None, None, :], float("-inf"))
        ctx = (scores.softmax(dim=-1) @ v).transpose(1, 2).reshape(bsz, length, hidden)
        x = self.norm1(x + self.out(ctx))
        x = self.norm2(x + self.fc2(nn.functional.gelu(self.fc1(x))))
        return x


class Encoder(nn.Module):
    """Token encoder plus masked-token head tied to the embedding matrix."""

    def __init__(self, vocab_size: int, config: EncoderConfig | None = None):
        super().__init__()
        self.config = config or EncoderConfig()
        self.config.validate()
        self.embedding = nn.Parameter(torch.empty(vocab_size, self.config.hidden))
        self.positions = nn.Parameter(
            torch.empty(self.config.max_positions, self.config.hidden)
        )
        nn.init.normal_(self.embedding, std=0.02)
        nn.init.normal_(self.positions, std=0.02)
        self.blocks = nn.ModuleList(_Block(self.config) for _ in range(self.config.layers))
        self.out_bias = nn.Parameter(torch.zeros(vocab_size))
        self.to(self.config.torch_dtype())

    @property
    def vocab_size(self) -> int:
        return self.embedding.shape[0]

    def encode(
        self, ids: torch.Tensor | Sequence[int], pad_mask: torch.Tensor | None = None
    ) -> torch.Tensor:
        """Hidden states for a [L] or [B, L] id tensor; pad_mask marks padding."""
        if not isinstance(ids, torch.Tensor):
            ids = torch.tensor(ids, dtype=torch.long)
        squeeze = ids.dim() == 1
        if squeeze:
            ids = ids[None, :]
        length = ids.shape[1]
        if length > self.config.max_positions:
            raise LengthError(
                f"sequence length {length} exceeds the position table "
                f"({self.config.max_positions})"
            )
        x = self.embedding[ids] + self.positions[:length]
        for block in self.blocks:
            x = block(x, pad_mask)
        return x[0] if squeeze else x

    def mlm_logits(self, hidden: torch.Tensor) -> torch.Tensor:
        """Vocabulary logits for hidden vectors (tied projection plus bias)."""
        return hidden @ self.embedding.T + self.out_bias

    def grow_vocab(self, init_row: torch.Tensor) -> int:
        """Append one embedding row (and a zero head bias); returns its id."""
        if init_row.shape != (self.config.hidden,):
            raise ConfigError(
                f"init row has shape {tuple(init_row.shape)}, expected ({self.config.hidden},)"
            )
        dtype = self.embedding.dtype
        with torch.no_grad():
            self.embedding = nn.Parameter(
                torch.cat([self.embedding.detach(), init_row.detach().to(dtype)[None, :]])
            )
            self.out_bias = nn.Parameter(
                torch.cat([self.out_bias.detach(), torch.zeros(1, dtype=dtype)])
            )
        return self.vocab_size - 1


def add_virtual_token(
    vocab: Vocabulary, name: str, description_ids: Sequence[int], encoder: Encoder
) -> int:
    """Register a trainable label word initialized to the mean embedding of its
    description tokens; returns the new token id."""
    if vocab.size != encoder.vocab_size:
        raise ConfigError(
            f"vocabulary size {vocab.size} does not match encoder table {encoder.vocab_size}"
        )
    if not description_ids:
        raise ConfigError(f"virtual token {name!r} has an empty description")
    token_id = vocab.add_virtual(name)
    with torch.no_grad():
        row = encoder.embedding[list(description_ids)].mean(dim=0)
    grown = encoder.grow_vocab(row)
    assert grown == token_id
    return token_id
