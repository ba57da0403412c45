"""Pair matching between event representations.

The head pools each trigger span with attention weights, projects pooled and
mask-slot vectors to a small matching space, and compares two vectors with an
elementwise product plus a bank of weighted cosine similarities.  Each cosine
perspective reweights the pair with one row of a low-rank perspective matrix
(W = U V) before measuring the angle; near-zero weighted vectors score 0.
The match vectors are then folded back into the three inference mask
embeddings through per-slot linear maps.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .errors import ConfigError, InputError

ZERO_NORM_GUARD = 1e-8


@dataclass
class MatchingConfig:
    dim: int = 64
    perspectives: int = 128
    rank: int = 4

    def validate(self) -> None:
        if min(self.dim, self.perspectives, self.rank) < 1:
            raise ConfigError("matching dimensions must be positive")

    def to_dict(self) -> dict:
        return {"dim": self.dim, "perspectives": self.perspectives, "rank": self.rank}


class MatchingHead(nn.Module):
    """Trainable parameters for span pooling, comparison, and mask updates."""

    def __init__(self, hidden: int, config: MatchingConfig | None = None):
        super().__init__()
        self.hidden = hidden
        self.config = config or MatchingConfig()
        self.config.validate()
        dim, persp, rank = self.config.dim, self.config.perspectives, self.config.rank
        self.pool_weight = nn.Parameter(torch.empty(hidden))
        self.project = nn.Linear(hidden, dim)
        self.perspective_u = nn.Parameter(torch.empty(persp, rank))
        self.perspective_v = nn.Parameter(torch.empty(rank, dim))
        match_width = hidden + dim + persp
        self.update_type = nn.Linear(match_width, hidden, bias=False)
        self.update_arg = nn.Linear(match_width, hidden, bias=False)
        self.update_coref = nn.Linear(match_width, hidden, bias=False)
        nn.init.normal_(self.pool_weight, std=0.02)
        nn.init.normal_(self.perspective_u, std=0.2)
        nn.init.normal_(self.perspective_v, std=0.2)

    def pool_span(self, hidden: torch.Tensor, start: int, end: int) -> torch.Tensor:
        """Attention-pool rows start..end (inclusive) of a [L, H] state matrix."""
        if hidden.dim() != 2 or hidden.shape[1] != self.hidden:
            raise InputError(f"expected [L, {self.hidden}] hidden states")
        if not 0 <= start <= end < hidden.shape[0]:
            raise InputError(f"span ({start}, {end}) outside 0..{hidden.shape[0] - 1}")
        rows = hidden[start : end + 1]
        weights = torch.softmax(rows @ self.pool_weight, dim=0)
        return weights @ rows

    def perspectives(self) -> torch.Tensor:
        """The [P, dim] perspective matrix W = U V."""
        return self.perspective_u @ self.perspective_v

    def multicos(self, x1: torch.Tensor, x2: torch.Tensor) -> torch.Tensor:
        """Per-perspective cosine between the reweighted vectors w_k * x.

        Components where either reweighted vector has norm below the guard
        are defined as 0.
        """
        if x1.shape != x2.shape or x1.shape[-1] != self.config.dim:
            raise InputError(
                f"multicos expects two [{self.config.dim}] vectors, "
                f"got {tuple(x1.shape)} and {tuple(x2.shape)}"
            )
        weights = self.perspectives()
        a = weights * x1
        b = weights * x2
        dot = (a * b).sum(dim=-1)
        norm_a = a.norm(dim=-1)
        norm_b = b.norm(dim=-1)
        defined = (norm_a > ZERO_NORM_GUARD) & (norm_b > ZERO_NORM_GUARD)
        denom = torch.where(defined, norm_a * norm_b, torch.ones_like(norm_a))
        return torch.where(defined, dot / denom, torch.zeros_like(dot))

    def match_features(self, x1: torch.Tensor, x2: torch.Tensor) -> torch.Tensor:
        """Comparison vector: elementwise product followed by the cosine bank."""
        return torch.cat([x1 * x2, self.multicos(x1, x2)])

    def update_mask_embeddings(
        self,
        type_slot: torch.Tensor,
        arg_slot: torch.Tensor,
        coref_slot: torch.Tensor,
        pooled_first: torch.Tensor,
        pooled_second: torch.Tensor,
        type_first: torch.Tensor,
        type_second: torch.Tensor,
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Fold pair-match evidence into the three inference mask embeddings.

        Semantic matching compares the pooled trigger spans; type matching
        compares the two anchor type-mask states.  The argument and coreference
        slots consume the semantic match, the type slot the type match.
        """
        semantic = self.match_features(self.project(pooled_first), self.project(pooled_second))
        typed = self.match_features(self.project(type_first), self.project(type_second))
        new_type = self.update_type(torch.cat([type_slot, typed]))
        new_arg = self.update_arg(torch.cat([arg_slot, semantic]))
        new_coref = self.update_coref(torch.cat([coref_slot, semantic]))
        return new_type, new_arg, new_coref
