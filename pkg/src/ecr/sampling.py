"""Training-pair undersampling driven by a learned mention similarity.

A lightweight copy of the encoder is trained with a circle-style ranking loss
to give coreferential mentions higher cosine similarity than non-coreferential
ones within the same document.  The resulting similarity index drives four
negative-filtering strategies; every strategy keeps all positive pairs.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import torch
from torch import nn

from .corpus import Document, MentionPair
from .encoder import Encoder, EncoderConfig, Vocabulary, tokenize
from .errors import ConfigError, TrainingDiverged

STRATEGY_NONE = "none"
STRATEGY_RANDOM = "random"
STRATEGY_DROP_EASY = "enn1"
STRATEGY_DROP_DISTANT = "enn2"
STRATEGY_NEAR_MISS = "nm"
STRATEGIES = (
    STRATEGY_NONE,
    STRATEGY_RANDOM,
    STRATEGY_DROP_EASY,
    STRATEGY_DROP_DISTANT,
    STRATEGY_NEAR_MISS,
)

ENN1_PAIRWISE = "pairwise"  # neighbor labels are taken against the mention itself
ENN1_MUTUAL = "mutual"  # neighbor labels are taken among the neighbors


@dataclass
class SamplingConfig:
    strategy: str = STRATEGY_NEAR_MISS
    k: int = 3
    gamma: float = 0.2
    scale: float = 32.0
    epochs: int = 8
    lr: float = 1e-3
    seed: int = 42
    enn1_mode: str = ENN1_PAIRWISE

    def validate(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown sampling strategy {self.strategy!r}")
        if self.k < 1:
            raise ConfigError("k must be positive")
        if self.scale <= 0:
            raise ConfigError("scale must be positive")
        if self.enn1_mode not in (ENN1_PAIRWISE, ENN1_MUTUAL):
            raise ConfigError(f"unknown enn1_mode {self.enn1_mode!r}")

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "k": self.k,
            "gamma": self.gamma,
            "scale": self.scale,
            "epochs": self.epochs,
            "lr": self.lr,
            "seed": self.seed,
            "enn1_mode": self.enn1_mode,
        }


def circle_loss(positives, negatives, scale: float = 32.0) -> torch.Tensor:
    """Ranking loss log(1 + sum over pos x neg of exp(scale * (neg - pos))).

    ``positives``/``negatives`` are cosine similarities (sequence or 1-D
    tensor).  Either side empty gives exactly zero.  Computed via logsumexp,
    so large scales stay finite.
    """
    if scale <= 0:
        raise ConfigError("scale must be positive")
    pos = positives if isinstance(positives, torch.Tensor) else torch.tensor(
        [float(p) for p in positives], dtype=torch.float64
    )
    neg = negatives if isinstance(negatives, torch.Tensor) else torch.tensor(
        [float(n) for n in negatives], dtype=torch.float64
    )
    if pos.numel() == 0 or neg.numel() == 0:
        return torch.zeros((), dtype=pos.dtype if pos.numel() else neg.dtype)
    diffs = scale * (neg[None, :] - pos[:, None])
    return nn.functional.softplus(torch.logsumexp(diffs.reshape(-1), dim=0))


@dataclass
class SimilarityIndex:
    """Within-document cosine similarities between mention embeddings."""

    mention_order: Mapping[str, Sequence[str]]
    pair_sims: Mapping[str, Mapping[frozenset, float]]

    def mentions(self, doc_id: str) -> list[str]:
        return list(self.mention_order[doc_id])

    def sim(self, doc_id: str, a: str, b: str) -> float:
        return self.pair_sims[doc_id][frozenset((a, b))]

    def neighbors(self, doc_id: str, mention: str) -> list[tuple[str, float]]:
        """Other mentions sorted by similarity (descending, earlier-first ties)."""
        order = {m: i for i, m in enumerate(self.mention_order[doc_id])}
        rows = [
            (other, self.sim(doc_id, mention, other))
            for other in self.mention_order[doc_id]
            if other != mention
        ]
        rows.sort(key=lambda item: (-item[1], order[item[0]]))
        return rows

    @classmethod
    def from_sims(
        cls,
        mention_order: Mapping[str, Sequence[str]],
        sims: Mapping[str, Mapping[tuple[str, str], float]],
    ) -> "SimilarityIndex":
        frozen = {
            doc_id: {frozenset(pair): value for pair, value in table.items()}
            for doc_id, table in sims.items()
        }
        return cls(dict(mention_order), frozen)


class _SimilarityEncoder(nn.Module):
    """Document encoder plus an attention-pooling weight for mention spans."""

    def __init__(self, vocab_size: int, config: EncoderConfig):
        super().__init__()
        self.encoder = Encoder(vocab_size, config)
        self.pool_weight = nn.Parameter(
            torch.zeros(config.hidden, dtype=self.encoder.embedding.dtype)
        )
        nn.init.normal_(self.pool_weight, std=0.02)

    def mention_embeddings(self, doc: Document, vocab: Vocabulary) -> torch.Tensor | None:
        limit = self.encoder.config.max_positions
        ids = tokenize(doc.tokens(), vocab)[:limit]
        mentions = doc.mentions_in_order()
        if any(m.trigger_span[1] >= limit for m in mentions):
            return None  # the truncated view lost a trigger; skip this document
        hidden = self.encoder.encode(ids)
        rows = []
        for m in mentions:
            start, end = m.trigger_span
            span = hidden[start : end + 1]
            weights = torch.softmax(span @ self.pool_weight, dim=0)
            rows.append(weights @ span)
        return torch.stack(rows)


def _doc_cosines(embeddings: torch.Tensor) -> torch.Tensor:
    normed = embeddings / embeddings.norm(dim=1, keepdim=True).clamp_min(1e-12)
    return normed @ normed.T


def train_similarity_encoder(
    docs: Sequence[Document],
    vocab: Vocabulary,
    config: SamplingConfig | None = None,
    encoder_config: EncoderConfig | None = None,
    batch_docs: int = 4,
) -> SimilarityIndex:
    """Fit the similarity encoder and return frozen per-document cosines."""
    config = config or SamplingConfig()
    config.validate()
    torch.manual_seed(config.seed)
    model = _SimilarityEncoder(vocab.size, encoder_config or EncoderConfig())
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr)
    shuffler = torch.Generator().manual_seed(config.seed)
    trainable = [d for d in docs if len(d.mentions) >= 2]
    for _ in range(max(0, config.epochs)):
        order = torch.randperm(len(trainable), generator=shuffler).tolist()
        for lo in range(0, len(order), batch_docs):
            batch = [trainable[i] for i in order[lo : lo + batch_docs]]
            losses = []
            for doc in batch:
                embeddings = model.mention_embeddings(doc, vocab)
                if embeddings is None:
                    continue
                cos = _doc_cosines(embeddings)
                mentions = doc.mentions_in_order()
                chain = {m.mention_id: doc.chain_of(m.mention_id) for m in mentions}
                pos, neg = [], []
                for i in range(len(mentions)):
                    for j in range(i + 1, len(mentions)):
                        same = chain[mentions[i].mention_id] == chain[mentions[j].mention_id]
                        (pos if same else neg).append(cos[i, j])
                if pos and neg:
                    losses.append(
                        circle_loss(torch.stack(pos), torch.stack(neg), config.scale)
                    )
            if not losses:
                continue
            loss = torch.stack(losses).mean()
            if not torch.isfinite(loss):
                raise TrainingDiverged("similarity training produced a non-finite loss")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
    mention_order: dict[str, list[str]] = {}
    sims: dict[str, dict[frozenset, float]] = {}
    with torch.no_grad():
        for doc in docs:
            mentions = [m.mention_id for m in doc.mentions_in_order()]
            mention_order[doc.doc_id] = mentions
            table: dict[frozenset, float] = {}
            if len(mentions) >= 2:
                embeddings = model.mention_embeddings(doc, vocab)
                if embeddings is not None:
                    cos = _doc_cosines(embeddings)
                    for i in range(len(mentions)):
                        for j in range(i + 1, len(mentions)):
                            table[frozenset((mentions[i], mentions[j]))] = float(cos[i, j])
            sims[doc.doc_id] = table
    return SimilarityIndex(mention_order, sims)


@dataclass
class SamplingReport:
    strategy: str
    before: dict[str, int] = field(default_factory=dict)
    after: dict[str, int] = field(default_factory=dict)


def _pair_counts(pairs: Sequence[MentionPair]) -> dict[str, int]:
    pos = sum(1 for p in pairs if p.coref_label)
    return {"coref": pos, "non_coref": len(pairs) - pos, "all": len(pairs)}


def _near_miss_keep(
    pairs: Sequence[MentionPair], index: SimilarityIndex, k: int
) -> set[tuple[str, str, str]]:
    keep: set[tuple[str, str, str]] = set()
    negatives_of: dict[tuple[str, str], list[MentionPair]] = {}
    for pair in pairs:
        if pair.coref_label:
            continue
        negatives_of.setdefault((pair.doc_id, pair.first), []).append(pair)
        negatives_of.setdefault((pair.doc_id, pair.second), []).append(pair)
    for (doc_id, mention), incident in negatives_of.items():
        order = {m: i for i, m in enumerate(index.mentions(doc_id))}
        scored = []
        for pair in incident:
            other = pair.second if pair.first == mention else pair.first
            scored.append((-index.sim(doc_id, mention, other), order[other], pair))
        scored.sort(key=lambda item: item[:2])
        for _, _, pair in scored[:k]:
            keep.add((pair.doc_id, pair.first, pair.second))
    return keep


def _easy_mentions(
    pairs_by_doc: Mapping[str, Sequence[MentionPair]],
    index: SimilarityIndex,
    k: int,
    mode: str,
) -> set[tuple[str, str]]:
    labels: dict[tuple[str, frozenset], bool] = {}
    for doc_id, doc_pairs in pairs_by_doc.items():
        for pair in doc_pairs:
            labels[(doc_id, frozenset((pair.first, pair.second)))] = pair.coref_label
    easy: set[tuple[str, str]] = set()
    for doc_id in pairs_by_doc:
        for mention in index.mentions(doc_id):
            neighbors = [m for m, _ in index.neighbors(doc_id, mention)[:k]]
            if not neighbors:
                continue
            if mode == ENN1_PAIRWISE:
                flags = [labels[(doc_id, frozenset((mention, n)))] for n in neighbors]
            else:
                flags = [
                    labels[(doc_id, frozenset((a, b)))]
                    for i, a in enumerate(neighbors)
                    for b in neighbors[i + 1 :]
                ] or [True]
            if all(flags) or not any(flags):
                easy.add((doc_id, mention))
    return easy


def apply_sampling(
    pairs: Sequence[MentionPair],
    index: SimilarityIndex | None,
    config: SamplingConfig | None = None,
) -> tuple[list[MentionPair], SamplingReport]:
    """Filter negative pairs per the configured strategy; positives all stay."""
    config = config or SamplingConfig()
    config.validate()
    report = SamplingReport(config.strategy, before=_pair_counts(pairs))
    if config.strategy == STRATEGY_NONE:
        retained = list(pairs)
        report.after = _pair_counts(retained)
        return retained, report
    if config.strategy == STRATEGY_RANDOM:
        positive_idx = [i for i, p in enumerate(pairs) if p.coref_label]
        negative_idx = [i for i, p in enumerate(pairs) if not p.coref_label]
        if len(negative_idx) > len(positive_idx):
            rng = random.Random(config.seed)
            negative_idx = rng.sample(negative_idx, len(positive_idx))
        retained = [pairs[i] for i in sorted(positive_idx + negative_idx)]
        report.after = _pair_counts(retained)
        return retained, report
    if index is None:
        raise ConfigError(f"strategy {config.strategy!r} needs a similarity index")
    if config.strategy == STRATEGY_DROP_DISTANT:
        retained = [
            p
            for p in pairs
            if p.coref_label or index.sim(p.doc_id, p.first, p.second) >= config.gamma
        ]
    elif config.strategy == STRATEGY_NEAR_MISS:
        keep = _near_miss_keep(pairs, index, config.k)
        retained = [
            p for p in pairs if p.coref_label or (p.doc_id, p.first, p.second) in keep
        ]
    else:  # STRATEGY_DROP_EASY
        pairs_by_doc: dict[str, list[MentionPair]] = {}
        for pair in pairs:
            pairs_by_doc.setdefault(pair.doc_id, []).append(pair)
        easy = _easy_mentions(pairs_by_doc, index, config.k, config.enn1_mode)
        retained = [
            p
            for p in pairs
            if p.coref_label
            or ((p.doc_id, p.first) not in easy and (p.doc_id, p.second) not in easy)
        ]
    report.after = _pair_counts(retained)
    return retained, report
