"""Joint training and prediction for prompt-based pair classification.

For the full template each pair contributes four cross-entropy tasks: the two
anchor type masks (averaged into one type-prediction loss), the
type-compatibility mask, the argument-compatibility mask, and the coreference
mask.  Compatibility losses sum into one matching loss, and the total is
log(1 + L) summed over the type, matching, and coreference losses, which keeps
any single task from dominating.  Optionally every step also runs a second
forward pass over the same prompt with all trigger copies masked, and each
task loss is the average of the two passes, forcing the model to read context
rather than memorize trigger words.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import torch
from torch import nn

from .corpus import Document, MentionPair
from .encoder import Encoder, EncoderConfig, Vocabulary
from .errors import ConfigError, TrainingDiverged
from .matching import MatchingConfig, MatchingHead
from . import template
from .template import PromptLayout, assemble_prompt, mask_triggers
from .verbalizer import (
    LABEL_COMPATIBLE,
    LABEL_COREF,
    LABEL_INCOMPATIBLE,
    LABEL_NON_COREF,
    Verbalizer,
    build_verbalizers,
    log_score_labels,
)

CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 4
    lr: float = 5e-4
    seed: int = 42
    max_len: int = 512
    trigger_mask: bool = True
    variant: str = template.VARIANT_FULL
    warmup_epochs: int = 0
    warmup_lr: float = 1e-3

    def validate(self) -> None:
        if self.epochs < 0 or self.warmup_epochs < 0:
            raise ConfigError("epoch counts must be non-negative")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")
        if self.variant not in template.VARIANTS:
            raise ConfigError(f"unknown template variant {self.variant!r}")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "lr": self.lr,
            "seed": self.seed,
            "max_len": self.max_len,
            "trigger_mask": self.trigger_mask,
            "variant": self.variant,
            "warmup_epochs": self.warmup_epochs,
            "warmup_lr": self.warmup_lr,
        }


@dataclass
class LossBundle:
    """Per-batch task losses and their combined value (tensors during training)."""

    type_pred: torch.Tensor
    type_compat: torch.Tensor
    arg_compat: torch.Tensor
    coref: torch.Tensor
    joint: torch.Tensor

    @property
    def compat(self) -> torch.Tensor:
        return self.type_compat + self.arg_compat

    def to_floats(self) -> dict[str, float]:
        def scalar(value: torch.Tensor) -> float:
            return float(value.detach()) if isinstance(value, torch.Tensor) else float(value)

        return {
            "type_loss": scalar(self.type_pred),
            "type_compat_loss": scalar(self.type_compat),
            "arg_compat_loss": scalar(self.arg_compat),
            "compat_loss": scalar(self.compat),
            "coref_loss": scalar(self.coref),
            "joint_loss": scalar(self.joint),
        }


def joint_loss(type_loss, compat_loss, coref_loss):
    """Combine non-negative task losses as sum of log(1 + L_i).

    Accepts floats or scalar tensors; gradients flow through tensors, and
    d(total)/dL_i = 1 / (1 + L_i).
    """
    parts = (type_loss, compat_loss, coref_loss)
    if any(isinstance(p, torch.Tensor) for p in parts):
        total = None
        for p in parts:
            p = p if isinstance(p, torch.Tensor) else torch.tensor(float(p))
            term = torch.log1p(p)
            total = term if total is None else total + term
        return total
    for p in parts:
        if p < 0:
            raise ConfigError(f"task losses must be non-negative, got {p}")
    return sum(math.log1p(p) for p in parts)


@dataclass(frozen=True)
class PairLabels:
    """Gold label indices for one pair's mask slots."""

    type_first: int
    type_second: int
    type_compat: int
    arg_compat: int
    coref: int


def pair_labels(pair: MentionPair, doc: Document, type_verbalizer: Verbalizer | None) -> PairLabels:
    compat = lambda flag: 0 if flag else 1  # label order: positive first
    if type_verbalizer is None:
        t1 = t2 = 0
    else:
        t1 = type_verbalizer.index(doc.mention(pair.first).event_type)
        t2 = type_verbalizer.index(doc.mention(pair.second).event_type)
    return PairLabels(
        type_first=t1,
        type_second=t2,
        type_compat=compat(pair.type_compat_label),
        arg_compat=compat(pair.coref_label),
        coref=compat(pair.coref_label),
    )


class PromptModel(nn.Module):
    """Encoder, matching head, and verbalizers for one template variant."""

    def __init__(
        self,
        encoder: Encoder,
        verbalizers: Mapping[str, Verbalizer],
        variant: str = template.VARIANT_FULL,
        matching: MatchingHead | None = None,
        event_types: Sequence[str] = (),
    ):
        super().__init__()
        if variant not in template.VARIANTS:
            raise ConfigError(f"unknown template variant {variant!r}")
        if variant == template.VARIANT_FULL:
            if matching is None:
                raise ConfigError("the full variant requires a matching head")
            missing = {"type", "compat", "coref"} - set(verbalizers)
            if missing:
                raise ConfigError(f"full variant needs verbalizers {sorted(missing)}")
        elif "coref" not in verbalizers:
            raise ConfigError("baseline variants need a coref verbalizer")
        self.encoder = encoder
        self.matching = matching if variant == template.VARIANT_FULL else None
        self.verbalizers = dict(verbalizers)
        self.variant = variant
        self.event_types = tuple(event_types)

    def forward(self, layouts: Sequence[PromptLayout]) -> list[dict[str, torch.Tensor]]:
        """Log label distributions for every mask slot of every layout."""
        if not layouts:
            return []
        dtype = self.encoder.embedding.dtype
        lengths = [len(l.token_ids) for l in layouts]
        width = max(lengths)
        pad = 0  # PAD token id
        ids = torch.full((len(layouts), width), pad, dtype=torch.long)
        pad_mask = torch.ones(len(layouts), width, dtype=torch.bool)
        for i, layout in enumerate(layouts):
            ids[i, : lengths[i]] = torch.tensor(layout.token_ids, dtype=torch.long)
            pad_mask[i, : lengths[i]] = False
        hidden = self.encoder.encode(ids, pad_mask if len(layouts) > 1 else None)
        outputs = []
        for i, layout in enumerate(layouts):
            states = hidden[i]
            if self.variant == template.VARIANT_FULL:
                outputs.append(self._full_slots(states, layout))
            else:
                logits = self.encoder.mlm_logits(states[layout.slots[template.SLOT_COREF]])
                outputs.append({"coref": log_score_labels(logits, self.verbalizers["coref"])})
        return outputs

    def _full_slots(self, states: torch.Tensor, layout: PromptLayout) -> dict[str, torch.Tensor]:
        slots = layout.slots
        pooled_first = self.matching.pool_span(states, *layout.anchor_spans["first"])
        pooled_second = self.matching.pool_span(states, *layout.anchor_spans["second"])
        type_first = states[slots[template.SLOT_TYPE_1]]
        type_second = states[slots[template.SLOT_TYPE_2]]
        new_type, new_arg, new_coref = self.matching.update_mask_embeddings(
            states[slots[template.SLOT_TYPE_COMPAT]],
            states[slots[template.SLOT_ARG_COMPAT]],
            states[slots[template.SLOT_COREF]],
            pooled_first,
            pooled_second,
            type_first,
            type_second,
        )
        head = self.encoder.mlm_logits
        return {
            "type_1": log_score_labels(head(type_first), self.verbalizers["type"]),
            "type_2": log_score_labels(head(type_second), self.verbalizers["type"]),
            "type_compat": log_score_labels(head(new_type), self.verbalizers["compat"]),
            "arg_compat": log_score_labels(head(new_arg), self.verbalizers["compat"]),
            "coref": log_score_labels(head(new_coref), self.verbalizers["coref"]),
        }


def compute_losses(
    outputs: Sequence[Mapping[str, torch.Tensor]],
    labels: Sequence[PairLabels],
    variant: str = template.VARIANT_FULL,
) -> LossBundle:
    """Batch-mean task losses plus the combined loss for one forward pass."""
    if len(outputs) != len(labels):
        raise ConfigError("outputs and labels differ in length")
    if not outputs:
        raise ConfigError("cannot compute losses for an empty batch")
    zero = torch.zeros((), dtype=outputs[0]["coref"].dtype)
    type_pred = type_compat = arg_compat = coref = zero
    for out, lab in zip(outputs, labels):
        coref = coref - out["coref"][lab.coref]
        if variant == template.VARIANT_FULL:
            type_pred = type_pred - 0.5 * (
                out["type_1"][lab.type_first] + out["type_2"][lab.type_second]
            )
            type_compat = type_compat - out["type_compat"][lab.type_compat]
            arg_compat = arg_compat - out["arg_compat"][lab.arg_compat]
    n = len(outputs)
    bundle_parts = [p / n for p in (type_pred, type_compat, arg_compat, coref)]
    joint = joint_loss(bundle_parts[0], bundle_parts[1] + bundle_parts[2], bundle_parts[3])
    return LossBundle(*bundle_parts, joint=joint)


def average_bundles(normal: LossBundle, masked: LossBundle) -> LossBundle:
    """Per-task average of a plain pass and a trigger-masked pass."""
    type_pred = 0.5 * (normal.type_pred + masked.type_pred)
    type_compat = 0.5 * (normal.type_compat + masked.type_compat)
    arg_compat = 0.5 * (normal.arg_compat + masked.arg_compat)
    coref = 0.5 * (normal.coref + masked.coref)
    joint = joint_loss(type_pred, type_compat + arg_compat, coref)
    return LossBundle(type_pred, type_compat, arg_compat, coref, joint)


@dataclass
class TrainResult:
    loss_log: list[dict] = field(default_factory=list)
    seconds: float = 0.0


def build_model(
    vocab: Vocabulary,
    event_types: Sequence[str],
    encoder_config: EncoderConfig | None = None,
    matching_config: MatchingConfig | None = None,
    variant: str = template.VARIANT_FULL,
    seed: int = 42,
) -> PromptModel:
    """Construct a seeded model and register its virtual label words."""
    torch.manual_seed(seed)
    encoder = Encoder(vocab.size, encoder_config)
    verbalizers = build_verbalizers(event_types, vocab, encoder, variant)
    matching = None
    if variant == template.VARIANT_FULL:
        matching = MatchingHead(encoder.config.hidden, matching_config)
        matching.to(encoder.config.torch_dtype())
    return PromptModel(encoder, verbalizers, variant, matching, event_types)


def _layout_cache(
    docs: Mapping[str, Document],
    pairs: Sequence[MentionPair],
    vocab: Vocabulary,
    config: TrainConfig,
) -> tuple[list[PromptLayout], list[PromptLayout]]:
    layouts, masked = [], []
    for pair in pairs:
        layout = assemble_prompt(
            docs[pair.doc_id], pair, vocab, config.variant, config.max_len
        )
        layouts.append(layout)
        masked.append(mask_triggers(layout, vocab) if config.trigger_mask else layout)
    return layouts, masked


def train(
    docs: Sequence[Document],
    pairs: Sequence[MentionPair],
    vocab: Vocabulary,
    model: PromptModel,
    config: TrainConfig | None = None,
) -> TrainResult:
    """Optimize the model on labeled pairs; returns the per-epoch loss log."""
    config = config or TrainConfig()
    config.validate()
    if not pairs:
        raise ConfigError("no training pairs were provided")
    by_id = {d.doc_id: d for d in docs}
    if config.warmup_epochs:
        mlm_pretrain(
            model.encoder, docs, vocab, config.warmup_epochs, config.warmup_lr, config.seed
        )
    layouts, masked_layouts = _layout_cache(by_id, pairs, vocab, config)
    type_verb = model.verbalizers.get("type")
    labels = [pair_labels(p, by_id[p.doc_id], type_verb) for p in pairs]
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr)
    shuffler = torch.Generator().manual_seed(config.seed)
    result = TrainResult()
    start = time.perf_counter()
    for epoch in range(1, config.epochs + 1):
        epoch_start = time.perf_counter()
        order = torch.randperm(len(pairs), generator=shuffler).tolist()
        sums: dict[str, float] = {}
        seen = 0
        for lo in range(0, len(order), config.batch_size):
            batch = order[lo : lo + config.batch_size]
            optimizer.zero_grad()
            bundle = compute_losses(
                model([layouts[i] for i in batch]),
                [labels[i] for i in batch],
                model.variant,
            )
            if config.trigger_mask:
                masked_bundle = compute_losses(
                    model([masked_layouts[i] for i in batch]),
                    [labels[i] for i in batch],
                    model.variant,
                )
                bundle = average_bundles(bundle, masked_bundle)
            if not torch.isfinite(bundle.joint):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, pair offset {lo}: "
                    f"{bundle.to_floats()}"
                )
            bundle.joint.backward()
            optimizer.step()
            for key, value in bundle.to_floats().items():
                sums[key] = sums.get(key, 0.0) + value * len(batch)
            seen += len(batch)
        record = {"epoch": epoch}
        record.update({k: v / seen for k, v in sums.items()})
        record["seconds"] = time.perf_counter() - epoch_start
        result.loss_log.append(record)
    result.seconds = time.perf_counter() - start
    return result


def predict_pairs(
    model: PromptModel,
    docs: Sequence[Document],
    pairs: Sequence[MentionPair],
    vocab: Vocabulary,
    max_len: int = 512,
    batch_size: int = 16,
) -> list[float]:
    """Coreference probability for each pair, in input order."""
    by_id = {d.doc_id: d for d in docs}
    coref_index = model.verbalizers["coref"].index(LABEL_COREF)
    layouts = [
        assemble_prompt(by_id[p.doc_id], p, vocab, model.variant, max_len) for p in pairs
    ]
    probs: list[float] = []
    with torch.no_grad():
        for lo in range(0, len(layouts), batch_size):
            for out in model(layouts[lo : lo + batch_size]):
                probs.append(float(out["coref"][coref_index].exp()))
    return probs


def predict_pair(
    model: PromptModel,
    doc: Document,
    pair: MentionPair,
    vocab: Vocabulary,
    max_len: int = 512,
) -> float:
    return predict_pairs(model, [doc], [pair], vocab, max_len)[0]


def mlm_pretrain(
    encoder: Encoder,
    docs: Sequence[Document],
    vocab: Vocabulary,
    epochs: int,
    lr: float = 1e-3,
    seed: int = 42,
    mask_rate: float = 0.15,
) -> list[float]:
    """Optional warm-up: denoise randomly masked document tokens."""
    from .encoder import tokenize

    generator = torch.Generator().manual_seed(seed)
    optimizer = torch.optim.Adam(encoder.parameters(), lr=lr)
    losses = []
    sequences = [
        tokenize(d.tokens(), vocab)[: encoder.config.max_positions] for d in docs
    ]
    sequences = [s for s in sequences if len(s) >= 2]
    for _ in range(max(0, epochs)):
        total, count = 0.0, 0
        order = torch.randperm(len(sequences), generator=generator).tolist()
        for idx in order:
            ids = torch.tensor(sequences[idx], dtype=torch.long)
            scores = torch.rand(len(ids), generator=generator)
            masked = scores < mask_rate
            if not masked.any():
                masked[int(scores.argmin())] = True
            noisy = ids.clone()
            noisy[masked] = vocab.mask_id
            hidden = encoder.encode(noisy)
            logits = encoder.mlm_logits(hidden[masked])
            loss = nn.functional.cross_entropy(logits, ids[masked])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += float(loss.detach())
            count += 1
        losses.append(total / max(count, 1))
    return losses


def save_model(
    model: PromptModel,
    vocab: Vocabulary,
    path: str | Path,
    metadata: Mapping | None = None,
) -> None:
    """Write a self-contained checkpoint: configs, vocabulary, and weights."""
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "variant": model.variant,
        "event_types": list(model.event_types),
        "encoder_config": model.encoder.config.to_dict(),
        "matching_config": model.matching.config.to_dict() if model.matching else None,
        "vocab_tokens": vocab.tokens(),
        "vocab_base_size": vocab.base_size,
        "verbalizers": {
            name: {
                "labels": list(v.labels),
                "token_ids": list(v.token_ids),
                "description_ids": {k: list(d) for k, d in v.description_ids.items()},
            }
            for name, v in model.verbalizers.items()
        },
        "state_dict": {k: v.detach().clone() for k, v in model.state_dict().items()},
        "metadata": dict(metadata or {}),
    }
    torch.save(payload, str(path))


def load_model(path: str | Path) -> tuple[PromptModel, Vocabulary, dict]:
    """Restore a checkpoint; returns the model, vocabulary, and metadata."""
    payload = torch.load(str(path), weights_only=False)
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise ConfigError(
            f"unsupported checkpoint version {payload.get('format_version')!r}"
        )
    vocab = Vocabulary.restore(payload["vocab_tokens"], payload["vocab_base_size"])
    encoder_config = EncoderConfig(**payload["encoder_config"])
    encoder = Encoder(vocab.size, encoder_config)
    verbalizers = {
        name: Verbalizer(
            name,
            tuple(rec["labels"]),
            tuple(rec["token_ids"]),
            {k: tuple(d) for k, d in rec["description_ids"].items()},
        )
        for name, rec in payload["verbalizers"].items()
    }
    matching = None
    if payload["matching_config"] is not None:
        matching = MatchingHead(encoder.config.hidden, MatchingConfig(**payload["matching_config"]))
        matching.to(encoder.config.torch_dtype())
    model = PromptModel(
        encoder, verbalizers, payload["variant"], matching, payload["event_types"]
    )
    model.load_state_dict(payload["state_dict"])
    return model, vocab, payload.get("metadata", {})


def write_loss_log(log: Sequence[Mapping], path: str | Path) -> None:
    lines = [json.dumps(dict(rec)) for rec in log]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))
