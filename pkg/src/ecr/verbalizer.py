"""Label words and label scoring for the prompt mask slots.

Each mask slot is read through a verbalizer: an ordered set of labels, each
bound to one vocabulary token.  Virtual label words are new trainable tokens
whose embeddings start at the arithmetic mean of their description-token
embeddings; real label words reuse existing vocabulary entries.  A label
distribution is the softmax of the label-word logits only.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Sequence

import torch

from .encoder import Encoder, Vocabulary, add_virtual_token
from .errors import ConfigError
from . import template

# Word sets whose mean embeddings seed the compatibility label words.
COMPATIBLE_WORDS = ("same", "related", "relevant", "similar", "matching", "matched")
INCOMPATIBLE_WORDS = ("different", "unrelated", "irrelevant", "dissimilar", "mismatched")

LABEL_COREF = "coref"
LABEL_NON_COREF = "non_coref"
LABEL_COMPATIBLE = "compatible"
LABEL_INCOMPATIBLE = "incompatible"


def label_word_inventory() -> list[str]:
    """Ordinary words the verbalizers may bind; include these in the vocabulary."""
    words = set(COMPATIBLE_WORDS) | set(INCOMPATIBLE_WORDS)
    words.update(("same", "different", "yes", "no", "refer", "not", "to"))
    return sorted(words)


@dataclass(frozen=True)
class Verbalizer:
    """Ordered labels, their token ids, and (for virtual words) descriptions."""

    name: str
    labels: tuple[str, ...]
    token_ids: tuple[int, ...]
    description_ids: Mapping[str, tuple[int, ...]]

    def __post_init__(self) -> None:
        if len(self.labels) != len(self.token_ids):
            raise ConfigError(f"verbalizer {self.name!r}: labels and token ids differ")
        if len(set(self.token_ids)) != len(self.token_ids):
            raise ConfigError(f"verbalizer {self.name!r}: duplicate label tokens")

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"verbalizer {self.name!r} has no label {label!r}") from None


def score_labels(logits: torch.Tensor, verbalizer: Verbalizer) -> torch.Tensor:
    """Label probabilities: softmax restricted to the verbalizer's token logits."""
    return log_score_labels(logits, verbalizer).exp()


def log_score_labels(logits: torch.Tensor, verbalizer: Verbalizer) -> torch.Tensor:
    ids = torch.tensor(verbalizer.token_ids, dtype=torch.long)
    return torch.log_softmax(logits[..., ids], dim=-1)


def type_description(event_type: str) -> list[str]:
    """Split an event-type name into lowercase description words."""
    return [w for w in re.split(r"[^0-9a-zA-Z]+", event_type.lower()) if w]


def _virtual_from_words(
    name: str, words: Sequence[str], vocab: Vocabulary, encoder: Encoder
) -> tuple[int, tuple[int, ...]]:
    if not words:
        raise ConfigError(f"virtual label word {name!r} has an empty description")
    ids = tuple(vocab.text_id(w) for w in words)
    return add_virtual_token(vocab, name, ids, encoder), ids


def build_type_verbalizer(
    event_types: Sequence[str], vocab: Vocabulary, encoder: Encoder
) -> Verbalizer:
    """One virtual label word per event type, seeded from its name's words."""
    labels, ids, descs = [], [], {}
    for event_type in event_types:
        desc = type_description(event_type)
        if not desc:
            raise ConfigError(f"event type {event_type!r} has no description words")
        token_id, desc_ids = _virtual_from_words(
            f"[TYPE={event_type}]", desc, vocab, encoder
        )
        labels.append(event_type)
        ids.append(token_id)
        descs[event_type] = desc_ids
    if not labels:
        raise ConfigError("the event-type inventory is empty")
    return Verbalizer("type", tuple(labels), tuple(ids), descs)


def build_compat_verbalizer(vocab: Vocabulary, encoder: Encoder) -> Verbalizer:
    """Two virtual words — compatible/incompatible — seeded from word sets."""
    comp_id, comp_desc = _virtual_from_words(
        "[COMPATIBLE]", COMPATIBLE_WORDS, vocab, encoder
    )
    incomp_id, incomp_desc = _virtual_from_words(
        "[INCOMPATIBLE]", INCOMPATIBLE_WORDS, vocab, encoder
    )
    return Verbalizer(
        "compat",
        (LABEL_COMPATIBLE, LABEL_INCOMPATIBLE),
        (comp_id, incomp_id),
        {LABEL_COMPATIBLE: comp_desc, LABEL_INCOMPATIBLE: incomp_desc},
    )


def build_coref_verbalizer(
    vocab: Vocabulary, encoder: Encoder, variant: str = template.VARIANT_FULL
) -> Verbalizer:
    """Coreference labels for the final mask, per template variant.

    The full, plain, and soft templates read real words (same/different); the
    question template reads yes/no; the connective template uses virtual words
    describing the relation (refer to / not refer to).
    """
    if variant in (template.VARIANT_FULL, template.VARIANT_NORMAL, template.VARIANT_SOFT):
        return Verbalizer(
            "coref",
            (LABEL_COREF, LABEL_NON_COREF),
            (vocab.id("same"), vocab.id("different")),
            {},
        )
    if variant == template.VARIANT_QUESTION:
        return Verbalizer(
            "coref",
            (LABEL_COREF, LABEL_NON_COREF),
            (vocab.id("yes"), vocab.id("no")),
            {},
        )
    if variant == template.VARIANT_CONNECT:
        ref_id, ref_desc = _virtual_from_words(
            "[REFERS-TO]", ("refer", "to"), vocab, encoder
        )
        not_id, not_desc = _virtual_from_words(
            "[NOT-REFERS-TO]", ("not", "refer", "to"), vocab, encoder
        )
        return Verbalizer(
            "coref",
            (LABEL_COREF, LABEL_NON_COREF),
            (ref_id, not_id),
            {LABEL_COREF: ref_desc, LABEL_NON_COREF: not_desc},
        )
    raise ConfigError(f"unknown template variant {variant!r}")


def build_verbalizers(
    event_types: Sequence[str],
    vocab: Vocabulary,
    encoder: Encoder,
    variant: str = template.VARIANT_FULL,
) -> dict[str, Verbalizer]:
    """All verbalizers for a variant; the full variant gets type and compat too."""
    out: dict[str, Verbalizer] = {}
    if variant == template.VARIANT_FULL:
        out["type"] = build_type_verbalizer(event_types, vocab, encoder)
        out["compat"] = build_compat_verbalizer(vocab, encoder)
    out["coref"] = build_coref_verbalizer(vocab, encoder, variant)
    return out


def verbalizer_records(verbalizers: Mapping[str, Verbalizer], vocab: Vocabulary) -> list[dict]:
    """Flat dump of every label binding: label, token, id, description tokens."""
    records = []
    for name in sorted(verbalizers):
        verb = verbalizers[name]
        for label, token_id in zip(verb.labels, verb.token_ids):
            desc = verb.description_ids.get(label, ())
            records.append(
                {
                    "verbalizer": name,
                    "label": label,
                    "token": vocab.token(token_id),
                    "token_id": token_id,
                    "description": [vocab.token(i) for i in desc],
                }
            )
    return records
