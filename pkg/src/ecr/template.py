"""Prompt construction for event mention pairs.

A full prompt is: prefix template, document segment (with both triggers wrapped
in marker tokens and an anchor template inserted right after each), inference
template.  The anchor templates each carry one type mask; the inference
template carries the type-compatibility, argument-compatibility, and
coreference masks, in that order.

Templates are stored as token lists.  Detokenization joins with spaces but
attaches the punctuation tokens , . ? : to the preceding token, so rendered
prompts read as ordinary sentences.  The exact wordings are frozen in the
versioned fixture ``tests/data/template_fixture.json``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

from .corpus import ArgumentMention, Document, EventMention, MentionPair
from .encoder import E1_END, E1_START, E2_END, E2_START, SOFT_TOKENS, Vocabulary
from .errors import ConfigError, LayoutError

VARIANT_FULL = "corefprompt"
VARIANT_NORMAL = "normal"
VARIANT_CONNECT = "connect"
VARIANT_QUESTION = "question"
VARIANT_SOFT = "soft"
VARIANTS = (VARIANT_FULL, VARIANT_NORMAL, VARIANT_CONNECT, VARIANT_QUESTION, VARIANT_SOFT)

SLOT_TYPE_1 = "type_1"
SLOT_TYPE_2 = "type_2"
SLOT_TYPE_COMPAT = "type_compat"
SLOT_ARG_COMPAT = "arg_compat"
SLOT_COREF = "coref"
FULL_SLOTS = (SLOT_TYPE_1, SLOT_TYPE_2, SLOT_TYPE_COMPAT, SLOT_ARG_COMPAT, SLOT_COREF)

ATTACHED_PUNCT = {",", ".", "?", ":"}

_PREFIX_A = "In the following text , the focus is on the events expressed by".split()
_PREFIX_B = ", and it needs to judge whether they refer to the same or different events .".split()
_INFER_A = "In conclusion , the events expressed by".split()
_INFER_B = "have".split()
_INFER_C = "event type and".split()
_INFER_D = "participants , so they refer to".split()
_INFER_E = "event .".split()


def template_word_inventory() -> list[str]:
    """Every ordinary word any template can emit; include these in the vocabulary."""
    words = set()
    for part in (
        _PREFIX_A,
        _PREFIX_B,
        _INFER_A,
        _INFER_B,
        _INFER_C,
        _INFER_D,
        _INFER_E,
        "Here expresses a event with as participants at".split(),
        "In the following text , events expressed by and refer to event :".split(),
        "the event expressed by".split(),
        "do events refer to the same event ? .".split(),
    ):
        words.update(part)
    return sorted(words)


def detokenize(tokens: Sequence[str]) -> str:
    """Join tokens with spaces, attaching , . ? : to the preceding token."""
    out: list[str] = []
    for tok in tokens:
        if tok in ATTACHED_PUNCT and out:
            out[-1] += tok
        else:
            out.append(tok)
    return " ".join(out)


@dataclass(frozen=True)
class AnchorTemplate:
    """Rendered anchor: token ids, its type-mask slot, its trigger copy span."""

    token_ids: tuple[int, ...]
    type_slot: int
    trigger_span: tuple[int, int]


@dataclass
class PromptLayout:
    """A fully assembled prompt with slot and span bookkeeping.

    ``slots`` maps slot names to positions that hold MASK tokens.
    ``anchor_spans`` holds the trigger copies pooled for pair matching.
    ``trigger_spans`` lists every trigger copy (template and segment alike),
    which is what trigger masking replaces.
    """

    token_ids: list[int]
    slots: dict[str, int]
    anchor_spans: dict[str, tuple[int, int]]
    trigger_spans: list[tuple[int, int]]
    marker_positions: list[int]
    variant: str
    doc_id: str
    first: str
    second: str

    def __post_init__(self) -> None:
        n = len(self.token_ids)
        for name, pos in self.slots.items():
            if not 0 <= pos < n:
                raise LayoutError(f"slot {name!r} position {pos} outside the prompt")
        for start, end in list(self.anchor_spans.values()) + self.trigger_spans:
            if not 0 <= start <= end < n:
                raise LayoutError(f"span ({start}, {end}) outside the prompt")

    def words(self, vocab: Vocabulary) -> list[str]:
        return [vocab.token(i) for i in self.token_ids]

    def text(self, vocab: Vocabulary) -> str:
        return detokenize(self.words(vocab))


class _Builder:
    """Accumulates prompt tokens while tracking positions of interest."""

    def __init__(self, vocab: Vocabulary):
        self.vocab = vocab
        self.ids: list[int] = []
        self.slots: dict[str, int] = {}
        self.anchor_spans: dict[str, tuple[int, int]] = {}
        self.trigger_spans: list[tuple[int, int]] = []
        self.markers: list[int] = []

    def words(self, words: Sequence[str]) -> None:
        self.ids.extend(self.vocab.text_id(w) for w in words)

    def special(self, token: str) -> int:
        pos = len(self.ids)
        idx = self.vocab.id(token)
        if not self.vocab.is_reserved(token):
            raise ConfigError(f"{token!r} is not a reserved token")
        self.ids.append(idx)
        return pos

    def marker(self, token: str) -> None:
        self.markers.append(self.special(token))

    def mask(self, slot: str | None = None) -> int:
        pos = len(self.ids)
        self.ids.append(self.vocab.mask_id)
        if slot is not None:
            self.slots[slot] = pos
        return pos

    def trigger(self, tokens: Sequence[str]) -> tuple[int, int]:
        start = len(self.ids)
        self.words(tokens)
        span = (start, len(self.ids) - 1)
        self.trigger_spans.append(span)
        return span

    def marked_trigger(self, mention: EventMention, which: int) -> tuple[int, int]:
        start, end = (E1_START, E1_END) if which == 1 else (E2_START, E2_END)
        self.marker(start)
        span = self.trigger(mention.trigger_tokens)
        self.marker(end)
        return span


def _comma_joined(args: Sequence[ArgumentMention]) -> list[str]:
    words: list[str] = []
    for i, arg in enumerate(args):
        if i:
            words.append(",")
        words.extend(arg.tokens())
    return words


def _anchor_words_into(
    builder: _Builder, mention: EventMention, which: int
) -> tuple[int, tuple[int, int]]:
    """Append one anchor template; returns its type-mask position and trigger span."""
    builder.words(["Here"])
    span = builder.marked_trigger(mention, which)
    builder.words(["expresses", "a"])
    mask_pos = builder.mask()
    builder.words(["event"])
    if mention.participants:
        builder.words(["with"] + _comma_joined(mention.participants) + ["as", "participants"])
    if mention.locations:
        builder.words(["at"] + _comma_joined(mention.locations))
    return mask_pos, span


def render_anchor(mention: EventMention, which: int, vocab: Vocabulary) -> AnchorTemplate:
    """Render one anchor template in isolation (one type mask, one trigger copy).

    Argument-free mentions drop the participant and location clauses entirely.
    """
    if which not in (1, 2):
        raise ConfigError("which must be 1 (first mention) or 2 (second mention)")
    builder = _Builder(vocab)
    mask_pos, span = _anchor_words_into(builder, mention, which)
    return AnchorTemplate(tuple(builder.ids), mask_pos, span)


@dataclass(frozen=True)
class SegmentWindow:
    """A truncated run of document tokens containing both triggers.

    Spans are relative to ``tokens``; ``extra_spans`` are the trigger spans of
    any other mentions that fall fully inside the window.
    """

    tokens: tuple[str, ...]
    first_span: tuple[int, int]
    second_span: tuple[int, int]
    extra_spans: tuple[tuple[int, int], ...]


def segment_window(
    doc: Document, first: EventMention, second: EventMention, budget: int
) -> SegmentWindow:
    """Pick a window of at most ``budget`` tokens centered between the triggers."""
    flat = doc.tokens()
    s1, e1 = first.trigger_span
    s2, e2 = second.trigger_span
    if s1 > s2:
        raise LayoutError("mentions are not in document order")
    need = e2 - s1 + 1
    if budget < need:
        raise LayoutError(
            f"length budget {budget} cannot retain both trigger regions (need {need})"
        )
    extra = min(budget, len(flat)) - need
    w0 = s1 - extra // 2
    w1 = e2 + (extra - extra // 2)
    if w0 < 0:
        w1 += -w0
        w0 = 0
    if w1 > len(flat) - 1:
        w0 = max(0, w0 - (w1 - (len(flat) - 1)))
        w1 = len(flat) - 1
    shift = -w0
    extras = []
    for m in doc.mentions_in_order():
        if m.mention_id in (first.mention_id, second.mention_id):
            continue
        ms, me = m.trigger_span
        if w0 <= ms and me <= w1:
            extras.append((ms + shift, me + shift))
    return SegmentWindow(
        tokens=tuple(flat[w0 : w1 + 1]),
        first_span=(s1 + shift, e1 + shift),
        second_span=(s2 + shift, e2 + shift),
        extra_spans=tuple(extras),
    )


def _segment_into(
    builder: _Builder,
    window: SegmentWindow,
    first: EventMention,
    second: EventMention,
    anchors: bool,
) -> None:
    """Append the window, wrapping triggers in markers and, when requested,
    inserting each mention's anchor template right after its trigger."""
    spans = {window.first_span: 1, window.second_span: 2}
    extra = set(window.extra_spans)
    pos = 0
    tokens = window.tokens
    while pos < len(tokens):
        hit = next((sp for sp in spans if sp[0] == pos), None)
        if hit is not None:
            which = spans.pop(hit)
            mention = first if which == 1 else second
            segment_span = builder.marked_trigger(mention, which)
            key = "first" if which == 1 else "second"
            if anchors:
                mask_pos, anchor_span = _anchor_words_into(builder, mention, which)
                builder.slots[SLOT_TYPE_1 if which == 1 else SLOT_TYPE_2] = mask_pos
                # Pair matching pools the trigger copy inside the anchor, where
                # the surrounding template puts the mention in a uniform frame.
                builder.anchor_spans[key] = anchor_span
            else:
                builder.anchor_spans[key] = segment_span
            pos = hit[1] + 1
            continue
        ehit = next((sp for sp in extra if sp[0] == pos), None)
        if ehit is not None:
            extra.discard(ehit)
            builder.trigger(tokens[ehit[0] : ehit[1] + 1])
            pos = ehit[1] + 1
            continue
        builder.words([tokens[pos]])
        pos += 1


def _full_fixed_cost(first: EventMention, second: EventMention) -> int:
    """Template token count of the full variant: everything but the segment.

    The segment contributes the window tokens plus four marker wraps; the
    anchor templates carry their own trigger copies and are counted whole.
    """
    probe = Vocabulary([])
    builder = _Builder(probe)
    builder.words(_PREFIX_A)
    builder.marked_trigger(first, 1)
    builder.words(["and"])
    builder.marked_trigger(second, 2)
    builder.words(_PREFIX_B)
    builder.words(_INFER_A)
    builder.marked_trigger(first, 1)
    builder.words(["and"])
    builder.marked_trigger(second, 2)
    builder.words(_INFER_B)
    builder.mask()
    builder.words(_INFER_C)
    builder.mask()
    builder.words(_INFER_D)
    builder.mask()
    builder.words(_INFER_E)
    anchors = len(render_anchor(first, 1, probe).token_ids) + len(
        render_anchor(second, 2, probe).token_ids
    )
    return len(builder.ids) + anchors + 4


def _assemble_full(
    doc: Document,
    first: EventMention,
    second: EventMention,
    pair: MentionPair,
    max_len: int,
    vocab: Vocabulary,
) -> PromptLayout:
    budget = max_len - _full_fixed_cost(first, second)
    window = segment_window(doc, first, second, budget)
    builder = _Builder(vocab)
    # Prefix: frame the two mentions under comparison.
    builder.words(_PREFIX_A)
    builder.marked_trigger(first, 1)
    builder.words(["and"])
    builder.marked_trigger(second, 2)
    builder.words(_PREFIX_B)
    # Segment with anchors.
    _segment_into(builder, window, first, second, anchors=True)
    # Inference: the three reasoning masks.
    builder.words(_INFER_A)
    builder.marked_trigger(first, 1)
    builder.words(["and"])
    builder.marked_trigger(second, 2)
    builder.words(_INFER_B)
    builder.mask(SLOT_TYPE_COMPAT)
    builder.words(_INFER_C)
    builder.mask(SLOT_ARG_COMPAT)
    builder.words(_INFER_D)
    builder.mask(SLOT_COREF)
    builder.words(_INFER_E)
    return PromptLayout(
        token_ids=builder.ids,
        slots=builder.slots,
        anchor_spans=builder.anchor_spans,
        trigger_spans=builder.trigger_spans,
        marker_positions=builder.markers,
        variant=VARIANT_FULL,
        doc_id=doc.doc_id,
        first=pair.first,
        second=pair.second,
    )


def _baseline_head(
    builder: _Builder, variant: str, first: EventMention, second: EventMention
) -> None:
    """Append a baseline template's fixed part (everything before the segment)."""
    if variant == VARIANT_NORMAL:
        builder.words("In the following text , events expressed by".split())
        builder.marked_trigger(first, 1)
        builder.words(["and"])
        builder.marked_trigger(second, 2)
        builder.words(["refer", "to"])
        builder.mask(SLOT_COREF)
        builder.words(["event", ":"])
    elif variant == VARIANT_CONNECT:
        builder.words("In the following text , the event expressed by".split())
        builder.marked_trigger(first, 1)
        builder.mask(SLOT_COREF)
        builder.words("the event expressed by".split())
        builder.marked_trigger(second, 2)
        builder.words([":"])
    elif variant == VARIANT_QUESTION:
        builder.words("In the following text , do events expressed by".split())
        builder.marked_trigger(first, 1)
        builder.words(["and"])
        builder.marked_trigger(second, 2)
        builder.words("refer to the same event ?".split())
        builder.mask(SLOT_COREF)
        builder.words(["."])
    elif variant == VARIANT_SOFT:
        builder.words("In the following text ,".split())
        builder.special(SOFT_TOKENS[0])
        builder.marked_trigger(first, 1)
        builder.special(SOFT_TOKENS[1])
        builder.special(SOFT_TOKENS[2])
        builder.marked_trigger(second, 2)
        builder.special(SOFT_TOKENS[3])
        builder.special(SOFT_TOKENS[4])
        builder.mask(SLOT_COREF)
        builder.special(SOFT_TOKENS[5])
        builder.words([":"])
    else:
        raise ConfigError(f"unknown template variant {variant!r}")


def render_baseline(
    variant: str,
    pair: MentionPair,
    doc: Document,
    vocab: Vocabulary,
    max_len: int = 512,
) -> PromptLayout:
    """Assemble a single-mask baseline prompt: template head, then the segment."""
    first, second = _ordered_mentions(doc, pair)
    probe = _Builder(Vocabulary([]))
    _baseline_head(probe, variant, first, second)
    fixed = len(probe.ids) + 4  # four in-segment marker tokens
    window = segment_window(doc, first, second, max_len - fixed)
    builder = _Builder(vocab)
    _baseline_head(builder, variant, first, second)
    _segment_into(builder, window, first, second, anchors=False)
    return PromptLayout(
        token_ids=builder.ids,
        slots=builder.slots,
        anchor_spans=builder.anchor_spans,
        trigger_spans=builder.trigger_spans,
        marker_positions=builder.markers,
        variant=variant,
        doc_id=doc.doc_id,
        first=pair.first,
        second=pair.second,
    )


def _ordered_mentions(doc: Document, pair: MentionPair) -> tuple[EventMention, EventMention]:
    """The pair's mentions in document order, regardless of pair orientation."""
    first = doc.mention(pair.first)
    second = doc.mention(pair.second)
    if first.trigger_span > second.trigger_span:
        first, second = second, first
    return first, second


def assemble_prompt(
    doc: Document,
    pair: MentionPair,
    vocab: Vocabulary,
    variant: str = VARIANT_FULL,
    max_len: int = 512,
) -> PromptLayout:
    """Build the prompt layout for a mention pair under the given variant."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown template variant {variant!r}")
    if variant == VARIANT_FULL:
        first, second = _ordered_mentions(doc, pair)
        return _assemble_full(doc, first, second, pair, max_len, vocab)
    return render_baseline(variant, pair, doc, vocab, max_len)


def mask_triggers(layout: PromptLayout, vocab: Vocabulary) -> PromptLayout:
    """Replace every token inside every recorded trigger span with MASK.

    Slot positions and all span bookkeeping are unchanged, so the result is a
    drop-in second view of the same pair; the operation is idempotent.
    """
    ids = list(layout.token_ids)
    for start, end in list(layout.trigger_spans) + list(layout.anchor_spans.values()):
        for pos in range(start, end + 1):
            ids[pos] = vocab.mask_id
    return replace(layout, token_ids=ids, slots=dict(layout.slots))
