"""Annotated-document data model, corpus IO, pair enumeration, synthetic generation.

A corpus is line-delimited JSON, one document per line.  Token offsets are
absolute positions in the flattened document (sentence boundaries do not reset
the count) and trigger spans are inclusive ``(start, end)`` pairs.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import ConfigError, ParseError, ValidationError

PARTICIPANT = "participant"
LOCATION = "location"

# Strata for pairs by how many of the two mentions carry any argument.
ARG_NONE = "NoA"
ARG_ONE = "OneA"
ARG_BOTH = "BothA"
ARG_STATES = (ARG_NONE, ARG_ONE, ARG_BOTH)


@dataclass(frozen=True)
class ArgumentMention:
    """A participant or location argument attached to an event mention."""

    text: str
    role: str

    def __post_init__(self) -> None:
        if self.role not in (PARTICIPANT, LOCATION):
            raise ValidationError(f"unknown argument role {self.role!r}")
        if not self.text.strip():
            raise ValidationError("argument text must be non-empty")

    def tokens(self) -> list[str]:
        return self.text.split()


@dataclass(frozen=True)
class EventMention:
    """An event trigger span plus its annotated arguments."""

    mention_id: str
    trigger_span: tuple[int, int]
    trigger_tokens: tuple[str, ...]
    event_type: str
    participants: tuple[ArgumentMention, ...] = ()
    locations: tuple[ArgumentMention, ...] = ()

    @property
    def arguments(self) -> tuple[ArgumentMention, ...]:
        return self.participants + self.locations

    def has_arguments(self) -> bool:
        return bool(self.participants or self.locations)


@dataclass
class Document:
    """One document: sentence-grouped tokens, event mentions, coreference chains.

    ``chains`` partitions the mention ids; singletons appear as chains of one.
    """

    doc_id: str
    sentences: list[list[str]]
    mentions: list[EventMention]
    chains: list[tuple[str, ...]]

    def tokens(self) -> list[str]:
        return [t for sent in self.sentences for t in sent]

    def mention(self, mention_id: str) -> EventMention:
        for m in self.mentions:
            if m.mention_id == mention_id:
                return m
        raise KeyError(f"document {self.doc_id!r} has no mention {mention_id!r}")

    def mentions_in_order(self) -> list[EventMention]:
        """Mentions sorted by trigger position (stable on input order)."""
        indexed = list(enumerate(self.mentions))
        indexed.sort(key=lambda im: (im[1].trigger_span[0], im[1].trigger_span[1], im[0]))
        return [m for _, m in indexed]

    def chain_of(self, mention_id: str) -> int:
        for i, chain in enumerate(self.chains):
            if mention_id in chain:
                return i
        raise KeyError(f"document {self.doc_id!r} has no chain for {mention_id!r}")


@dataclass(frozen=True)
class MentionPair:
    """An ordered intra-document mention pair with its supervision labels."""

    doc_id: str
    first: str
    second: str
    coref_label: bool
    type_compat_label: bool
    arg_state: str


def validate_document(doc: Document) -> None:
    """Check the structural invariants of one document; raise ValidationError."""
    n = len(doc.tokens())
    flat = doc.tokens()
    ids = [m.mention_id for m in doc.mentions]
    if len(set(ids)) != len(ids):
        raise ValidationError(f"document {doc.doc_id!r}: duplicate mention ids")
    for m in doc.mentions:
        s, e = m.trigger_span
        if not (0 <= s <= e < n):
            raise ValidationError(
                f"document {doc.doc_id!r}: mention {m.mention_id!r} span ({s}, {e}) "
                f"outside token range 0..{n - 1}"
            )
        if tuple(flat[s : e + 1]) != m.trigger_tokens:
            raise ValidationError(
                f"document {doc.doc_id!r}: mention {m.mention_id!r} trigger tokens "
                f"do not match the document text at its span"
            )
    chained = [mid for chain in doc.chains for mid in chain]
    if len(chained) != len(set(chained)):
        raise ValidationError(f"document {doc.doc_id!r}: chains overlap")
    if set(chained) != set(ids):
        missing = set(ids) ^ set(chained)
        raise ValidationError(
            f"document {doc.doc_id!r}: chains do not partition the mention ids "
            f"(mismatch on {sorted(missing)})"
        )


def _mention_from_record(rec: Mapping, flat: Sequence[str], doc_id: str) -> EventMention:
    try:
        s, e = int(rec["span"][0]), int(rec["span"][1])
        return EventMention(
            mention_id=str(rec["id"]),
            trigger_span=(s, e),
            trigger_tokens=tuple(flat[s : e + 1]) if 0 <= s <= e < len(flat) else (),
            event_type=str(rec["type"]),
            participants=tuple(
                ArgumentMention(str(t), PARTICIPANT) for t in rec.get("participants", ())
            ),
            locations=tuple(
                ArgumentMention(str(t), LOCATION) for t in rec.get("locations", ())
            ),
        )
    except (KeyError, IndexError, TypeError) as exc:
        raise ValidationError(f"document {doc_id!r}: bad mention record: {exc}") from exc


def document_from_record(rec: Mapping) -> Document:
    if not isinstance(rec, Mapping) or "doc_id" not in rec:
        raise ValidationError("record is not a document object with a doc_id")
    doc_id = str(rec["doc_id"])
    sentences = [[str(t) for t in sent] for sent in rec.get("tokens", ())]
    flat = [t for sent in sentences for t in sent]
    mentions = [_mention_from_record(m, flat, doc_id) for m in rec.get("mentions", ())]
    chains = [tuple(str(mid) for mid in chain) for chain in rec.get("chains", ())]
    doc = Document(doc_id=doc_id, sentences=sentences, mentions=mentions, chains=chains)
    validate_document(doc)
    return doc


def document_to_record(doc: Document) -> dict:
    return {
        "doc_id": doc.doc_id,
        "tokens": [list(sent) for sent in doc.sentences],
        "mentions": [
            {
                "id": m.mention_id,
                "span": list(m.trigger_span),
                "type": m.event_type,
                "participants": [a.text for a in m.participants],
                "locations": [a.text for a in m.locations],
            }
            for m in doc.mentions
        ],
        "chains": [list(chain) for chain in doc.chains],
    }


def load_corpus(path: str | Path) -> list[Document]:
    """Read a line-delimited corpus; parse errors name the offending line."""
    docs = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: line {lineno}: not valid JSON: {exc}") from exc
        try:
            docs.append(document_from_record(rec))
        except ValidationError as exc:
            raise ValidationError(f"{path}: line {lineno}: {exc}") from exc
    return docs


def save_corpus(docs: Iterable[Document], path: str | Path) -> None:
    lines = [json.dumps(document_to_record(d), ensure_ascii=False) for d in docs]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def argument_state(pair: MentionPair, doc: Document) -> str:
    """Classify a pair by how many of its mentions carry any argument."""
    first = doc.mention(pair.first)
    second = doc.mention(pair.second)
    count = int(first.has_arguments()) + int(second.has_arguments())
    return (ARG_NONE, ARG_ONE, ARG_BOTH)[count]


def enumerate_pairs(doc: Document) -> list[MentionPair]:
    """All unordered mention pairs of one document, first mention earlier in text."""
    ordered = doc.mentions_in_order()
    chain_index = {mid: i for i, chain in enumerate(doc.chains) for mid in chain}
    pairs = []
    for i in range(len(ordered)):
        for j in range(i + 1, len(ordered)):
            a, b = ordered[i], ordered[j]
            pair = MentionPair(
                doc_id=doc.doc_id,
                first=a.mention_id,
                second=b.mention_id,
                coref_label=chain_index[a.mention_id] == chain_index[b.mention_id],
                type_compat_label=a.event_type == b.event_type,
                arg_state=ARG_NONE,
            )
            pairs.append(replace(pair, arg_state=argument_state(pair, doc)))
    return pairs


def gold_partition(doc: Document) -> list[set[str]]:
    return [set(chain) for chain in doc.chains]


# --------------------------------------------------------------------------
# Cluster files: "#doc <id>" header, then one space-separated cluster per line.
# --------------------------------------------------------------------------


def write_cluster_file(
    partitions: Mapping[str, Sequence[set[str] | Sequence[str]]],
    path: str | Path,
    header: str | None = None,
) -> None:
    lines = []
    if header:
        lines.append(f"# {header}")
    for doc_id in partitions:
        lines.append(f"#doc {doc_id}")
        clusters = [sorted(c) for c in partitions[doc_id]]
        clusters.sort(key=lambda c: c[0])
        for cluster in clusters:
            lines.append(" ".join(cluster))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_cluster_file(path: str | Path) -> dict[str, list[set[str]]]:
    partitions: dict[str, list[set[str]]] = {}
    current: str | None = None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        text = line.strip()
        if not text:
            continue
        if text.startswith("#doc"):
            parts = text.split(maxsplit=1)
            if len(parts) != 2 or not parts[1].strip():
                raise ParseError(f"{path}: line {lineno}: '#doc' header without an id")
            current = parts[1].strip()
            if current in partitions:
                raise ParseError(f"{path}: line {lineno}: duplicate document {current!r}")
            partitions[current] = []
            continue
        if text.startswith("#"):
            continue  # metadata comment
        if current is None:
            raise ParseError(f"{path}: line {lineno}: cluster line before any '#doc' header")
        members = set(text.split())
        if not members:
            raise ParseError(f"{path}: line {lineno}: empty cluster")
        partitions[current].append(members)
    return partitions


# --------------------------------------------------------------------------
# Synthetic corpus generation.
# --------------------------------------------------------------------------

DEFAULT_TRIGGER_SETS: dict[str, tuple[str, ...]] = {
    "conflict.attack": ("attack", "strike", "bombing", "assault", "raid"),
    "contact.meet": ("meeting", "summit", "talks", "negotiation"),
    "disaster.fire": ("fire", "blaze", "inferno", "wildfire"),
    "justice.arrest": ("arrest", "detention", "capture", "apprehension"),
    "justice.sue": ("lawsuit", "trial", "prosecution", "indictment"),
    "life.die": ("death", "suicide", "killing", "murder", "slaying"),
    "life.injure": ("injury", "wounding", "trauma", "harm"),
    "movement.transport": ("shipment", "convoy", "voyage", "evacuation"),
    "personnel.elect": ("election", "vote", "ballot", "referendum"),
    "transaction.buy": ("purchase", "sale", "acquisition", "takeover"),
}

DEFAULT_PARTICIPANTS: tuple[str, ...] = (
    "the girl", "her ex-husband", "the soldiers", "the rebels", "the company",
    "the minister", "the workers", "the police", "the mayor", "the driver",
    "the protesters", "the committee", "the students", "the villagers",
    "the senator", "the judge", "the miners", "the tourists", "the guards",
    "the farmers", "the union", "the sailors", "the reporter", "the landlord",
)

DEFAULT_LOCATIONS: tuple[str, ...] = (
    "Rome", "the capital", "downtown Boston", "the harbor", "the village square",
    "the station", "the stadium", "the border crossing", "the old market",
    "the courthouse", "the northern district", "the embassy",
)

DEFAULT_FILLER: tuple[str, ...] = (
    "officials", "reported", "that", "witnesses", "described", "how", "events",
    "unfolded", "during", "week", "local", "media", "covered", "extensively",
    "residents", "heard", "news", "about", "while", "others", "remained",
    "cautious", "early", "reports", "suggested", "otherwise", "sources",
    "confirmed", "details", "later", "morning", "evening", "crowd", "gathered",
    "quietly", "nearby", "streets", "stayed", "calm", "after", "before", "again",
)


@dataclass
class GeneratorConfig:
    """Settings for the synthetic corpus generator.

    ``mentions_per_doc`` is the mean; a uniform jitter of ``mention_jitter``
    is applied around it (clipped below at one mention).
    """

    docs: int = 200
    mentions_per_doc: int = 4
    mention_jitter: int = 2
    singleton_rate: float = 0.35
    argument_rate: float = 0.85
    location_rate: float = 0.75
    filler_sentence_rate: float = 0.3
    chain_mean: float = 2.5
    trigger_sets: Mapping[str, Sequence[str]] = field(
        default_factory=lambda: dict(DEFAULT_TRIGGER_SETS)
    )
    participant_pool: Sequence[str] = DEFAULT_PARTICIPANTS
    location_pool: Sequence[str] = DEFAULT_LOCATIONS
    filler_pool: Sequence[str] = DEFAULT_FILLER

    def validate(self) -> None:
        if self.docs < 0:
            raise ConfigError("docs must be non-negative")
        if not self.trigger_sets:
            raise ConfigError("trigger_sets (scenario inventory) must be non-empty")
        if any(not syns for syns in self.trigger_sets.values()):
            raise ConfigError("every event type needs at least one trigger word")
        if not (0.0 <= self.singleton_rate <= 1.0):
            raise ConfigError("singleton_rate must lie in [0, 1]")
        if not self.filler_pool or not self.participant_pool or not self.location_pool:
            raise ConfigError("word pools must be non-empty")


@dataclass
class _Instance:
    """One underlying event: a type plus the entities it involves."""

    event_type: str
    participants: list[str]
    location: str | None


class _Drawer:
    """Draw from a pool without replacement, reshuffling when exhausted."""

    def __init__(self, rng: random.Random, pool: Sequence[str]):
        self._rng = rng
        self._pool = list(pool)
        self._stack: list[str] = []

    def draw(self) -> str:
        if not self._stack:
            self._stack = self._rng.sample(self._pool, len(self._pool))
        return self._stack.pop()


def _mention_sentence(
    rng: random.Random,
    trigger: str,
    participants: Sequence[str],
    location: str | None,
    filler: Sequence[str],
) -> tuple[list[str], int]:
    lead = rng.sample(list(filler), rng.randint(2, 3))
    mid = rng.sample(list(filler), rng.randint(1, 2))
    words = lead + [trigger] + mid
    trigger_pos = len(lead)
    for i, part in enumerate(participants):
        if i:
            words.append("and")
        words.extend(part.split())
    if location is not None:
        words.append("at")
        words.extend(location.split())
    words.extend(rng.sample(list(filler), rng.randint(1, 2)))
    return words, trigger_pos


def _plan_chains(rng: random.Random, config: GeneratorConfig, n_mentions: int) -> list[int]:
    """Assign each mention an instance index; singletons get their own."""
    singleton = [rng.random() < config.singleton_rate for _ in range(n_mentions)]
    grouped = [i for i, s in enumerate(singleton) if not s]
    assignment = [-1] * n_mentions
    next_instance = 0
    if grouped:
        k = len(grouped)
        n_chains = max(1, min(k // 2, round(k / config.chain_mean))) if k >= 2 else 1
        members: list[int] = []
        for c in range(n_chains):
            members.extend([c, c])  # guarantee two members per chain
        while len(members) < k:
            members.append(rng.randrange(n_chains))
        members = members[:k]
        rng.shuffle(members)
        for idx, chain in zip(grouped, members):
            assignment[idx] = chain
        next_instance = n_chains
    for i, s in enumerate(singleton):
        if s:
            assignment[i] = next_instance
            next_instance += 1
    return assignment


def _generate_document(rng: random.Random, config: GeneratorConfig, doc_id: str) -> Document:
    n = config.mentions_per_doc
    if config.mention_jitter:
        n += rng.randint(-config.mention_jitter, config.mention_jitter)
    n = max(1, n)

    assignment = _plan_chains(rng, config, n)
    n_instances = max(assignment) + 1

    types = sorted(config.trigger_sets)
    order = rng.sample(types, min(len(types), n_instances))
    while len(order) < n_instances:
        order.append(rng.choice(types))
    part_drawer = _Drawer(rng, config.participant_pool)
    loc_drawer = _Drawer(rng, config.location_pool)
    instances = []
    for t in order:
        participants = [part_drawer.draw() for _ in range(rng.randint(1, 2))]
        location = loc_drawer.draw() if rng.random() < 0.8 else None
        instances.append(_Instance(t, participants, location))

    sentences: list[list[str]] = []
    mentions: list[EventMention] = []
    offset = 0
    for i in range(n):
        if rng.random() < config.filler_sentence_rate:
            extra = rng.sample(list(config.filler_pool), rng.randint(3, 6))
            sentences.append(extra)
            offset += len(extra)
        inst = instances[assignment[i]]
        trigger = rng.choice(list(config.trigger_sets[inst.event_type]))
        annotated_parts = [p for p in inst.participants if rng.random() < config.argument_rate]
        annotated_loc = (
            inst.location
            if inst.location is not None and rng.random() < config.location_rate
            else None
        )
        words, pos = _mention_sentence(
            rng, trigger, annotated_parts, annotated_loc, config.filler_pool
        )
        span = (offset + pos, offset + pos)
        mentions.append(
            EventMention(
                mention_id=f"m{i}",
                trigger_span=span,
                trigger_tokens=(trigger,),
                event_type=inst.event_type,
                participants=tuple(ArgumentMention(p, PARTICIPANT) for p in annotated_parts),
                locations=(ArgumentMention(annotated_loc, LOCATION),) if annotated_loc else (),
            )
        )
        sentences.append(words)
        offset += len(words)

    chains: list[tuple[str, ...]] = []
    for inst_idx in range(n_instances):
        chain = tuple(f"m{i}" for i in range(n) if assignment[i] == inst_idx)
        if chain:
            chains.append(chain)
    doc = Document(doc_id=doc_id, sentences=sentences, mentions=mentions, chains=chains)
    validate_document(doc)
    return doc


def generate_synthetic_corpus(config: GeneratorConfig, seed: int) -> list[Document]:
    """Generate a deterministic synthetic corpus; same seed+config, same corpus."""
    config.validate()
    rng = random.Random(seed)
    return [_generate_document(rng, config, f"doc{i:04d}") for i in range(config.docs)]
