"""Shared fixtures: tiny documents, vocabularies, and small trained models."""

from __future__ import annotations

import json
from pathlib import Path

import pytest
import torch

from ecr.corpus import (
    ArgumentMention,
    Document,
    EventMention,
    GeneratorConfig,
    enumerate_pairs,
    generate_synthetic_corpus,
)
from ecr.encoder import EncoderConfig, build_vocab
from ecr.template import template_word_inventory
from ecr.verbalizer import label_word_inventory, type_description

DATA_DIR = Path(__file__).parent / "data"

torch.set_default_dtype(torch.float64)

# One line per acceptance criterion, echoed after the test summary so the
# pass/fail verdicts are visible without -s.  The list lives on the pytest
# config object so it is shared no matter how this module gets imported.


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture(scope="session")
def acceptance_lines(request) -> list[str]:
    return request.config._acceptance_lines


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.write_line("")
        terminalreporter.write_line("acceptance criteria:")
        for line in lines:
            terminalreporter.write_line(line)


def vocab_extras(docs) -> list[str]:
    extras = list(template_word_inventory()) + list(label_word_inventory())
    for doc in docs:
        for m in doc.mentions:
            extras.extend(type_description(m.event_type))
    return extras


@pytest.fixture(scope="session")
def fixture_payload() -> dict:
    return json.loads((DATA_DIR / "template_fixture.json").read_text())


@pytest.fixture()
def fixture_doc() -> Document:
    return Document(
        doc_id="fixture",
        sentences=[
            ["the", "police", "found", "the", "body", "yesterday"],
            ["her", "suicide", "shocked", "the", "town"],
            ["the", "death", "happened", "in", "Rome"],
        ],
        mentions=[
            EventMention(
                "m1",
                (7, 7),
                ("suicide",),
                "life.die",
                participants=(ArgumentMention("her", "participant"),),
            ),
            EventMention(
                "m2",
                (12, 12),
                ("death",),
                "life.die",
                locations=(ArgumentMention("Rome", "location"),),
            ),
        ],
        chains=[("m1", "m2")],
    )


@pytest.fixture()
def fixture_vocab(fixture_doc):
    return build_vocab([fixture_doc], 1, vocab_extras([fixture_doc]))


@pytest.fixture()
def fixture_pair(fixture_doc):
    return enumerate_pairs(fixture_doc)[0]


@pytest.fixture(scope="session")
def tiny_corpus() -> list[Document]:
    config = GeneratorConfig(docs=10, mentions_per_doc=3, mention_jitter=1)
    return generate_synthetic_corpus(config, seed=5)


@pytest.fixture(scope="session")
def tiny_encoder_config() -> EncoderConfig:
    return EncoderConfig(layers=1, hidden=32, heads=2, ffn=64, max_positions=256)
