"""End-to-end acceptance suite: eleven checks, one verdict line each.

Every test wraps its body in ``_Criterion``, which appends one
``criterion NN <name>: PASS|FAIL`` line to the shared ``acceptance_lines``
list when the block exits — whether it exits cleanly, with recorded failures,
or with an unexpected exception — so the terminal summary always shows a
verdict for every criterion that ran.

The desk-scale checks (criteria 8-11) share one module-scoped fixture that
executes the shipped ``configs/desk.json`` experiment twice, and the ablation
check trains five more variants; expect the full file to take on the order of
half an hour of CPU time.
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
import torch

from ecr import metrics
from ecr.config import load_experiment_config
from ecr.corpus import (
    GeneratorConfig,
    enumerate_pairs,
    generate_synthetic_corpus,
    load_corpus,
)
from ecr.encoder import EncoderConfig, build_vocab
from ecr.matching import MatchingConfig, MatchingHead
from ecr.pipeline import (
    build_experiment_vocab,
    corpus_event_types,
    run_ablation,
    run_experiment,
    split_documents,
)
from ecr.sampling import STRATEGIES, SamplingConfig, apply_sampling, train_similarity_encoder
from ecr.template import VARIANT_CONNECT, VARIANT_FULL, assemble_prompt, mask_triggers
from ecr.training import build_model, compute_losses, joint_loss, pair_labels
from tests import conftest
from tests.oracles import (
    METRIC_REFERENCES,
    central_difference_gradient,
    max_relative_error,
    random_partition_pair,
)
from tests.test_sampling import THREE_INDEX, THREE_PAIRS, pair_keys

CONFIG_PATH = Path(__file__).parent.parent / "configs" / "desk.json"
README_PATH = Path(__file__).parent.parent / "README.md"

SMALL_ENCODER = EncoderConfig(layers=1, hidden=32, heads=2, ffn=64, max_positions=256)
SMALL_MATCHING = MatchingConfig(dim=8, perspectives=4, rank=2)


class _Criterion:
    """Collects failures for one criterion and always emits its verdict line."""

    def __init__(self, lines: list[str], number: int, name: str):
        self.lines = lines
        self.number = number
        self.name = name
        self.failures: list[str] = []

    def __enter__(self) -> list[str]:
        return self.failures

    def __exit__(self, exc_type, exc, tb) -> bool:
        if exc_type is not None:
            self.failures.append(f"unexpected {exc_type.__name__}: {exc}")
        status = "FAIL" if self.failures else "PASS"
        self.lines.append(f"criterion {self.number:02d} {self.name}: {status}")
        if self.failures and exc_type is None:
            raise AssertionError(
                f"criterion {self.number:02d} ({self.name}): " + "; ".join(self.failures)
            )
        return False


# ---------------------------------------------------------------------------
# criterion 1: the README states what this desk-scale build does and does not
# reproduce, and what the suite checks instead
# ---------------------------------------------------------------------------


def test_criterion_01_scope_statement(acceptance_lines):
    with _Criterion(acceptance_lines, 1, "scope statement") as failures:
        if not README_PATH.exists():
            failures.append("README.md missing")
            return
        text = README_PATH.read_text()
        if "## Scope" not in text:
            failures.append("README has no Scope section")
        for phrase in ("out of scope", "pretrained", "licensed", "synthetic"):
            if phrase not in text:
                failures.append(f"Scope statement never mentions {phrase!r}")


# ---------------------------------------------------------------------------
# criterion 2: the four partition metrics agree with independent reference
# implementations on 500 random partition pairs, fast
# ---------------------------------------------------------------------------


def test_criterion_02_metric_oracles(acceptance_lines):
    with _Criterion(acceptance_lines, 2, "metric oracles") as failures:
        implementations = {
            "muc": metrics.muc,
            "b_cubed": metrics.b_cubed,
            "ceaf_e": metrics.ceaf_e,
            "blanc": metrics.blanc,
        }
        rng = random.Random(1234)
        started = time.perf_counter()
        for trial in range(500):
            gold, sys_partition = random_partition_pair(rng)
            for name, func in implementations.items():
                got = func(gold, sys_partition)
                want = METRIC_REFERENCES[name](gold, sys_partition)
                for value, reference, part in zip(
                    (got.precision, got.recall, got.f1), want, ("P", "R", "F")
                ):
                    if abs(value - reference) > 1e-9 and len(failures) < 5:
                        failures.append(
                            f"trial {trial} {name} {part}: {value!r} vs oracle {reference!r}"
                        )
        elapsed = time.perf_counter() - started
        if elapsed >= 10.0:
            failures.append(f"500-pair sweep took {elapsed:.1f}s (limit 10s)")


# ---------------------------------------------------------------------------
# criterion 3: the standard worked example scores exactly as hand-derived
# ---------------------------------------------------------------------------


def test_criterion_03_worked_example(acceptance_lines):
    with _Criterion(acceptance_lines, 3, "worked example") as failures:
        gold = [{"a", "b", "c"}, {"d"}]
        sys_partition = [{"a", "b"}, {"c", "d"}]
        scores = {
            "muc": metrics.muc(gold, sys_partition),
            "b_cubed": metrics.b_cubed(gold, sys_partition),
            "ceaf_e": metrics.ceaf_e(gold, sys_partition),
            "blanc": metrics.blanc(gold, sys_partition),
        }
        expected = {
            "muc": (0.500, 0.500, 0.500),
            "b_cubed": (0.750, 0.667, 0.706),
            "ceaf_e": (0.733, 0.733, 0.733),
        }
        for name, (p, r, f) in expected.items():
            got = scores[name]
            triple = (round(got.precision, 3), round(got.recall, 3), round(got.f1, 3))
            if triple != (p, r, f):
                failures.append(f"{name}: {triple} != {(p, r, f)}")
        if round(scores["blanc"].f1, 3) != 0.486:
            failures.append(f"blanc F: {round(scores['blanc'].f1, 3)} != 0.486")
        avg = sum(score.f1 for score in scores.values()) / 4.0
        if round(avg, 3) != 0.606:
            failures.append(f"four-metric average: {round(avg, 3)} != 0.606")


# ---------------------------------------------------------------------------
# criterion 4: analytic gradients match central differences through every
# matching-head component and through the full two-layer model
# ---------------------------------------------------------------------------


def _fd_check(name, objective, tensors, failures, tol=1e-4):
    """Compare autograd against central differences for each input tensor."""
    loss = objective(*tensors)
    grads = torch.autograd.grad(loss, tensors)
    for position, (tensor, grad) in enumerate(zip(tensors, grads)):
        def as_float(arr: np.ndarray, _pos=position) -> float:
            stand_in = [t.detach().clone() for t in tensors]
            stand_in[_pos] = torch.from_numpy(arr.copy())
            with torch.no_grad():
                return float(objective(*stand_in))

        numeric = central_difference_gradient(as_float, tensor.detach().numpy().copy())
        err = max_relative_error(grad.detach().numpy(), numeric)
        if err >= tol:
            failures.append(f"{name} input {position}: rel err {err:.2e}")


def test_criterion_04_gradient_checks(acceptance_lines, fixture_doc, fixture_vocab):
    with _Criterion(acceptance_lines, 4, "gradient checks") as failures:
        started = time.perf_counter()
        torch.manual_seed(31)
        head = MatchingHead(16, MatchingConfig(dim=6, perspectives=5, rank=2))
        probe = torch.randn  # fresh random tensors per component

        # pool_span: gradient w.r.t. the hidden-state matrix
        weights = probe(16)
        _fd_check(
            "pool_span",
            lambda states: (head.pool_span(states, 1, 4) * weights).sum(),
            (probe(7, 16, requires_grad=True),),
            failures,
        )

        # multicos: gradient w.r.t. both compared vectors
        mix = probe(5)
        _fd_check(
            "multicos",
            lambda x1, x2: (head.multicos(x1, x2) * mix).sum(),
            (probe(6, requires_grad=True), probe(6, requires_grad=True)),
            failures,
        )

        # match_features: gradient w.r.t. both inputs of the comparison vector
        mix_features = probe(6 + 5)
        _fd_check(
            "match_features",
            lambda x1, x2: (head.match_features(x1, x2) * mix_features).sum(),
            (probe(6, requires_grad=True), probe(6, requires_grad=True)),
            failures,
        )

        # mask-embedding updates: gradient w.r.t. all seven input vectors
        mix_out = [probe(16) for _ in range(3)]

        def update_objective(*vectors):
            outputs = head.update_mask_embeddings(*vectors)
            return sum((out * m).sum() for out, m in zip(outputs, mix_out))

        _fd_check(
            "update_mask_embeddings",
            update_objective,
            tuple(probe(16, requires_grad=True) for _ in range(7)),
            failures,
        )

        # full model: directional derivatives of the joint loss through a
        # two-layer encoder, matching head, and verbalizers on a fixture prompt
        encoder_config = EncoderConfig(
            layers=2, hidden=64, heads=4, ffn=256, max_positions=256
        )
        model = build_model(
            fixture_vocab,
            corpus_event_types([fixture_doc]),
            encoder_config,
            MatchingConfig(dim=16, perspectives=8, rank=2),
            VARIANT_FULL,
            seed=123,
        )
        pair = enumerate_pairs(fixture_doc)[0]
        layout = mask_triggers(
            assemble_prompt(fixture_doc, pair, fixture_vocab, VARIANT_FULL, 256),
            fixture_vocab,
        )
        labels = pair_labels(pair, fixture_doc, model.verbalizers.get("type"))
        params = [p for p in model.parameters() if p.requires_grad]

        def total_loss():
            return compute_losses(model([layout]), [labels]).joint

        grads = torch.autograd.grad(total_loss(), params, allow_unused=True)
        grads = [torch.zeros_like(p) if g is None else g for p, g in zip(params, grads)]
        directions_rng = torch.Generator().manual_seed(99)
        eps = 1e-6
        for trial in range(5):
            direction = [
                torch.randn(p.shape, generator=directions_rng, dtype=p.dtype)
                for p in params
            ]
            norm = math.sqrt(sum(float((d * d).sum()) for d in direction))
            direction = [d / norm for d in direction]
            analytic = sum(float((g * d).sum()) for g, d in zip(grads, direction))
            with torch.no_grad():
                for p, d in zip(params, direction):
                    p.add_(eps * d)
                upper = float(total_loss())
                for p, d in zip(params, direction):
                    p.add_(-2 * eps * d)
                lower = float(total_loss())
                for p, d in zip(params, direction):
                    p.add_(eps * d)
            numeric = (upper - lower) / (2 * eps)
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
            if err >= 1e-4:
                failures.append(f"model direction {trial}: rel err {err:.2e}")

        elapsed = time.perf_counter() - started
        if elapsed >= 60.0:
            failures.append(f"gradient checks took {elapsed:.1f}s (limit 60s)")


# ---------------------------------------------------------------------------
# criterion 5: every virtual label word starts at exactly the mean embedding
# of its description, and the MLM head grows by exactly the registered count
# ---------------------------------------------------------------------------


def test_criterion_05_label_word_embeddings(acceptance_lines, fixture_doc):
    with _Criterion(acceptance_lines, 5, "label word embeddings") as failures:
        for variant, fixed_virtuals in ((VARIANT_FULL, None), (VARIANT_CONNECT, 2)):
            vocab = build_vocab([fixture_doc], 1, conftest.vocab_extras([fixture_doc]))
            size_before = vocab.size
            event_types = corpus_event_types([fixture_doc])
            model = build_model(vocab, event_types, SMALL_ENCODER, SMALL_MATCHING, variant)
            described = 0
            for verbalizer in model.verbalizers.values():
                for label, token_id in zip(verbalizer.labels, verbalizer.token_ids):
                    description = verbalizer.description_ids.get(label, ())
                    if not description:
                        continue
                    described += 1
                    table = model.encoder.embedding.detach()
                    gap = float((table[token_id] - table[list(description)].mean(dim=0)).abs().max())
                    if gap != 0.0:
                        failures.append(
                            f"{variant}/{verbalizer.name}/{label}: max embedding gap {gap!r}"
                        )
            expected = len(event_types) + 2 if fixed_virtuals is None else fixed_virtuals
            registered = vocab.size - size_before
            if registered != expected:
                failures.append(
                    f"{variant}: registered {registered} virtual words, expected {expected}"
                )
            if described != expected:
                failures.append(f"{variant}: {described} described labels, expected {expected}")
            if model.encoder.vocab_size != vocab.size:
                failures.append(
                    f"{variant}: encoder table {model.encoder.vocab_size} != vocab {vocab.size}"
                )
            logits = model.encoder.mlm_logits(torch.zeros(2, SMALL_ENCODER.hidden))
            if logits.shape[-1] != size_before + registered:
                failures.append(
                    f"{variant}: MLM logit width {logits.shape[-1]} != {size_before + registered}"
                )


# ---------------------------------------------------------------------------
# criterion 6: the joint loss is log1p per task — exact anchors and slope
# ---------------------------------------------------------------------------


def test_criterion_06_joint_loss(acceptance_lines):
    with _Criterion(acceptance_lines, 6, "joint loss") as failures:
        if joint_loss(0.0, 0.0, 0.0) != 0.0:
            failures.append(f"joint_loss(0,0,0) = {joint_loss(0.0, 0.0, 0.0)!r}")
        anchor = joint_loss(math.e - 1.0, 0.0, 0.0)
        if abs(anchor - 1.0) >= 1e-12:
            failures.append(f"joint_loss(e-1,0,0) = {anchor!r}")
        step = 1e-6
        for point in ((0.3, 1.2, 0.7), (2.0, 0.25, 5.5)):
            for slot in range(3):
                upper = list(point)
                lower = list(point)
                upper[slot] += step
                lower[slot] -= step
                numeric = (joint_loss(*upper) - joint_loss(*lower)) / (2 * step)
                analytic = 1.0 / (1.0 + point[slot])
                if abs(numeric - analytic) >= 1e-6:
                    failures.append(
                        f"d/dL{slot} at {point}: numeric {numeric!r} vs 1/(1+L) {analytic!r}"
                    )


# ---------------------------------------------------------------------------
# criterion 7: undersampling never drops a positive, enn2 retention is
# monotone in gamma, and the three-mention hand traces reproduce exactly
# ---------------------------------------------------------------------------


def test_criterion_07_sampling_invariants(acceptance_lines):
    with _Criterion(acceptance_lines, 7, "sampling invariants") as failures:
        docs = generate_synthetic_corpus(
            GeneratorConfig(docs=50, mentions_per_doc=4, mention_jitter=2), seed=7
        )
        vocab = build_vocab(docs, 1, conftest.vocab_extras(docs))
        index = train_similarity_encoder(
            docs, vocab, SamplingConfig(epochs=4, seed=42), SMALL_ENCODER
        )
        pairs = [p for d in docs for p in enumerate_pairs(d)]
        positives = {(p.doc_id, p.first, p.second) for p in pairs if p.coref_label}
        if not positives:
            failures.append("synthetic corpus produced no positive pairs")
        for strategy in STRATEGIES:
            retained, _ = apply_sampling(pairs, index, SamplingConfig(strategy=strategy))
            kept = {(p.doc_id, p.first, p.second) for p in retained if p.coref_label}
            if kept != positives:
                failures.append(f"{strategy}: kept {len(kept)}/{len(positives)} positives")

        kept_by_gamma = []
        for gamma in (0.0, 0.2, 0.5):
            retained, _ = apply_sampling(
                pairs, index, SamplingConfig(strategy="enn2", gamma=gamma)
            )
            kept_by_gamma.append({(p.doc_id, p.first, p.second) for p in retained})
        for tighter, looser in zip(kept_by_gamma[1:], kept_by_gamma[:-1]):
            if not tighter <= looser:
                failures.append("enn2 retained sets are not nested as gamma grows")

        traces = (
            (SamplingConfig(strategy="nm", k=1), {("a", "b"), ("a", "c"), ("b", "c")}),
            (SamplingConfig(strategy="enn2", gamma=0.5), {("a", "b"), ("a", "c")}),
            (SamplingConfig(strategy="enn1", k=1), {("a", "b")}),
        )
        for config, expected in traces:
            retained, _ = apply_sampling(THREE_PAIRS, THREE_INDEX, config)
            if pair_keys(retained) != expected:
                failures.append(
                    f"{config.strategy} trace: kept {sorted(pair_keys(retained))}, "
                    f"expected {sorted(expected)}"
                )


# ---------------------------------------------------------------------------
# desk-scale fixture: the shipped configuration, run twice
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def desk_runs(tmp_path_factory):
    config = load_experiment_config(CONFIG_PATH)
    base = tmp_path_factory.mktemp("desk_runs")
    first = run_experiment(replace(config, out_dir=str(base / "a")))
    second = run_experiment(replace(config, out_dir=str(base / "b")))
    return config, first, second


# ---------------------------------------------------------------------------
# criterion 8: the trained similarity encoder separates coreferent from
# non-coreferent pairs by at least 0.1 mean cosine
# ---------------------------------------------------------------------------


def test_criterion_08_similarity_separation(acceptance_lines, desk_runs):
    with _Criterion(acceptance_lines, 8, "similarity separation") as failures:
        config, first, _ = desk_runs
        docs = load_corpus(first.artifacts["corpus"])
        train_docs, _ = split_documents(docs, config.train_fraction, config.seed)
        vocab = build_experiment_vocab(docs, config)
        index = train_similarity_encoder(train_docs, vocab, config.sampling, config.encoder)
        positive, negative = [], []
        for doc in train_docs:
            for pair in enumerate_pairs(doc):
                sim = index.sim(pair.doc_id, pair.first, pair.second)
                (positive if pair.coref_label else negative).append(sim)
        if not positive or not negative:
            failures.append("training split lacks one of the pair classes")
            return
        separation = sum(positive) / len(positive) - sum(negative) / len(negative)
        if separation < 0.1:
            failures.append(f"mean cosine separation {separation:.4f} < 0.1")


# ---------------------------------------------------------------------------
# criterion 9: the shipped desk experiment trains in budget, beats the trivial
# baseline by a wide margin, reports all five metrics, and is bit-reproducible
# ---------------------------------------------------------------------------


def test_criterion_09_desk_run(acceptance_lines, desk_runs):
    with _Criterion(acceptance_lines, 9, "desk run") as failures:
        config, first, second = desk_runs
        for label, result in (("first", first), ("second", second)):
            if result.seconds >= 1800:
                failures.append(f"{label} run took {result.seconds:.0f}s (limit 1800s)")
        pair_f1 = first.report.pair_scores["ALL"].f1
        if pair_f1 < 0.6:
            failures.append(f"held-out pair F1 {pair_f1:.3f} < 0.6")
        detail = (
            f"    held-out pair F1 {pair_f1:.3f}, avg F1 {first.report.avg_f1:.3f}, "
            f"{first.seconds:.0f}s per run"
        )

        docs = load_corpus(first.artifacts["corpus"])
        _, eval_docs = split_documents(docs, config.train_fraction, config.seed)
        labels = [p.coref_label for d in eval_docs for p in enumerate_pairs(d)]
        trivial = metrics.pair_classification([0.0] * len(labels), labels).f1
        if trivial != 0.0:
            failures.append(f"all-non-coref baseline scored {trivial!r}, expected 0.0")

        table = Path(first.artifacts["scores_tsv"]).read_text()
        if "MUC\tB3\tCEAFe\tBLANC\tAVG" not in table:
            failures.append("scores table lacks the five-metric summary row")

        bytes_first = Path(first.artifacts["predictions"]).read_bytes()
        bytes_second = Path(second.artifacts["predictions"]).read_bytes()
        if bytes_first != bytes_second:
            failures.append("two identical runs produced different prediction files")
        if first.config_digest != second.config_digest:
            failures.append("config digest changed between identical runs")
    acceptance_lines.append(detail)


# ---------------------------------------------------------------------------
# criterion 10: every template variant trained on the same desk corpus beats
# a label-shuffled chance control on held-out pair F1
# ---------------------------------------------------------------------------


def test_criterion_10_variant_ablation(acceptance_lines, desk_runs, tmp_path_factory):
    with _Criterion(acceptance_lines, 10, "variant ablation") as failures:
        config, first, _ = desk_runs
        ablation_config = replace(
            config,
            corpus_path=str(first.artifacts["corpus"]),
            out_dir=str(tmp_path_factory.mktemp("ablation")),
            sampling=replace(config.sampling, strategy="random"),
            train=replace(config.train, trigger_mask=False, epochs=40, warmup_epochs=60),
        )
        rows = run_ablation(ablation_config)
        if len(rows) != 5:
            failures.append(f"expected 5 variants, got {len(rows)}")
        details = []
        for row in rows:
            details.append(
                f"    variant {row['variant']:<12} pair F1 {row['pair_f1']:.3f} "
                f"chance {row['chance_f1']:.3f} avg F1 {row['avg_f1']:.3f}"
            )
            if row["pair_f1"] <= row["chance_f1"]:
                failures.append(
                    f"{row['variant']}: pair F1 {row['pair_f1']:.3f} does not exceed "
                    f"chance {row['chance_f1']:.3f}"
                )
        table = Path(ablation_config.out_dir) / "ablation.tsv"
        if not table.exists():
            failures.append("ablation.tsv was not written")
        elif len(table.read_text().strip().splitlines()) != 7:
            failures.append("ablation.tsv does not hold one row per variant")
    acceptance_lines.extend(details)


# ---------------------------------------------------------------------------
# criterion 11: masked prompts contain no trigger tokens, and a training run
# with masking enabled shows its joint loss falling from epoch 1 to epoch 3
# on the desk corpus
# ---------------------------------------------------------------------------


def test_criterion_11_trigger_masking(acceptance_lines, desk_runs, tmp_path_factory):
    with _Criterion(acceptance_lines, 11, "trigger masking") as failures:
        config, first, _ = desk_runs
        docs = load_corpus(first.artifacts["corpus"])
        vocab = build_experiment_vocab(docs, config)
        build_model(
            vocab, corpus_event_types(docs), SMALL_ENCODER, SMALL_MATCHING, VARIANT_FULL
        )  # registers the virtual label words that the prompts reference
        checked = 0
        for doc in docs[:25]:
            trigger_ids = {
                vocab.id(token)
                for mention in doc.mentions
                for token in mention.trigger_tokens
            }
            for pair in enumerate_pairs(doc):
                layout = mask_triggers(
                    assemble_prompt(doc, pair, vocab, VARIANT_FULL, config.train.max_len),
                    vocab,
                )
                leaked = trigger_ids.intersection(layout.token_ids)
                checked += 1
                if leaked and len(failures) < 5:
                    failures.append(
                        f"{doc.doc_id} ({pair.first},{pair.second}): "
                        f"trigger ids {sorted(leaked)}"
                    )
        if not checked:
            failures.append("no prompts were checked")

        masked_config = replace(
            config,
            corpus_path=str(first.artifacts["corpus"]),
            out_dir=str(tmp_path_factory.mktemp("masked")),
            train=replace(config.train, trigger_mask=True, epochs=3),
        )
        log = run_experiment(masked_config).loss_log
        if len(log) < 3:
            failures.append(f"loss log holds {len(log)} epochs, need 3")
        elif not log[2]["joint_loss"] < log[0]["joint_loss"]:
            failures.append(
                f"joint loss did not fall under masking: epoch 1 "
                f"{log[0]['joint_loss']:.4f} vs epoch 3 {log[2]['joint_loss']:.4f}"
            )
