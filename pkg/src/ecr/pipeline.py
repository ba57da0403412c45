"""End-to-end experiment orchestration and artifact writing.

A run is: obtain corpus -> split documents -> build vocabulary -> train the
similarity encoder and undersample training pairs -> train the prompt model ->
predict held-out pairs -> cluster -> score.  Every artifact written embeds the
configuration hash and seed, and reruns with the same config are
byte-identical.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from . import figures, metrics, template
from .clustering import greedy_cluster
from .config import ExperimentConfig, config_hash
from .corpus import (
    Document,
    MentionPair,
    enumerate_pairs,
    generate_synthetic_corpus,
    gold_partition,
    load_corpus,
    save_corpus,
    write_cluster_file,
)
from .encoder import Vocabulary, build_vocab
from .errors import ConfigError, PipelineError
from .metrics import MetricReport
from .sampling import SamplingReport, apply_sampling, train_similarity_encoder
from .template import template_word_inventory
from .training import (
    PromptModel,
    TrainResult,
    build_model,
    predict_pairs,
    save_model,
    train,
    write_loss_log,
)
from .verbalizer import label_word_inventory, type_description


@dataclass
class ExperimentResult:
    out_dir: Path
    config_digest: str
    report: MetricReport
    loss_log: list[dict] = field(default_factory=list)
    sampling_report: SamplingReport | None = None
    seconds: float = 0.0
    artifacts: dict[str, Path] = field(default_factory=dict)


def _stage(name: str):
    """Tag any stage failure with the stage name."""

    class _Context:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and not isinstance(exc, PipelineError):
                raise PipelineError(f"stage {name!r} failed: {exc}") from exc
            return False

    return _Context()


def obtain_corpus(config: ExperimentConfig) -> list[Document]:
    if config.corpus_path is not None:
        return load_corpus(config.corpus_path)
    return generate_synthetic_corpus(config.generator, config.seed)


def split_documents(
    docs: Sequence[Document], train_fraction: float, seed: int
) -> tuple[list[Document], list[Document]]:
    """Deterministic shuffled split at the document level."""
    if len(docs) < 2:
        raise ConfigError("need at least two documents to split")
    order = list(range(len(docs)))
    random.Random(seed).shuffle(order)
    cut = max(1, min(len(docs) - 1, int(round(len(docs) * train_fraction))))
    train_docs = [docs[i] for i in order[:cut]]
    eval_docs = [docs[i] for i in order[cut:]]
    return train_docs, eval_docs


def vocabulary_extras(event_types: Sequence[str]) -> list[str]:
    """Template words, label words, and type-description words."""
    extras = list(template_word_inventory())
    extras.extend(label_word_inventory())
    for event_type in event_types:
        extras.extend(type_description(event_type))
    seen: dict[str, None] = {}
    for token in extras:
        seen.setdefault(token, None)
    return list(seen)


def corpus_event_types(docs: Sequence[Document]) -> list[str]:
    return sorted({m.event_type for d in docs for m in d.mentions})


def build_experiment_vocab(docs: Sequence[Document], config: ExperimentConfig) -> Vocabulary:
    return build_vocab(
        docs, config.min_count, vocabulary_extras(corpus_event_types(docs))
    )


def _predictions_lines(
    pairs: Sequence[MentionPair], probs: Sequence[float], digest: str, seed: int
) -> str:
    lines = [f"# config={digest} seed={seed}", "doc_id\tfirst\tsecond\tprob"]
    for pair, prob in zip(pairs, probs):
        lines.append(f"{pair.doc_id}\t{pair.first}\t{pair.second}\t{prob:.6f}")
    return "\n".join(lines) + "\n"


def read_predictions(path: str | Path) -> list[tuple[str, str, str, float]]:
    rows = []
    for line in Path(path).read_text().splitlines():
        if not line.strip() or line.startswith("#") or line.startswith("doc_id\t"):
            continue
        doc_id, first, second, prob = line.split("\t")
        rows.append((doc_id, first, second, float(prob)))
    return rows


def cluster_documents(
    docs: Sequence[Document],
    pairs: Sequence[MentionPair],
    probs: Sequence[float],
    theta: float,
    mode: str = "union",
) -> dict[str, list[set[str]]]:
    """Cluster every document from its pair probabilities (singletons kept)."""
    prob_of: dict[str, dict[tuple[str, str], float]] = {}
    for pair, prob in zip(pairs, probs):
        prob_of.setdefault(pair.doc_id, {})[(pair.first, pair.second)] = prob
    partitions: dict[str, list[set[str]]] = {}
    for doc in docs:
        ordered = [m.mention_id for m in doc.mentions_in_order()]
        partitions[doc.doc_id] = greedy_cluster(
            ordered, prob_of.get(doc.doc_id, {}), theta, mode
        )
    return partitions


def train_model_for_variant(
    train_docs: Sequence[Document],
    train_pairs: Sequence[MentionPair],
    vocab_docs: Sequence[Document],
    config: ExperimentConfig,
    variant: str | None = None,
) -> tuple[PromptModel, Vocabulary, TrainResult]:
    """Build vocab and model for one variant, then train it."""
    vocab = build_experiment_vocab(vocab_docs, config)
    train_config = config.train
    if variant is not None and variant != train_config.variant:
        train_config = replace(train_config, variant=variant)
    model = build_model(
        vocab,
        corpus_event_types(vocab_docs),
        config.encoder,
        config.matching,
        train_config.variant,
        config.seed,
    )
    result = train(train_docs, train_pairs, vocab, model, train_config)
    return model, vocab, result


def run_experiment(config: ExperimentConfig, write_model: bool = True) -> ExperimentResult:
    """Run the full pipeline, writing all artifacts under ``config.out_dir``."""
    config.validate()
    digest = config_hash(config)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    artifacts: dict[str, Path] = {}

    with _stage("corpus"):
        docs = obtain_corpus(config)
        if config.corpus_path is None:
            corpus_file = out / "corpus.jsonl"
            save_corpus(docs, corpus_file)
            artifacts["corpus"] = corpus_file
        train_docs, eval_docs = split_documents(docs, config.train_fraction, config.seed)
        train_pairs = [p for d in train_docs for p in enumerate_pairs(d)]
        eval_pairs = [p for d in eval_docs for p in enumerate_pairs(d)]
        if not train_pairs or not eval_pairs:
            raise ConfigError("both splits need at least one mention pair")

    with _stage("vocabulary"):
        vocab = build_experiment_vocab(docs, config)
        vocab_file = out / "vocab.tsv"
        vocab.save(vocab_file)
        artifacts["vocab"] = vocab_file

    with _stage("sampling"):
        index = None
        if config.sampling.strategy in ("enn1", "enn2", "nm"):
            index = train_similarity_encoder(
                train_docs, vocab, config.sampling, config.encoder
            )
        retained, sampling_report = apply_sampling(train_pairs, index, config.sampling)
        sampling_file = out / "sampling_report.tsv"
        _write_sampling_report(sampling_report, sampling_file, digest, config.seed)
        artifacts["sampling_report"] = sampling_file

    with _stage("train"):
        event_types = corpus_event_types(docs)
        model = build_model(
            vocab,
            event_types,
            config.encoder,
            config.matching,
            config.train.variant,
            config.seed,
        )
        train_result = train(train_docs, retained, vocab, model, config.train)
        log_file = out / "train_log.jsonl"
        write_loss_log(train_result.loss_log, log_file)
        artifacts["train_log"] = log_file
        artifacts["loss_curve"] = figures.save_loss_curves(
            train_result.loss_log, out / "loss_curve.png"
        )
        if write_model:
            model_file = out / "model.pt"
            save_model(model, vocab, model_file, {"config": digest, "seed": config.seed})
            artifacts["model"] = model_file

    with _stage("predict"):
        probs = predict_pairs(model, eval_docs, eval_pairs, vocab, config.train.max_len)
        predictions_file = out / "predictions.tsv"
        predictions_file.write_text(
            _predictions_lines(eval_pairs, probs, digest, config.seed)
        )
        artifacts["predictions"] = predictions_file

    with _stage("cluster"):
        sys_partitions = cluster_documents(
            eval_docs, eval_pairs, probs, config.clustering.theta, config.clustering.mode
        )
        gold_partitions = {d.doc_id: gold_partition(d) for d in eval_docs}
        gold_file = out / "clusters_gold.txt"
        sys_file = out / "clusters_sys.txt"
        header = f"config={digest} seed={config.seed}"
        write_cluster_file(gold_partitions, gold_file, header)
        write_cluster_file(sys_partitions, sys_file, header)
        artifacts["clusters_gold"] = gold_file
        artifacts["clusters_sys"] = sys_file

    with _stage("score"):
        result = metrics.report(
            gold_partitions,
            sys_partitions,
            probs,
            [p.coref_label for p in eval_pairs],
            [p.arg_state for p in eval_pairs],
        )
        scores_tsv = out / "scores.tsv"
        scores_tsv.write_text(
            f"# config={digest} seed={config.seed}\n" + metrics.format_report(result) + "\n"
        )
        scores_json = out / "scores.json"
        payload = metrics.report_to_dict(result)
        payload["config"] = digest
        payload["seed"] = config.seed
        scores_json.write_text(json.dumps(payload, indent=2) + "\n")
        artifacts["scores_tsv"] = scores_tsv
        artifacts["scores_json"] = scores_json
        artifacts["score_bars"] = figures.save_score_bars(result, out / "scores.png")

    seconds = time.perf_counter() - started
    meta = {
        "config": config.to_dict(),
        "config_hash": digest,
        "seed": config.seed,
        "documents": len(docs),
        "train_documents": len(train_docs),
        "eval_documents": len(eval_docs),
        "train_pairs": len(train_pairs),
        "retained_pairs": len(retained),
        "eval_pairs": len(eval_pairs),
        "seconds": round(seconds, 3),
    }
    meta_file = out / "run_meta.json"
    meta_file.write_text(json.dumps(meta, indent=2) + "\n")
    artifacts["run_meta"] = meta_file

    return ExperimentResult(
        out_dir=out,
        config_digest=digest,
        report=result,
        loss_log=train_result.loss_log,
        sampling_report=sampling_report,
        seconds=seconds,
        artifacts=artifacts,
    )


def _write_sampling_report(
    report: SamplingReport, path: Path, digest: str, seed: int
) -> None:
    lines = [
        f"# config={digest} seed={seed}",
        "stage\tstrategy\tcoref\tnon_coref\tall",
        "before\t-\t{coref}\t{non_coref}\t{all}".format(**report.before),
        "after\t{strategy}\t{coref}\t{non_coref}\t{all}".format(
            strategy=report.strategy, **report.after
        ),
    ]
    path.write_text("\n".join(lines) + "\n")


def shuffled_label_baseline(
    probs: Sequence[float], labels: Sequence[bool], seed: int, threshold: float = 0.5
) -> float:
    """Pair F1 of the predictions against randomly shuffled labels."""
    shuffled = list(labels)
    random.Random(seed).shuffle(shuffled)
    return metrics.pair_classification(probs, shuffled, threshold).f1


def run_ablation(config: ExperimentConfig, variants: Sequence[str] = template.VARIANTS) -> list[dict]:
    """Train every template variant on one shared corpus, sampling, and split.

    Returns one row per variant with partition F1s, pair F1, and the pair F1
    of a label-shuffled control for the same predictions.
    """
    config.validate()
    digest = config_hash(config)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    docs = obtain_corpus(config)
    train_docs, eval_docs = split_documents(docs, config.train_fraction, config.seed)
    train_pairs = [p for d in train_docs for p in enumerate_pairs(d)]
    eval_pairs = [p for d in eval_docs for p in enumerate_pairs(d)]
    sampling_vocab = build_experiment_vocab(docs, config)
    index = None
    if config.sampling.strategy in ("enn1", "enn2", "nm"):
        index = train_similarity_encoder(
            train_docs, sampling_vocab, config.sampling, config.encoder
        )
    retained, _ = apply_sampling(train_pairs, index, config.sampling)
    event_types = corpus_event_types(docs)
    gold_partitions = {d.doc_id: gold_partition(d) for d in eval_docs}
    labels = [p.coref_label for p in eval_pairs]

    rows = []
    for variant in variants:
        # Fresh vocabulary per variant: model construction appends
        # variant-specific virtual label tokens to the vocabulary it is given.
        vocab = build_experiment_vocab(docs, config)
        train_config = replace(config.train, variant=variant)
        model = build_model(
            vocab,
            event_types,
            config.encoder,
            config.matching,
            variant,
            config.seed,
        )
        train(train_docs, retained, vocab, model, train_config)
        probs = predict_pairs(model, eval_docs, eval_pairs, vocab, config.train.max_len)
        sys_partitions = cluster_documents(
            eval_docs, eval_pairs, probs, config.clustering.theta, config.clustering.mode
        )
        result = metrics.report(gold_partitions, sys_partitions, probs, labels)
        row = {
            "variant": variant,
            "pair_f1": result.pair_scores["ALL"].f1,
            "chance_f1": shuffled_label_baseline(probs, labels, config.seed),
            "avg_f1": result.avg_f1,
        }
        row.update({name: result.scores[name].f1 for name in metrics.METRIC_NAMES})
        rows.append(row)

    table = out / "ablation.tsv"
    header = ["variant", *metrics.METRIC_NAMES, "avg_f1", "pair_f1", "chance_f1"]
    lines = [f"# config={digest} seed={config.seed}", "\t".join(header)]
    for row in rows:
        lines.append(
            "\t".join(
                [row["variant"]]
                + [f"{row[key]:.3f}" for key in header[1:]]
            )
        )
    table.write_text("\n".join(lines) + "\n")
    figures.save_variant_bars(rows, out / "ablation.png")
    return rows
