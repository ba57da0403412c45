"""Command-line interface.

Subcommands cover the whole pipeline (``run``), its individual stages
(``gen-corpus``, ``sample``, ``train``, ``predict``, ``cluster``, ``score``)
and the template-variant comparison (``ablate``).  Report-producing commands
write matplotlib figures next to their delimited output.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import figures, metrics, pipeline
from .config import ExperimentConfig, config_hash, load_experiment_config
from .corpus import (
    enumerate_pairs,
    generate_synthetic_corpus,
    load_corpus,
    read_cluster_file,
    save_corpus,
    write_cluster_file,
)
from .errors import ConfigError, InputError, ParseError, PipelineError, ValidationError
from .sampling import apply_sampling, train_similarity_encoder
from .training import load_model, predict_pairs, save_model, train, write_loss_log


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    """Config file (if given) plus command-line overrides."""
    if getattr(args, "config", None):
        config = load_experiment_config(args.config)
    else:
        config = ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        config = replace(config, seed=args.seed)
    if getattr(args, "out", None):
        config = replace(config, out_dir=str(args.out))
    if getattr(args, "variant", None):
        config = replace(config, train=replace(config.train, variant=args.variant))
    if getattr(args, "strategy", None):
        config = replace(config, sampling=replace(config.sampling, strategy=args.strategy))
    if getattr(args, "theta", None) is not None:
        config = replace(config, clustering=replace(config.clustering, theta=args.theta))
    if getattr(args, "corpus", None):
        config = replace(config, corpus_path=str(args.corpus))
    config.validate()
    return config


def _cmd_gen_corpus(args: argparse.Namespace) -> int:
    config = _load_config(args)
    docs = generate_synthetic_corpus(config.generator, config.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_corpus(docs, out)
    pairs = sum(len(enumerate_pairs(d)) for d in docs)
    print(f"wrote {len(docs)} documents ({pairs} mention pairs) to {out}")
    return 0


def _cmd_sample(args: argparse.Namespace) -> int:
    config = _load_config(args)
    docs = load_corpus(args.corpus)
    vocab = pipeline.build_experiment_vocab(docs, config)
    pairs = [p for d in docs for p in enumerate_pairs(d)]
    index = None
    if config.sampling.strategy in ("enn1", "enn2", "nm"):
        index = train_similarity_encoder(docs, vocab, config.sampling, config.encoder)
    retained, report = apply_sampling(pairs, index, config.sampling)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = ["doc_id\tfirst\tsecond\tcoref"]
    for pair in retained:
        lines.append(
            f"{pair.doc_id}\t{pair.first}\t{pair.second}\t{int(pair.coref_label)}"
        )
    out.write_text("\n".join(lines) + "\n")
    print(
        f"strategy={report.strategy} kept {report.after['all']}/{report.before['all']} pairs "
        f"(coref {report.after['coref']}/{report.before['coref']}, "
        f"non-coref {report.after['non_coref']}/{report.before['non_coref']}) -> {out}"
    )
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    config = _load_config(args)
    docs = load_corpus(args.corpus)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    vocab = pipeline.build_experiment_vocab(docs, config)
    pairs = [p for d in docs for p in enumerate_pairs(d)]
    index = None
    if config.sampling.strategy in ("enn1", "enn2", "nm"):
        index = train_similarity_encoder(docs, vocab, config.sampling, config.encoder)
    retained, _ = apply_sampling(pairs, index, config.sampling)
    from .training import build_model

    model = build_model(
        vocab,
        pipeline.corpus_event_types(docs),
        config.encoder,
        config.matching,
        config.train.variant,
        config.seed,
    )
    result = train(docs, retained, vocab, model, config.train)
    digest = config_hash(config)
    save_model(model, vocab, out / "model.pt", {"config": digest, "seed": config.seed})
    write_loss_log(result.loss_log, out / "train_log.jsonl")
    figures.save_loss_curves(result.loss_log, out / "loss_curve.png")
    final = result.loss_log[-1]
    print(
        f"trained {config.train.variant} for {config.train.epochs} epochs on "
        f"{len(retained)} pairs (joint loss {final['joint_loss']:.4f}) -> {out}"
    )
    return 0


def _cmd_predict(args: argparse.Namespace) -> int:
    model, vocab, metadata = load_model(args.model)
    docs = load_corpus(args.corpus)
    pairs = [p for d in docs for p in enumerate_pairs(d)]
    probs = predict_pairs(model, docs, pairs, vocab)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    digest = str(metadata.get("config", "external"))
    seed = int(metadata.get("seed", 0))
    out.write_text(pipeline._predictions_lines(pairs, probs, digest, seed))
    print(f"scored {len(pairs)} pairs from {len(docs)} documents -> {out}")
    return 0


def _cmd_cluster(args: argparse.Namespace) -> int:
    docs = load_corpus(args.corpus)
    rows = pipeline.read_predictions(args.predictions)
    pair_index = {(d, f, s): p for d, f, s, p in rows}
    pairs = []
    probs = []
    for doc in docs:
        for pair in enumerate_pairs(doc):
            key = (pair.doc_id, pair.first, pair.second)
            if key not in pair_index:
                raise InputError(f"predictions missing pair {key}")
            pairs.append(pair)
            probs.append(pair_index[key])
    partitions = pipeline.cluster_documents(docs, pairs, probs, args.theta, args.mode)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_cluster_file(partitions, out, f"theta={args.theta} mode={args.mode}")
    clusters = sum(len(p) for p in partitions.values())
    print(f"clustered {len(docs)} documents into {clusters} clusters -> {out}")
    return 0


def score_files(gold_path: str | Path, sys_path: str | Path, out_dir: str | Path | None = None) -> metrics.MetricReport:
    """Score a system cluster file against a gold one; optionally write reports."""
    gold = read_cluster_file(gold_path)
    sys_clusters = read_cluster_file(sys_path)
    result = metrics.report(gold, sys_clusters)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "scores.tsv").write_text(metrics.format_report(result) + "\n")
        (out / "scores.json").write_text(
            json.dumps(metrics.report_to_dict(result), indent=2) + "\n"
        )
        figures.save_score_bars(result, out / "scores.png")
    return result


def _cmd_score(args: argparse.Namespace) -> int:
    result = score_files(args.gold, args.sys, args.out)
    print(metrics.format_report(result))
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    config = _load_config(args)
    result = pipeline.run_experiment(config)
    print(f"run {result.config_digest} finished in {result.seconds:.1f}s")
    print(metrics.format_report(result.report))
    print(f"artifacts in {result.out_dir}")
    return 0


def _cmd_ablate(args: argparse.Namespace) -> int:
    config = _load_config(args)
    rows = pipeline.run_ablation(config)
    header = ["variant", *metrics.METRIC_NAMES, "avg_f1", "pair_f1", "chance_f1"]
    print("\t".join(header))
    for row in rows:
        print("\t".join([row["variant"]] + [f"{row[k]:.3f}" for k in header[1:]]))
    print(f"artifacts in {config.out_dir}")
    return 0


def _add_config_flags(parser: argparse.ArgumentParser, with_variant: bool = True) -> None:
    parser.add_argument("--config", type=Path, help="JSON experiment config")
    parser.add_argument("--seed", type=int, help="override the config seed")
    if with_variant:
        parser.add_argument("--variant", help="prompt template variant")
        parser.add_argument("--strategy", help="undersampling strategy")
        parser.add_argument("--theta", type=float, help="clustering threshold")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ecr",
        description="Prompt-based within-document event coreference resolution.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="generate a synthetic annotated corpus")
    _add_config_flags(p, with_variant=False)
    p.add_argument("--out", type=Path, required=True, help="output JSONL file")
    p.set_defaults(func=_cmd_gen_corpus)

    p = sub.add_parser("sample", help="undersample the mention pairs of a corpus")
    _add_config_flags(p)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="retained-pairs TSV")
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("train", help="train a model on a corpus")
    _add_config_flags(p)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", help="score mention pairs with a trained model")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="predictions TSV")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("cluster", help="cluster mentions from pair predictions")
    p.add_argument("--predictions", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--mode", default="union", choices=("union", "best_antecedent"))
    p.add_argument("--out", type=Path, required=True, help="cluster file")
    p.set_defaults(func=_cmd_cluster)

    p = sub.add_parser("score", help="score system clusters against gold clusters")
    p.add_argument("--gold", type=Path, required=True)
    p.add_argument("--sys", type=Path, required=True)
    p.add_argument("--out", type=Path, help="also write scores.tsv/json/png here")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("run", help="full pipeline: corpus to scores")
    _add_config_flags(p)
    p.add_argument("--corpus", type=Path, help="existing corpus instead of generating")
    p.add_argument("--out", type=Path, help="output directory")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("ablate", help="compare all template variants on one corpus")
    _add_config_flags(p, with_variant=False)
    p.add_argument("--corpus", type=Path, help="existing corpus instead of generating")
    p.add_argument("--out", type=Path, help="output directory")
    p.set_defaults(func=_cmd_ablate)

    return parser


def main(argv: list[str] | None = None) -> int:
    threads = os.environ.get("ECR_THREADS")
    if threads:
        import torch

        torch.set_num_threads(int(threads))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParseError, ValidationError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
