"""Prompt-based within-document event coreference resolution.

The package turns each mention pair into a cloze-style prompt, predicts
masked label slots for event types, compatibility, and coreference with a
small masked-language-model encoder, refreshes the mask representations with
tensor-matching features before the final pass, undersamples easy or distant
training pairs with a learned similarity index, clusters pairwise decisions
greedily, and scores partitions with the standard coreference metric suite.
"""

from .clustering import MODE_BEST_ANTECEDENT, MODE_UNION, greedy_cluster
from .config import (
    ClusteringConfig,
    ExperimentConfig,
    config_from_dict,
    config_hash,
    load_experiment_config,
)
from .corpus import (
    ArgumentMention,
    Document,
    EventMention,
    GeneratorConfig,
    MentionPair,
    argument_state,
    enumerate_pairs,
    generate_synthetic_corpus,
    gold_partition,
    load_corpus,
    read_cluster_file,
    save_corpus,
    write_cluster_file,
)
from .encoder import Encoder, EncoderConfig, Vocabulary, build_vocab, tokenize
from .errors import (
    ConfigError,
    InputError,
    LayoutError,
    LengthError,
    ParseError,
    PipelineError,
    TrainingDiverged,
    ValidationError,
)
from .matching import MatchingConfig, MatchingHead
from .metrics import (
    MetricReport,
    MetricScore,
    aggregate_scores,
    b_cubed,
    blanc,
    ceaf_e,
    format_report,
    muc,
    pair_classification,
    report,
)
from .pipeline import ExperimentResult, run_ablation, run_experiment
from .sampling import (
    SamplingConfig,
    SimilarityIndex,
    apply_sampling,
    circle_loss,
    train_similarity_encoder,
)
from .template import (
    PromptLayout,
    VARIANT_CONNECT,
    VARIANT_FULL,
    VARIANT_NORMAL,
    VARIANT_QUESTION,
    VARIANT_SOFT,
    VARIANTS,
    assemble_prompt,
    mask_triggers,
)
from .training import (
    PromptModel,
    TrainConfig,
    build_model,
    joint_loss,
    load_model,
    predict_pairs,
    save_model,
    train,
)
from .verbalizer import Verbalizer, build_verbalizers

__version__ = "0.1.0"

__all__ = [
    "ArgumentMention",
    "ClusteringConfig",
    "ConfigError",
    "Document",
    "Encoder",
    "EncoderConfig",
    "EventMention",
    "ExperimentConfig",
    "ExperimentResult",
    "GeneratorConfig",
    "InputError",
    "LayoutError",
    "LengthError",
    "MatchingConfig",
    "MatchingHead",
    "MentionPair",
    "MetricReport",
    "MetricScore",
    "MODE_BEST_ANTECEDENT",
    "MODE_UNION",
    "ParseError",
    "PipelineError",
    "PromptLayout",
    "PromptModel",
    "SamplingConfig",
    "SimilarityIndex",
    "TrainConfig",
    "TrainingDiverged",
    "ValidationError",
    "VARIANT_CONNECT",
    "VARIANT_FULL",
    "VARIANT_NORMAL",
    "VARIANT_QUESTION",
    "VARIANT_SOFT",
    "VARIANTS",
    "Verbalizer",
    "Vocabulary",
    "aggregate_scores",
    "apply_sampling",
    "argument_state",
    "assemble_prompt",
    "b_cubed",
    "blanc",
    "build_model",
    "build_verbalizers",
    "build_vocab",
    "ceaf_e",
    "circle_loss",
    "config_from_dict",
    "config_hash",
    "enumerate_pairs",
    "format_report",
    "generate_synthetic_corpus",
    "gold_partition",
    "greedy_cluster",
    "joint_loss",
    "load_corpus",
    "load_experiment_config",
    "load_model",
    "mask_triggers",
    "muc",
    "pair_classification",
    "predict_pairs",
    "read_cluster_file",
    "report",
    "run_ablation",
    "run_experiment",
    "save_corpus",
    "save_model",
    "tokenize",
    "train",
    "train_similarity_encoder",
    "write_cluster_file",
]
