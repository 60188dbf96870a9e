"""Relevance-scored instruction-tuning data curation with a contrastive
generator loop, at toy scale."""

from .contrastive import (
    ContrastiveConfig,
    LossReport,
    ProjectionParams,
    combined_loss,
    contrastive_loss,
    cosine_sim,
    cross_entropy_loss,
    embed_sequence,
    grad_check,
    project,
)
from .data import (
    DataFormatError,
    FilterConfig,
    ImageRef,
    InstructionClass,
    VlitSample,
    filter_samples,
    load_images,
    load_samples,
    save_images,
    save_samples,
)
from .model import (
    AnchorEmbedding,
    GenerationRequest,
    ToyModelParams,
    TrainItem,
    Vocab,
    anchor_embedding,
    generate_caption,
    generate_qa,
    load_checkpoint,
    next_token_distribution,
    save_checkpoint,
    teacher_forced_probs,
    train_step,
)
from .pipeline import (
    MetricsReport,
    PipelineConfig,
    StageError,
    emit_report,
    run_ablation_grid,
    run_pipeline,
    run_stage,
    sweep_selection_fraction,
)
from .scoring import (
    PseudoLabelPartition,
    ScoredSample,
    SelectionConfig,
    answer_scores,
    i2c_score,
    partition_pseudo_labels,
    rank_and_select,
    score_samples,
)

__version__ = "0.1.0"

__all__ = [
    "AnchorEmbedding",
    "ContrastiveConfig",
    "DataFormatError",
    "FilterConfig",
    "GenerationRequest",
    "ImageRef",
    "InstructionClass",
    "LossReport",
    "MetricsReport",
    "PipelineConfig",
    "ProjectionParams",
    "PseudoLabelPartition",
    "ScoredSample",
    "SelectionConfig",
    "StageError",
    "ToyModelParams",
    "TrainItem",
    "VlitSample",
    "Vocab",
    "anchor_embedding",
    "answer_scores",
    "combined_loss",
    "contrastive_loss",
    "cosine_sim",
    "cross_entropy_loss",
    "embed_sequence",
    "emit_report",
    "filter_samples",
    "generate_caption",
    "generate_qa",
    "grad_check",
    "i2c_score",
    "load_checkpoint",
    "load_images",
    "load_samples",
    "next_token_distribution",
    "partition_pseudo_labels",
    "project",
    "rank_and_select",
    "run_ablation_grid",
    "run_pipeline",
    "run_stage",
    "save_checkpoint",
    "save_images",
    "save_samples",
    "score_samples",
    "sweep_selection_fraction",
    "teacher_forced_probs",
    "train_step",
]
