"""A tiny differentiable conditional generator with an image pathway.

The model embeds the last-k context tokens, averages them, concatenates a
projected image feature (or a learned null feature when the image is
withheld), and applies one linear head plus softmax over a closed
vocabulary. It generates captions and question-answer pairs, exposes
teacher-forced per-token answer probabilities under both conditions, and
trains by plain gradient descent on the cross-entropy and contrastive
objectives. All gradients are hand-derived; ``batch_loss_and_grad`` is the
closure target for finite-difference verification.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .contrastive import (
    ContrastiveConfig,
    LossReport,
    ProjectionParams,
    contrastive_backward,
    contrastive_loss,
    embed_sequence,
    project,
    project_backward,
    softmax_backward,
)
from .data import ImageRef, InstructionClass, VlitSample
from .seeding import derive_rng

EOS_TOKEN = "<eos>"
CAPTION_TOKEN = "<cap>"
QUESTION_TOKEN = "<q>"
ANSWER_TOKEN = "<a>"
CLASS_TAGS: dict[InstructionClass, str] = {
    InstructionClass.CONVERSATION: "<conv>",
    InstructionClass.DETAILED_DESCRIPTION: "<desc>",
    InstructionClass.COMPLEX_REASONING: "<reason>",
}
SPECIAL_TOKENS: tuple[str, ...] = (
    EOS_TOKEN,
    CAPTION_TOKEN,
    QUESTION_TOKEN,
    ANSWER_TOKEN,
    CLASS_TAGS[InstructionClass.CONVERSATION],
    CLASS_TAGS[InstructionClass.DETAILED_DESCRIPTION],
    CLASS_TAGS[InstructionClass.COMPLEX_REASONING],
)

Condition = Literal["with_image", "without_image"]
Objective = Literal["crm_only", "clm_only", "combined"]

_CLASS_SHORT = {
    InstructionClass.CONVERSATION: "conv",
    InstructionClass.DETAILED_DESCRIPTION: "desc",
    InstructionClass.COMPLEX_REASONING: "reas",
}


@dataclass(frozen=True)
class Vocab:
    """Closed word-level vocabulary; the special tokens come first."""

    tokens: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocabulary tokens must be unique")
        if self.tokens[: len(SPECIAL_TOKENS)] != SPECIAL_TOKENS:
            raise ValueError("vocabulary must start with the special tokens")
        if len(self.tokens) < len(SPECIAL_TOKENS) + 2:
            raise ValueError("vocabulary needs at least two content tokens")

    def __len__(self) -> int:
        return len(self.tokens)

    @cached_property
    def index(self) -> dict[str, int]:
        return {tok: i for i, tok in enumerate(self.tokens)}

    def id(self, token: str) -> int:
        try:
            return self.index[token]
        except KeyError:
            raise ValueError(f"unknown token {token!r}") from None

    def ids(self, tokens: Sequence[str]) -> list[int]:
        idx = self.index
        try:
            return [idx[t] for t in tokens]
        except KeyError as exc:
            raise ValueError(f"unknown token {exc.args[0]!r}") from None


@dataclass(frozen=True)
class GenerationRequest:
    image: ImageRef
    instruction_class: InstructionClass
    max_question_tokens: int = 3
    max_answer_tokens: int = 4
    decode: str = "greedy"
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.max_question_tokens < 1 or self.max_answer_tokens < 1:
            raise ValueError("generation lengths must be >= 1")
        if self.decode not in ("greedy", "sampled"):
            raise ValueError(f"decode must be greedy or sampled, got {self.decode!r}")
        if self.decode == "sampled" and self.seed is None:
            raise ValueError("sampled decoding requires a seed")


@dataclass(frozen=True)
class QaPair:
    """A generated question-answer pair before probabilities are attached."""

    sample_id: str
    image_id: str
    instruction_class: InstructionClass
    question: tuple[str, ...]
    answer: tuple[str, ...]


@dataclass(frozen=True)
class AnchorEmbedding:
    h: tuple[float, ...]
    source_sample_id: str

    def vector(self) -> np.ndarray:
        return np.asarray(self.h, dtype=np.float64)


@dataclass
class ToyModelParams:
    vocab: Vocab
    token_embeddings: np.ndarray  # (d, V)
    image_projection: np.ndarray  # (d, d_img)
    null_image_feature: np.ndarray  # (d_img,)
    output_head: np.ndarray  # (V, 2d)
    context_window: int = 8
    learning_rate: float = 0.05
    step_count: int = 0

    def __post_init__(self) -> None:
        self.token_embeddings = np.asarray(self.token_embeddings, dtype=np.float64)
        self.image_projection = np.asarray(self.image_projection, dtype=np.float64)
        self.null_image_feature = np.asarray(self.null_image_feature, dtype=np.float64)
        self.output_head = np.asarray(self.output_head, dtype=np.float64)
        d, v = self.token_embeddings.shape
        if v != len(self.vocab) or v < 2:
            raise ValueError(f"embedding table is {self.token_embeddings.shape}, vocab has {len(self.vocab)}")
        if self.image_projection.shape[0] != d:
            raise ValueError("image projection rows must match the embedding dimension")
        if self.null_image_feature.shape != (self.image_projection.shape[1],):
            raise ValueError("null feature length must match the image projection columns")
        if self.output_head.shape != (v, 2 * d):
            raise ValueError(f"output head must be ({v}, {2 * d}), got {self.output_head.shape}")
        if self.context_window < 1:
            raise ValueError("context window must be >= 1")
        for arr in (self.token_embeddings, self.image_projection, self.null_image_feature, self.output_head):
            if not np.all(np.isfinite(arr)):
                raise ValueError("model parameters must be finite")

    @property
    def embed_dim(self) -> int:
        return self.token_embeddings.shape[0]

    @property
    def image_dim(self) -> int:
        return self.null_image_feature.shape[0]

    @classmethod
    def init(
        cls,
        vocab: Vocab,
        embed_dim: int,
        image_dim: int,
        context_window: int,
        seed: int,
        learning_rate: float = 0.05,
    ) -> "ToyModelParams":
        rng = derive_rng(seed, "model-init")
        return cls(
            vocab=vocab,
            token_embeddings=rng.normal(0.0, 0.4, size=(embed_dim, len(vocab))),
            image_projection=rng.normal(0.0, 0.4, size=(embed_dim, image_dim)),
            null_image_feature=rng.normal(0.0, 0.1, size=image_dim),
            output_head=rng.normal(0.0, 0.2, size=(len(vocab), 2 * embed_dim)),
            context_window=context_window,
            learning_rate=learning_rate,
        )

    def copy(self) -> "ToyModelParams":
        return ToyModelParams(
            vocab=self.vocab,
            token_embeddings=self.token_embeddings.copy(),
            image_projection=self.image_projection.copy(),
            null_image_feature=self.null_image_feature.copy(),
            output_head=self.output_head.copy(),
            context_window=self.context_window,
            learning_rate=self.learning_rate,
            step_count=self.step_count,
        )


def condition_features(params: ToyModelParams, image: ImageRef | None, condition: Condition) -> np.ndarray:
    """The conditioning vector for one probe condition."""
    if condition == "without_image":
        return params.null_image_feature
    if condition == "with_image":
        if image is None or image.features is None:
            raise ValueError("with_image condition requires image features")
        feat = np.asarray(image.features, dtype=np.float64)
        if feat.shape != (params.image_dim,):
            raise ValueError(f"image features must have length {params.image_dim}, got {feat.shape}")
        return feat
    raise ValueError(f"unknown condition {condition!r}")


def _dist_from_columns(params: ToyModelParams, columns: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Softmax over the vocabulary given already-embedded context columns."""
    c = columns.mean(axis=1)
    g = params.image_projection @ features
    z = params.output_head @ np.concatenate([c, g])
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def next_token_distribution(
    context: Sequence[str], conditioning: np.ndarray, params: ToyModelParams
) -> np.ndarray:
    """Distribution over the vocabulary after the last-k context window."""
    if len(context) == 0:
        raise ValueError("context must be non-empty")
    ids = params.vocab.ids(context)[-params.context_window :]
    cols = embed_sequence(ids, params.token_embeddings)
    return _dist_from_columns(params, cols, np.asarray(conditioning, dtype=np.float64))


def _content_mask(vocab: Vocab, allow_eos: bool) -> np.ndarray:
    mask = np.ones(len(vocab))
    mask[: len(SPECIAL_TOKENS)] = 0.0
    if allow_eos:
        mask[vocab.id(EOS_TOKEN)] = 1.0
    return mask


def _decode(
    params: ToyModelParams,
    features: np.ndarray,
    context_ids: list[int],
    max_len: int,
    rng: np.random.Generator | None,
    allow_eos: bool,
) -> list[int]:
    """Greedy (rng None) or sampled decode over content tokens.

    Structural tag tokens are never emitted; the end token is only
    reachable when allowed, so probability arrays stay aligned with the
    emitted tokens.
    """
    mask = _content_mask(params.vocab, allow_eos)
    eos_id = params.vocab.id(EOS_TOKEN)
    ctx = list(context_ids)
    out: list[int] = []
    for _ in range(max_len):
        cols = embed_sequence(ctx[-params.context_window :], params.token_embeddings)
        p = _dist_from_columns(params, cols, features) * mask
        p = p / p.sum()
        tok = int(np.argmax(p)) if rng is None else int(rng.choice(len(p), p=p))
        if tok == eos_id:
            break
        out.append(tok)
        ctx.append(tok)
    return out


def generate_caption(image: ImageRef, params: ToyModelParams, max_len: int = 4, seed: int | None = None) -> tuple[str, ...]:
    """Decode a caption for the image; greedy unless a seed is given."""
    features = condition_features(params, image, "with_image")
    rng = None if seed is None else derive_rng(seed, "caption", image.image_id)
    start = [params.vocab.id(CAPTION_TOKEN)]
    ids = _decode(params, features, start, max_len, rng, allow_eos=True)
    if not ids:
        # A caption that terminated immediately still needs one token of content.
        ids = _decode(params, features, start, 1, rng, allow_eos=False)
    return tuple(params.vocab.tokens[i] for i in ids)


def generate_qa(
    image: ImageRef, caption: Sequence[str], request: GenerationRequest, params: ToyModelParams
) -> QaPair:
    """Decode a question then its answer, both tagged with the instruction class.

    The caption and class tag sit in the decoding context; answers decode at
    their full length with the end token excluded.
    """
    if len(caption) == 0:
        raise ValueError("caption must be non-empty")
    features = condition_features(params, image, "with_image")
    vocab = params.vocab
    tag_id = vocab.id(CLASS_TAGS[request.instruction_class])
    cap_ids = vocab.ids(caption)
    if request.decode == "sampled":
        q_rng = derive_rng(request.seed, "question", image.image_id, request.instruction_class.value)
        a_rng = derive_rng(request.seed, "answer", image.image_id, request.instruction_class.value)
        suffix = f"s{request.seed}"
    else:
        q_rng = a_rng = None
        suffix = "g"

    q_ctx = [tag_id] + cap_ids + [vocab.id(QUESTION_TOKEN)]
    q_ids = _decode(params, features, q_ctx, request.max_question_tokens, q_rng, allow_eos=False)
    a_ctx = q_ctx + q_ids + [vocab.id(ANSWER_TOKEN)]
    a_ids = _decode(params, features, a_ctx, request.max_answer_tokens, a_rng, allow_eos=False)

    short = _CLASS_SHORT[request.instruction_class]
    return QaPair(
        sample_id=f"{image.image_id}.{short}.{suffix}",
        image_id=image.image_id,
        instruction_class=request.instruction_class,
        question=tuple(vocab.tokens[i] for i in q_ids),
        answer=tuple(vocab.tokens[i] for i in a_ids),
    )


def scoring_context_ids(params: ToyModelParams, instruction_class: InstructionClass, question: Sequence[str]) -> list[int]:
    """The teacher-forcing context prefix: class tag, question, answer marker.

    Captions are deliberately absent here so that the probe conditions on
    the question and the image alone.
    """
    vocab = params.vocab
    return [vocab.id(CLASS_TAGS[instruction_class]), vocab.id(QUESTION_TOKEN)] + vocab.ids(question) + [
        vocab.id(ANSWER_TOKEN)
    ]


def teacher_forced_probs(
    sample: VlitSample | QaPair,
    condition: Condition,
    params: ToyModelParams,
    image: ImageRef | None = None,
) -> tuple[float, ...]:
    """Probability of each answer token given the true prefix, one condition."""
    features = condition_features(params, image, condition)
    prefix = scoring_context_ids(params, sample.instruction_class, sample.question)
    answer_ids = params.vocab.ids(sample.answer)
    probs = []
    for t, tok in enumerate(answer_ids):
        ids = (prefix + answer_ids[:t])[-params.context_window :]
        cols = embed_sequence(ids, params.token_embeddings)
        p = _dist_from_columns(params, cols, features)
        probs.append(float(p[tok]))
    return tuple(probs)


def attach_probs(qa: QaPair, image: ImageRef, params: ToyModelParams) -> VlitSample:
    """Complete a generated pair with both teacher-forced probability vectors."""
    return VlitSample(
        sample_id=qa.sample_id,
        image_id=qa.image_id,
        instruction_class=qa.instruction_class,
        question=qa.question,
        answer=qa.answer,
        p_visual=teacher_forced_probs(qa, "with_image", params, image),
        p_direct=teacher_forced_probs(qa, "without_image", params, image),
    )


# ---------------------------------------------------------------------------
# Gradients


@dataclass
class ModelGrads:
    token_embeddings: np.ndarray
    image_projection: np.ndarray
    null_image_feature: np.ndarray
    output_head: np.ndarray
    projection_weight: np.ndarray
    projection_bias: np.ndarray

    @classmethod
    def zeros(cls, params: ToyModelParams, projection: ProjectionParams) -> "ModelGrads":
        return cls(
            token_embeddings=np.zeros_like(params.token_embeddings),
            image_projection=np.zeros_like(params.image_projection),
            null_image_feature=np.zeros_like(params.null_image_feature),
            output_head=np.zeros_like(params.output_head),
            projection_weight=np.zeros_like(projection.weight),
            projection_bias=np.zeros_like(projection.bias),
        )


def _ce_item_backward(
    params: ToyModelParams,
    prefix_ids: list[int],
    answer_ids: list[int],
    features: np.ndarray,
    features_are_null: bool,
    weight: float,
    grads: ModelGrads,
) -> float:
    """Mean per-token cross-entropy of one item, accumulating scaled gradients."""
    d = params.embed_dim
    k = params.context_window
    n = len(answer_ids)
    windows = [(prefix_ids + answer_ids[:t])[-k:] for t in range(n)]
    ctx = np.stack(
        [params.token_embeddings[:, w].mean(axis=1) for w in windows], axis=1
    )  # (d, n)
    g = params.image_projection @ features
    x = np.concatenate([ctx, np.tile(g[:, None], (1, n))], axis=0)  # (2d, n)
    z = params.output_head @ x
    z = z - z.max(axis=0, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=0, keepdims=True)  # (V, n)
    picked = p[answer_ids, np.arange(n)]
    loss = float(np.mean(-np.log(picked)))

    dz = p * (weight / n)
    dz[answer_ids, np.arange(n)] -= weight / n
    grads.output_head += dz @ x.T
    dx = params.output_head.T @ dz  # (2d, n)
    dctx = dx[:d]
    dg = dx[d:].sum(axis=1)
    for t, w in enumerate(windows):
        per = dctx[:, t] / len(w)
        for tok in w:
            grads.token_embeddings[:, tok] += per
    grads.image_projection += np.outer(dg, features)
    if features_are_null:
        grads.null_image_feature += params.image_projection.T @ dg
    return loss


@dataclass
class _AnchorCache:
    question_ids: list[int]
    prefix_ids: list[int]
    features: np.ndarray
    g: np.ndarray
    step_probs: list[np.ndarray]
    step_ctx: list[np.ndarray]
    step_windows: list[tuple[int, int]]
    soft_columns: np.ndarray  # (d, anchor_len)
    projected_columns: np.ndarray  # (d, lq + anchor_len)
    h: np.ndarray


def _anchor_forward(
    params: ToyModelParams,
    projection: ProjectionParams,
    instruction_class: InstructionClass,
    question: Sequence[str],
    features: np.ndarray,
    anchor_len: int,
) -> _AnchorCache:
    """Fixed-length soft decode: each step feeds the expected embedding back in.

    Using expected embeddings instead of sampled tokens keeps the whole map
    differentiable in every parameter.
    """
    vocab = params.vocab
    question_ids = vocab.ids(question)
    prefix_ids = scoring_context_ids(params, instruction_class, question)
    k = params.context_window
    g = params.image_projection @ features

    columns = [params.token_embeddings[:, i].copy() for i in prefix_ids]
    step_probs: list[np.ndarray] = []
    step_ctx: list[np.ndarray] = []
    step_windows: list[tuple[int, int]] = []
    for _ in range(anchor_len):
        lo = max(0, len(columns) - k)
        window = np.stack(columns[lo:], axis=1)
        c = window.mean(axis=1)
        z = params.output_head @ np.concatenate([c, g])
        z = z - z.max()
        e = np.exp(z)
        p = e / e.sum()
        columns.append(params.token_embeddings @ p)
        step_probs.append(p)
        step_ctx.append(c)
        step_windows.append((lo, len(columns) - 1))

    soft = np.stack(columns[len(prefix_ids) :], axis=1)
    q_cols = params.token_embeddings[:, question_ids]
    projected = np.concatenate([q_cols, soft], axis=1)
    h = project(projected, projection)
    return _AnchorCache(
        question_ids=question_ids,
        prefix_ids=prefix_ids,
        features=features,
        g=g,
        step_probs=step_probs,
        step_ctx=step_ctx,
        step_windows=step_windows,
        soft_columns=soft,
        projected_columns=projected,
        h=h,
    )


def _anchor_backward(
    params: ToyModelParams,
    projection: ProjectionParams,
    cache: _AnchorCache,
    dh: np.ndarray,
    grads: ModelGrads,
) -> None:
    """Backpropagate dh through the projection and the soft decode steps."""
    d = params.embed_dim
    m = len(cache.prefix_ids)
    lq = len(cache.question_ids)
    n_steps = len(cache.step_probs)

    dw, db, dcols = project_backward(cache.projected_columns, projection, dh)
    grads.projection_weight += dw
    grads.projection_bias += db
    for j, tok in enumerate(cache.question_ids):
        grads.token_embeddings[:, tok] += dcols[:, j]

    # Pending gradients for prefix columns and each soft column.
    dprefix = np.zeros((d, m))
    dsoft = dcols[:, lq:].copy()
    dg = np.zeros_like(cache.g)
    for j in range(n_steps - 1, -1, -1):
        dcol = dsoft[:, j]
        p = cache.step_probs[j]
        grads.token_embeddings += np.outer(dcol, p)
        dp = params.token_embeddings.T @ dcol
        dz = softmax_backward(p, dp)
        x = np.concatenate([cache.step_ctx[j], cache.g])
        grads.output_head += np.outer(dz, x)
        dx = params.output_head.T @ dz
        dc = dx[:d]
        dg += dx[d:]
        lo, hi = cache.step_windows[j]
        per = dc / (hi - lo)
        for idx in range(lo, hi):
            if idx < m:
                dprefix[:, idx] += per
            else:
                dsoft[:, idx - m] += per
    for j, tok in enumerate(cache.prefix_ids):
        grads.token_embeddings[:, tok] += dprefix[:, j]
    grads.image_projection += np.outer(dg, cache.features)


def anchor_embedding(
    question: Sequence[str],
    image: ImageRef,
    params: ToyModelParams,
    projection: ProjectionParams,
    instruction_class: InstructionClass,
    anchor_len: int = 4,
    source_sample_id: str = "",
) -> AnchorEmbedding:
    """Pooled embedding of the question plus a soft-decoded answer."""
    features = condition_features(params, image, "with_image")
    cache = _anchor_forward(params, projection, instruction_class, question, features, anchor_len)
    return AnchorEmbedding(h=tuple(float(v) for v in cache.h), source_sample_id=source_sample_id)


# ---------------------------------------------------------------------------
# Training


@dataclass(frozen=True)
class TrainConfig:
    anchor_len: int = 4
    projection_learning_rate: float = 0.02

    def __post_init__(self) -> None:
        if self.anchor_len < 1:
            raise ValueError("anchor_len must be >= 1")
        if self.projection_learning_rate < 0.0:
            raise ValueError("projection learning rate must be >= 0")


@dataclass(frozen=True)
class TrainItem:
    """One unit of batch work: a sample for cross-entropy, optionally its image
    group's pseudo-label partition for the contrastive term."""

    sample: VlitSample
    image: ImageRef
    positive: VlitSample | None = None
    negatives: tuple[VlitSample, ...] = ()
    anchor_question: tuple[str, ...] | None = None
    contrastive_skipped: bool = False

    def contrastive_ready(self) -> bool:
        return not self.contrastive_skipped and self.positive is not None and len(self.negatives) > 0


def _sample_columns(params: ToyModelParams, sample: VlitSample) -> tuple[np.ndarray, list[int]]:
    ids = params.vocab.ids(sample.question + sample.answer)
    return embed_sequence(ids, params.token_embeddings), ids


def batch_loss_and_grad(
    batch: Sequence[TrainItem],
    objective: Objective,
    params: ToyModelParams,
    projection: ProjectionParams,
    cfg: ContrastiveConfig,
    train_cfg: TrainConfig,
) -> tuple[LossReport, ModelGrads]:
    """Loss of the batch under one objective, with gradients of the total."""
    if len(batch) == 0:
        raise ValueError("training batch must be non-empty")
    if objective not in ("crm_only", "clm_only", "combined"):
        raise ValueError(f"unknown objective {objective!r}")
    grads = ModelGrads.zeros(params, projection)

    ce_value = 0.0
    if objective in ("crm_only", "combined"):
        for item in batch:
            features = condition_features(params, item.image, "with_image")
            prefix = scoring_context_ids(params, item.sample.instruction_class, item.sample.question)
            answer_ids = params.vocab.ids(item.sample.answer)
            ce_value += _ce_item_backward(
                params, prefix, answer_ids, features, False, 1.0 / len(batch), grads
            )
        ce_value /= len(batch)

    lc_value = 0.0
    if objective in ("clm_only", "combined"):
        ready = [item for item in batch if item.contrastive_ready()]
        if not ready:
            raise ValueError("no batch item has a usable pseudo-label partition")
        scale = cfg.contrastive_weight / len(ready)
        for item in ready:
            features = condition_features(params, item.image, "with_image")
            question = item.anchor_question or item.positive.question
            cache = _anchor_forward(
                params, projection, item.positive.instruction_class, question, features, train_cfg.anchor_len
            )
            pos_cols, pos_ids = _sample_columns(params, item.positive)
            h_pos = project(pos_cols, projection)
            neg_data = [_sample_columns(params, neg) for neg in item.negatives]
            h_negs = [project(cols, projection) for cols, _ in neg_data]
            lc_value += contrastive_loss(cache.h, h_pos, h_negs, cfg)

            d_anchor, d_pos, d_negs = contrastive_backward(cache.h, h_pos, h_negs, cfg)
            _anchor_backward(params, projection, cache, d_anchor * scale, grads)
            for (cols, ids), dvec in zip([(pos_cols, pos_ids)] + neg_data, [d_pos] + d_negs):
                dw, db, dcols = project_backward(cols, projection, dvec * scale)
                grads.projection_weight += dw
                grads.projection_bias += db
                for j, tok in enumerate(ids):
                    grads.token_embeddings[:, tok] += dcols[:, j]
        lc_value /= len(ready)

    total = ce_value + cfg.contrastive_weight * lc_value
    report = LossReport(
        cross_entropy=ce_value,
        contrastive=lc_value,
        total=total,
        contrastive_weight=cfg.contrastive_weight,
    )
    return report, grads


def train_step(
    batch: Sequence[TrainItem],
    objective: Objective,
    params: ToyModelParams,
    projection: ProjectionParams,
    cfg: ContrastiveConfig,
    train_cfg: TrainConfig | None = None,
) -> LossReport:
    """One gradient-descent update in place; returns the pre-update loss."""
    train_cfg = train_cfg or TrainConfig()
    report, grads = batch_loss_and_grad(batch, objective, params, projection, cfg, train_cfg)
    lr = params.learning_rate
    params.token_embeddings -= lr * grads.token_embeddings
    params.image_projection -= lr * grads.image_projection
    params.null_image_feature -= lr * grads.null_image_feature
    params.output_head -= lr * grads.output_head
    plr = train_cfg.projection_learning_rate
    projection.weight -= plr * grads.projection_weight
    projection.bias -= plr * grads.projection_bias
    params.step_count += 1
    return report


# ---------------------------------------------------------------------------
# Flat parameter packing, for finite-difference verification


def pack_params(params: ToyModelParams, projection: ProjectionParams) -> np.ndarray:
    return np.concatenate(
        [
            params.token_embeddings.ravel(),
            params.image_projection.ravel(),
            params.null_image_feature.ravel(),
            params.output_head.ravel(),
            projection.weight.ravel(),
            projection.bias.ravel(),
        ]
    )


def unpack_params(
    flat: np.ndarray, params: ToyModelParams, projection: ProjectionParams
) -> tuple[ToyModelParams, ProjectionParams]:
    """Rebuild fresh parameter objects shaped like the given ones."""
    out = []
    offset = 0
    for arr in (
        params.token_embeddings,
        params.image_projection,
        params.null_image_feature,
        params.output_head,
        projection.weight,
        projection.bias,
    ):
        out.append(np.asarray(flat[offset : offset + arr.size], dtype=np.float64).reshape(arr.shape))
        offset += arr.size
    if offset != flat.size:
        raise ValueError(f"flat vector has {flat.size} entries, expected {offset}")
    new_params = ToyModelParams(
        vocab=params.vocab,
        token_embeddings=out[0],
        image_projection=out[1],
        null_image_feature=out[2],
        output_head=out[3],
        context_window=params.context_window,
        learning_rate=params.learning_rate,
        step_count=params.step_count,
    )
    return new_params, ProjectionParams(weight=out[4], bias=out[5])


def pack_grads(grads: ModelGrads) -> np.ndarray:
    return np.concatenate(
        [
            grads.token_embeddings.ravel(),
            grads.image_projection.ravel(),
            grads.null_image_feature.ravel(),
            grads.output_head.ravel(),
            grads.projection_weight.ravel(),
            grads.projection_bias.ravel(),
        ]
    )


def objective_closure(
    batch: Sequence[TrainItem],
    objective: Objective,
    params: ToyModelParams,
    projection: ProjectionParams,
    cfg: ContrastiveConfig,
    train_cfg: TrainConfig,
):
    """A (loss, gradient) function of the flat parameter vector."""

    def fn(flat: np.ndarray) -> tuple[float, np.ndarray]:
        p, proj = unpack_params(flat, params, projection)
        report, grads = batch_loss_and_grad(batch, objective, p, proj, cfg, train_cfg)
        return report.total, pack_grads(grads)

    return fn


# ---------------------------------------------------------------------------
# Checkpoints


_CHECKPOINT_VERSION = 1


def save_checkpoint(params: ToyModelParams, projection: ProjectionParams, path: str | Path) -> None:
    """Structured-text dump of every parameter matrix; loads back bitwise."""
    payload = {
        "format_version": _CHECKPOINT_VERSION,
        "vocab": list(params.vocab.tokens),
        "context_window": params.context_window,
        "learning_rate": params.learning_rate,
        "step_count": params.step_count,
        "token_embeddings": params.token_embeddings.tolist(),
        "image_projection": params.image_projection.tolist(),
        "null_image_feature": params.null_image_feature.tolist(),
        "output_head": params.output_head.tolist(),
        "projection_weight": projection.weight.tolist(),
        "projection_bias": projection.bias.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False, separators=(",", ":"))


def load_checkpoint(path: str | Path) -> tuple[ToyModelParams, ProjectionParams]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    version = payload.get("format_version")
    if version != _CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version!r}")
    params = ToyModelParams(
        vocab=Vocab(tokens=tuple(payload["vocab"])),
        token_embeddings=np.array(payload["token_embeddings"], dtype=np.float64),
        image_projection=np.array(payload["image_projection"], dtype=np.float64),
        null_image_feature=np.array(payload["null_image_feature"], dtype=np.float64),
        output_head=np.array(payload["output_head"], dtype=np.float64),
        context_window=int(payload["context_window"]),
        learning_rate=float(payload["learning_rate"]),
        step_count=int(payload["step_count"]),
    )
    projection = ProjectionParams(
        weight=np.array(payload["projection_weight"], dtype=np.float64),
        bias=np.array(payload["projection_bias"], dtype=np.float64),
    )
    return params, projection
