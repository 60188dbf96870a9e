"""Seeded toy world: vocabulary, images with planted content, warmup corpus.

Images are noise vectors with a unit bump planted on their topic dimension.
The warmup corpus teaches the fresh generator three habits: captioning with
topic words, answering content questions with topic words, and (with twice
the weight, under both conditions) falling back on generic filler answers.
The heavy generic mixture is what gives initial generations their
language-prior bias; relevance scoring then has something to correct.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contrastive import ProjectionParams
from .data import ImageRef, InstructionClass
from .model import (
    CAPTION_TOKEN,
    EOS_TOKEN,
    SPECIAL_TOKENS,
    ModelGrads,
    ToyModelParams,
    Vocab,
    _ce_item_backward,
    scoring_context_ids,
)
from .seeding import derive_rng

TOPICS: tuple[str, ...] = ("cat", "dog", "car", "tree", "ball", "fish", "bird", "house")

_TOPIC_WORDS: dict[str, tuple[str, ...]] = {
    "cat": ("cat", "kitten", "whiskers", "purr", "meow"),
    "dog": ("dog", "puppy", "tail", "fetch", "woof"),
    "car": ("car", "wheel", "engine", "road", "drive"),
    "tree": ("tree", "leaf", "branch", "trunk", "root"),
    "ball": ("ball", "round", "bounce", "toss", "game"),
    "fish": ("fish", "fin", "swim", "water", "gill"),
    "bird": ("bird", "wing", "nest", "feather", "sky"),
    "house": ("house", "door", "roof", "window", "wall"),
}

GENERIC_WORDS: tuple[str, ...] = (
    "what", "is", "this", "the", "a", "it", "tell", "me", "about",
    "more", "and", "very", "on", "in", "there", "big", "small",
)

CANONICAL_QUESTIONS: dict[InstructionClass, tuple[str, ...]] = {
    InstructionClass.CONVERSATION: ("what", "is", "this"),
    InstructionClass.DETAILED_DESCRIPTION: ("tell", "me", "about"),
    InstructionClass.COMPLEX_REASONING: ("what", "is", "there"),
}

PRIOR_ANSWERS: tuple[tuple[str, ...], ...] = (
    ("it", "is", "very", "big"),
    ("it", "is", "very", "small"),
    ("there", "is", "a", "big"),
)


def build_vocab() -> Vocab:
    words: list[str] = list(SPECIAL_TOKENS)
    for topic in TOPICS:
        words.extend(_TOPIC_WORDS[topic])
    words.extend(GENERIC_WORDS)
    return Vocab(tokens=tuple(words))


def topic_words(topic_index: int) -> tuple[str, ...]:
    return _TOPIC_WORDS[TOPICS[topic_index]]


def make_images(count: int, image_dim: int, seed: int) -> list[ImageRef]:
    """Noise features with 1.0 added on the topic dimension; topics cycle."""
    if image_dim < len(TOPICS):
        raise ValueError(f"image_dim must be >= {len(TOPICS)} to plant every topic")
    rng = derive_rng(seed, "images")
    images = []
    for i in range(count):
        features = rng.uniform(0.0, 0.3, size=image_dim)
        features[i % len(TOPICS)] += 1.0
        images.append(ImageRef(image_id=f"img{i:04d}", features=tuple(float(v) for v in features)))
    return images


def image_topic_index(image: ImageRef) -> int:
    """Recover the planted topic; the bump dominates the noise."""
    return int(np.argmax(np.asarray(image.features[: len(TOPICS)])))


def content_answer(topic_index: int, instruction_class: InstructionClass) -> tuple[str, ...]:
    w = topic_words(topic_index)
    if instruction_class is InstructionClass.CONVERSATION:
        return (w[0], w[1], w[2], w[3])
    if instruction_class is InstructionClass.DETAILED_DESCRIPTION:
        return (w[1], w[2], w[3], w[4])
    return (w[2], w[3], w[4], w[0])


def caption_target(topic_index: int) -> tuple[str, ...]:
    w = topic_words(topic_index)
    return (w[0], w[1])


@dataclass(frozen=True)
class WarmupItem:
    prefix_ids: tuple[int, ...]
    target_ids: tuple[int, ...]
    features: tuple[float, ...] | None  # None trains under the null feature


def build_warmup_items(params: ToyModelParams, images: list[ImageRef], seed: int) -> list[WarmupItem]:
    """The warmup corpus; the generic prior outweighs content answers 2:1."""
    vocab = params.vocab
    rng = derive_rng(seed, "warmup-marginal")
    items: list[WarmupItem] = []
    eos_id = vocab.id(EOS_TOKEN)
    for i, image in enumerate(images):
        topic = image_topic_index(image)
        cap = caption_target(topic)
        items.append(
            WarmupItem(
                prefix_ids=(vocab.id(CAPTION_TOKEN),),
                target_ids=tuple(vocab.ids(cap)) + (eos_id,),
                features=image.features,
            )
        )
        for c, cls in enumerate(InstructionClass):
            prefix = tuple(scoring_context_ids(params, cls, CANONICAL_QUESTIONS[cls]))
            content = tuple(vocab.ids(content_answer(topic, cls)))
            items.append(WarmupItem(prefix, content, image.features))
            for v in range(2):
                prior = tuple(vocab.ids(PRIOR_ANSWERS[(i + c + v) % len(PRIOR_ANSWERS)]))
                items.append(WarmupItem(prefix, prior, image.features))
                items.append(WarmupItem(prefix, prior, None))
            # The null condition sees content words only as a topic-blind marginal.
            marginal = tuple(vocab.ids(content_answer(int(rng.integers(len(TOPICS))), cls)))
            items.append(WarmupItem(prefix, marginal, None))
    return items


def warmup_model(
    params: ToyModelParams,
    images: list[ImageRef],
    seed: int,
    epochs: int = 6,
    batch_size: int = 64,
) -> list[float]:
    """Minibatch gradient descent over the warmup corpus; returns epoch losses."""
    items = build_warmup_items(params, images, seed)
    order_rng = derive_rng(seed, "warmup-order")
    # Projection gradients are untouched here; a zero-size placeholder keeps
    # the gradient container uniform.
    dummy_projection = ProjectionParams(
        weight=np.zeros((params.embed_dim, params.embed_dim)), bias=np.zeros(params.embed_dim)
    )
    losses = []
    for _ in range(epochs):
        order = order_rng.permutation(len(items))
        epoch_loss = 0.0
        for start in range(0, len(order), batch_size):
            chunk = order[start : start + batch_size]
            grads = ModelGrads.zeros(params, dummy_projection)
            batch_loss = 0.0
            for idx in chunk:
                item = items[idx]
                if item.features is None:
                    feat = params.null_image_feature
                    is_null = True
                else:
                    feat = np.asarray(item.features, dtype=np.float64)
                    is_null = False
                batch_loss += _ce_item_backward(
                    params,
                    list(item.prefix_ids),
                    list(item.target_ids),
                    feat,
                    is_null,
                    1.0 / len(chunk),
                    grads,
                )
            lr = params.learning_rate
            params.token_embeddings -= lr * grads.token_embeddings
            params.image_projection -= lr * grads.image_projection
            params.null_image_feature -= lr * grads.null_image_feature
            params.output_head -= lr * grads.output_head
            params.step_count += 1
            epoch_loss += batch_loss / len(order)
        losses.append(float(epoch_loss))
    return losses


def new_world_model(
    embed_dim: int,
    image_dim: int,
    context_window: int,
    seed: int,
    learning_rate: float = 0.05,
) -> tuple[ToyModelParams, ProjectionParams]:
    """A fresh model over the world vocabulary plus its projection head."""
    vocab = build_vocab()
    params = ToyModelParams.init(
        vocab, embed_dim, image_dim, context_window, seed, learning_rate=learning_rate
    )
    projection = ProjectionParams.init(embed_dim, derive_rng(seed, "projection-init"))
    return params, projection
