"""Image-content relevance scores and pseudo-label selection.

The relevance score of a sample is a KL-style sum over its answer
tokens, sum_t p_v[t] * ln(p_v[t] / p_d[t]), comparing the token
probabilities with the image present against those with it withheld.
The formula is applied verbatim over token positions; the per-token
probabilities are not a normalized distribution over t, so the score
can be negative when the image lowers the answer's probability.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np

from .data import DataFormatError, VlitSample, dumps_record, record_to_sample, sample_to_record

Condition = Literal["with_image", "without_image"]

# Tolerates float fuzz in decimal fractions (0.05 * 20 is slightly above 1.0).
_COUNT_EPS = 1e-9


@dataclass(frozen=True)
class ScoredSample:
    """A sample together with its score components."""

    sample: VlitSample
    s_av: tuple[float, ...]
    s_a: tuple[float, ...]
    i2c: float

    def __post_init__(self) -> None:
        n = len(self.sample.answer)
        if len(self.s_av) != n or len(self.s_a) != n:
            raise ValueError(f"sample {self.sample.sample_id!r}: score vectors must have answer length {n}")
        if not math.isfinite(self.i2c):
            raise ValueError(f"sample {self.sample.sample_id!r}: score is not finite: {self.i2c}")

    @property
    def sample_id(self) -> str:
        return self.sample.sample_id

    @property
    def image_id(self) -> str:
        return self.sample.image_id


@dataclass(frozen=True)
class SelectionConfig:
    fraction: float = 0.10
    tie_break: str = "sample_id"

    def __post_init__(self) -> None:
        if not (0.0 < self.fraction <= 1.0):
            raise ValueError(f"fraction must be in (0, 1], got {self.fraction}")
        if self.tie_break != "sample_id":
            raise ValueError(f"unsupported tie_break {self.tie_break!r}")


@dataclass(frozen=True)
class PseudoLabelPartition:
    """Per-image positive sample and negative sample set.

    ``negatives`` is stored sorted; it is empty only when the image has a
    single sample, in which case the partition is flagged as skipped for
    contrastive training.
    """

    image_id: str
    positive: str
    negatives: tuple[str, ...]
    skipped_for_contrastive: bool = False

    def __post_init__(self) -> None:
        if self.positive in self.negatives:
            raise ValueError(f"positive {self.positive!r} also appears in negatives")
        if not self.negatives and not self.skipped_for_contrastive:
            raise ValueError(f"image {self.image_id!r}: empty negatives must be flagged skipped")


def answer_scores(sample: VlitSample, condition: Condition) -> tuple[float, ...]:
    """The per-token answer scores for one condition of the probe."""
    if condition == "with_image":
        return sample.p_visual
    if condition == "without_image":
        return sample.p_direct
    raise ValueError(f"unknown condition {condition!r}")


def i2c_score(s_av: Sequence[float], s_a: Sequence[float]) -> float:
    """KL-style divergence between the with-image and without-image scores.

    Natural logarithm. Identical inputs give exactly 0.0 because every
    ratio is exactly 1.0.
    """
    av = np.asarray(s_av, dtype=np.float64)
    a = np.asarray(s_a, dtype=np.float64)
    if av.shape != a.shape or av.ndim != 1:
        raise ValueError(f"score vectors must be equal-length 1-d, got {av.shape} and {a.shape}")
    if av.size == 0:
        raise ValueError("score vectors must be non-empty")
    return float(np.sum(av * np.log(av / a)))


def i2c_score_per_token(s_av: Sequence[float], s_a: Sequence[float]) -> float:
    """Length-normalized variant, exposed as a diagnostic only."""
    return i2c_score(s_av, s_a) / len(s_av)


def score_sample(sample: VlitSample) -> ScoredSample:
    s_av = answer_scores(sample, "with_image")
    s_a = answer_scores(sample, "without_image")
    return ScoredSample(sample=sample, s_av=s_av, s_a=s_a, i2c=i2c_score(s_av, s_a))


def score_samples(samples: Iterable[VlitSample]) -> list[ScoredSample]:
    return [score_sample(s) for s in samples]


def selection_count(fraction: float, n: int) -> int:
    """ceil(fraction * n), honoring the decimal intent of the fraction."""
    return max(1, math.ceil(fraction * n - _COUNT_EPS))


def rank_and_select(scored: Sequence[ScoredSample], cfg: SelectionConfig) -> list[ScoredSample]:
    """The top ceil(fraction * N) samples by score, ties by sample_id.

    The result is sorted by score descending; every selected score is >=
    every unselected score.
    """
    if not scored:
        raise ValueError("cannot select from an empty score list")
    ranked = sorted(scored, key=lambda s: (-s.i2c, s.sample_id))
    return ranked[: selection_count(cfg.fraction, len(ranked))]


def rank_and_select_per_image(
    scored: Sequence[ScoredSample], cfg: SelectionConfig
) -> list[ScoredSample]:
    """Apply the selection fraction within each image's sample group."""
    groups: dict[str, list[ScoredSample]] = {}
    for s in scored:
        groups.setdefault(s.image_id, []).append(s)
    picked: list[ScoredSample] = []
    for image_id in sorted(groups):
        picked.extend(rank_and_select(groups[image_id], cfg))
    return sorted(picked, key=lambda s: (-s.i2c, s.sample_id))


def partition_pseudo_labels(scored: Sequence[ScoredSample]) -> list[PseudoLabelPartition]:
    """Split each image's samples into one positive and the rest as negatives.

    The positive is the highest-scoring sample of the image (ties broken
    by ascending sample_id). Images with a single sample are emitted with
    empty negatives and flagged skipped_for_contrastive. Partitions are
    returned sorted by image_id.
    """
    groups: dict[str, list[ScoredSample]] = {}
    for s in scored:
        groups.setdefault(s.image_id, []).append(s)
    partitions = []
    for image_id in sorted(groups):
        group = sorted(groups[image_id], key=lambda s: (-s.i2c, s.sample_id))
        positive = group[0]
        negatives = tuple(sorted(s.sample_id for s in group[1:]))
        partitions.append(
            PseudoLabelPartition(
                image_id=image_id,
                positive=positive.sample_id,
                negatives=negatives,
                skipped_for_contrastive=not negatives,
            )
        )
    return partitions


def save_scored(scored: Iterable[ScoredSample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in scored:
            record = sample_to_record(s.sample)
            record["i2c_score"] = float(s.i2c)
            fh.write(dumps_record(record))
            fh.write("\n")


def load_scored(path: str | Path) -> list[ScoredSample]:
    scored: list[ScoredSample] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}:{lineno}: not valid JSON: {exc.msg}") from None
            if "i2c_score" not in record:
                raise DataFormatError(f"{path}:{lineno}: missing field 'i2c_score'")
            i2c = float(record.pop("i2c_score"))
            sample = record_to_sample(record)
            scored.append(
                ScoredSample(sample=sample, s_av=sample.p_visual, s_a=sample.p_direct, i2c=i2c)
            )
    return scored


def save_partitions(partitions: Iterable[PseudoLabelPartition], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in partitions:
            record = {
                "image_id": p.image_id,
                "positive": p.positive,
                "negatives": list(p.negatives),
                "skipped_for_contrastive": p.skipped_for_contrastive,
            }
            fh.write(dumps_record(record))
            fh.write("\n")


def load_partitions(path: str | Path) -> list[PseudoLabelPartition]:
    partitions: list[PseudoLabelPartition] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}:{lineno}: not valid JSON: {exc.msg}") from None
            try:
                partitions.append(
                    PseudoLabelPartition(
                        image_id=record["image_id"],
                        positive=record["positive"],
                        negatives=tuple(record["negatives"]),
                        skipped_for_contrastive=bool(record["skipped_for_contrastive"]),
                    )
                )
            except KeyError as exc:
                raise DataFormatError(f"{path}:{lineno}: missing field {exc.args[0]!r}") from None
    return partitions
