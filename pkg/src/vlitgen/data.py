"""Domain records for image-grounded instruction-tuning samples.

A sample ties one question-answer pair to an image and carries the
generator's per-answer-token probabilities under two conditions: with
the image present and with it withheld. Files are JSON Lines, one
record per line, written with a fixed field order and compact
separators so that identical data produces identical bytes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

# Probabilities below this are lifted to it so log ratios stay finite.
PROB_FLOOR = 1e-12

DROP_DUPLICATE = "duplicate"
DROP_TOO_SHORT = "too_short"
DROP_TOO_LONG = "too_long"
DROP_INVALID = "invalid"


class DataFormatError(ValueError):
    """A samples file or record violates the schema."""


class InstructionClass(str, Enum):
    CONVERSATION = "conversation"
    DETAILED_DESCRIPTION = "detailed_description"
    COMPLEX_REASONING = "complex_reasoning"

    @classmethod
    def parse(cls, value: str) -> "InstructionClass":
        try:
            return cls(value)
        except ValueError:
            raise DataFormatError(f"unknown instruction_class {value!r}") from None


@dataclass(frozen=True)
class ImageRef:
    """An image identified by id, represented by an abstract feature vector.

    ``features`` is None when probabilities come from an external adapter
    and no toy-world vector exists for the image.
    """

    image_id: str
    features: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if not self.image_id:
            raise DataFormatError("image_id must be non-empty")
        if self.features is not None:
            feats = tuple(float(x) for x in self.features)
            if any(not math.isfinite(x) for x in feats):
                raise DataFormatError(f"image {self.image_id!r} has non-finite features")
            object.__setattr__(self, "features", feats)


def _clean_probs(values: Sequence[float], name: str, sample_id: str) -> tuple[float, ...]:
    out = []
    for x in values:
        x = float(x)
        if not math.isfinite(x) or x < 0.0 or x > 1.0:
            raise DataFormatError(f"sample {sample_id!r}: {name} value {x!r} outside (0, 1]")
        out.append(max(x, PROB_FLOOR))
    return tuple(out)


@dataclass(frozen=True)
class VlitSample:
    """One question-answer pair with two-condition token probabilities.

    ``p_visual[t]`` is the probability of answer token t with the image
    present, ``p_direct[t]`` with the image withheld. All four sequence
    fields must have consistent lengths and the probabilities are clamped
    to [PROB_FLOOR, 1] at construction, which makes the file round-trip
    exact for every constructible sample.
    """

    sample_id: str
    image_id: str
    instruction_class: InstructionClass
    question: tuple[str, ...]
    answer: tuple[str, ...]
    p_visual: tuple[float, ...]
    p_direct: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.sample_id:
            raise DataFormatError("sample_id must be non-empty")
        if not self.image_id:
            raise DataFormatError(f"sample {self.sample_id!r}: image_id must be non-empty")
        object.__setattr__(self, "instruction_class", InstructionClass(self.instruction_class))
        object.__setattr__(self, "question", tuple(str(t) for t in self.question))
        object.__setattr__(self, "answer", tuple(str(t) for t in self.answer))
        if len(self.answer) < 1:
            raise DataFormatError(f"sample {self.sample_id!r}: answer must have at least one token")
        pv = _clean_probs(self.p_visual, "p_visual", self.sample_id)
        pd = _clean_probs(self.p_direct, "p_direct", self.sample_id)
        n = len(self.answer)
        if len(pv) != n or len(pd) != n:
            raise DataFormatError(
                f"sample {self.sample_id!r}: answer has {n} tokens but "
                f"p_visual has {len(pv)} and p_direct has {len(pd)} entries"
            )
        object.__setattr__(self, "p_visual", pv)
        object.__setattr__(self, "p_direct", pd)


@dataclass(frozen=True)
class FilterConfig:
    min_answer_tokens: int = 3
    max_answer_tokens: int = 256
    dedup_on: str = "exact_qa_pair"

    def __post_init__(self) -> None:
        if not (1 <= self.min_answer_tokens <= self.max_answer_tokens):
            raise ValueError(
                f"need 1 <= min_answer_tokens <= max_answer_tokens, got "
                f"{self.min_answer_tokens}..{self.max_answer_tokens}"
            )
        if self.dedup_on != "exact_qa_pair":
            raise ValueError(f"unsupported dedup_on {self.dedup_on!r}")


def dumps_record(record: dict) -> str:
    """Serialize one record the way every file in this package is written."""
    return json.dumps(record, ensure_ascii=False, separators=(",", ":"))


def sample_to_record(sample: VlitSample) -> dict:
    return {
        "sample_id": sample.sample_id,
        "image_id": sample.image_id,
        "instruction_class": sample.instruction_class.value,
        "question": list(sample.question),
        "answer": list(sample.answer),
        "p_visual": [float(x) for x in sample.p_visual],
        "p_direct": [float(x) for x in sample.p_direct],
    }


def record_to_sample(record: dict) -> VlitSample:
    try:
        return VlitSample(
            sample_id=record["sample_id"],
            image_id=record["image_id"],
            instruction_class=InstructionClass.parse(record["instruction_class"]),
            question=tuple(record["question"]),
            answer=tuple(record["answer"]),
            p_visual=tuple(record["p_visual"]),
            p_direct=tuple(record["p_direct"]),
        )
    except KeyError as exc:
        raise DataFormatError(f"record is missing field {exc.args[0]!r}") from None


def load_samples(path: str | Path) -> list[VlitSample]:
    """Read a JSONL samples file, validating every record.

    Raises DataFormatError with the 1-based line number on parse failures,
    with the sample_id on invariant violations, and on duplicate sample_ids.
    """
    samples: list[VlitSample] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}:{lineno}: not valid JSON: {exc.msg}") from None
            if not isinstance(record, dict):
                raise DataFormatError(f"{path}:{lineno}: record is not an object")
            sample = record_to_sample(record)
            if sample.sample_id in seen:
                raise DataFormatError(f"{path}:{lineno}: duplicate sample_id {sample.sample_id!r}")
            seen.add(sample.sample_id)
            samples.append(sample)
    return samples


def save_samples(samples: Iterable[VlitSample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(dumps_record(sample_to_record(sample)))
            fh.write("\n")


def load_images(path: str | Path) -> list[ImageRef]:
    images: list[ImageRef] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}:{lineno}: not valid JSON: {exc.msg}") from None
            try:
                image = ImageRef(record["image_id"], tuple(record["features"]))
            except KeyError as exc:
                raise DataFormatError(f"{path}:{lineno}: missing field {exc.args[0]!r}") from None
            if image.image_id in seen:
                raise DataFormatError(f"{path}:{lineno}: duplicate image_id {image.image_id!r}")
            seen.add(image.image_id)
            images.append(image)
    return images


def save_images(images: Iterable[ImageRef], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for image in images:
            if image.features is None:
                raise ValueError(f"image {image.image_id!r} has no features to save")
            record = {"image_id": image.image_id, "features": [float(x) for x in image.features]}
            fh.write(dumps_record(record))
            fh.write("\n")


def save_dropped(dropped: Iterable[tuple[str, str]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sample_id, reason in dropped:
            fh.write(dumps_record({"sample_id": sample_id, "reason": reason}))
            fh.write("\n")


def filter_samples(
    samples: Sequence[VlitSample], cfg: FilterConfig
) -> tuple[list[VlitSample], list[tuple[str, str]]]:
    """Drop out-of-bounds and duplicate samples.

    Returns (kept, dropped) where dropped pairs each sample_id with a
    reason. Length bounds are checked first; among the remaining samples
    the first occurrence of an exact (image_id, question, answer) triple
    is kept and later ones are dropped as duplicates. kept + dropped is
    always a partition of the input, in input order.
    """
    kept: list[VlitSample] = []
    dropped: list[tuple[str, str]] = []
    seen: set[tuple] = set()
    for sample in samples:
        n = len(sample.answer)
        if n < cfg.min_answer_tokens:
            dropped.append((sample.sample_id, DROP_TOO_SHORT))
            continue
        if n > cfg.max_answer_tokens:
            dropped.append((sample.sample_id, DROP_TOO_LONG))
            continue
        key = (sample.image_id, sample.question, sample.answer)
        if key in seen:
            dropped.append((sample.sample_id, DROP_DUPLICATE))
            continue
        seen.add(key)
        kept.append(sample)
    return kept, dropped
