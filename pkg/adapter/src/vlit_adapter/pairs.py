"""Input pairs file: the QA items to probe, one JSON record per line."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .config import INSTRUCTION_CLASSES


class PairsFormatError(ValueError):
    pass


@dataclass(frozen=True)
class QaPairInput:
    image_path: str
    question: str
    answer: str
    instruction_class: str

    def __post_init__(self) -> None:
        if not self.image_path:
            raise PairsFormatError("image_path must be non-empty")
        if not self.question.strip():
            raise PairsFormatError("question must be non-empty")
        if self.instruction_class not in INSTRUCTION_CLASSES:
            raise PairsFormatError(
                f"instruction_class must be one of {INSTRUCTION_CLASSES}, got {self.instruction_class!r}"
            )


def _text_field(record: dict, key: str, lineno: int) -> str:
    # question/answer may arrive pre-tokenized as an array; join on spaces
    try:
        value = record[key]
    except KeyError:
        raise PairsFormatError(f"line {lineno}: missing field {key!r}") from None
    if isinstance(value, list):
        if not all(isinstance(x, str) for x in value):
            raise PairsFormatError(f"line {lineno}: {key} array must hold strings")
        return " ".join(value)
    if isinstance(value, str):
        return value
    raise PairsFormatError(f"line {lineno}: {key} must be a string or array of strings")


def load_pairs(path: str | Path) -> list[QaPairInput]:
    pairs: list[QaPairInput] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise PairsFormatError(f"line {lineno}: not valid JSON: {exc.msg}") from None
            if not isinstance(record, dict):
                raise PairsFormatError(f"line {lineno}: record is not an object")
            try:
                cls = record["instruction_class"]
            except KeyError:
                raise PairsFormatError(f"line {lineno}: missing field 'instruction_class'") from None
            pairs.append(
                QaPairInput(
                    image_path=str(record.get("image_path", "")),
                    question=_text_field(record, "question", lineno),
                    answer=_text_field(record, "answer", lineno),
                    instruction_class=str(cls),
                )
            )
    return pairs
