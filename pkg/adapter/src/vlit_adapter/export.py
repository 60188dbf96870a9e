"""Two-condition probability export.

For every input QA pair the configured model is probed twice with the
same rendered prompt: once with the image attached, once with it
withheld. The per-answer-token probabilities from both passes are
written as one JSON line per pair in the curation pipeline's samples
format, so the output file feeds straight into its scoring stage.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .backends import ProbabilityBackend, resolve_backend
from .config import AdapterConfig
from .pairs import QaPairInput

# Probabilities this small round to zero in decimal output; keep them
# strictly positive so the consumer's own floor applies instead.
_UNDERFLOW = 1e-300

_FIELD_ORDER = ("sample_id", "image_id", "instruction_class", "question", "answer", "p_visual", "p_direct")


@dataclass
class ExportReport:
    written: int = 0
    skipped: list[tuple[int, str]] = field(default_factory=list)


def _image_id(image_path: str) -> str:
    stem = Path(image_path).stem
    return stem if stem else image_path


def _check_probs(probs: Sequence[float], expected_len: int) -> str | None:
    if len(probs) != expected_len:
        return f"probability count mismatch: {len(probs)} probabilities for {expected_len} tokens"
    for p in probs:
        if not math.isfinite(p) or p <= 0.0 or p > 1.0:
            return f"probability out of range: {p!r}"
    return None


def export_token_probs(
    pairs: Sequence[QaPairInput],
    config: AdapterConfig,
    backend: ProbabilityBackend | None = None,
) -> ExportReport:
    """Probe each pair under both conditions and write the samples file.

    Pairs that cannot be probed faithfully are skipped, never silently
    mangled: the report lists each skipped pair's 1-based input index
    with the reason. Output order follows input order and the whole run
    is deterministic for a deterministic backend.
    """
    if backend is None:
        backend = resolve_backend(config.model, config.device)

    report = ExportReport()
    lines: list[str] = []
    for index, pair in enumerate(pairs, start=1):
        reason = _export_one(pair, index, config, backend, lines)
        if reason is None:
            report.written += 1
        else:
            report.skipped.append((index, reason))

    out = Path(config.output_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("".join(lines), encoding="utf-8")
    return report


def _export_one(
    pair: QaPairInput,
    index: int,
    config: AdapterConfig,
    backend: ProbabilityBackend,
    lines: list[str],
) -> str | None:
    """Append one record to ``lines``, or return the skip reason."""
    question_tokens = backend.tokenize(pair.question)
    if not question_tokens:
        return "question tokenizes to nothing"
    answer_tokens = backend.tokenize(pair.answer)
    if not answer_tokens:
        return "answer tokenizes to nothing"
    round_trip = backend.detokenize(answer_tokens).strip()
    if round_trip != pair.answer.strip():
        return f"tokenization mismatch: {round_trip!r} != {pair.answer.strip()!r}"

    prompt = config.templates[pair.instruction_class].format(question=pair.question)
    p_visual = [max(p, _UNDERFLOW) for p in backend.answer_token_probs(pair.image_path, prompt, answer_tokens)]
    p_direct = [max(p, _UNDERFLOW) for p in backend.answer_token_probs(None, prompt, answer_tokens)]
    for name, probs in (("with-image", p_visual), ("without-image", p_direct)):
        problem = _check_probs(probs, len(answer_tokens))
        if problem is not None:
            return f"{name} pass: {problem}"

    record = {
        "sample_id": f"{_image_id(pair.image_path)}.{index:04d}",
        "image_id": _image_id(pair.image_path),
        "instruction_class": pair.instruction_class,
        "question": question_tokens,
        "answer": answer_tokens,
        "p_visual": p_visual,
        "p_direct": p_direct,
    }
    assert tuple(record) == _FIELD_ORDER
    lines.append(json.dumps(record, ensure_ascii=False, separators=(",", ":")) + "\n")
    return None
