"""Probability backends: where the two-condition token probabilities come from.

A backend tokenizes text and returns one teacher-forced probability per
answer token for a rendered prompt, either with the image attached to the
model's visual channel or with it withheld. The prompt text is identical in
both passes; only the image channel changes.
"""

from __future__ import annotations

import hashlib
import math
from typing import Protocol, Sequence


class ModelLoadError(RuntimeError):
    pass


class ProbabilityBackend(Protocol):
    def tokenize(self, text: str) -> list[str]: ...

    def detokenize(self, tokens: Sequence[str]) -> str: ...

    def answer_token_probs(
        self, image_ref: str | None, prompt: str, answer_tokens: Sequence[str]
    ) -> list[float]: ...


class StubBackend:
    """Deterministic offline stand-in for a real model.

    Probabilities are derived from a digest of the seed, the image
    reference (omitted entirely in the withheld pass), the rendered
    prompt, and each token with its position. Fixed inputs always give
    bitwise-identical outputs, and the with-image pass genuinely differs
    from the without-image pass, which is what the downstream scoring
    needs exercised.
    """

    def __init__(self, seed: int = 0):
        self._seed = int(seed)

    def tokenize(self, text: str) -> list[str]:
        return text.split()

    def detokenize(self, tokens: Sequence[str]) -> str:
        return " ".join(tokens)

    def answer_token_probs(
        self, image_ref: str | None, prompt: str, answer_tokens: Sequence[str]
    ) -> list[float]:
        condition = image_ref if image_ref is not None else ""
        probs = []
        for position, token in enumerate(answer_tokens):
            key = f"{self._seed}|{condition}|{prompt}|{position}|{token}"
            digest = hashlib.sha256(key.encode("utf-8")).digest()
            unit = int.from_bytes(digest[:8], "big") / 2**64
            probs.append(0.001 + 0.998 * unit)
        return probs


class HfBackend:
    """Teacher-forced probabilities from a transformers causal LM.

    The prompt and answer are concatenated; each answer token's
    probability is read from the softmax of the logits at the position
    preceding it. When the model has an image processor, the with-image
    pass feeds ``pixel_values``; models without a visual channel yield
    identical passes, which the caller will see as zero relevance
    scores.

    ``model``/``tokenizer``/``processor`` can be supplied directly
    (used by the tests); otherwise they are loaded from ``model_id``.
    """

    def __init__(self, model_id: str, device: str = "cpu", model=None, tokenizer=None, processor=None):
        self._device = device
        if model is not None and tokenizer is not None:
            self._model, self._tokenizer, self._processor = model, tokenizer, processor
            return
        try:
            from transformers import AutoModelForCausalLM, AutoTokenizer
        except ImportError as exc:
            raise ModelLoadError(f"transformers is not installed: {exc}") from exc
        try:
            self._tokenizer = AutoTokenizer.from_pretrained(model_id)
            self._model = AutoModelForCausalLM.from_pretrained(model_id).to(device).eval()
        except Exception as exc:
            raise ModelLoadError(f"cannot load model {model_id!r}: {exc}") from exc
        self._processor = processor

    def tokenize(self, text: str) -> list[str]:
        return list(self._tokenizer.tokenize(text))

    def detokenize(self, tokens: Sequence[str]) -> str:
        return str(self._tokenizer.convert_tokens_to_string(list(tokens)))

    def _model_inputs(self, ids: list[int], image_ref: str | None) -> dict:
        try:
            import torch

            input_ids = torch.tensor([ids], dtype=torch.long)
        except ImportError:
            input_ids = [ids]
        kwargs = {"input_ids": input_ids}
        if image_ref is not None and self._processor is not None:
            kwargs["pixel_values"] = self._processor(image_ref)
        return kwargs

    def answer_token_probs(
        self, image_ref: str | None, prompt: str, answer_tokens: Sequence[str]
    ) -> list[float]:
        prompt_ids = [int(i) for i in self._tokenizer(prompt)["input_ids"]]
        answer_ids = [int(i) for i in self._tokenizer.convert_tokens_to_ids(list(answer_tokens))]
        full = prompt_ids + answer_ids
        outputs = self._model(**self._model_inputs(full, image_ref))
        logits = outputs.logits[0]
        probs = []
        for t, token_id in enumerate(answer_ids):
            row = [float(v) for v in logits[len(prompt_ids) + t - 1]]
            peak = max(row)
            denom = sum(math.exp(v - peak) for v in row)
            probs.append(math.exp(row[token_id] - peak) / denom)
        return probs


def resolve_backend(model: str, device: str = "cpu") -> ProbabilityBackend:
    """``stub:<seed>`` is the offline backend; anything else loads via
    transformers (an ``hf:`` prefix is stripped)."""
    if model.startswith("stub:"):
        suffix = model[len("stub:") :]
        try:
            seed = int(suffix) if suffix else 0
        except ValueError:
            raise ModelLoadError(f"stub seed must be an integer, got {suffix!r}") from None
        return StubBackend(seed)
    if model == "stub":
        return StubBackend(0)
    model_id = model[len("hf:") :] if model.startswith("hf:") else model
    return HfBackend(model_id, device=device)
