"""Adapter configuration: which model, how to prompt it, where to write."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

INSTRUCTION_CLASSES = ("conversation", "detailed_description", "complex_reasoning")

# The question slots into a fixed per-class template; the image (when
# present) is supplied through the model's own input channel, never the
# text, so withholding it leaves the prompt text unchanged.
DEFAULT_TEMPLATES = {
    "conversation": "USER: {question}\nASSISTANT:",
    "detailed_description": "USER: {question} Describe it in detail.\nASSISTANT:",
    "complex_reasoning": "USER: {question} Explain your reasoning.\nASSISTANT:",
}


@dataclass(frozen=True)
class AdapterConfig:
    model: str
    output_path: str | Path
    device: str = "cpu"
    batch_size: int = 1
    templates: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_TEMPLATES))

    def __post_init__(self) -> None:
        if not self.model:
            raise ValueError("model identifier must be non-empty")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        missing = [c for c in INSTRUCTION_CLASSES if c not in self.templates]
        if missing:
            raise ValueError(f"templates missing for instruction classes: {missing}")
        for name, template in self.templates.items():
            if "{question}" not in template:
                raise ValueError(f"template for {name!r} has no {{question}} slot")
