"""Bridge from real language models to the data-curation pipeline.

Probes a model's answer-token probabilities under two conditions (image
attached, image withheld) and writes them in the pipeline's samples
format, so real QA pairs can be scored for image relevance.
"""

from .backends import HfBackend, ModelLoadError, ProbabilityBackend, StubBackend, resolve_backend
from .config import DEFAULT_TEMPLATES, INSTRUCTION_CLASSES, AdapterConfig
from .export import ExportReport, export_token_probs
from .pairs import PairsFormatError, QaPairInput, load_pairs

__all__ = [
    "AdapterConfig",
    "DEFAULT_TEMPLATES",
    "INSTRUCTION_CLASSES",
    "ExportReport",
    "HfBackend",
    "ModelLoadError",
    "PairsFormatError",
    "ProbabilityBackend",
    "QaPairInput",
    "StubBackend",
    "export_token_probs",
    "load_pairs",
    "resolve_backend",
]
