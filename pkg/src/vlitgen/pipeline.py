"""Stage orchestration: generation, filtering, scoring, training, reporting.

A workdir holds one directory per stage with fixed file names plus an
append-only ``manifest.log`` recording, per stage run, the config hash and
the sha256 of every input and output file. One workdir serves exactly one
configuration; a mismatching config hash is refused so stale artifacts
cannot mix.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import shutil
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .contrastive import ContrastiveConfig, ProjectionParams
from .data import (
    FilterConfig,
    ImageRef,
    InstructionClass,
    VlitSample,
    dumps_record,
    filter_samples,
    load_images,
    load_samples,
    save_dropped,
    save_images,
    save_samples,
)
from .model import (
    GenerationRequest,
    ToyModelParams,
    TrainConfig,
    TrainItem,
    attach_probs,
    generate_caption,
    generate_qa,
    load_checkpoint,
    save_checkpoint,
    train_step,
)
from .scoring import (
    ScoredSample,
    SelectionConfig,
    load_partitions,
    load_scored,
    partition_pseudo_labels,
    rank_and_select,
    rank_and_select_per_image,
    save_partitions,
    save_scored,
    score_samples,
)
from .seeding import derive_seed
from .world import CANONICAL_QUESTIONS, build_vocab, make_images, new_world_model, warmup_model

STAGES: tuple[str, ...] = (
    "generate_initial",
    "filter",
    "score",
    "partition",
    "train_crm",
    "train_clm",
    "generate_final",
    "report",
)

_PHASES = ("crm", "clm")


class StageError(RuntimeError):
    """A stage could not run or failed while running."""


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    num_images: int = 200
    samples_per_image: int = 5
    final_count: int = 50
    selection_fraction: float = 0.10
    per_image_selection: bool = False
    filter: FilterConfig = field(default_factory=FilterConfig)
    contrastive: ContrastiveConfig = field(default_factory=ContrastiveConfig)
    embed_dim: int = 16
    image_dim: int = 8
    vocab_size: int = 64
    context_window: int = 8
    caption_len: int = 3
    question_len: int = 3
    answer_len: int = 4
    warmup_epochs: int = 12
    warmup_batch_size: int = 64
    learning_rate: float = 0.4
    crm_steps: int = 150
    clm_steps: int = 40
    crm_learning_rate: float = 0.3
    clm_learning_rate: float = 0.05
    projection_learning_rate: float = 0.02
    anchor_len: int = 4
    phase_order: tuple[str, ...] = _PHASES
    enable_crm: bool = True
    enable_clm: bool = True

    def __post_init__(self) -> None:
        for name in ("num_images", "samples_per_image", "final_count", "context_window",
                     "caption_len", "question_len", "answer_len", "warmup_epochs",
                     "warmup_batch_size", "embed_dim", "image_dim", "anchor_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not (0.0 < self.selection_fraction <= 1.0):
            raise ValueError(f"selection_fraction must be in (0, 1], got {self.selection_fraction}")
        if self.final_count > self.initial_count:
            raise ValueError("final_count cannot exceed the initial sample count")
        if sorted(self.phase_order) != sorted(_PHASES):
            raise ValueError(f"phase_order must be a permutation of {_PHASES}")
        if self.crm_steps < 0 or self.clm_steps < 0:
            raise ValueError("training step counts must be >= 0")
        if self.vocab_size != len(build_vocab()):
            raise ValueError(f"vocab_size must be {len(build_vocab())} for the built-in world")
        object.__setattr__(self, "phase_order", tuple(self.phase_order))

    @property
    def initial_count(self) -> int:
        return self.num_images * self.samples_per_image

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "num_images": self.num_images,
            "samples_per_image": self.samples_per_image,
            "final_count": self.final_count,
            "selection_fraction": self.selection_fraction,
            "per_image_selection": self.per_image_selection,
            "filter": {
                "min_answer_tokens": self.filter.min_answer_tokens,
                "max_answer_tokens": self.filter.max_answer_tokens,
                "dedup_on": self.filter.dedup_on,
            },
            "contrastive": {
                "temperature": self.contrastive.temperature,
                "contrastive_weight": self.contrastive.contrastive_weight,
                "include_positive_in_denominator": self.contrastive.include_positive_in_denominator,
            },
            "embed_dim": self.embed_dim,
            "image_dim": self.image_dim,
            "vocab_size": self.vocab_size,
            "context_window": self.context_window,
            "caption_len": self.caption_len,
            "question_len": self.question_len,
            "answer_len": self.answer_len,
            "warmup_epochs": self.warmup_epochs,
            "warmup_batch_size": self.warmup_batch_size,
            "learning_rate": self.learning_rate,
            "crm_steps": self.crm_steps,
            "clm_steps": self.clm_steps,
            "crm_learning_rate": self.crm_learning_rate,
            "clm_learning_rate": self.clm_learning_rate,
            "projection_learning_rate": self.projection_learning_rate,
            "anchor_len": self.anchor_len,
            "phase_order": list(self.phase_order),
            "enable_crm": self.enable_crm,
            "enable_clm": self.enable_clm,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        raw = dict(raw)
        kwargs = {}
        if "filter" in raw:
            kwargs["filter"] = FilterConfig(**raw.pop("filter"))
        if "contrastive" in raw:
            kwargs["contrastive"] = ContrastiveConfig(**raw.pop("contrastive"))
        if "phase_order" in raw:
            kwargs["phase_order"] = tuple(raw.pop("phase_order"))
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs.update(raw)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(dumps_record(self.to_dict()))
            fh.write("\n")

    def config_hash(self) -> str:
        return hashlib.sha256(dumps_record(self.to_dict()).encode("utf-8")).hexdigest()[:16]


@dataclass
class MetricsReport:
    stage_counts: dict[str, int]
    initial_mean_i2c: float
    initial_median_i2c: float
    final_mean_i2c: float
    final_median_i2c: float
    crm_final_loss: float | None = None
    clm_final_loss: float | None = None

    @property
    def improved(self) -> bool:
        return self.final_mean_i2c > self.initial_mean_i2c

    def to_dict(self) -> dict:
        return {
            "stage_counts": self.stage_counts,
            "initial_mean_i2c": self.initial_mean_i2c,
            "initial_median_i2c": self.initial_median_i2c,
            "final_mean_i2c": self.final_mean_i2c,
            "final_median_i2c": self.final_median_i2c,
            "crm_final_loss": self.crm_final_loss,
            "clm_final_loss": self.clm_final_loss,
            "improved": self.improved,
        }


# ---------------------------------------------------------------------------
# Manifest


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _append_manifest(workdir: Path, entry: dict) -> None:
    with open(workdir / "manifest.log", "a", encoding="utf-8") as fh:
        fh.write(dumps_record(entry))
        fh.write("\n")


def read_manifest(workdir: str | Path) -> list[dict]:
    path = Path(workdir) / "manifest.log"
    if not path.exists():
        return []
    entries = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                entries.append(json.loads(line))
    return entries


def _guard_config_hash(workdir: Path, cfg: PipelineConfig) -> None:
    expected = cfg.config_hash()
    for entry in read_manifest(workdir):
        if entry["config_hash"] != expected:
            raise StageError(
                f"workdir {workdir} was produced under config {entry['config_hash']}, "
                f"refusing to mix with config {expected}"
            )


def _hash_files(workdir: Path, paths: Sequence[Path]) -> dict[str, str]:
    return {str(p.relative_to(workdir)): _sha256_file(p) for p in paths}


# ---------------------------------------------------------------------------
# Stage plumbing


def _phase_enabled(cfg: PipelineConfig, phase: str) -> bool:
    return {"crm": cfg.enable_crm, "clm": cfg.enable_clm}[phase]


def _phase_start_model(cfg: PipelineConfig, workdir: Path, phase: str) -> Path:
    """The checkpoint a training phase starts from, honoring the phase order."""
    idx = cfg.phase_order.index(phase)
    for prev in reversed(cfg.phase_order[:idx]):
        if _phase_enabled(cfg, prev):
            return workdir / f"train_{prev}" / "model.json"
    return workdir / "generate_initial" / "model.json"


def final_model_path(cfg: PipelineConfig, workdir: Path) -> Path:
    for phase in reversed(cfg.phase_order):
        if _phase_enabled(cfg, phase):
            return workdir / f"train_{phase}" / "model.json"
    return workdir / "generate_initial" / "model.json"


def _stage_inputs(stage: str, cfg: PipelineConfig, workdir: Path) -> list[Path]:
    w = workdir
    if stage == "generate_initial":
        return []
    if stage == "filter":
        return [w / "generate_initial" / "samples.jsonl"]
    if stage == "score":
        return [w / "filter" / "kept.jsonl"]
    if stage == "partition":
        return [w / "score" / "scored.jsonl"]
    if stage == "train_crm":
        return [
            w / "score" / "scored.jsonl",
            w / "generate_initial" / "images.jsonl",
            _phase_start_model(cfg, w, "crm"),
        ]
    if stage == "train_clm":
        return [
            w / "score" / "scored.jsonl",
            w / "partition" / "partitions.jsonl",
            w / "generate_initial" / "images.jsonl",
            _phase_start_model(cfg, w, "clm"),
        ]
    if stage == "generate_final":
        return [w / "generate_initial" / "images.jsonl", final_model_path(cfg, w)]
    if stage == "report":
        return [w / "score" / "scored.jsonl", w / "generate_final" / "scored.jsonl"]
    raise StageError(f"unknown stage {stage!r}")


def _write_losses(path: Path, reports) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "cross_entropy", "contrastive", "total"])
        for i, r in enumerate(reports):
            writer.writerow([i, repr(r.cross_entropy), repr(r.contrastive), repr(r.total)])


def _generate_samples(
    cfg: PipelineConfig,
    params: ToyModelParams,
    images: Sequence[ImageRef],
    label: str,
    total: int,
) -> list[VlitSample]:
    classes = list(InstructionClass)
    samples: list[VlitSample] = []
    remaining = total
    for image in images:
        if remaining <= 0:
            break
        for slot in range(min(cfg.samples_per_image, remaining)):
            cls = classes[slot % len(classes)]
            caption = generate_caption(
                image,
                params,
                max_len=cfg.caption_len,
                seed=derive_seed(cfg.seed, label, "caption", image.image_id, slot),
            )
            request = GenerationRequest(
                image=image,
                instruction_class=cls,
                max_question_tokens=cfg.question_len,
                max_answer_tokens=cfg.answer_len,
                decode="sampled",
                seed=derive_seed(cfg.seed, label, "qa", image.image_id, slot),
            )
            qa = generate_qa(image, caption, request, params)
            samples.append(attach_probs(qa, image, params))
        remaining -= min(cfg.samples_per_image, remaining)
    return samples


def _load_model_with_lr(path: Path, learning_rate: float) -> tuple[ToyModelParams, ProjectionParams]:
    params, projection = load_checkpoint(path)
    params.learning_rate = learning_rate
    return params, projection


def _image_lookup(workdir: Path) -> dict[str, ImageRef]:
    images = load_images(workdir / "generate_initial" / "images.jsonl")
    return {im.image_id: im for im in images}


def _run_generate_initial(cfg: PipelineConfig, workdir: Path) -> list[Path]:
    out = workdir / "generate_initial"
    out.mkdir(parents=True, exist_ok=True)
    params, projection = new_world_model(
        cfg.embed_dim, cfg.image_dim, cfg.context_window, cfg.seed, learning_rate=cfg.learning_rate
    )
    images = make_images(cfg.num_images, cfg.image_dim, cfg.seed)
    warmup_model(params, images, cfg.seed, epochs=cfg.warmup_epochs, batch_size=cfg.warmup_batch_size)
    samples = _generate_samples(cfg, params, images, "gen-initial", cfg.initial_count)
    save_images(images, out / "images.jsonl")
    save_checkpoint(params, projection, out / "model.json")
    save_samples(samples, out / "samples.jsonl")
    return [out / "images.jsonl", out / "model.json", out / "samples.jsonl"]


def _run_filter(cfg: PipelineConfig, workdir: Path) -> list[Path]:
    out = workdir / "filter"
    out.mkdir(parents=True, exist_ok=True)
    samples = load_samples(workdir / "generate_initial" / "samples.jsonl")
    kept, dropped = filter_samples(samples, cfg.filter)
    save_samples(kept, out / "kept.jsonl")
    save_dropped(dropped, out / "dropped.jsonl")
    return [out / "kept.jsonl", out / "dropped.jsonl"]


def _run_score(cfg: PipelineConfig, workdir: Path) -> list[Path]:
    out = workdir / "score"
    out.mkdir(parents=True, exist_ok=True)
    kept = load_samples(workdir / "filter" / "kept.jsonl")
    scored = score_samples(kept)
    save_scored(scored, out / "scored.jsonl")
    return [out / "scored.jsonl"]


def _run_partition(cfg: PipelineConfig, workdir: Path) -> list[Path]:
    out = workdir / "partition"
    out.mkdir(parents=True, exist_ok=True)
    scored = load_scored(workdir / "score" / "scored.jsonl")
    partitions = partition_pseudo_labels(scored)
    save_partitions(partitions, out / "partitions.jsonl")
    return [out / "partitions.jsonl"]


def _select(cfg: PipelineConfig, scored: list[ScoredSample]) -> list[ScoredSample]:
    sel = SelectionConfig(fraction=cfg.selection_fraction)
    if cfg.per_image_selection:
        return rank_and_select_per_image(scored, sel)
    return rank_and_select(scored, sel)


def _run_train_crm(cfg: PipelineConfig, workdir: Path) -> list[Path]:
    out = workdir / "train_crm"
    out.mkdir(parents=True, exist_ok=True)
    params, projection = _load_model_with_lr(
        _phase_start_model(cfg, workdir, "crm"), cfg.crm_learning_rate
    )
    scored = load_scored(workdir / "score" / "scored.jsonl")
    selected = _select(cfg, scored)
    images = _image_lookup(workdir)
    batch = [TrainItem(sample=s.sample, image=images[s.image_id]) for s in selected]
    train_cfg = TrainConfig(
        anchor_len=cfg.anchor_len, projection_learning_rate=cfg.projection_learning_rate
    )
    reports = [
        train_step(batch, "crm_only", params, projection, cfg.contrastive, train_cfg)
        for _ in range(cfg.crm_steps)
    ]
    save_scored(selected, out / "selected.jsonl")
    save_checkpoint(params, projection, out / "model.json")
    _write_losses(out / "losses.csv", reports)
    return [out / "selected.jsonl", out / "model.json", out / "losses.csv"]


def _run_train_clm(cfg: PipelineConfig, workdir: Path) -> list[Path]:
    out = workdir / "train_clm"
    out.mkdir(parents=True, exist_ok=True)
    params, projection = _load_model_with_lr(
        _phase_start_model(cfg, workdir, "clm"), cfg.clm_learning_rate
    )
    scored = load_scored(workdir / "score" / "scored.jsonl")
    by_id = {s.sample_id: s.sample for s in scored}
    partitions = load_partitions(workdir / "partition" / "partitions.jsonl")
    images = _image_lookup(workdir)
    batch = []
    for part in partitions:
        if part.skipped_for_contrastive:
            continue
        positive = by_id[part.positive]
        batch.append(
            TrainItem(
                sample=positive,
                image=images[part.image_id],
                positive=positive,
                negatives=tuple(by_id[n] for n in part.negatives),
                anchor_question=CANONICAL_QUESTIONS[positive.instruction_class],
            )
        )
    if not batch:
        raise StageError("train_clm: every image has a single sample, nothing to contrast")
    train_cfg = TrainConfig(
        anchor_len=cfg.anchor_len, projection_learning_rate=cfg.projection_learning_rate
    )
    reports = [
        train_step(batch, "clm_only", params, projection, cfg.contrastive, train_cfg)
        for _ in range(cfg.clm_steps)
    ]
    save_checkpoint(params, projection, out / "model.json")
    _write_losses(out / "losses.csv", reports)
    return [out / "model.json", out / "losses.csv"]


def _run_generate_final(cfg: PipelineConfig, workdir: Path) -> list[Path]:
    out = workdir / "generate_final"
    out.mkdir(parents=True, exist_ok=True)
    params, _ = load_checkpoint(final_model_path(cfg, workdir))
    images = load_images(workdir / "generate_initial" / "images.jsonl")
    needed = math.ceil(cfg.final_count / cfg.samples_per_image)
    samples = _generate_samples(cfg, params, images[:needed], "gen-final", cfg.final_count)
    save_samples(samples, out / "samples.jsonl")
    save_scored(score_samples(samples), out / "scored.jsonl")
    return [out / "samples.jsonl", out / "scored.jsonl"]


def _csv_last_total(path: Path) -> float | None:
    if not path.exists():
        return None
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return None
    return float(rows[-1]["total"])


def _i2c_stats(scored: Sequence[ScoredSample]) -> tuple[float, float]:
    values = np.array([s.i2c for s in scored], dtype=np.float64)
    return float(values.mean()), float(np.median(values))


def _write_histogram(path: Path, initial: np.ndarray, final: np.ndarray, bins: int = 20) -> None:
    lo = float(min(initial.min(), final.min()))
    hi = float(max(initial.max(), final.max()))
    if hi <= lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    counts_i, _ = np.histogram(initial, bins=edges)
    counts_f, _ = np.histogram(final, bins=edges)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "bin_hi", "count_initial", "count_final"])
        for i in range(bins):
            writer.writerow([repr(float(edges[i])), repr(float(edges[i + 1])), int(counts_i[i]), int(counts_f[i])])


def emit_report(workdir: str | Path) -> MetricsReport:
    """Summarize a completed run into report.txt, metrics.json, and CSVs."""
    workdir = Path(workdir)
    out = workdir / "report"
    out.mkdir(parents=True, exist_ok=True)
    scored_path = workdir / "score" / "scored.jsonl"
    final_path = workdir / "generate_final" / "scored.jsonl"
    for p in (scored_path, final_path):
        if not p.exists():
            raise StageError(f"report: missing artifact {p}")
    initial_scored = load_scored(scored_path)
    final_scored = load_scored(final_path)
    generated = len(load_samples(workdir / "generate_initial" / "samples.jsonl"))
    dropped_path = workdir / "filter" / "dropped.jsonl"
    dropped = sum(1 for line in dropped_path.read_text(encoding="utf-8").splitlines() if line.strip())
    partitions = load_partitions(workdir / "partition" / "partitions.jsonl")
    skipped = sum(1 for p in partitions if p.skipped_for_contrastive)
    selected_path = workdir / "train_crm" / "selected.jsonl"
    selected = len(load_scored(selected_path)) if selected_path.exists() else 0

    initial_mean, initial_median = _i2c_stats(initial_scored)
    final_mean, final_median = _i2c_stats(final_scored)
    counts = {
        "generated": generated,
        "kept": len(initial_scored),
        "dropped": dropped,
        "scored": len(initial_scored),
        "partitions": len(partitions),
        "partitions_skipped_for_contrastive": skipped,
        "selected": selected,
        "final": len(final_scored),
    }
    report = MetricsReport(
        stage_counts=counts,
        initial_mean_i2c=initial_mean,
        initial_median_i2c=initial_median,
        final_mean_i2c=final_mean,
        final_median_i2c=final_median,
        crm_final_loss=_csv_last_total(workdir / "train_crm" / "losses.csv"),
        clm_final_loss=_csv_last_total(workdir / "train_clm" / "losses.csv"),
    )

    with open(out / "metrics.json", "w", encoding="utf-8") as fh:
        fh.write(dumps_record(report.to_dict()))
        fh.write("\n")

    for name, scored in (("i2c_initial.csv", initial_scored), ("i2c_final.csv", final_scored)):
        with open(out / name, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sample_id", "i2c_score"])
            for s in scored:
                writer.writerow([s.sample_id, repr(s.i2c)])
    _write_histogram(
        out / "i2c_histogram.csv",
        np.array([s.i2c for s in initial_scored]),
        np.array([s.i2c for s in final_scored]),
    )

    lines = ["pipeline report", ""]
    for key, value in counts.items():
        lines.append(f"{key}: {value}")
    lines += [
        "",
        f"initial mean i2c: {initial_mean:.6f} (median {initial_median:.6f})",
        f"final mean i2c: {final_mean:.6f} (median {final_median:.6f})",
        f"improved: {'yes' if report.improved else 'no'}",
    ]
    if report.crm_final_loss is not None:
        lines.append(f"selection-trained final loss: {report.crm_final_loss:.6f}")
    if report.clm_final_loss is not None:
        lines.append(f"contrastive-trained final loss: {report.clm_final_loss:.6f}")
    grid_csv = workdir / "ablation.csv"
    if grid_csv.exists():
        lines += ["", "ablation grid:", grid_csv.read_text(encoding="utf-8").rstrip()]
    (out / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return report


def _run_report(cfg: PipelineConfig, workdir: Path) -> list[Path]:
    emit_report(workdir)
    out = workdir / "report"
    return sorted(out.iterdir())


_STAGE_RUNNERS = {
    "generate_initial": _run_generate_initial,
    "filter": _run_filter,
    "score": _run_score,
    "partition": _run_partition,
    "train_crm": _run_train_crm,
    "train_clm": _run_train_clm,
    "generate_final": _run_generate_final,
    "report": _run_report,
}


def run_stage(stage: str, cfg: PipelineConfig, workdir: str | Path) -> list[Path]:
    """Run one stage, recording inputs, outputs, and status in the manifest."""
    if stage not in STAGES:
        raise StageError(f"unknown stage {stage!r}")
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    _guard_config_hash(workdir, cfg)

    if (stage == "train_crm" and not cfg.enable_crm) or (stage == "train_clm" and not cfg.enable_clm):
        _append_manifest(
            workdir,
            {
                "stage": stage,
                "status": "skipped(ablation)",
                "config_hash": cfg.config_hash(),
                "inputs": {},
                "outputs": {},
                "duration_s": 0.0,
            },
        )
        return []

    inputs = _stage_inputs(stage, cfg, workdir)
    for path in inputs:
        if not path.exists():
            raise StageError(f"{stage}: missing input {path}")
    input_hashes = _hash_files(workdir, inputs)
    start = time.perf_counter()
    try:
        outputs = _STAGE_RUNNERS[stage](cfg, workdir)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(f"{stage}: {exc}") from exc
    duration = time.perf_counter() - start
    _append_manifest(
        workdir,
        {
            "stage": stage,
            "status": "ok",
            "config_hash": cfg.config_hash(),
            "inputs": input_hashes,
            "outputs": _hash_files(workdir, outputs),
            "duration_s": round(duration, 6),
        },
    )
    return outputs


def import_stage(src_workdir: str | Path, dst_workdir: str | Path, stage: str, cfg: PipelineConfig) -> None:
    """Copy a stage's artifacts from another workdir, recording the provenance."""
    src = Path(src_workdir) / stage
    dst_workdir = Path(dst_workdir)
    dst = dst_workdir / stage
    if not src.is_dir():
        raise StageError(f"import: no {stage} artifacts under {src_workdir}")
    dst_workdir.mkdir(parents=True, exist_ok=True)
    _guard_config_hash(dst_workdir, cfg)
    dst.mkdir(parents=True, exist_ok=True)
    outputs = {}
    for f in sorted(src.iterdir()):
        shutil.copyfile(f, dst / f.name)
        outputs[f"{stage}/{f.name}"] = _sha256_file(dst / f.name)
    _append_manifest(
        dst_workdir,
        {
            "stage": stage,
            "status": "imported",
            "config_hash": cfg.config_hash(),
            "inputs": {},
            "outputs": outputs,
            "duration_s": 0.0,
        },
    )


def pipeline_stage_order(cfg: PipelineConfig) -> list[str]:
    return (
        ["generate_initial", "filter", "score", "partition"]
        + [f"train_{p}" for p in cfg.phase_order]
        + ["generate_final", "report"]
    )


def run_pipeline(cfg: PipelineConfig, workdir: str | Path) -> MetricsReport:
    """All enabled stages in order; returns the final metrics."""
    workdir = Path(workdir)
    for stage in pipeline_stage_order(cfg):
        run_stage(stage, cfg, workdir)
    return emit_report(workdir)


# ---------------------------------------------------------------------------
# Ablation grid and selection sweep

_SHARED_STAGES = ("generate_initial", "filter", "score", "partition")

GRID_CELLS: tuple[tuple[str, bool, bool], ...] = (
    ("baseline", False, False),
    ("crm_only", True, False),
    ("clm_only", False, True),
    ("both", True, True),
)


def run_ablation_grid(cfg: PipelineConfig, workdir: str | Path) -> list[dict]:
    """Four pipeline cells toggling the two training phases, sharing one
    generated corpus; writes ablation.csv in the workdir."""
    workdir = Path(workdir)
    common = workdir / "grid" / "common"
    for stage in _SHARED_STAGES:
        run_stage(stage, cfg, common)

    rows = []
    for name, use_crm, use_clm in GRID_CELLS:
        cell_cfg = replace(cfg, enable_crm=use_crm, enable_clm=use_clm)
        cell_dir = workdir / "grid" / name
        cell_dir.mkdir(parents=True, exist_ok=True)
        for stage in _SHARED_STAGES:
            import_stage(common, cell_dir, stage, cell_cfg)
        for stage in [f"train_{p}" for p in cell_cfg.phase_order] + ["generate_final", "report"]:
            run_stage(stage, cell_cfg, cell_dir)
        report = emit_report(cell_dir)
        rows.append(
            {
                "cell": name,
                "enable_crm": use_crm,
                "enable_clm": use_clm,
                "initial_mean_i2c": report.initial_mean_i2c,
                "final_mean_i2c": report.final_mean_i2c,
            }
        )

    with open(workdir / "ablation.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cell", "enable_crm", "enable_clm", "initial_mean_i2c", "final_mean_i2c"])
        for row in rows:
            writer.writerow(
                [
                    row["cell"],
                    row["enable_crm"],
                    row["enable_clm"],
                    repr(row["initial_mean_i2c"]),
                    repr(row["final_mean_i2c"]),
                ]
            )
    return rows


def sweep_selection_fraction(
    cfg: PipelineConfig, fractions: Sequence[float], workdir: str | Path
) -> list[tuple[float, float]]:
    """Retrain the selection phase per fraction from one shared checkpoint."""
    for f in fractions:
        if not (0.0 < f <= 1.0):
            raise ValueError(f"sweep fraction must be in (0, 1], got {f}")
    workdir = Path(workdir)
    common = workdir / "sweep" / "common"
    for stage in _SHARED_STAGES:
        run_stage(stage, cfg, common)

    rows: list[tuple[float, float]] = []
    for f in fractions:
        sub_cfg = replace(cfg, selection_fraction=f, enable_crm=True, enable_clm=False)
        sub_dir = workdir / "sweep" / f"f{f:g}"
        sub_dir.mkdir(parents=True, exist_ok=True)
        for stage in _SHARED_STAGES:
            import_stage(common, sub_dir, stage, sub_cfg)
        for stage in [f"train_{p}" for p in sub_cfg.phase_order] + ["generate_final"]:
            run_stage(stage, sub_cfg, sub_dir)
        final_scored = load_scored(sub_dir / "generate_final" / "scored.jsonl")
        mean, _ = _i2c_stats(final_scored)
        rows.append((float(f), mean))

    with open(workdir / "sweep.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fraction", "post_mean_i2c"])
        for f, mean in rows:
            writer.writerow([repr(float(f)), repr(mean)])
    return rows
