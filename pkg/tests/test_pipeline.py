from __future__ import annotations

import dataclasses
import hashlib
import json
from pathlib import Path

import pytest

from vlitgen.cli import main as cli_main
from vlitgen.data import load_samples
from vlitgen.pipeline import (
    GRID_CELLS,
    STAGES,
    MetricsReport,
    PipelineConfig,
    StageError,
    import_stage,
    pipeline_stage_order,
    read_manifest,
    run_ablation_grid,
    run_pipeline,
    run_stage,
    sweep_selection_fraction,
)
from vlitgen.scoring import load_partitions, load_scored, selection_count


def tiny_config(**overrides) -> PipelineConfig:
    base = dict(
        seed=0,
        num_images=16,
        samples_per_image=4,
        final_count=12,
        warmup_epochs=4,
        crm_steps=25,
        clm_steps=8,
    )
    base.update(overrides)
    return PipelineConfig(**base)


@pytest.fixture(scope="module")
def finished_run(tmp_path_factory):
    workdir = tmp_path_factory.mktemp("run")
    cfg = tiny_config()
    report = run_pipeline(cfg, workdir)
    return cfg, Path(workdir), report


def non_manifest_hashes(workdir: Path) -> dict[str, str]:
    out = {}
    for path in sorted(workdir.rglob("*")):
        if path.is_file() and path.name != "manifest.log":
            out[str(path.relative_to(workdir))] = hashlib.sha256(path.read_bytes()).hexdigest()
    return out


class TestConfig:
    def test_dict_round_trip(self):
        cfg = tiny_config(selection_fraction=0.25, enable_clm=False)
        assert PipelineConfig.from_dict(cfg.to_dict()) == cfg

    def test_file_round_trip(self, tmp_path):
        cfg = tiny_config()
        path = tmp_path / "config.json"
        cfg.save(path)
        assert PipelineConfig.from_file(path) == cfg

    def test_unknown_key_rejected(self):
        raw = tiny_config().to_dict()
        raw["typo_field"] = 1
        with pytest.raises(ValueError, match="typo_field"):
            PipelineConfig.from_dict(raw)

    def test_validation(self):
        with pytest.raises(ValueError):
            tiny_config(selection_fraction=0.0)
        with pytest.raises(ValueError):
            tiny_config(final_count=1000)  # exceeds 16 * 4
        with pytest.raises(ValueError):
            tiny_config(vocab_size=32)
        with pytest.raises(ValueError):
            tiny_config(phase_order=("crm", "crm"))
        with pytest.raises(ValueError):
            tiny_config(num_images=0)

    def test_hash_stable_and_sensitive(self):
        a = tiny_config()
        b = tiny_config()
        c = tiny_config(seed=1)
        assert a.config_hash() == b.config_hash()
        assert a.config_hash() != c.config_hash()

    def test_initial_count(self):
        assert tiny_config().initial_count == 64


class TestStageOrder:
    def test_eight_stages(self):
        assert len(STAGES) == 8
        assert STAGES[0] == "generate_initial"
        assert STAGES[-1] == "report"

    def test_phase_order_respected(self):
        cfg = tiny_config(phase_order=("clm", "crm"))
        order = pipeline_stage_order(cfg)
        assert order.index("train_clm") < order.index("train_crm")


class TestRunArtifacts:
    def test_report_metrics(self, finished_run):
        _, _, report = finished_run
        assert isinstance(report, MetricsReport)
        assert report.final_mean_i2c == report.final_mean_i2c  # finite, not nan
        assert report.crm_final_loss is not None
        assert report.clm_final_loss is not None

    def test_conservation_through_filter(self, finished_run):
        cfg, workdir, report = finished_run
        generated = load_samples(workdir / "generate_initial" / "samples.jsonl")
        kept = load_samples(workdir / "filter" / "kept.jsonl")
        dropped = (workdir / "filter" / "dropped.jsonl").read_text().splitlines()
        assert len(generated) == cfg.initial_count
        assert len(kept) + len(dropped) == len(generated)
        assert report.stage_counts["generated"] == len(generated)
        assert report.stage_counts["kept"] == len(kept)

    def test_every_kept_sample_scored(self, finished_run):
        _, workdir, _ = finished_run
        kept = load_samples(workdir / "filter" / "kept.jsonl")
        scored = load_scored(workdir / "score" / "scored.jsonl")
        assert {s.sample_id for s in kept} == {s.sample_id for s in scored}

    def test_partitions_cover_every_image(self, finished_run):
        _, workdir, _ = finished_run
        kept = load_samples(workdir / "filter" / "kept.jsonl")
        parts = load_partitions(workdir / "partition" / "partitions.jsonl")
        assert {p.image_id for p in parts} == {s.image_id for s in kept}
        for part in parts:
            assert part.positive not in part.negatives

    def test_selection_size(self, finished_run):
        cfg, workdir, _ = finished_run
        kept = load_samples(workdir / "filter" / "kept.jsonl")
        selected = load_scored(workdir / "train_crm" / "selected.jsonl")
        assert len(selected) == selection_count(len(kept), cfg.selection_fraction)

    def test_loss_curves_have_one_row_per_step(self, finished_run):
        cfg, workdir, _ = finished_run
        crm_rows = (workdir / "train_crm" / "losses.csv").read_text().splitlines()
        clm_rows = (workdir / "train_clm" / "losses.csv").read_text().splitlines()
        assert len(crm_rows) == cfg.crm_steps + 1  # header
        assert len(clm_rows) == cfg.clm_steps + 1
        assert crm_rows[0] == "step,cross_entropy,contrastive,total"

    def test_final_regeneration_count(self, finished_run):
        cfg, workdir, _ = finished_run
        final = load_samples(workdir / "generate_final" / "samples.jsonl")
        assert len(final) == cfg.final_count

    def test_report_files_exist(self, finished_run):
        _, workdir, _ = finished_run
        for name in ("report.txt", "metrics.json", "i2c_initial.csv", "i2c_final.csv", "i2c_histogram.csv"):
            assert (workdir / "report" / name).is_file()
        metrics = json.loads((workdir / "report" / "metrics.json").read_text())
        assert "improved" in metrics

    def test_manifest_records_every_stage(self, finished_run):
        cfg, workdir, _ = finished_run
        entries = read_manifest(workdir)
        assert [e["stage"] for e in entries] == pipeline_stage_order(cfg)
        for entry in entries:
            assert entry["status"] == "ok"
            assert entry["config_hash"] == cfg.config_hash()
            assert entry["duration_s"] >= 0.0
            for digest in entry["outputs"].values():
                assert len(digest) == 64

    def test_manifest_hashes_match_files(self, finished_run):
        _, workdir, _ = finished_run
        entries = read_manifest(workdir)
        for entry in entries:
            for rel, digest in entry["outputs"].items():
                path = workdir / rel
                assert path.is_file()
                # score outputs are also later stages' inputs; hash only holds
                # for files no later stage rewrote, which is all of them here
                assert hashlib.sha256(path.read_bytes()).hexdigest() == digest


class TestStageMechanics:
    def test_unknown_stage_rejected(self, tmp_path):
        with pytest.raises(StageError, match="unknown stage"):
            run_stage("polish", tiny_config(), tmp_path)

    def test_missing_input_rejected(self, tmp_path):
        with pytest.raises(StageError, match="missing input"):
            run_stage("filter", tiny_config(), tmp_path)

    def test_config_hash_guard(self, tmp_path):
        cfg = tiny_config(warmup_epochs=1, crm_steps=1, clm_steps=1)
        run_stage("generate_initial", cfg, tmp_path)
        other = dataclasses.replace(cfg, seed=99)
        with pytest.raises(StageError, match="refusing to mix"):
            run_stage("filter", other, tmp_path)

    def test_disabled_phase_is_skipped_not_run(self, tmp_path):
        cfg = tiny_config(enable_crm=False)
        outputs = run_stage("train_crm", cfg, tmp_path)
        assert outputs == []
        (entry,) = read_manifest(tmp_path)
        assert entry["stage"] == "train_crm"
        assert entry["status"] == "skipped(ablation)"
        assert not (tmp_path / "train_crm").exists()

    def test_import_stage_copies_and_records(self, tmp_path):
        cfg = tiny_config(warmup_epochs=1)
        src = tmp_path / "src"
        dst = tmp_path / "dst"
        run_stage("generate_initial", cfg, src)
        import_stage(src, dst, "generate_initial", cfg)
        assert (dst / "generate_initial" / "samples.jsonl").read_bytes() == (
            src / "generate_initial" / "samples.jsonl"
        ).read_bytes()
        (entry,) = read_manifest(dst)
        assert entry["status"] == "imported"

    def test_import_missing_stage_rejected(self, tmp_path):
        with pytest.raises(StageError, match="import"):
            import_stage(tmp_path / "nowhere", tmp_path / "dst", "score", tiny_config())


class TestDeterminism:
    def test_identical_runs_produce_identical_artifacts(self, finished_run, tmp_path):
        cfg, first_dir, _ = finished_run
        run_pipeline(cfg, tmp_path)
        assert non_manifest_hashes(tmp_path) == non_manifest_hashes(first_dir)


class TestAblationGrid:
    def test_four_cells_share_the_corpus(self, tmp_path):
        cfg = tiny_config(crm_steps=12, clm_steps=6)
        rows = run_ablation_grid(cfg, tmp_path)
        assert [r["cell"] for r in rows] == [c[0] for c in GRID_CELLS]
        assert (tmp_path / "ablation.csv").is_file()
        initial = {r["initial_mean_i2c"] for r in rows}
        assert len(initial) == 1  # same corpus for every cell
        for cell, enable_crm, enable_clm in GRID_CELLS:
            entries = read_manifest(tmp_path / "grid" / cell)
            by_stage = {e["stage"]: e["status"] for e in entries}
            assert by_stage["generate_initial"] == "imported"
            assert by_stage["train_crm"] == ("ok" if enable_crm else "skipped(ablation)")
            assert by_stage["train_clm"] == ("ok" if enable_clm else "skipped(ablation)")

    def test_csv_has_header_and_four_rows(self, tmp_path):
        cfg = tiny_config(crm_steps=6, clm_steps=4)
        run_ablation_grid(cfg, tmp_path)
        lines = (tmp_path / "ablation.csv").read_text().splitlines()
        assert len(lines) == 5


class TestSweep:
    def test_rows_and_csv(self, tmp_path):
        cfg = tiny_config(crm_steps=10)
        rows = sweep_selection_fraction(cfg, [0.1, 0.5], tmp_path)
        assert [f for f, _ in rows] == [0.1, 0.5]
        for _, post_mean in rows:
            assert post_mean == post_mean  # finite
        lines = (tmp_path / "sweep.csv").read_text().splitlines()
        assert lines[0] == "fraction,post_mean_i2c"
        assert len(lines) == 3

    def test_bad_fraction_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            sweep_selection_fraction(tiny_config(), [0.0], tmp_path)


class TestCli:
    def test_unknown_command_exits_1(self, capsys):
        assert cli_main(["polish"]) == 1
        capsys.readouterr()

    def test_missing_input_exits_2(self, tmp_path, capsys):
        assert cli_main(["score", "--workdir", str(tmp_path)]) == 2
        capsys.readouterr()

    def test_bad_config_file_exits_1(self, tmp_path, capsys):
        bad = tmp_path / "config.json"
        bad.write_text('{"typo_field": 3}\n')
        assert cli_main(["pipeline", "--workdir", str(tmp_path / "w"), "--config", str(bad)]) == 1
        capsys.readouterr()

    def test_stage_by_stage_run_exits_0(self, tmp_path, capsys):
        cfg = tiny_config(warmup_epochs=2)
        cfg_path = tmp_path / "config.json"
        cfg.save(cfg_path)
        workdir = tmp_path / "w"
        for command in ("generate-initial", "filter", "score", "partition"):
            code = cli_main([command, "--workdir", str(workdir), "--config", str(cfg_path)])
            assert code == 0, command
        out = capsys.readouterr().out
        assert "scored.jsonl" in out
        assert (workdir / "partition" / "partitions.jsonl").is_file()

    def test_pipeline_command(self, tmp_path, capsys):
        cfg = tiny_config(warmup_epochs=2, crm_steps=5, clm_steps=3)
        cfg_path = tmp_path / "config.json"
        cfg.save(cfg_path)
        code = cli_main(["pipeline", "--workdir", str(tmp_path / "w"), "--config", str(cfg_path)])
        assert code == 0
        out = capsys.readouterr().out
        assert "final mean" in out

    def test_seed_override(self, tmp_path, capsys):
        cfg = tiny_config(warmup_epochs=1)
        cfg_path = tmp_path / "config.json"
        cfg.save(cfg_path)
        a = tmp_path / "a"
        b = tmp_path / "b"
        assert cli_main(["generate-initial", "--workdir", str(a), "--config", str(cfg_path), "--seed", "7"]) == 0
        assert cli_main(["generate-initial", "--workdir", str(b), "--config", str(cfg_path), "--seed", "8"]) == 0
        capsys.readouterr()
        assert (a / "generate_initial" / "samples.jsonl").read_bytes() != (
            b / "generate_initial" / "samples.jsonl"
        ).read_bytes()
