"""Run the whole curation loop end to end in a temporary directory.

Generate candidates, filter, score, pick pseudo-labels, train with the
relevance and contrastive phases, regenerate, and compare the mean
relevance score before and after. Every stage leaves its artifacts and a
manifest line behind.

    python3 demos/04_full_pipeline.py  (about 15 seconds)
"""

from __future__ import annotations

import tempfile
from pathlib import Path

from vlitgen.pipeline import PipelineConfig, read_manifest, run_pipeline

# A reduced world keeps this quick; the defaults run 200 images.
cfg = PipelineConfig(
    seed=11,
    num_images=48,
    samples_per_image=5,
    final_count=24,
    warmup_epochs=8,
    crm_steps=60,
    clm_steps=20,
)

workdir = Path(tempfile.mkdtemp(prefix="vlitgen-demo-"))
print(f"working under {workdir}")

report = run_pipeline(cfg, workdir)

print("\nstage manifest")
for entry in read_manifest(workdir):
    outputs = ", ".join(sorted(entry["outputs"])) or "-"
    print(f"  {entry['stage']:16s} {entry['status']:10s} {entry['duration_s']:7.2f}s  {outputs}")

print("\nresults")
print(f"  samples generated : {report.stage_counts['generated']}")
print(f"  kept after filter : {report.stage_counts['kept']}")
print(f"  selected to train : {report.stage_counts['selected']}")
print(f"  regenerated       : {report.stage_counts['final']}")
print(f"  mean relevance, initial data : {report.initial_mean_i2c:+.4f}")
print(f"  mean relevance, final data   : {report.final_mean_i2c:+.4f}")
print(f"  improved: {'yes' if report.improved else 'no'}")

print(f"\nfull report at {workdir / 'report' / 'report.txt'}")
