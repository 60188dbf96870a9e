"""Compare training variants and selection fractions on one shared corpus.

The ablation grid runs four cells (neither phase, each phase alone,
both) against the same generated data, so differences come only from
training. The sweep retrains the selection phase at several fractions
from one shared warm checkpoint.

    python3 demos/05_ablation_and_sweep.py  (about 45 seconds)
"""

from __future__ import annotations

import tempfile
from pathlib import Path

from vlitgen.pipeline import PipelineConfig, run_ablation_grid, sweep_selection_fraction

cfg = PipelineConfig(
    seed=5,
    num_images=48,
    samples_per_image=5,
    final_count=24,
    warmup_epochs=8,
    crm_steps=60,
    clm_steps=20,
)

workdir = Path(tempfile.mkdtemp(prefix="vlitgen-demo-grid-"))
print(f"working under {workdir}")

print("\nablation grid (four cells, one corpus)")
rows = run_ablation_grid(cfg, workdir)
print(f"  {'cell':10s} {'crm':>5s} {'clm':>5s} {'initial':>9s} {'final':>9s}")
for row in rows:
    print(
        f"  {row['cell']:10s} {str(row['enable_crm']):>5s} {str(row['enable_clm']):>5s} "
        f"{row['initial_mean_i2c']:>+9.4f} {row['final_mean_i2c']:>+9.4f}"
    )
print(f"  written to {workdir / 'ablation.csv'}")

# The expected shape: both phases together beat either alone, and every
# trained cell beats the untrained baseline.

sweep_dir = Path(tempfile.mkdtemp(prefix="vlitgen-demo-sweep-"))
print("\nselection-fraction sweep (selection-phase training only)")
sweep_rows = sweep_selection_fraction(cfg, [0.05, 0.10, 0.25, 0.50], sweep_dir)
for fraction, post_mean in sweep_rows:
    print(f"  fraction {fraction:4.2f} -> final mean relevance {post_mean:+.4f}")
print(f"  written to {sweep_dir / 'sweep.csv'}")
