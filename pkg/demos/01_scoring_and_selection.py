"""Walk through relevance scoring, ranking, and pseudo-label partitioning.

Five hand-built samples over two images show the full path from per-token
probabilities to a positive/negative split per image. Run directly:

    python3 demos/01_scoring_and_selection.py
"""

from __future__ import annotations

from vlitgen.data import InstructionClass, VlitSample
from vlitgen.scoring import (
    SelectionConfig,
    partition_pseudo_labels,
    rank_and_select,
    score_samples,
)


def sample(sid: str, image: str, p_visual, p_direct) -> VlitSample:
    n = len(p_visual)
    return VlitSample(
        sample_id=sid,
        image_id=image,
        instruction_class=InstructionClass.CONVERSATION,
        question=("what", "is", "this"),
        answer=("word",) * n,
        p_visual=p_visual,
        p_direct=p_direct,
    )


# The score sums p_v * ln(p_v / p_d) over answer tokens: positive when the
# image raises the answer's token probabilities, negative when it lowers them.
candidates = [
    sample("dog.a", "img-dog", (0.8, 0.7, 0.9), (0.2, 0.3, 0.2)),   # image helps a lot
    sample("dog.b", "img-dog", (0.5, 0.5, 0.5), (0.4, 0.4, 0.4)),   # image helps a little
    sample("dog.c", "img-dog", (0.3, 0.3, 0.3), (0.6, 0.6, 0.6)),   # image actively hurts
    sample("sky.a", "img-sky", (0.6, 0.6), (0.3, 0.3)),
    sample("sky.b", "img-sky", (0.5, 0.5), (0.5, 0.5)),             # image irrelevant: score 0
]

scored = score_samples(candidates)
print("per-sample relevance scores")
for s in scored:
    print(f"  {s.sample_id:8s} image={s.image_id:8s} i2c={s.i2c:+.4f}")

# Keep the top 40% across the whole pool. Count is ceil(fraction * N), so a
# positive fraction always selects at least one sample.
selected = rank_and_select(scored, SelectionConfig(fraction=0.4))
print(f"\ntop 40% of {len(scored)} -> {len(selected)} samples")
for s in selected:
    print(f"  {s.sample_id:8s} i2c={s.i2c:+.4f}")

# Per image: the best sample becomes the positive pseudo-label, the rest the
# negatives. An image with a single sample cannot form a contrastive pair and
# is flagged instead.
print("\npseudo-label partitions")
for part in partition_pseudo_labels(scored):
    tail = " (skipped for contrastive)" if part.skipped_for_contrastive else ""
    print(f"  {part.image_id}: positive={part.positive} negatives={list(part.negatives)}{tail}")
