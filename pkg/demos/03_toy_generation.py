"""Generate instruction data from the built-in toy world and score it.

The world has eight topics, each planted as a bump on one feature
dimension. After a short warmup the model captions images, asks itself
questions, answers them, and reports per-token answer probabilities with
the image present and withheld; the gap between the two is the
relevance score.

    python3 demos/03_toy_generation.py  (about 10 seconds)
"""

from __future__ import annotations

from vlitgen.data import InstructionClass
from vlitgen.model import GenerationRequest, attach_probs, generate_caption, generate_qa
from vlitgen.scoring import score_sample
from vlitgen.world import TOPICS, image_topic_index, make_images, new_world_model, warmup_model

images = make_images(64, image_dim=8, seed=3)
params, projection = new_world_model(embed_dim=16, image_dim=8, context_window=8, seed=3, learning_rate=0.4)

print("warming up the generator on the toy corpus")
losses = warmup_model(params, images, seed=3, epochs=12)
print("  epoch losses:", " ".join(f"{x:.3f}" for x in losses))

print("\ngenerated samples (greedy decoding)")
for image in images[:4]:
    topic = TOPICS[image_topic_index(image)]
    caption = generate_caption(image, params)
    req = GenerationRequest(image=image, instruction_class=InstructionClass.CONVERSATION)
    qa = generate_qa(image, caption, req, params)
    sample = attach_probs(qa, image, params)
    scored = score_sample(sample)
    print(f"  {image.image_id} (topic {topic})")
    print(f"    caption : {' '.join(caption)}")
    print(f"    question: {' '.join(qa.question)}")
    print(f"    answer  : {' '.join(qa.answer)}")
    print(f"    p with image    : {[round(p, 3) for p in sample.p_visual]}")
    print(f"    p without image : {[round(p, 3) for p in sample.p_direct]}")
    print(f"    relevance score : {scored.i2c:+.4f}")

# Sampled decoding varies with the seed but is reproducible for a fixed one.
image = images[0]
caption = generate_caption(image, params)
print(f"\nsampled answers for {image.image_id}, three seeds")
for seed in (1, 2, 3):
    req = GenerationRequest(
        image=image, instruction_class=InstructionClass.CONVERSATION, decode="sampled", seed=seed
    )
    qa = generate_qa(image, caption, req, params)
    print(f"  seed {seed}: {qa.sample_id:20s} {' '.join(qa.answer)}")
