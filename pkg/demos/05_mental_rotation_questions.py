"""Generate mental-rotation questions and verify their answer keys.

Each question shows a rendered polycube plus three candidates: a rotated
copy, a mirrored copy, and a different shape. The answer key is derivable
from the stored cell sets alone by checking all 24 grid rotations.
"""

import os

import numpy as np

from surfelgrad import fileio, iqtt

out_dir = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(out_dir, exist_ok=True)

config = iqtt.IqttConfig(k=8, image_size=(128, 128))
question = iqtt.gen_iqtt(seed=7, config=config)

print("answer:", question.answer_index)
for i, cand in enumerate(question.provenance["candidates"]):
    tag = "<- correct" if i == question.answer_index else ""
    print(f"  candidate {i}: shape {cand['shape_id']} "
          f"mirrored={cand['mirrored']} {tag}")

fileio.write_image_png(os.path.join(out_dir, "iqtt_ref.png"), question.reference)
for i, img in enumerate(question.candidates):
    fileio.write_image_png(os.path.join(out_dir, f"iqtt_a{i}.png"), img)
print("wrote", out_dir)

# the voxel oracle never looks at the images
recovered = iqtt.answer_from_provenance(question.provenance)
print("voxel oracle recovers the key:", recovered == question.answer_index)

# answer slots are uniform across questions
counts = np.zeros(3, dtype=int)
for seed in range(300):
    counts[iqtt.gen_iqtt(seed, config, render_images=False).answer_index] += 1
print("slot frequencies over 300 questions:", counts / counts.sum())
