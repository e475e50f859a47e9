"""Dataset writers: rendered room scenes and mental-rotation questions.

Layouts (fixed):
  scenes: out/{scene_%06d.json, rgb_%06d.png, depth_%06d.pfm, normals_%06d.pfm}
  iqtt:   out/{question_%06d/{ref.png, a0.png, a1.png, a2.png}, labels.jsonl}

Every item derives its own child seed from (base seed, index), so items
are independent and any subset can be regenerated byte-identically.
"""

import json
import os

import numpy as np

from . import fileio, iqtt, scene, shading, surfels


def child_seed(base_seed, index):
    """Splittable per-item seed from the run seed and the item counter."""
    ss = np.random.SeedSequence([int(base_seed) & (2**64 - 1), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def render_scene_outputs(spec, camera=None):
    """trace -> full differentiable forward pass; returns (rgb, depth, normals)."""
    cam = camera if camera is not None else spec.camera
    depth = scene.trace_depth(spec, cam)
    field = surfels.build_surfel_field(depth, cam, spec.material.albedo)
    if spec.material.specular is not None:
        rgb = shading.shade_phong(field, cam, spec.lights, spec.material)
    else:
        rgb = shading.shade(field, cam, spec.lights)
    return rgb, depth, field.normals


def write_scene_dataset(out_dir, count, seed, config=scene.SceneConfig()):
    """Generate `count` scenes; returns the list of per-item records."""
    os.makedirs(out_dir, exist_ok=True)
    records = []
    for i in range(count):
        item_seed = child_seed(seed, i)
        spec = scene.sample_scene(item_seed, config)
        rgb, depth, normals = render_scene_outputs(spec)
        stem = f"{i:06d}"
        scene_path = os.path.join(out_dir, f"scene_{stem}.json")
        with open(scene_path, "w") as f:
            json.dump(scene.scene_to_json(spec), f, indent=2, sort_keys=True)
        fileio.write_image_png(os.path.join(out_dir, f"rgb_{stem}.png"), rgb)
        fileio.write_pfm(os.path.join(out_dir, f"depth_{stem}.pfm"), depth)
        fileio.write_pfm(os.path.join(out_dir, f"normals_{stem}.pfm"), normals)
        records.append({"index": i, "seed": item_seed, "scene": scene_path})
    return records


def write_iqtt_dataset(out_dir, count, seed, config=iqtt.IqttConfig(),
                       render_images=True):
    """Generate `count` questions; labels.jsonl carries the answer keys."""
    os.makedirs(out_dir, exist_ok=True)
    labels_path = os.path.join(out_dir, "labels.jsonl")
    records = []
    with open(labels_path, "w") as f:
        for i in range(count):
            item_seed = child_seed(seed, i)
            q = iqtt.gen_iqtt(item_seed, config, render_images=render_images)
            if render_images:
                qdir = os.path.join(out_dir, f"question_{i:06d}")
                os.makedirs(qdir, exist_ok=True)
                fileio.write_image_png(os.path.join(qdir, "ref.png"), q.reference)
                for j, img in enumerate(q.candidates):
                    fileio.write_image_png(os.path.join(qdir, f"a{j}.png"), img)
            record = {
                "id": i,
                "answer": q.answer_index,
                "provenance": q.provenance,
            }
            f.write(json.dumps(record, sort_keys=True) + "\n")
            records.append(record)
    return records
