"""Noise robustness: sweep sensor noise over the trained model, no post-filter.

Reuses demos/_out/demo_model.tofr when demo 05 already ran, otherwise trains
the same small recipe first. Evaluation scenes are freshly generated with a
seed the model never saw. Gaussian noise of the given sigma (mm) is added to
the raw map before restoration; metrics are pooled over all scenes.
"""

import time

from tofdepth.checkpoint import load_checkpoint, save_checkpoint
from tofdepth.evaluation import (
    compute_metrics,
    infer_depth_map,
    median_filter_3x3,
    noise_sweep,
)

from _common import OUT, demo_scenes, train_demo_model

OUT.mkdir(exist_ok=True)
ckpt = OUT / "demo_model.tofr"

if ckpt.exists():
    print(f"loading {ckpt} (from demo 05)")
    net, _ = load_checkpoint(ckpt)
else:
    print("no saved demo model, training one (run demo 05 to cache it) ...")
    t0 = time.perf_counter()
    net, _, _ = train_demo_model(demo_scenes())
    save_checkpoint(net, ckpt)
    print(f"trained in {time.perf_counter() - t0:.0f}s")

print("generating 6 held-out scenes (seed never used in training) ...")
eval_scenes = demo_scenes(count=6, seed=31)

sigmas = [0.0, 2.0, 8.0, 32.0, 128.0]
print(f"sweeping sigma over {sigmas} mm ...")
reports = noise_sweep(net, eval_scenes, sigmas=sigmas, seed=2)

base_rms = reports[0].rms
print(f"\n{'sigma':>6} {'rms':>8} {'rel':>8} {'log10':>8}   vs clean")
for rep in reports:
    shift = 100.0 * (rep.rms - base_rms) / base_rms
    print(f"{rep.config['sigma']:6.0f} {rep.rms:8.1f} {rep.rel:8.4f} "
          f"{rep.log10:8.4f}   {shift:+6.1f}%")

print("\nfor comparison, a 3x3 median filter on the clean restoration:")
plain = []
filt = []
for scene in eval_scenes:
    restored = infer_depth_map(net, scene.raw, scene.background, scene.object_mask)
    filtered = median_filter_3x3(restored, scene.object_mask)
    plain.append(compute_metrics(restored, scene.ground_truth, scene.raw, scene.object_mask))
    filt.append(compute_metrics(filtered, scene.ground_truth, scene.raw, scene.object_mask))
n = sum(r.pixel_count for r in plain)
rms_plain = (sum(r.rms ** 2 * r.pixel_count for r in plain) / n) ** 0.5
rms_filt = (sum(r.rms ** 2 * r.pixel_count for r in filt) / n) ** 0.5
print(f"unfiltered {rms_plain:.1f} mm  ->  filtered {rms_filt:.1f} mm "
      f"({100 * (rms_filt - rms_plain) / rms_plain:+.2f}%)")

print("""
The patch regression reads a 15x15 (and quarter-scale 57x57) neighbourhood
per pixel, so millimetre-level sensor noise averages out inside the network
and the sweep stays flat until sigma reaches tens of millimetres. The filter
comparison tracks training quality: this quick demo model still leaves a few
outlier pixels for the median to clean (a few percent), while the longer
desk recipe used by the acceptance tests trains far enough that filtering
changes rms by under one percent.""")
