"""Full-image inference and the evaluation battery.

Metrics run over the translucent pixel set T: masked pixels whose raw and
ground-truth depths are both valid. All three errors compare millimetre
depths:

    rms   = sqrt(mean((pred - gt)^2))
    rel   = mean(|pred - gt| / gt)
    log10 = mean(|log10 pred - log10 gt|)
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .depthmap import DepthMap, add_gaussian_noise
from .errors import ConfigError, DataError, InferenceError, MetricsError
from .model import Network
from .patches import DEPTH_SCALE, extract_patches
from .scenes import SceneSample

DEFAULT_NOISE_SIGMAS = (0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0)

BATCH_MODES = ("chunk", "column", "single")


@dataclass
class MetricsReport:
    rms: float
    rel: float
    log10: float
    pixel_count: int
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if min(self.rms, self.rel, self.log10) < 0:
            raise MetricsError("metrics cannot be negative")

    def to_dict(self) -> dict:
        return {
            "rms": self.rms,
            "rel": self.rel,
            "log10": self.log10,
            "pixel_count": self.pixel_count,
            "config": self.config,
        }


def translucent_set(gt: DepthMap, raw: DepthMap, mask: np.ndarray) -> np.ndarray:
    """Boolean T: masked pixels valid in both raw and ground truth."""
    mask = np.asarray(mask, dtype=bool)
    if not (gt.shape == raw.shape == mask.shape):
        raise DataError(
            f"grids disagree: gt {gt.shape}, raw {raw.shape}, mask {mask.shape}"
        )
    return mask & raw.valid & gt.valid


def _metric_sums(pred: DepthMap, gt: DepthMap, raw: DepthMap, mask) -> tuple:
    t = translucent_set(gt, raw, mask)
    if not t.any():
        raise MetricsError("translucent pixel set is empty")
    bad = t & ((gt.depth <= 0) | (pred.depth <= 0))
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise MetricsError(f"non-positive depth in T at pixel ({r}, {c})")
    p = pred.depth[t]
    d = gt.depth[t]
    err = p - d
    sq = float(np.sum(err * err))
    rel = float(np.sum(np.abs(err) / d))
    lg = float(np.sum(np.abs(np.log10(p) - np.log10(d))))
    return sq, rel, lg, int(np.count_nonzero(t))


def compute_metrics(
    pred: DepthMap, gt: DepthMap, raw: DepthMap, mask, config: dict | None = None
) -> MetricsReport:
    sq, rel, lg, n = _metric_sums(pred, gt, raw, mask)
    return MetricsReport(
        rms=float(np.sqrt(sq / n)),
        rel=rel / n,
        log10=lg / n,
        pixel_count=n,
        config=config or {},
    )


def _pooled_report(sums: list, config: dict) -> MetricsReport:
    sq = sum(s[0] for s in sums)
    rel = sum(s[1] for s in sums)
    lg = sum(s[2] for s in sums)
    n = sum(s[3] for s in sums)
    if n == 0:
        raise MetricsError("translucent pixel set is empty across all scenes")
    return MetricsReport(
        rms=float(np.sqrt(sq / n)), rel=rel / n, log10=lg / n, pixel_count=n, config=config
    )


def infer_depth_map(
    net: Network,
    raw: DepthMap,
    background: DepthMap,
    mask: np.ndarray,
    batch_mode: str = "chunk",
    batch_size: int = 256,
    channels=None,
) -> DepthMap:
    """Restore every masked pixel; unmasked pixels copy raw bit-exactly.

    batch_mode picks how masked pixels group into forward batches: "chunk"
    (fixed-size runs, default), "column" (each image column is one batch),
    or "single" (one pixel at a time). The proposed BN-free model yields
    identical outputs for all three.
    """
    mask = np.asarray(mask, dtype=bool)
    if batch_mode not in BATCH_MODES:
        raise ConfigError(f"batch mode {batch_mode!r} not in {BATCH_MODES}")
    scene = SceneSample(raw=raw, background=background, ground_truth=None, object_mask=mask)
    out = raw.copy()
    rows, cols = np.nonzero(mask)
    if rows.size == 0:
        return out
    patches = extract_patches(scene, rows, cols)
    if channels is not None:
        patches = patches[..., list(channels)]

    if batch_mode == "chunk":
        bounds = list(range(0, rows.size, batch_size)) + [rows.size]
    elif batch_mode == "single":
        bounds = list(range(rows.size + 1))
    else:
        # np.nonzero is row-major; regroup indices by column to mimic
        # vertical-line batching.
        order = np.lexsort((rows, cols))
        rows, cols, patches = rows[order], cols[order], patches[order]
        change = np.nonzero(np.diff(cols))[0] + 1
        bounds = [0] + change.tolist() + [rows.size]

    preds = np.empty(rows.size, dtype=np.float64)
    for a, b in zip(bounds[:-1], bounds[1:]):
        if a == b:
            continue
        preds[a:b] = net.forward_batch(patches[a:b]).astype(np.float64)
    depths = preds / DEPTH_SCALE
    if np.any(depths <= 0):
        bad = int(np.argmax(depths <= 0))
        raise InferenceError(
            f"non-positive restored depth at pixel ({rows[bad]}, {cols[bad]})"
        )
    out.depth[rows, cols] = depths
    out.valid[rows, cols] = True
    return out


def median_filter_3x3(dmap: DepthMap, mask: np.ndarray) -> DepthMap:
    """Replace masked pixels by their 3x3 neighbourhood median.

    Neighbourhoods read the composite map itself (restored inside the mask,
    raw outside) with edge clamping; unmasked pixels pass through.
    """
    from scipy.ndimage import median_filter

    mask = np.asarray(mask, dtype=bool)
    if mask.shape != dmap.shape:
        raise DataError(f"mask {mask.shape} vs map {dmap.shape}")
    filtered = median_filter(dmap.depth, size=3, mode="nearest")
    out = dmap.copy()
    out.depth = np.where(mask, filtered, dmap.depth)
    return out


def _child_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def noise_sweep(
    net: Network,
    scenes,
    sigmas=DEFAULT_NOISE_SIGMAS,
    seed: int = 0,
    batch_size: int = 256,
    channels=None,
) -> list[MetricsReport]:
    """Pooled metrics per noise level; raw maps perturbed, no post-filter."""
    sigmas = list(sigmas)
    if any(s < 0 for s in sigmas):
        raise ConfigError(f"noise sigmas must be non-negative: {sigmas}")
    if not scenes:
        raise DataError("noise sweep needs at least one scene")
    reports = []
    for si, sigma in enumerate(sigmas):
        sums = []
        for i, scene in enumerate(scenes):
            if scene.ground_truth is None:
                raise DataError(f"scene {i} lacks ground truth")
            noisy = add_gaussian_noise(scene.raw, sigma, _child_seed(seed, si, i))
            restored = infer_depth_map(
                net,
                noisy,
                scene.background,
                scene.object_mask,
                batch_size=batch_size,
                channels=channels,
            )
            sums.append(_metric_sums(restored, scene.ground_truth, noisy, scene.object_mask))
        reports.append(
            _pooled_report(sums, {"sigma": sigma, "filtered": False, "seed": seed})
        )
    return reports


def scene_classes(scenes) -> list[str]:
    seen = []
    for scene in scenes:
        cls = scene.meta.get("scene_class", "all")
        if cls not in seen:
            seen.append(cls)
    return seen


def compare_variants(
    scenes,
    models,  # iterable of (name, Network, channel tuple or None)
    batch_size: int = 256,
    with_filtered: bool = True,
) -> list[MetricsReport]:
    """Rows per scene class: raw baseline, then each model +/- median filter."""
    if not scenes:
        raise DataError("variant comparison needs at least one scene")
    classes = scene_classes(scenes)
    by_class = {
        cls: [s for s in scenes if s.meta.get("scene_class", "all") == cls]
        for cls in classes
    }
    rows = []
    for cls in classes:
        group = by_class[cls]
        sums = [
            _metric_sums(s.raw, s.ground_truth, s.raw, s.object_mask) for s in group
        ]
        rows.append(
            _pooled_report(sums, {"model": "raw", "scene_class": cls, "filtered": False})
        )
    for name, net, channels in models:
        restored_by_class = {}
        for cls in classes:
            outs = []
            for scene in by_class[cls]:
                restored = infer_depth_map(
                    net,
                    scene.raw,
                    scene.background,
                    scene.object_mask,
                    batch_size=batch_size,
                    channels=channels,
                )
                outs.append(restored)
            restored_by_class[cls] = outs
        for filtered in (False, True) if with_filtered else (False,):
            for cls in classes:
                sums = []
                for scene, restored in zip(by_class[cls], restored_by_class[cls]):
                    final = (
                        median_filter_3x3(restored, scene.object_mask)
                        if filtered
                        else restored
                    )
                    sums.append(
                        _metric_sums(final, scene.ground_truth, scene.raw, scene.object_mask)
                    )
                rows.append(
                    _pooled_report(
                        sums, {"model": name, "scene_class": cls, "filtered": filtered}
                    )
                )
    return rows


def write_metrics_csv(path, reports, columns, config: dict | None = None) -> None:
    """CSV with config-echo comment; column values pulled from each report."""
    lines = []
    if config is not None:
        lines.append("# config: " + json.dumps(config, sort_keys=True, separators=(",", ":")))
    lines.append(",".join(list(columns) + ["rms", "rel", "log10", "pixel_count"]))
    for rep in reports:
        cells = [str(rep.config.get(c, "")) for c in columns]
        cells += [repr(rep.rms), repr(rep.rel), repr(rep.log10), str(rep.pixel_count)]
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def save_false_color_png(dmap: DepthMap, path, vmin=None, vmax=None) -> None:
    """Diagnostic visualization; invalid pixels render black."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    depth = np.where(dmap.valid, dmap.depth, np.nan)
    fig, ax = plt.subplots(figsize=(5, 5))
    im = ax.imshow(depth, cmap="turbo", vmin=vmin, vmax=vmax)
    im.cmap.set_bad("black")
    ax.set_axis_off()
    fig.colorbar(im, ax=ax, shrink=0.8, label="depth [mm]")
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
