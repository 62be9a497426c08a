"""Multi-scale patch extraction around masked pixels.

Each training sample is a 15x15x4 window centred on one pixel of the
translucent object. Channel 0 is the raw-minus-background difference at
full resolution, channel 1 the same signal sampled with stride 4 (a 57x57
receptive field), channels 2 and 3 the masked raw depth at the two scales.
Depths are in metres (millimetre maps divided by 1000); pixels outside the
frame clamp to the nearest edge pixel.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .depthmap import DepthMap
from .errors import ConfigError, DataError
from .model import PATCH_SIZE
from .scenes import SceneSample

# Millimetres to metres; network inputs and targets live in metres.
DEPTH_SCALE = 1.0e-3

CH_A_FULL = 0
CH_A_QUARTER = 1
CH_B_FULL = 2
CH_B_QUARTER = 3
NUM_CHANNELS = 4

# Channels that survive in the single-scale ablation (full resolution only).
SINGLE_SCALE_CHANNELS = (CH_A_FULL, CH_B_FULL)

_HALF = PATCH_SIZE // 2
# Tap offsets relative to the centre pixel: +/-7 at full scale, +/-28 at
# quarter scale (stride 4 over the same 15 taps).
_OFFSETS_FULL = np.arange(PATCH_SIZE) - _HALF
_OFFSETS_QUARTER = _OFFSETS_FULL * 4


def difference_field(raw: DepthMap, background: DepthMap) -> np.ndarray:
    """Raw minus background in metres, zero where either map is invalid."""
    if raw.shape != background.shape:
        raise DataError(
            f"raw {raw.shape} and background {background.shape} differ in size"
        )
    both = raw.valid & background.valid
    out = np.zeros(raw.shape, dtype=np.float32)
    out[both] = (raw.depth[both] - background.depth[both]) * DEPTH_SCALE
    return out


def masked_field(raw: DepthMap, object_mask: np.ndarray) -> np.ndarray:
    """Raw depth in metres inside the mask, zero elsewhere."""
    mask = np.asarray(object_mask, dtype=bool)
    if raw.shape != mask.shape:
        raise DataError(f"raw {raw.shape} and mask {mask.shape} differ in size")
    keep = mask & raw.valid
    out = np.zeros(raw.shape, dtype=np.float32)
    out[keep] = raw.depth[keep] * DEPTH_SCALE
    return out


def _clamped_indices(centers: np.ndarray, offsets: np.ndarray, limit: int) -> np.ndarray:
    """(P, 15) absolute indices with clamp-to-edge borders."""
    idx = centers[:, None] + offsets[None, :]
    return np.clip(idx, 0, limit - 1)


def extract_patches(sample: SceneSample, rows, cols) -> np.ndarray:
    """Patches for the given centre pixels, shape (P, 15, 15, 4) float32.

    Bulk gather: index arrays are built per scale and fancy-indexed into the
    two precomputed fields, so cost is one vectorised pass per channel.
    """
    rows = np.atleast_1d(np.asarray(rows, dtype=np.int64))
    cols = np.atleast_1d(np.asarray(cols, dtype=np.int64))
    if rows.shape != cols.shape or rows.ndim != 1:
        raise ConfigError("rows and cols must be 1-d arrays of equal length")
    h, w = sample.shape
    if rows.size and (
        rows.min() < 0 or rows.max() >= h or cols.min() < 0 or cols.max() >= w
    ):
        raise DataError("patch centre outside the image grid")

    a_field = difference_field(sample.raw, sample.background)
    b_field = masked_field(sample.raw, sample.object_mask)

    out = np.empty((rows.size, PATCH_SIZE, PATCH_SIZE, NUM_CHANNELS), dtype=np.float32)
    for channel, field, offsets in (
        (CH_A_FULL, a_field, _OFFSETS_FULL),
        (CH_A_QUARTER, a_field, _OFFSETS_QUARTER),
        (CH_B_FULL, b_field, _OFFSETS_FULL),
        (CH_B_QUARTER, b_field, _OFFSETS_QUARTER),
    ):
        ri = _clamped_indices(rows, offsets, h)  # (P, 15)
        ci = _clamped_indices(cols, offsets, w)  # (P, 15)
        out[..., channel] = field[ri[:, :, None], ci[:, None, :]]
    return out


def extract_patch(sample: SceneSample, row: int, col: int) -> np.ndarray:
    return extract_patches(sample, [row], [col])[0]


def patch_target(sample: SceneSample, row: int, col: int) -> float:
    if sample.ground_truth is None:
        raise DataError("scene has no ground truth to regress against")
    return float(sample.ground_truth.depth[row, col]) * DEPTH_SCALE


def flip_patches(patches: np.ndarray) -> np.ndarray:
    """Horizontal mirror of each patch; an involution used for augmentation."""
    return np.ascontiguousarray(patches[:, :, ::-1, :])


@dataclass
class PatchSet:
    """Flat collection of training patches and their scalar targets."""

    patches: np.ndarray  # (P, 15, 15, C) float32, metres
    targets: np.ndarray  # (P,) float32, metres

    def __post_init__(self):
        self.patches = np.ascontiguousarray(self.patches, dtype=np.float32)
        self.targets = np.ascontiguousarray(self.targets, dtype=np.float32)
        if self.patches.ndim != 4 or self.targets.ndim != 1:
            raise ConfigError("patches must be (P, S, S, C) and targets (P,)")
        if self.patches.shape[0] != self.targets.shape[0]:
            raise ConfigError(
                f"{self.patches.shape[0]} patches vs {self.targets.shape[0]} targets"
            )

    def __len__(self) -> int:
        return self.patches.shape[0]

    def select_channels(self, channels) -> "PatchSet":
        return PatchSet(self.patches[..., list(channels)], self.targets)

    def subset(self, indices) -> "PatchSet":
        idx = np.asarray(indices, dtype=np.int64)
        return PatchSet(self.patches[idx], self.targets[idx])


def sample_centres(
    sample: SceneSample, max_count: int | None, rng
) -> tuple[np.ndarray, np.ndarray]:
    """Masked pixel coordinates with valid ground truth, optionally subsampled.

    By default every masked pixel becomes a patch centre; max_count exists
    for reduced-scale runs and picks a sorted random subset.
    """
    usable = sample.object_mask.copy()
    if sample.ground_truth is not None:
        usable &= sample.ground_truth.valid
    rows, cols = np.nonzero(usable)
    if max_count is not None and rows.size > max_count:
        pick = rng.choice(rows.size, size=max_count, replace=False)
        pick.sort()
        rows, cols = rows[pick], cols[pick]
    return rows, cols


def build_training_set(
    scenes,
    max_per_scene: int | None = None,
    augment_flip: bool = True,
    seed: int = 0,
    channels=None,
) -> PatchSet:
    """Patches plus targets across scenes, optionally flip-doubled and shuffled.

    Scenes without ground truth are skipped with a warning. Order is
    deterministic for a given seed: scenes in input order, then one global
    shuffle.
    """
    rng = np.random.default_rng(seed)
    all_patches = []
    all_targets = []
    for index, scene in enumerate(scenes):
        if scene.ground_truth is None:
            warnings.warn(f"scene {index} has no ground truth, skipping")
            continue
        rows, cols = sample_centres(scene, max_per_scene, rng)
        if rows.size == 0:
            continue
        patches = extract_patches(scene, rows, cols)
        targets = scene.ground_truth.depth[rows, cols].astype(np.float32) * DEPTH_SCALE
        all_patches.append(patches)
        all_targets.append(targets)
    if not all_patches:
        raise DataError("no usable training pixels in any scene")
    patches = np.concatenate(all_patches, axis=0)
    targets = np.concatenate(all_targets, axis=0)
    if augment_flip:
        patches = np.concatenate([patches, flip_patches(patches)], axis=0)
        targets = np.concatenate([targets, targets], axis=0)
    order = rng.permutation(patches.shape[0])
    out = PatchSet(patches[order], targets[order])
    if channels is not None:
        out = out.select_channels(channels)
    return out
