"""Synthetic translucent-object scenes with exact ground truth.

Each scene is a planar background ramp with one object (plane, sphere cap,
or cylinder section) standing some clearance in front of it. The raw map
mixes object and background depths through a smooth transmission field
alpha plus a non-negative bias, so the distorted depth is always at or
beyond the true one inside the object:

    raw = (1 - alpha) * gt + alpha * background + bias,  alpha in [0.2, 0.8]

Outside the mask raw equals the background. Everything is deterministic
per (spec, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .depthmap import DepthMap, add_gaussian_noise
from .errors import ConfigError, GenerationError
from .geometry import MARKER_INSET_MM, MarkerSet
from .scenes import SceneSample

SHAPES = ("plane", "sphere", "cylinder")

# Pixel pitch used when a synthetic plane scene doubles as a marker-board
# capture: 5 mm/px puts the 30 mm marker inset at an integer 6 px.
MM_PER_PX = 5.0


@dataclass(frozen=True)
class SceneSpec:
    height: int = 128
    width: int = 128
    shape: str = "plane"
    background_depth_mm: tuple[float, float] = (1600.0, 2400.0)
    background_slope_mm: float = 1.0  # max |gradient| per axis, mm per px
    clearance_mm: tuple[float, float] = (150.0, 400.0)
    alpha_range: tuple[float, float] = (0.2, 0.8)
    bias_max_mm: float = 30.0
    object_fraction: tuple[float, float] = (0.35, 0.6)  # of min(h, w) per axis
    margin_px: int = 16
    noise_sigma_mm: float = 0.0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ConfigError(f"unknown object shape {self.shape!r}, want one of {SHAPES}")
        lo, hi = self.alpha_range
        if not (0.0 <= lo <= hi <= 1.0):
            raise ConfigError(f"alpha range {self.alpha_range} must sit inside [0, 1]")
        if self.bias_max_mm < 0:
            raise ConfigError("bias must be non-negative")
        if min(self.height, self.width) <= 2 * self.margin_px + 8:
            raise GenerationError(
                f"{self.height}x{self.width} frame leaves no room for an object "
                f"inside margin {self.margin_px}"
            )


@dataclass(frozen=True)
class SceneSetSpec:
    """A batch of scenes cycling through the three object shapes."""

    count: int = 48
    scene: SceneSpec = field(default_factory=SceneSpec)
    shapes: Sequence[str] = SHAPES

    def spec_for(self, index: int) -> SceneSpec:
        from dataclasses import replace

        return replace(self.scene, shape=self.shapes[index % len(self.shapes)])


def _smooth_field(shape, rng, lo: float, hi: float) -> np.ndarray:
    """Smooth values in [lo, hi]: product of two low-frequency sinusoids."""
    h, w = shape
    rows = np.arange(h, dtype=np.float64)[:, None]
    cols = np.arange(w, dtype=np.float64)[None, :]
    fr, fc = rng.uniform(0.5, 1.5, size=2)
    pr, pc = rng.uniform(0.0, 1.0, size=2)
    s = 0.5 * (
        1.0
        + np.sin(2.0 * np.pi * (fr * rows / h + pr))
        * np.sin(2.0 * np.pi * (fc * cols / w + pc))
    )
    return lo + (hi - lo) * s


def _background(spec: SceneSpec, rng) -> np.ndarray:
    z0 = rng.uniform(*spec.background_depth_mm)
    gr, gc = rng.uniform(-spec.background_slope_mm, spec.background_slope_mm, size=2)
    rows = np.arange(spec.height, dtype=np.float64)[:, None]
    cols = np.arange(spec.width, dtype=np.float64)[None, :]
    return z0 + gr * (rows - spec.height / 2.0) + gc * (cols - spec.width / 2.0)


def _footprint(spec: SceneSpec, rng) -> tuple[int, int, int, int]:
    """Inclusive (r0, c0, r1, c1) bounding box inside the margins."""
    side = min(spec.height, spec.width)
    eh = int(round(side * rng.uniform(*spec.object_fraction)))
    ew = int(round(side * rng.uniform(*spec.object_fraction)))
    r0_max = spec.height - spec.margin_px - eh
    c0_max = spec.width - spec.margin_px - ew
    if r0_max < spec.margin_px or c0_max < spec.margin_px:
        raise GenerationError(
            f"object {eh}x{ew} does not fit a {spec.height}x{spec.width} frame "
            f"with margin {spec.margin_px}"
        )
    r0 = int(rng.integers(spec.margin_px, r0_max + 1))
    c0 = int(rng.integers(spec.margin_px, c0_max + 1))
    return r0, c0, r0 + eh - 1, c0 + ew - 1


def _clearance_profile(spec: SceneSpec, rng, rect) -> tuple[np.ndarray, np.ndarray]:
    """(clearance mm >= 0, mask) over the full frame for the chosen shape."""
    r0, c0, r1, c1 = rect
    rows = np.arange(spec.height, dtype=np.float64)[:, None]
    cols = np.arange(spec.width, dtype=np.float64)[None, :]
    rc, cc = (r0 + r1) / 2.0, (c0 + c1) / 2.0
    rr, cr = (r1 - r0) / 2.0, (c1 - c0) / 2.0
    in_rect = (rows >= r0) & (rows <= r1) & (cols >= c0) & (cols <= c1)
    c_lo, c_hi = spec.clearance_mm
    peak = rng.uniform(0.6 * (c_lo + c_hi) / 2.0, c_hi)

    clearance = np.zeros((spec.height, spec.width), dtype=np.float64)
    if spec.shape == "plane":
        # Tilted plane kept strictly positive over the rectangle.
        base = rng.uniform(c_lo, peak)
        span_r = rng.uniform(-0.3, 0.3) * base / max(rr, 1.0)
        span_c = rng.uniform(-0.3, 0.3) * base / max(cr, 1.0)
        prof = base + span_r * (rows - rc) + span_c * (cols - cc)
        mask = in_rect
        clearance[mask] = prof[mask]
    elif spec.shape == "sphere":
        # Spherical cap over the inscribed ellipse.
        u2 = ((rows - rc) / rr) ** 2 + ((cols - cc) / cr) ** 2
        mask = u2 <= 1.0
        clearance[mask] = c_lo + (peak - c_lo) * np.sqrt(1.0 - u2[mask])
    else:
        # Cylinder section: circular profile across columns, constant down rows.
        u2 = ((cols - cc) / cr) ** 2
        mask = in_rect & (np.broadcast_to(u2, in_rect.shape) <= 1.0)
        prof = c_lo + (peak - c_lo) * np.sqrt(np.maximum(1.0 - u2, 0.0))
        clearance[mask] = np.broadcast_to(prof, mask.shape)[mask]
    if not mask.any():
        raise GenerationError("object footprint rasterized to zero pixels")
    if np.any(clearance[mask] <= 0):
        raise GenerationError("object clearance must stay positive inside the mask")
    return clearance, mask


def generate_synthetic_scene(spec: SceneSpec, seed: int) -> SceneSample:
    rng = np.random.default_rng(seed)
    bg = _background(spec, rng)
    rect = _footprint(spec, rng)
    clearance, mask = _clearance_profile(spec, rng, rect)

    gt = bg - clearance  # object sits in front of the background
    if np.any(gt[mask] <= 0):
        raise GenerationError("ground-truth depth fell to zero or below inside the mask")

    alpha = _smooth_field((spec.height, spec.width), rng, *spec.alpha_range)
    bias = _smooth_field((spec.height, spec.width), rng, 0.0, spec.bias_max_mm)
    raw = np.where(mask, (1.0 - alpha) * gt + alpha * bg + bias, bg)

    valid = np.ones_like(mask)
    raw_map = DepthMap(raw, valid.copy())
    if spec.noise_sigma_mm > 0:
        raw_map = add_gaussian_noise(raw_map, spec.noise_sigma_mm, seed=seed + 1)

    r0, c0, r1, c1 = rect
    meta = {
        "shape": spec.shape,
        "scene_class": "planar" if spec.shape == "plane" else "round",
        "seed": int(seed),
        "rect": [int(r0), int(c0), int(r1), int(c1)],
        "alpha_range": list(spec.alpha_range),
        "bias_max_mm": spec.bias_max_mm,
        "mm_per_px": MM_PER_PX,
    }
    return SceneSample(
        raw=raw_map,
        background=DepthMap(bg, valid.copy()),
        ground_truth=DepthMap(gt, valid.copy()),
        object_mask=mask,
        meta=meta,
    )


def generate_scene_set(set_spec: SceneSetSpec, base_seed: int) -> list[SceneSample]:
    """Deterministic list of scenes; scene i uses seed base_seed + i."""
    return [
        generate_synthetic_scene(set_spec.spec_for(i), base_seed + i)
        for i in range(set_spec.count)
    ]


def plane_marker_set(scene: SceneSample) -> MarkerSet:
    """MarkerSet for a synthetic plane scene, for the homography GT path.

    Markers sit one inset (30 mm = 6 px at 5 mm/px) inside the object
    rectangle; depths are read off the scene's ground truth.
    """
    if scene.meta.get("shape") != "plane":
        raise ConfigError("marker extraction is defined for plane scenes only")
    r0, c0, r1, c1 = scene.meta["rect"]
    inset_px = MARKER_INSET_MM / MM_PER_PX
    pts = np.array(
        [
            [c0 + inset_px, r0 + inset_px],
            [c1 - inset_px, r0 + inset_px],
            [c1 - inset_px, r1 - inset_px],
            [c0 + inset_px, r1 - inset_px],
        ],
        dtype=np.float64,
    )
    depths = scene.ground_truth.depth[
        pts[:, 1].astype(np.int64), pts[:, 0].astype(np.int64)
    ]
    return MarkerSet(
        image_points=pts,
        depths_mm=depths.astype(np.float64),
        object_width_mm=(c1 - c0) * MM_PER_PX,
        object_height_mm=(r1 - r0) * MM_PER_PX,
    )
