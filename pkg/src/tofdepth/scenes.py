"""Registered capture tuples and their on-disk layout.

A scene directory holds `raw.pgm`, `background.pgm`, `gt.pgm`, `mask.pgm`
(formats per depthmap module) and `meta.json`. A scene tree is a directory
of such scene directories plus a `manifest.json` listing them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .depthmap import (
    DepthMap,
    read_depth_pgm,
    read_mask_pgm,
    write_depth_pgm,
    write_mask_pgm,
)
from .errors import DataError


@dataclass
class SceneSample:
    raw: DepthMap
    background: DepthMap
    ground_truth: DepthMap | None
    object_mask: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.object_mask = np.asarray(self.object_mask, dtype=bool)
        shapes = {self.raw.shape, self.background.shape, self.object_mask.shape}
        if self.ground_truth is not None:
            shapes.add(self.ground_truth.shape)
        if len(shapes) != 1:
            raise DataError(f"scene grids disagree in size: {sorted(shapes)}")
        if self.ground_truth is not None:
            if not self.ground_truth.valid[self.object_mask].all():
                raise DataError("ground truth must be valid on every masked pixel")

    @property
    def shape(self):
        return self.raw.shape


def write_scene(sample: SceneSample, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_depth_pgm(sample.raw, d / "raw.pgm")
    write_depth_pgm(sample.background, d / "background.pgm")
    if sample.ground_truth is not None:
        write_depth_pgm(sample.ground_truth, d / "gt.pgm")
    write_mask_pgm(sample.object_mask, d / "mask.pgm")
    (d / "meta.json").write_text(
        json.dumps(sample.meta, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def read_scene(directory) -> SceneSample:
    d = Path(directory)
    for name in ("raw.pgm", "background.pgm", "mask.pgm"):
        if not (d / name).exists():
            raise DataError(f"scene {d} is missing {name}")
    gt_path = d / "gt.pgm"
    meta = {}
    if (d / "meta.json").exists():
        meta = json.loads((d / "meta.json").read_text(encoding="utf-8"))
    return SceneSample(
        raw=read_depth_pgm(d / "raw.pgm"),
        background=read_depth_pgm(d / "background.pgm"),
        ground_truth=read_depth_pgm(gt_path) if gt_path.exists() else None,
        object_mask=read_mask_pgm(d / "mask.pgm"),
        meta=meta,
    )


def write_manifest(root, scene_dirs, config_echo: dict | None = None) -> None:
    manifest = {
        "scenes": [str(Path(p).relative_to(root)) for p in scene_dirs],
        "config": config_echo or {},
    }
    (Path(root) / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def read_manifest(root) -> dict:
    path = Path(root) / "manifest.json"
    if not path.exists():
        raise DataError(f"no manifest.json under {root}")
    return json.loads(path.read_text(encoding="utf-8"))


def load_scene_tree(root) -> list[SceneSample]:
    """Load every scene listed by the manifest, in manifest order."""
    manifest = read_manifest(root)
    return [read_scene(Path(root) / rel) for rel in manifest["scenes"]]
