"""Depth restoration for translucent objects in ToF-style depth maps.

A raw depth map plus a background map go in; a multi-scale patch network
regresses the corrected depth for every masked object pixel. The package
covers the whole loop: tensor ops with hand-written gradients, the residual
network and its ablation variants, synthetic scene generation, marker-based
ground-truth fitting, training, metrics, and a CLI.

Imports are lazy (PEP 562) so the CLI can pin the numeric backend's thread
count before numpy loads.
"""

from importlib import import_module

__version__ = "1.0.0"

# public name -> defining submodule
_EXPORTS = {
    "TofDepthError": "errors",
    "ConfigError": "errors",
    "DataError": "errors",
    "NumericError": "errors",
    "DepthMap": "depthmap",
    "read_depth_pgm": "depthmap",
    "write_depth_pgm": "depthmap",
    "read_mask_pgm": "depthmap",
    "write_mask_pgm": "depthmap",
    "add_gaussian_noise": "depthmap",
    "MarkerSet": "geometry",
    "fit_homography": "geometry",
    "apply_homography": "geometry",
    "fit_plane": "geometry",
    "fit_ground_truth_plane": "geometry",
    "NetworkConfig": "model",
    "Network": "model",
    "build_network": "model",
    "PATCH_SIZE": "model",
    "save_checkpoint": "checkpoint",
    "load_checkpoint": "checkpoint",
    "SceneSample": "scenes",
    "read_scene": "scenes",
    "write_scene": "scenes",
    "load_scene_tree": "scenes",
    "SceneSpec": "synthetic",
    "SceneSetSpec": "synthetic",
    "generate_synthetic_scene": "synthetic",
    "generate_scene_set": "synthetic",
    "plane_marker_set": "synthetic",
    "PatchSet": "patches",
    "extract_patch": "patches",
    "extract_patches": "patches",
    "build_training_set": "patches",
    "TrainConfig": "training",
    "TrainLog": "training",
    "train": "training",
    "evaluate_epoch": "training",
    "split_scenes": "training",
    "MetricsReport": "evaluation",
    "compute_metrics": "evaluation",
    "infer_depth_map": "evaluation",
    "median_filter_3x3": "evaluation",
    "noise_sweep": "evaluation",
    "compare_variants": "evaluation",
}

__all__ = sorted(_EXPORTS) + ["__version__"]


def __getattr__(name: str):
    module = _EXPORTS.get(name)
    if module is None:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    return getattr(import_module(f".{module}", __name__), name)


def __dir__():
    return __all__
