"""Shared bits for the demo scripts: output folder and a small training recipe."""

from pathlib import Path

from tofdepth.model import NetworkConfig, build_network
from tofdepth.patches import build_training_set
from tofdepth.synthetic import SceneSetSpec, SceneSpec, generate_scene_set
from tofdepth.training import TrainConfig, split_scenes, train

OUT = Path(__file__).resolve().parent / "_out"


def demo_scenes(count: int = 16, side: int = 96, seed: int = 21):
    spec = SceneSetSpec(
        count=count,
        scene=SceneSpec(height=side, width=side, object_fraction=(0.3, 0.45)),
    )
    return generate_scene_set(spec, base_seed=seed)


def train_demo_model(scenes, seed: int = 21):
    """Desk-sized network, a minute or two of CPU; returns (net, val_scenes, log)."""
    train_scenes, val_scenes = split_scenes(scenes, val_fraction=0.125, seed=seed)
    data = build_training_set(train_scenes, max_per_scene=64, augment_flip=True, seed=seed)
    config = TrainConfig(stages=((4, 3e-4), (2, 1e-4)), batch_size=4, seed=seed)
    net, log = train(config, NetworkConfig.desk(seed=seed), data)
    return net, val_scenes, log
