"""Patch-regression training loop.

Three learning-rate stages over a shuffled patch stream, batch size 4,
smooth-L1 objective, RMSProp with momentum. Deterministic for a fixed
seed: initialization, per-epoch shuffles, and therefore final weights.
"""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import save_checkpoint
from .errors import ConfigError, DataError, InferenceError, TrainingError
from .model import Network, NetworkConfig, build_network
from .optim import OptimizerState, rmsprop_step
from .ops import smooth_l1
from .patches import PatchSet

DEFAULT_STAGES = ((10, 3.0e-4), (20, 1.0e-4), (20, 3.3e-5))

# A batch whose loss exceeds this multiple of the epoch's running mean is
# recorded as a spike (observed near the edge of stable learning rates).
SPIKE_FACTOR = 10.0


@dataclass(frozen=True)
class TrainConfig:
    stages: tuple = DEFAULT_STAGES
    batch_size: int = 4
    seed: int = 0
    loss_beta: float = 1.0
    checkpoint_every: int = 0  # epochs; 0 disables cadence checkpoints

    def __post_init__(self):
        object.__setattr__(
            self, "stages", tuple((int(e), float(lr)) for e, lr in self.stages)
        )
        if not self.stages:
            raise ConfigError("training needs at least one stage")
        lrs = [lr for _, lr in self.stages]
        # lr == 0 is allowed: it makes training a bit-exact no-op, which is
        # useful as a determinism probe
        if any(e <= 0 for e, _ in self.stages) or any(lr < 0 for lr in lrs):
            raise ConfigError(f"stages must have positive epochs and non-negative rates: {self.stages}")
        if any(lrs[i + 1] > lrs[i] for i in range(len(lrs) - 1)):
            raise ConfigError(f"learning rates must be non-increasing: {lrs}")
        if self.batch_size < 1:
            raise ConfigError("batch size must be at least 1")
        if self.loss_beta <= 0:
            raise ConfigError("loss beta must be positive")

    def to_dict(self) -> dict:
        return {
            "stages": [list(s) for s in self.stages],
            "batch_size": self.batch_size,
            "seed": self.seed,
            "loss_beta": self.loss_beta,
            "checkpoint_every": self.checkpoint_every,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {"stages", "batch_size", "seed", "loss_beta", "checkpoint_every"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown TrainConfig fields: {sorted(unknown)}")
        kwargs = dict(data)
        if "stages" in kwargs:
            kwargs["stages"] = tuple(tuple(s) for s in kwargs["stages"])
        return cls(**kwargs)

    @property
    def total_epochs(self) -> int:
        return sum(e for e, _ in self.stages)

    def stage_of_epoch(self, epoch: int) -> tuple[int, float]:
        """(stage index, learning rate) owning the given global epoch."""
        done = 0
        for si, (epochs, lr) in enumerate(self.stages):
            if epoch < done + epochs:
                return si, lr
            done += epochs
        raise ConfigError(f"epoch {epoch} beyond schedule of {done} epochs")


@dataclass
class TrainLog:
    """One row per epoch plus any spike events; steps strictly increase."""

    rows: list = field(default_factory=list)  # dicts: step/epoch/stage/lr/mean_loss/wall_ms
    spikes: list = field(default_factory=list)  # (step, loss) pairs
    last_checkpoint: str | None = None

    COLUMNS = ("step", "epoch", "stage", "lr", "mean_loss", "wall_ms")

    def append(self, **row) -> None:
        if self.rows and row["step"] <= self.rows[-1]["step"]:
            raise TrainingError("log steps must increase")
        self.rows.append(row)

    def to_csv(self, path, config: dict | None = None, deterministic: bool = True) -> None:
        """Write the log; deterministic mode blanks the wall-clock column."""
        lines = []
        if config is not None:
            lines.append("# config: " + json.dumps(config, sort_keys=True, separators=(",", ":")))
        lines.append(",".join(self.COLUMNS))
        for row in self.rows:
            wall = "" if deterministic else repr(row["wall_ms"])
            lines.append(
                f"{row['step']},{row['epoch']},{row['stage']},{row['lr']!r},"
                f"{row['mean_loss']!r},{wall}"
            )
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _batches(count: int, batch_size: int, perm: np.ndarray):
    for start in range(0, count, batch_size):
        yield perm[start : start + batch_size]


def train(
    config: TrainConfig,
    net_config: NetworkConfig,
    data: PatchSet,
    checkpoint_dir=None,
) -> tuple[Network, TrainLog]:
    """Run the staged schedule over the patch set; returns final net and log."""
    if len(data) == 0:
        raise DataError("cannot train on an empty patch set")
    net = build_network(net_config)
    if data.patches.shape[-1] != net_config.input_channels:
        raise ConfigError(
            f"patch channels {data.patches.shape[-1]} vs network input "
            f"{net_config.input_channels}"
        )
    state = OptimizerState.for_params(net.params, lr=config.stages[0][1])
    log = TrainLog()
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckpt_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)

    step = 0
    for epoch in range(config.total_epochs):
        stage_index, lr = config.stage_of_epoch(epoch)
        state.lr = lr
        t0 = time.perf_counter()
        perm = np.random.default_rng([config.seed, epoch]).permutation(len(data))
        loss_sum = 0.0
        batch_count = 0
        for idx in _batches(len(data), config.batch_size, perm):
            # Schedule fidelity: the rate actually applied at this step must
            # be the stage table's entry.
            assert state.lr == config.stages[stage_index][1]
            try:
                loss, grads = net.loss_and_grads(
                    data.patches[idx], data.targets[idx], beta=config.loss_beta
                )
            except InferenceError as exc:
                ref = log.last_checkpoint or "none"
                raise TrainingError(
                    f"diverged at step {step} (epoch {epoch}): {exc}; "
                    f"last good checkpoint: {ref}"
                ) from exc
            if not np.isfinite(loss):
                ref = log.last_checkpoint or "none"
                raise TrainingError(
                    f"non-finite loss at step {step} (epoch {epoch}); "
                    f"last good checkpoint: {ref}"
                )
            if batch_count > 0 and loss > SPIKE_FACTOR * (loss_sum / batch_count):
                log.spikes.append((step, float(loss)))
                warnings.warn(f"loss spike at step {step}: {loss:.6g}")
            rmsprop_step(net.params, grads, state)
            loss_sum += float(loss)
            batch_count += 1
            step += 1
        wall_ms = (time.perf_counter() - t0) * 1000.0
        log.append(
            step=step,
            epoch=epoch,
            stage=stage_index,
            lr=lr,
            mean_loss=loss_sum / batch_count,
            wall_ms=wall_ms,
        )
        if (
            ckpt_dir is not None
            and config.checkpoint_every > 0
            and (epoch + 1) % config.checkpoint_every == 0
        ):
            path = ckpt_dir / f"epoch_{epoch + 1:03d}.tofr"
            save_checkpoint(net, path, optimizer=state)
            log.last_checkpoint = str(path)
    if ckpt_dir is not None:
        path = ckpt_dir / "final.tofr"
        save_checkpoint(net, path, optimizer=state)
        log.last_checkpoint = str(path)
    return net, log


def evaluate_epoch(net: Network, data: PatchSet, beta: float = 1.0, batch_size: int = 256) -> float:
    """Mean smooth-L1 loss of the net over a patch set; pure, no updates."""
    if len(data) == 0:
        raise DataError("cannot evaluate an empty patch set")
    total = 0.0
    for start in range(0, len(data), batch_size):
        preds = net.forward_batch(data.patches[start : start + batch_size])
        targets = data.targets[start : start + batch_size]
        total += float(np.sum(smooth_l1(preds, targets, beta)))
    return total / len(data)


def split_scenes(scenes, val_fraction: float = 0.05, seed: int = 0):
    """Deterministic by-scene split; at least one scene on each side."""
    if not 0.0 < val_fraction < 1.0:
        raise ConfigError(f"val fraction must be in (0, 1), got {val_fraction}")
    if len(scenes) < 2:
        raise DataError("need at least two scenes to split")
    perm = np.random.default_rng([seed, 0xBEEF]).permutation(len(scenes))
    n_val = max(1, int(round(len(scenes) * val_fraction)))
    n_val = min(n_val, len(scenes) - 1)
    val_idx = set(perm[:n_val].tolist())
    train = [s for i, s in enumerate(scenes) if i not in val_idx]
    val = [s for i, s in enumerate(scenes) if i in val_idx]
    return train, val
