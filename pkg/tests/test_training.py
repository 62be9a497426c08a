"""Training loop: schedule, determinism, divergence handling, splits."""

import numpy as np
import pytest

from tofdepth import training as tr
from tofdepth.errors import ConfigError, DataError, TrainingError
from tofdepth.model import NetworkConfig, build_network
from tofdepth.patches import PatchSet
from tofdepth.synthetic import SceneSpec, generate_scene_set, SceneSetSpec


def constant_patchset(count=32, value=0.4, target=0.9, channels=4):
    patches = np.full((count, 15, 15, channels), value, dtype=np.float32)
    targets = np.full(count, target, dtype=np.float32)
    return PatchSet(patches, targets)


def tiny_net_config(channels=4, seed=3):
    return NetworkConfig(
        groups=((1, 4, False), (1, 6, True)), input_channels=channels, seed=seed
    )


class TestTrainConfig:
    def test_defaults_are_three_stages(self):
        cfg = tr.TrainConfig()
        assert cfg.stages == tr.DEFAULT_STAGES
        assert cfg.total_epochs == 50
        assert cfg.stage_of_epoch(0) == (0, 3.0e-4)
        assert cfg.stage_of_epoch(10) == (1, 1.0e-4)
        assert cfg.stage_of_epoch(49) == (2, 3.3e-5)

    def test_epoch_beyond_schedule_rejected(self):
        with pytest.raises(ConfigError, match="beyond"):
            tr.TrainConfig().stage_of_epoch(50)

    def test_negative_lr_rejected(self):
        with pytest.raises(ConfigError, match="non-negative"):
            tr.TrainConfig(stages=((2, -1e-4),))

    def test_zero_lr_allowed(self):
        assert tr.TrainConfig(stages=((2, 0.0),)).total_epochs == 2

    def test_increasing_lr_rejected(self):
        with pytest.raises(ConfigError, match="non-increasing"):
            tr.TrainConfig(stages=((2, 1e-4), (2, 3e-4)))

    def test_zero_epochs_rejected(self):
        with pytest.raises(ConfigError, match="positive epochs"):
            tr.TrainConfig(stages=((0, 1e-4),))

    def test_bad_batch_size_and_beta(self):
        with pytest.raises(ConfigError, match="batch"):
            tr.TrainConfig(batch_size=0)
        with pytest.raises(ConfigError, match="beta"):
            tr.TrainConfig(loss_beta=0.0)

    def test_dict_round_trip(self):
        cfg = tr.TrainConfig(stages=((2, 1e-3), (3, 1e-4)), batch_size=8, seed=5)
        assert tr.TrainConfig.from_dict(cfg.to_dict()) == cfg

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError, match="unknown"):
            tr.TrainConfig.from_dict({"stages": [[1, 1e-4]], "bogus": 1})


class TestTrainLoop:
    def test_memorizes_constant_target(self):
        # spec sanity oracle: identical patches, constant target -> the net
        # must land within 1e-3 normalized after the first stage
        data = constant_patchset(count=48)
        cfg = tr.TrainConfig(stages=((10, 3.0e-4),), batch_size=4, seed=0)
        net, log = tr.train(cfg, tiny_net_config(), data)
        pred = net.forward_batch(data.patches[:1])[0]
        assert abs(pred - 0.9) < 1e-3
        assert log.rows[-1]["mean_loss"] < 1e-5

    def test_zero_lr_leaves_weights_bit_exact(self):
        data = constant_patchset(count=8)
        cfg = tr.TrainConfig(stages=((2, 0.0),), batch_size=4, seed=0)
        init = build_network(tiny_net_config())
        net, _ = tr.train(cfg, tiny_net_config(), data)
        for name, p in init.params.items():
            assert np.array_equal(net.params[name], p), name

    def test_fixed_seed_reproduces_log_and_weights(self, rng):
        patches = rng.normal(0, 0.3, size=(24, 15, 15, 4)).astype(np.float32)
        targets = rng.uniform(0.5, 2.0, size=24).astype(np.float32)
        data = PatchSet(patches, targets)
        cfg = tr.TrainConfig(stages=((2, 3e-4), (1, 1e-4)), batch_size=4, seed=9)
        net_a, log_a = tr.train(cfg, tiny_net_config(), data)
        net_b, log_b = tr.train(cfg, tiny_net_config(), data)
        for name in net_a.params:
            assert np.array_equal(net_a.params[name], net_b.params[name])
        strip = lambda rows: [
            {k: v for k, v in r.items() if k != "wall_ms"} for r in rows
        ]
        assert strip(log_a.rows) == strip(log_b.rows)

    def test_log_rows_follow_schedule(self):
        data = constant_patchset(count=8)
        cfg = tr.TrainConfig(stages=((2, 3e-4), (1, 1e-4)), batch_size=4, seed=0)
        _, log = tr.train(cfg, tiny_net_config(), data)
        assert [r["epoch"] for r in log.rows] == [0, 1, 2]
        assert [r["stage"] for r in log.rows] == [0, 0, 1]
        assert [r["lr"] for r in log.rows] == [3e-4, 3e-4, 1e-4]
        assert [r["step"] for r in log.rows] == [2, 4, 6]

    def test_channel_mismatch_rejected(self):
        data = constant_patchset(channels=2)
        cfg = tr.TrainConfig(stages=((1, 1e-4),))
        with pytest.raises(ConfigError, match="channels"):
            tr.train(cfg, tiny_net_config(channels=4), data)

    def test_empty_patchset_rejected(self):
        data = PatchSet(
            np.zeros((0, 15, 15, 4), dtype=np.float32), np.zeros(0, dtype=np.float32)
        )
        with pytest.raises(DataError, match="empty"):
            tr.train(tr.TrainConfig(stages=((1, 1e-4),)), tiny_net_config(), data)

    @pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
    def test_divergence_aborts_with_checkpoint_reference(self):
        # an absurd learning rate blows the float32 forward pass up fast
        data = constant_patchset(count=64, value=5.0, target=50.0)
        cfg = tr.TrainConfig(stages=((50, 1e6),), batch_size=4, seed=0)
        with pytest.raises(TrainingError, match="last good checkpoint: none"):
            tr.train(cfg, tiny_net_config(), data)

    def test_checkpoint_cadence(self, tmp_path):
        data = constant_patchset(count=8)
        cfg = tr.TrainConfig(stages=((4, 1e-4),), batch_size=4, seed=0,
                             checkpoint_every=2)
        _, log = tr.train(cfg, tiny_net_config(), data, checkpoint_dir=tmp_path)
        assert (tmp_path / "epoch_002.tofr").exists()
        assert (tmp_path / "epoch_004.tofr").exists()
        assert not (tmp_path / "epoch_003.tofr").exists()
        assert (tmp_path / "final.tofr").exists()
        assert log.last_checkpoint == str(tmp_path / "final.tofr")


class TestEvaluateEpoch:
    def test_perfect_predictions_give_zero_loss(self):
        data = constant_patchset(count=8, value=0.0, target=0.0)
        net = build_network(tiny_net_config())
        for name in net.params:  # zero net predicts exactly zero
            net.params[name][:] = 0
        assert tr.evaluate_epoch(net, data) == 0.0

    def test_matches_direct_computation(self, rng):
        patches = rng.normal(0, 0.3, size=(10, 15, 15, 4)).astype(np.float32)
        targets = rng.uniform(0.5, 2.0, size=10).astype(np.float32)
        data = PatchSet(patches, targets)
        net = build_network(tiny_net_config())
        from tofdepth.ops import smooth_l1

        preds = net.forward_batch(patches)
        expect = float(np.mean(smooth_l1(preds, targets)))
        assert tr.evaluate_epoch(net, data, batch_size=3) == pytest.approx(expect, rel=1e-6)

    def test_empty_rejected(self):
        data = PatchSet(
            np.zeros((0, 15, 15, 4), dtype=np.float32), np.zeros(0, dtype=np.float32)
        )
        with pytest.raises(DataError, match="empty"):
            tr.evaluate_epoch(build_network(tiny_net_config()), data)


class TestTrainLog:
    def test_steps_must_increase(self):
        log = tr.TrainLog()
        log.append(step=2, epoch=0, stage=0, lr=1e-4, mean_loss=1.0, wall_ms=5.0)
        with pytest.raises(TrainingError, match="increase"):
            log.append(step=2, epoch=1, stage=0, lr=1e-4, mean_loss=0.9, wall_ms=5.0)

    def test_csv_deterministic_blanks_wall_clock(self, tmp_path):
        log = tr.TrainLog()
        log.append(step=2, epoch=0, stage=0, lr=1e-4, mean_loss=0.5, wall_ms=123.4)
        log.to_csv(tmp_path / "log.csv", config={"seed": 1})
        text = (tmp_path / "log.csv").read_text()
        assert text.splitlines()[0] == '# config: {"seed":1}'
        assert text.splitlines()[1] == "step,epoch,stage,lr,mean_loss,wall_ms"
        assert text.splitlines()[2] == "2,0,0,0.0001,0.5,"

    def test_csv_nondeterministic_keeps_wall_clock(self, tmp_path):
        log = tr.TrainLog()
        log.append(step=1, epoch=0, stage=0, lr=1e-4, mean_loss=0.5, wall_ms=123.4)
        log.to_csv(tmp_path / "log.csv", deterministic=False)
        assert "123.4" in (tmp_path / "log.csv").read_text()


@pytest.fixture(scope="module")
def scene_pool():
    spec = SceneSetSpec(count=8, scene=SceneSpec(height=48, width=48, margin_px=8))
    return generate_scene_set(spec, base_seed=0)


class TestSplitScenes:
    def test_split_is_deterministic_partition(self, scene_pool):
        tr_a, va_a = tr.split_scenes(scene_pool, val_fraction=0.25, seed=1)
        tr_b, va_b = tr.split_scenes(scene_pool, val_fraction=0.25, seed=1)
        assert [id(s) for s in tr_a] == [id(s) for s in tr_b]
        assert [id(s) for s in va_a] == [id(s) for s in va_b]
        assert len(tr_a) == 6 and len(va_a) == 2
        assert {id(s) for s in tr_a} | {id(s) for s in va_a} == {id(s) for s in scene_pool}

    def test_both_sides_nonempty_even_at_extremes(self, scene_pool):
        tr_s, va_s = tr.split_scenes(scene_pool, val_fraction=0.01, seed=0)
        assert len(va_s) == 1 and len(tr_s) == 7
        tr_s, va_s = tr.split_scenes(scene_pool, val_fraction=0.99, seed=0)
        assert len(tr_s) == 1 and len(va_s) == 7

    def test_bad_fraction_rejected(self, scene_pool):
        with pytest.raises(ConfigError, match="fraction"):
            tr.split_scenes(scene_pool, val_fraction=0.0)

    def test_single_scene_rejected(self, scene_pool):
        with pytest.raises(DataError, match="two scenes"):
            tr.split_scenes(scene_pool[:1])
