"""Network topology, variants, forward/backward plumbing."""

import numpy as np
import pytest

from tofdepth.errors import ConfigError, TopologyError
from tofdepth.gradcheck import check_gradients
from tofdepth.model import DESK_GROUPS, NetworkConfig, build_network


class TestDefaultTopology:
    def test_block_count_and_trace(self):
        net = build_network(NetworkConfig.default())
        assert net.block_count == 24
        assert net.shape_trace == [15, 15, 7, 3, 1]

    def test_group_widths(self):
        net = build_network(NetworkConfig.default())
        assert net.params["g1.b0.conv1.kernel"].shape == (32, 4, 3, 3)
        assert net.params["g2.b0.conv1.kernel"].shape == (64, 32, 3, 3)
        assert net.params["g3.b0.conv1.kernel"].shape == (128, 64, 3, 3)

    def test_downsampling_blocks_have_projections(self):
        net = build_network(NetworkConfig.default())
        specs = {b.name: b for b in net.blocks}
        assert specs["g2.b0"].stride == 2 and specs["g2.b0"].has_proj
        assert specs["g3.b0"].stride == 2 and specs["g3.b0"].has_proj
        # later blocks in each group are identity-shortcut
        assert not specs["g2.b1"].has_proj
        assert not specs["g3.b7"].has_proj
        # first block projects only because the channel width changes
        assert specs["g1.b0"].stride == 1 and specs["g1.b0"].has_proj
        assert not specs["g1.b1"].has_proj

    def test_head_collapses_to_scalar(self):
        # default groups end on the 3x3 grid, so the head is one conv
        net = build_network(NetworkConfig.default())
        assert [(h.in_size, h.out_size) for h in net.head] == [(3, 1)]
        assert net.head[-1].out_channels == 1
        # the desk build stops a group early and needs one reduction conv
        desk = build_network(NetworkConfig.desk())
        assert [(h.in_size, h.out_size) for h in desk.head] == [(7, 3), (3, 1)]


class TestVariants:
    def test_batch_norm_variant_has_bn_after_every_conv(self):
        net = build_network(NetworkConfig.with_batch_norm())
        for b in net.blocks:
            assert f"{b.name}.bn1.gamma" in net.params
            assert f"{b.name}.bn2.gamma" in net.params
            if b.has_proj:
                assert f"{b.name}.bnp.gamma" in net.params

    def test_default_has_no_bn_params(self):
        net = build_network(NetworkConfig.default())
        assert not any(".bn" in name for name in net.params)

    def test_single_scale_takes_two_channels(self):
        net = build_network(NetworkConfig.single_scale())
        assert net.config.input_channels == 2
        assert net.params["g1.b0.conv1.kernel"].shape == (32, 2, 3, 3)
        # everything downstream of the stem is unchanged
        assert net.block_count == 24
        assert net.shape_trace == [15, 15, 7, 3, 1]

    def test_desk_preset(self):
        net = build_network(NetworkConfig.desk())
        assert net.block_count == sum(g[0] for g in DESK_GROUPS)
        assert net.shape_trace[:3] == [15, 15, 7]


class TestConfigValidation:
    def test_bad_input_channels(self):
        with pytest.raises(ConfigError):
            build_network(NetworkConfig(input_channels=3))

    def test_first_group_must_not_downsample(self):
        with pytest.raises(ConfigError):
            build_network(NetworkConfig(groups=((2, 8, True),)))

    def test_too_many_downsamples_names_layer(self):
        cfg = NetworkConfig(
            groups=((1, 4, False), (1, 4, True), (1, 4, True), (1, 4, True), (1, 4, True))
        )
        with pytest.raises(TopologyError):
            build_network(cfg)

    def test_from_dict_rejects_unknown_fields(self):
        with pytest.raises(ConfigError, match="unknown"):
            NetworkConfig.from_dict({"input_channels": 4, "depth": 3})

    def test_dict_round_trip(self):
        cfg = NetworkConfig.desk(seed=9)
        assert NetworkConfig.from_dict(cfg.to_dict()) == cfg


class TestForward:
    def test_initialization_deterministic_per_seed(self, tiny_config):
        a = build_network(tiny_config)
        b = build_network(tiny_config)
        for name in a.params:
            np.testing.assert_array_equal(a.params[name], b.params[name])
        c = build_network(NetworkConfig(groups=tiny_config.groups, seed=4))
        assert any(
            not np.array_equal(a.params[n], c.params[n]) for n in a.params
        )

    def test_forward_batch_shape_validation(self, tiny_config, rng):
        net = build_network(tiny_config)
        with pytest.raises(ConfigError):
            net.forward_batch(rng.normal(size=(2, 14, 15, 4)).astype(np.float32))
        with pytest.raises(ConfigError):
            net.forward_batch(rng.normal(size=(2, 15, 15, 3)).astype(np.float32))

    def test_forward_returns_scalar_per_patch(self, tiny_config, rng):
        net = build_network(tiny_config)
        batch = rng.normal(0, 0.1, size=(5, 15, 15, 4)).astype(np.float32)
        out = net.forward_batch(batch)
        assert out.shape == (5,)
        assert isinstance(net.forward(batch[0]), float)

    def test_batching_is_bit_exact_without_bn(self, tiny_config, rng):
        net = build_network(tiny_config)
        batch = rng.normal(0, 0.1, size=(9, 15, 15, 4)).astype(np.float32)
        whole = net.forward_batch(batch)
        singles = np.array([net.forward_batch(batch[i : i + 1])[0] for i in range(9)])
        np.testing.assert_array_equal(whole, singles)
        pairs = np.concatenate([net.forward_batch(batch[i : i + 3]) for i in (0, 3, 6)])
        np.testing.assert_array_equal(whole, pairs)

    def test_bn_couples_predictions_within_batch(self, rng):
        cfg = NetworkConfig(groups=((1, 4, False), (1, 6, True)), use_batch_norm=True, seed=3)
        net = build_network(cfg)
        batch = rng.normal(0, 0.1, size=(4, 15, 15, 4)).astype(np.float32)
        whole = net.forward_batch(batch)
        alone = net.forward_batch(batch[:1])
        assert whole[0] != alone[0]

    def test_residual_identity_with_zeroed_branch(self, rng):
        # zero the convolution weights of an identity-shortcut block: its
        # output must be relu(x + 0) = x for non-negative x
        net = build_network(NetworkConfig(groups=((2, 4, False),), seed=0))
        for name in ("g1.b1.conv1", "g1.b1.conv2"):
            net.params[f"{name}.kernel"][:] = 0
            net.params[f"{name}.bias"][:] = 0
        x = np.abs(rng.normal(size=(2, 15, 15, 4))).astype(np.float32)
        y = net.run_block(1, 1, x)
        np.testing.assert_array_equal(y, x)


class TestBackward:
    def test_grads_cover_every_parameter(self, tiny_config, rng):
        net = build_network(tiny_config)
        patches = rng.normal(0, 0.1, size=(3, 15, 15, 4)).astype(np.float32)
        targets = rng.normal(1.5, 0.2, size=3).astype(np.float32)
        loss, grads = net.loss_and_grads(patches, targets)
        assert np.isfinite(loss)
        assert set(grads) == set(net.params)
        for name, g in grads.items():
            assert g.shape == net.params[name].shape, name

    def test_gradients_match_fd_on_two_block_net(self, rng):
        cfg = NetworkConfig(groups=((1, 3, False), (1, 4, True)), seed=1)
        net = build_network(cfg).to_f64()
        patches = rng.normal(0, 0.3, size=(2, 15, 15, 4))
        targets = np.array([1.2, 0.8])

        def loss():
            out = net._run(patches.astype(np.float64), check_finite=False)
            from tofdepth.ops import smooth_l1

            return float(smooth_l1(out.reshape(-1), targets).mean())

        _, grads = net.loss_and_grads(patches, targets)
        # spot-check a few parameters end to end (full sweep lives in the
        # acceptance suite); h must stay below the smallest relu
        # pre-activation magnitude or the central difference straddles a kink
        names = ["g1.b0.conv1.kernel", "g2.b0.proj.kernel", "head.1.bias"]
        report = check_gradients(loss, {n: net.params[n] for n in names},
                                 {n: grads[n] for n in names}, h=1e-6)
        assert report.passed, str(report)

    def test_bn_gradients_match_fd(self, rng):
        cfg = NetworkConfig(groups=((1, 3, False),), use_batch_norm=True, seed=2)
        net = build_network(cfg).to_f64()
        patches = rng.normal(0, 0.3, size=(3, 15, 15, 4))
        targets = np.array([1.0, 1.1, 0.9])

        def loss():
            out = net._run(patches.astype(np.float64), check_finite=False)
            from tofdepth.ops import smooth_l1

            return float(smooth_l1(out.reshape(-1), targets).mean())

        _, grads = net.loss_and_grads(patches, targets)
        names = ["g1.b0.bn1.gamma", "g1.b0.bn2.beta", "g1.b0.bnp.gamma"]
        report = check_gradients(loss, {n: net.params[n] for n in names},
                                 {n: grads[n] for n in names})
        assert report.passed, str(report)


def test_run_block_unknown_name(tiny_config, rng):
    net = build_network(tiny_config)
    with pytest.raises(ConfigError, match="g9.b9"):
        net.run_block(9, 9, rng.normal(size=(1, 15, 15, 4)).astype(np.float32))
