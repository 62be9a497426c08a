"""Multi-scale patch extraction and training-set assembly."""

import numpy as np
import pytest

from tofdepth import patches as pa
from tofdepth.depthmap import DepthMap
from tofdepth.errors import ConfigError, DataError
from tofdepth.scenes import SceneSample


def ramp_scene(h=100, w=100):
    """Raw depth = column index mm on a constant background, full mask."""
    cols = np.tile(np.arange(w, dtype=np.float64), (h, 1)) + 1.0
    raw = DepthMap(cols, np.ones((h, w), dtype=bool))
    background = DepthMap.full((h, w), 4000.0)
    gt = DepthMap.full((h, w), 1000.0)
    mask = np.ones((h, w), dtype=bool)
    return SceneSample(raw, background, gt, mask)


class TestFields:
    def test_difference_zero_when_raw_equals_background(self):
        raw = DepthMap.full((9, 9), 1234.0)
        assert not pa.difference_field(raw, raw.copy()).any()

    def test_difference_zero_on_invalid_pixels(self):
        raw = DepthMap.full((4, 4), 1500.0)
        bg = DepthMap.full((4, 4), 2000.0)
        raw.valid[1, 1] = False
        bg.valid[2, 2] = False
        field = pa.difference_field(raw, bg)
        assert field[1, 1] == 0 and field[2, 2] == 0
        assert field[0, 0] == pytest.approx(-0.5)

    def test_masked_field_zero_outside_mask(self):
        raw = DepthMap.full((4, 4), 1500.0)
        mask = np.zeros((4, 4), dtype=bool)
        mask[1, 2] = True
        field = pa.masked_field(raw, mask)
        assert field[1, 2] == pytest.approx(1.5)
        assert field.sum() == field[1, 2]

    def test_shape_mismatch_rejected(self):
        raw = DepthMap.full((4, 4), 1500.0)
        with pytest.raises(DataError, match="size"):
            pa.difference_field(raw, DepthMap.full((4, 5), 1.0))
        with pytest.raises(DataError, match="size"):
            pa.masked_field(raw, np.zeros((5, 4), dtype=bool))


class TestExtractPatch:
    def test_shape_and_dtype(self):
        p = pa.extract_patch(ramp_scene(), 50, 50)
        assert p.shape == (15, 15, 4) and p.dtype == np.float32

    def test_b_center_zero_when_mask_false(self):
        s = ramp_scene(40, 40)
        s.object_mask[20, 20] = False
        p = pa.extract_patch(s, 20, 20)
        assert p[7, 7, pa.CH_B_FULL] == 0.0
        assert p[7, 7, pa.CH_B_QUARTER] == 0.0

    def test_quarter_scale_taps_on_ramp(self):
        # raw = column mm: quarter-scale taps must be 50-28, 50-24, ..., 50+28
        p = pa.extract_patch(ramp_scene(), 50, 50)
        expect = (np.arange(50 - 28, 50 + 29, 4) + 1.0) * pa.DEPTH_SCALE
        assert np.allclose(p[7, :, pa.CH_B_QUARTER], expect.astype(np.float32))
        # and the full-scale row is the unit-stride window
        expect_full = (np.arange(50 - 7, 50 + 8) + 1.0) * pa.DEPTH_SCALE
        assert np.allclose(p[7, :, pa.CH_B_FULL], expect_full.astype(np.float32))

    def test_border_clamps_to_edge(self):
        p = pa.extract_patch(ramp_scene(), 0, 0)
        # column taps 0-28 ... clamp to column 0 (value 1 mm)
        left = p[7, :8, pa.CH_B_QUARTER]
        assert np.all(left == np.float32(1.0 * pa.DEPTH_SCALE))
        # row clamping mirrors it at full scale
        assert np.all(p[:8, 7, pa.CH_B_FULL] == p[7, 7, pa.CH_B_FULL])

    def test_locality_28px_chebyshev(self):
        s = ramp_scene(80, 80)
        base = pa.extract_patch(s, 40, 40)
        far = ramp_scene(80, 80)
        far.raw.depth[40, 69] = 9999.0  # Chebyshev distance 29
        assert np.array_equal(pa.extract_patch(far, 40, 40), base)
        near = ramp_scene(80, 80)
        near.raw.depth[40, 68] = 9999.0  # distance 28: inside the window
        assert not np.array_equal(pa.extract_patch(near, 40, 40), base)

    def test_center_outside_image_rejected(self):
        with pytest.raises(DataError, match="outside"):
            pa.extract_patch(ramp_scene(), 100, 50)

    def test_batch_matches_singles(self, rng):
        s = ramp_scene(60, 60)
        rows = rng.integers(0, 60, size=9)
        cols = rng.integers(0, 60, size=9)
        batch = pa.extract_patches(s, rows, cols)
        for i in range(9):
            assert np.array_equal(batch[i], pa.extract_patch(s, rows[i], cols[i]))

    def test_target_is_normalized_gt(self):
        s = ramp_scene()
        assert pa.patch_target(s, 10, 20) == pytest.approx(1.0)
        s.ground_truth = None
        with pytest.raises(DataError, match="ground truth"):
            pa.patch_target(s, 10, 20)


class TestFlip:
    def test_involution(self, rng):
        p = rng.normal(size=(5, 15, 15, 4)).astype(np.float32)
        assert np.array_equal(pa.flip_patches(pa.flip_patches(p)), p)

    def test_mirrors_columns_all_channels(self):
        p = pa.extract_patch(ramp_scene(), 50, 50)[None]
        f = pa.flip_patches(p)[0]
        assert np.array_equal(f, p[0][:, ::-1, :])


class TestPatchSet:
    def test_length_and_subset(self, rng):
        ps = pa.PatchSet(
            rng.normal(size=(6, 15, 15, 4)).astype(np.float32),
            rng.normal(size=6).astype(np.float32),
        )
        assert len(ps) == 6
        sub = ps.subset([1, 3])
        assert len(sub) == 2
        assert np.array_equal(sub.patches[0], ps.patches[1])

    def test_select_channels(self, rng):
        ps = pa.PatchSet(
            rng.normal(size=(3, 15, 15, 4)).astype(np.float32),
            np.zeros(3, dtype=np.float32),
        )
        two = ps.select_channels(pa.SINGLE_SCALE_CHANNELS)
        assert two.patches.shape == (3, 15, 15, 2)
        assert np.array_equal(two.patches[..., 0], ps.patches[..., pa.CH_A_FULL])
        assert np.array_equal(two.patches[..., 1], ps.patches[..., pa.CH_B_FULL])

    def test_count_mismatch_rejected(self, rng):
        with pytest.raises(ConfigError, match="targets"):
            pa.PatchSet(
                rng.normal(size=(3, 15, 15, 4)).astype(np.float32),
                np.zeros(2, dtype=np.float32),
            )


class TestBuildTrainingSet:
    def small_scene(self, mask_pixels=10, seed=0):
        rng = np.random.default_rng(seed)
        shape = (24, 24)
        raw = DepthMap(rng.uniform(1000, 3000, shape), np.ones(shape, dtype=bool))
        bg = DepthMap.full(shape, 3200.0)
        gt = DepthMap(rng.uniform(900, 2800, shape), np.ones(shape, dtype=bool))
        mask = np.zeros(shape, dtype=bool)
        flat = rng.choice(shape[0] * shape[1], size=mask_pixels, replace=False)
        mask[np.unravel_index(flat, shape)] = True
        return SceneSample(raw, bg, gt, mask)

    def test_flip_doubles_count(self):
        s = self.small_scene(100)
        ps = pa.build_training_set([s], augment_flip=True)
        assert len(ps) == 200
        assert len(pa.build_training_set([s], augment_flip=False)) == 100

    def test_gt_less_scene_skipped_with_warning(self):
        good = self.small_scene(10)
        bad = self.small_scene(10, seed=1)
        bad.ground_truth = None
        with pytest.warns(UserWarning, match="no ground truth"):
            ps = pa.build_training_set([good, bad], augment_flip=False)
        assert len(ps) == 10

    def test_all_gt_less_raises(self):
        s = self.small_scene(10)
        s.ground_truth = None
        with pytest.warns(UserWarning):
            with pytest.raises(DataError, match="no usable"):
                pa.build_training_set([s])

    def test_deterministic_per_seed(self):
        scenes = [self.small_scene(30), self.small_scene(30, seed=2)]
        a = pa.build_training_set(scenes, seed=5)
        b = pa.build_training_set(scenes, seed=5)
        c = pa.build_training_set(scenes, seed=6)
        assert np.array_equal(a.patches, b.patches)
        assert np.array_equal(a.targets, b.targets)
        assert not np.array_equal(a.patches, c.patches)  # different shuffle

    def test_max_per_scene_caps(self):
        s = self.small_scene(50)
        ps = pa.build_training_set([s], max_per_scene=8, augment_flip=False)
        assert len(ps) == 8

    def test_channel_selection(self):
        s = self.small_scene(10)
        ps = pa.build_training_set(
            [s], augment_flip=False, channels=pa.SINGLE_SCALE_CHANNELS
        )
        assert ps.patches.shape[-1] == 2

    def test_targets_match_gt_at_centres(self):
        s = self.small_scene(20)
        ps = pa.build_training_set([s], augment_flip=False)
        gt_values = np.sort(
            s.ground_truth.depth[s.object_mask].astype(np.float32) * pa.DEPTH_SCALE
        )
        assert np.allclose(np.sort(ps.targets), gt_values)
