import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import drivepatch as dp
from drivepatch.image import ImageBuffer, round_half_away
from drivepatch.patch import clip_patch, new_random_patch, quantize_patch
from drivepatch.rng import RngStream


class TestRngStream:
    def test_same_key_same_sequence(self):
        a = RngStream(7, 3).generator().standard_normal(100)
        b = RngStream(7, 3).generator().standard_normal(100)
        assert np.array_equal(a, b)

    def test_derived_streams_differ(self):
        root = RngStream(7)
        x = root.derive(1, 2, 0).generator().standard_normal(10)
        y = root.derive(1, 2, 1).generator().standard_normal(10)
        assert not np.array_equal(x, y)

    def test_derivation_is_deterministic(self):
        assert RngStream(7).derive(4, 5) == RngStream(7).derive(4, 5)


class TestNewRandomPatch:
    def test_values_in_range_and_mean(self):
        # Monte-Carlo check of the affine init map: clip(127.5 + 50z).
        p = new_random_patch(7, 512, 512, 1.0, 1.0)
        assert p.values.min() >= 0.0 and p.values.max() <= 255.0
        assert 117.0 <= p.values.mean() <= 138.0

    def test_deterministic_per_seed(self):
        a = new_random_patch(7, 64, 64, 1.0, 1.0)
        b = new_random_patch(7, 64, 64, 1.0, 1.0)
        assert a.same_values(b)
        c = new_random_patch(8, 64, 64, 1.0, 1.0)
        assert not a.same_values(c)

    def test_zero_dimension_rejected(self):
        with pytest.raises(ValueError):
            new_random_patch(7, 0, 512, 1.0, 1.0)

    def test_nonpositive_physical_rejected(self):
        with pytest.raises(ValueError):
            new_random_patch(7, 8, 8, 0.0, 1.0)


class TestClipQuantize:
    def test_clip_bounds(self):
        p = dp.Patch(np.array([[[-3.2, 260.0, 128.0]]]), 1.0, 1.0)
        clipped = clip_patch(p)
        assert clipped.values.tolist() == [[[0.0, 255.0, 128.0]]]

    def test_clip_idempotent(self):
        p = dp.Patch(np.random.default_rng(0).uniform(-50, 300, (4, 4, 3)), 1.0, 1.0)
        once = clip_patch(p)
        assert clip_patch(once).same_values(once)

    def test_quantize_rounding_rule(self):
        p = dp.Patch(np.array([[[127.5, 0.4, 254.6]]]), 1.0, 1.0)
        img = quantize_patch(p)
        assert img.pixels.tolist() == [[[128, 0, 255]]]

    def test_quantize_preserves_dimensions(self):
        p = new_random_patch(1, 20, 10, 1.0, 0.5)
        img = quantize_patch(p)
        assert (img.width, img.height) == (20, 10)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-1e4, 1e4), min_size=12, max_size=12), st.integers(0, 2**32))
    def test_updates_then_clip_stay_in_range(self, update, seed):
        # Any optimizer update followed by clipping keeps values in [0, 255].
        p = new_random_patch(seed, 2, 2, 1.0, 1.0)
        moved = p.with_values(p.values + np.asarray(update).reshape(2, 2, 3))
        clipped = clip_patch(moved)
        assert clipped.values.min() >= 0.0 and clipped.values.max() <= 255.0
        q = quantize_patch(clipped)
        assert q.pixels.min() >= 0 and q.pixels.max() <= 255


class TestRounding:
    def test_half_away_from_zero(self):
        assert round_half_away(np.array([0.5, 1.5, 2.5, -0.5, -1.5])).tolist() == [
            1.0,
            2.0,
            3.0,
            -1.0,
            -2.0,
        ]


class TestPatchIO:
    def test_png_sidecar_roundtrip(self, tmp_path):
        p = new_random_patch(3, 16, 12, 2.0, 1.0)
        path = tmp_path / "patch.png"
        dp.save_patch(p, path, metadata={"note": "test"})
        assert path.exists() and path.with_suffix(".json").exists()
        loaded = dp.load_patch(path)
        assert (loaded.width, loaded.height) == (16, 12)
        assert loaded.physical_width == 2.0 and loaded.physical_height == 1.0
        assert np.array_equal(loaded.values, quantize_patch(p).pixels.astype(float))

    def test_missing_sidecar(self, tmp_path):
        p = new_random_patch(3, 4, 4, 1.0, 1.0)
        path = tmp_path / "patch.png"
        path.write_bytes(quantize_patch(p).to_png_bytes())
        with pytest.raises(FileNotFoundError):
            dp.load_patch(path)


class TestImageBuffer:
    def test_validation(self):
        with pytest.raises(ValueError):
            ImageBuffer(np.zeros((2, 2, 3), dtype=np.float32))
        with pytest.raises(ValueError):
            ImageBuffer(np.zeros((0, 2, 3), dtype=np.uint8))
        with pytest.raises(ValueError):
            ImageBuffer(np.zeros((2, 2, 4), dtype=np.uint8))

    def test_png_roundtrip(self):
        px = np.random.default_rng(1).integers(0, 256, (5, 7, 3), dtype=np.uint8)
        img = ImageBuffer(px)
        back = ImageBuffer.from_png_bytes(img.to_png_bytes())
        assert back.same_pixels(img)

    def test_pixels_immutable(self):
        img = ImageBuffer.filled(2, 2, (1, 2, 3))
        with pytest.raises(ValueError):
            img.pixels[0, 0, 0] = 9
