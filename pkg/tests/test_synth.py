import numpy as np
import pytest

from flashflow import clipio, synth
from flashflow.synth import ShapeSpec, SplitConfig, make_dataset, render_video


def square(start=(3, 3), velocity=(0, 1), size=4, color=(0.5, 0.0, 1.0)):
    return ShapeSpec("square", color, size, start, velocity, synth.motion_class_of(velocity) if velocity != (0, 0) else 0)


def rasterize_square(frames, height, width, start, velocity, size, color):
    """Pixel-by-pixel reference renderer for an axis-aligned square."""
    out = np.full((3, frames, height, width), -1.0, dtype=np.float32)
    for k in range(frames):
        r0 = min(max(start[0] + k * velocity[0], 0), height - size)
        c0 = min(max(start[1] + k * velocity[1], 0), width - size)
        for r in range(height):
            for c in range(width):
                if r0 <= r < r0 + size and c0 <= c < c0 + size:
                    out[:, k, r, c] = color
    return out


def test_zero_velocity_frames_identical():
    video = render_video(square(velocity=(0, 0)), 6, 16, 16)
    for k in range(6):
        np.testing.assert_array_equal(video[:, k], video[:, 0])


def test_moving_square_matches_reference_rasterizer():
    spec = square(start=(5, 3), velocity=(0, 1))
    video = render_video(spec, 8, 16, 16)
    expected = rasterize_square(8, 16, 16, (5, 3), (0, 1), 4, spec.color)
    np.testing.assert_array_equal(video, expected)
    for k in range(8):
        cols = np.where(video[0, k, 5] != -1.0)[0]
        assert cols.min() == 3 + k


def test_shape_stops_at_border():
    spec = square(start=(0, 10), velocity=(1, 2))
    video = render_video(spec, 20, 16, 16)
    np.testing.assert_array_equal(video, rasterize_square(20, 16, 16, (0, 10), (1, 2), 4, spec.color))
    # no wrap-around: the left half of the last frame stays background
    assert np.all(video[:, -1, :, :8] == -1.0)


def test_single_frame_is_conditional_image():
    spec = square()
    video = render_video(spec, 1, 16, 16)
    assert video.shape == (3, 1, 16, 16)
    np.testing.assert_array_equal(video[:, 0], render_video(spec, 5, 16, 16)[:, 0])


def test_shape_larger_than_frame_rejected():
    with pytest.raises(ValueError):
        render_video(square(size=10, start=(0, 0)), 2, 8, 8)


@pytest.mark.parametrize("kind", synth.SHAPE_KINDS)
def test_all_kinds_render_in_range(kind):
    spec = ShapeSpec(kind, (0.25, -0.5, 1.0), 6, (2, 2), (1, -1), synth.motion_class_of((1, -1)))
    video = render_video(spec, 4, 16, 16)
    assert video.min() >= -1.0 and video.max() <= 1.0
    assert np.any(video != -1.0)


def test_empty_dataset():
    assert make_dataset(SplitConfig(num_videos=0)) == []


def test_dataset_deterministic():
    cfg = SplitConfig(num_videos=5, frames=8, rng_seed=7)
    a, b = make_dataset(cfg), make_dataset(cfg)
    for (va, ca), (vb, cb) in zip(a, b):
        assert ca == cb
        assert va.tobytes() == vb.tobytes()


def test_split_palettes_and_speeds_disjoint():
    in_colors = set(synth.color_palette("in_domain"))
    ood_colors = set(synth.color_palette("out_of_domain"))
    assert in_colors and ood_colors
    assert in_colors & ood_colors == set()
    assert set(synth.velocity_set("in_domain")) & set(synth.velocity_set("out_of_domain")) == set()


def test_dataset_items_use_their_split_ranges():
    for split in ("in_domain", "out_of_domain"):
        cfg = SplitConfig(split=split, num_videos=20, frames=4, rng_seed=3)
        palette = set(synth.color_palette(split))
        speeds = set(synth.velocity_set(split))
        for spec in synth.make_specs(cfg):
            assert spec.color in palette
            assert spec.velocity in speeds


def test_first_frame_contract_and_range():
    cfg = SplitConfig(num_videos=10, frames=6, rng_seed=1)
    for spec, (video, label) in zip(synth.make_specs(cfg), make_dataset(cfg)):
        assert label == spec.motion_class
        np.testing.assert_array_equal(video[:, 0], render_video(spec, 1, cfg.height, cfg.width)[:, 0])
        assert video.min() >= -1.0 and video.max() <= 1.0


def test_clip_file_roundtrip(tmp_path):
    video = render_video(square(), 3, 16, 16)
    path = tmp_path / "a.flv"
    clipio.write_clip(path, video)
    raw = path.read_bytes()
    assert raw[:4] == b"FLV1"
    assert np.frombuffer(raw[4:20], dtype="<u4").tolist() == [3, 3, 16, 16]
    assert len(raw) == 20 + video.size * 4
    np.testing.assert_array_equal(clipio.read_clip(path), video)


def test_dataset_save_load(tmp_path):
    items = make_dataset(SplitConfig(num_videos=3, frames=4))
    manifest = clipio.save_dataset(tmp_path, items, "in_domain")
    rows = clipio.read_manifest(manifest)
    assert [r[1] for r in rows] == [c for _, c in items]
    assert all(r[2] == "in_domain" for r in rows)
    loaded = clipio.load_dataset(manifest)
    for (a, _), (b, _) in zip(items, loaded):
        np.testing.assert_array_equal(a, b)


def test_pgm_roundtrip(tmp_path):
    img = np.array([[32, 9, 10, 13], [0, 255, 12, 11], [20, 40, 60, 80]], dtype=np.uint8)
    clipio.write_pgm(tmp_path / "x.pgm", img)
    np.testing.assert_array_equal(clipio.read_pgm(tmp_path / "x.pgm"), img)
