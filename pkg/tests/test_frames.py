import numpy as np
import pytest

from fightdet.errors import (
    ConsistencyError,
    EmptyInputError,
    FormatError,
    MissingMetadataError,
    ParameterError,
    RangeError,
)
from fightdet.frames import (
    Frame,
    FrameSequence,
    bicubic_resize,
    cut_clip,
    load_frame_dir,
    read_ppm,
    sample_clip,
    sampled_frame_names,
    uniform_sample_indices,
    write_frame_dir,
    write_ppm,
)
from fightdet.numeric import SeededRng
from oracles import bicubic_pixel


@pytest.mark.parametrize(
    "n,k,expected",
    [
        (20, 10, [0, 2, 4, 6, 8, 10, 12, 14, 16, 18]),
        (10, 10, list(range(10))),
        (7, 5, [0, 1, 2, 4, 5]),
        (3, 5, [0, 0, 1, 1, 2]),
    ],
)
def test_uniform_sample_examples(n, k, expected):
    assert uniform_sample_indices(n, k) == expected


def test_uniform_sample_properties_exhaustive():
    for n in range(1, 1001):
        for k in (1, 5, 10):
            idx = uniform_sample_indices(n, k)
            assert len(idx) == k
            assert all(a <= b for a, b in zip(idx, idx[1:]))
            assert 0 <= idx[0] and idx[-1] <= n - 1


def test_uniform_sample_errors():
    with pytest.raises(EmptyInputError):
        uniform_sample_indices(0, 5)
    with pytest.raises(ParameterError):
        uniform_sample_indices(5, 0)


def _random_frame(h, w, c=3, seed=0):
    px = (SeededRng(seed).uniform(h * w * c) * 256).astype(np.uint8).reshape(h, w, c)
    return Frame(px)


class TestBicubic:
    @pytest.mark.parametrize("size", [(1, 1), (5, 3), (224, 224), (17, 40)])
    def test_constant_image_stays_constant(self, size):
        f = Frame(np.full((12, 9, 3), 173, dtype=np.uint8))
        out = bicubic_resize(f, *size)
        assert out.pixels.shape == (size[1], size[0], 3)
        assert np.all(out.pixels == 173)

    @pytest.mark.parametrize("value", [0, 255])
    def test_extreme_constants(self, value):
        f = Frame(np.full((4, 4, 1), value, dtype=np.uint8))
        assert np.all(bicubic_resize(f, 11, 7).pixels == value)

    def test_same_size_is_identity(self):
        f = _random_frame(13, 21, seed=5)
        assert np.array_equal(bicubic_resize(f, 21, 13).pixels, f.pixels)

    @pytest.mark.parametrize("target", [(13, 11), (4, 4), (16, 16), (3, 9)])
    def test_gradient_matches_direct_formula(self, target):
        y, x = np.mgrid[0:8, 0:8]
        px = np.stack([x * 30, y * 30, (x + y) * 15], axis=-1).astype(np.uint8)
        f = Frame(px)
        out = bicubic_resize(f, *target).pixels
        img = px.tolist()
        tw, th = target
        for yy in range(th):
            for xx in range(tw):
                for ch in range(3):
                    ref = bicubic_pixel(img, tw, th, xx, yy, ch)
                    assert abs(int(out[yy, xx, ch]) - ref) <= 1

    def test_random_image_matches_direct_formula(self):
        f = _random_frame(6, 7, c=1, seed=2)
        out = bicubic_resize(f, 10, 5).pixels
        img = f.pixels.tolist()
        for yy in range(5):
            for xx in range(10):
                assert abs(int(out[yy, xx, 0]) - bicubic_pixel(img, 10, 5, xx, yy)) <= 1

    def test_output_clamped(self):
        px = np.zeros((6, 6, 1), dtype=np.uint8)
        px[:, 3:] = 255  # sharp edge makes the kernel overshoot
        out = bicubic_resize(Frame(px), 17, 17).pixels
        assert out.dtype == np.uint8

    def test_zero_target_rejected(self):
        with pytest.raises(ParameterError):
            bicubic_resize(_random_frame(4, 4), 0, 4)


def _seq(n, fps=30.0):
    frames = [Frame(np.full((2, 2, 1), i % 256, dtype=np.uint8)) for i in range(n)]
    return FrameSequence(frames, "src", fps)


class TestCutClip:
    def test_two_seconds_at_30fps(self):
        out = cut_clip(_seq(300), 0.0, 2.0)
        assert len(out) == 60
        assert out.frames[0].pixels[0, 0, 0] == 0

    def test_offset_cut(self):
        out = cut_clip(_seq(300), 3.0, 2.0)
        assert len(out) == 60
        assert out.frames[0].pixels[0, 0, 0] == 90

    def test_full_span(self):
        assert len(cut_clip(_seq(300), 0.0, 10.0)) == 300

    @pytest.mark.parametrize("fps", [24.0, 25.0, 29.97, 30.0])
    def test_frame_count_near_duration_times_fps(self, fps):
        out = cut_clip(_seq(1000, fps), 1.3, 2.0)
        assert abs(len(out) - int(2.0 * fps)) <= 1

    def test_start_beyond_end(self):
        with pytest.raises(RangeError):
            cut_clip(_seq(300), 11.0, 2.0)

    def test_end_beyond_source(self):
        with pytest.raises(RangeError):
            cut_clip(_seq(300), 9.0, 2.0)

    def test_unknown_fps(self):
        with pytest.raises(MissingMetadataError):
            cut_clip(FrameSequence(_seq(10).frames, "x", None), 0.0, 0.1)


class TestPpm:
    def test_round_trip(self, tmp_path):
        f = _random_frame(5, 4)
        write_ppm(f, tmp_path / "a.ppm")
        assert np.array_equal(read_ppm(tmp_path / "a.ppm").pixels, f.pixels)

    def test_header_with_comment(self, tmp_path):
        raw = b"P6\n# made by hand\n2 1\n255\n" + bytes([1, 2, 3, 4, 5, 6])
        (tmp_path / "c.ppm").write_bytes(raw)
        assert read_ppm(tmp_path / "c.ppm").pixels.reshape(-1).tolist() == [1, 2, 3, 4, 5, 6]

    def test_maxval_rejected(self, tmp_path):
        (tmp_path / "frame_000000.ppm").write_bytes(b"P6\n1 1\n65535\n" + bytes(6))
        with pytest.raises(FormatError, match="frame_000000.ppm"):
            load_frame_dir(tmp_path)

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x.ppm").write_bytes(b"P3\n1 1\n255\n0 0 0\n")
        with pytest.raises(FormatError, match="x.ppm"):
            read_ppm(tmp_path / "x.ppm")

    def test_truncated_raster(self, tmp_path):
        (tmp_path / "t.ppm").write_bytes(b"P6\n4 4\n255\n" + bytes(10))
        with pytest.raises(FormatError):
            read_ppm(tmp_path / "t.ppm")


class TestFrameDir:
    def test_three_frames(self, tmp_path):
        write_frame_dir([_random_frame(4, 4, seed=i) for i in range(3)], tmp_path / "d")
        seq = load_frame_dir(tmp_path / "d")
        assert len(seq) == 3 and seq.frames[0].width == 4

    def test_empty_dir(self, tmp_path):
        (tmp_path / "e").mkdir()
        with pytest.raises(EmptyInputError):
            load_frame_dir(tmp_path / "e")

    def test_missing_dir(self, tmp_path):
        with pytest.raises(EmptyInputError):
            load_frame_dir(tmp_path / "nope")

    def test_mixed_dimensions(self, tmp_path):
        write_frame_dir([_random_frame(4, 4), _random_frame(4, 5)], tmp_path / "m")
        with pytest.raises(ConsistencyError, match="frame_000001.ppm"):
            load_frame_dir(tmp_path / "m")

    def test_filename_order(self, tmp_path):
        frames = [Frame(np.full((1, 1, 3), v, dtype=np.uint8)) for v in (10, 20, 30)]
        write_frame_dir(frames, tmp_path / "o", ["frame_000002.ppm", "frame_000000.ppm",
                                                  "frame_000001.ppm"])
        vals = [f.pixels[0, 0, 0] for f in load_frame_dir(tmp_path / "o").frames]
        assert vals == [20, 30, 10]

    def test_pipeline_determinism(self, frame_dir):
        path = frame_dir(23)
        a = sample_clip(load_frame_dir(path), 10)
        b = sample_clip(load_frame_dir(path), 10)
        assert a.indices == b.indices
        assert all(x.pixels.tobytes() == y.pixels.tobytes() for x, y in zip(a.frames, b.frames))


def test_sampled_names_keep_order_with_repeats(tmp_path):
    idx = uniform_sample_indices(3, 5)
    names = sampled_frame_names(idx)
    assert len(set(names)) == 5
    assert sorted(names) == names
    frames = [Frame(np.full((1, 1, 1), i, dtype=np.uint8)) for i in idx]
    write_frame_dir(frames, tmp_path / "s", names)
    assert [f.pixels.item() for f in load_frame_dir(tmp_path / "s").frames] == idx
