import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from fightdet.errors import ConfigurationError, DimensionError, FormatError, NumericError
from fightdet.features import (
    FeatureSequence,
    builtin_backbones,
    decode_features,
    encode_features,
    feature_normalize,
    get_backbone,
    read_features,
    toy_extract,
    toy_projection,
    write_features,
)
from fightdet.frames import Frame, SampledClip
from fightdet.numeric import SeededRng
from oracles import block_means


def test_builtin_backbones():
    specs = {b.name: b for b in builtin_backbones()}
    assert (specs["vgg16-fc2"].input_size, specs["vgg16-fc2"].feature_dim) == (224, 4096)
    assert (specs["xception-gap"].input_size, specs["xception-gap"].feature_dim) == (299, 2048)
    assert (specs["fight-cnn-fc1"].input_size, specs["fight-cnn-fc1"].feature_dim) == (299, 1024)
    assert specs["toy-8x8"].input_size is None and specs["toy-8x8"].feature_dim == 64
    assert specs["fight-cnn-fc1"].batch_size == 10
    assert specs["xception-gap"].batch_size == specs["vgg16-fc2"].batch_size == 100


def test_configurable_widths():
    assert get_backbone("fight-cnn-fc1", 512).feature_dim == 512
    assert get_backbone("toy-8x8", 16).feature_dim == 16
    with pytest.raises(ConfigurationError):
        get_backbone("xception-gap", 100)
    with pytest.raises(ConfigurationError):
        get_backbone("resnet")


def _seq(k, d, seed=0):
    m = SeededRng(seed).normal(k * d).reshape(k, d).astype(np.float32)
    return FeatureSequence(m, "toy-8x8", "s")


class TestFvs1:
    def test_round_trip_bit_identical(self, tmp_path):
        seq = _seq(10, 64)
        write_features(seq, tmp_path / "a.fvs1")
        back = read_features(tmp_path / "a.fvs1")
        assert back.matrix.tobytes() == seq.matrix.tobytes()

    def test_file_size(self, tmp_path):
        write_features(_seq(5, 2048), tmp_path / "b.fvs1")
        assert (tmp_path / "b.fvs1").stat().st_size == 16 + 5 * 2048 * 4

    def test_header_layout(self):
        raw = encode_features(_seq(3, 7))
        assert raw[:4] == b"FVS1"
        assert struct.unpack("<HHII", raw[4:16]) == (1, 0, 3, 7)

    @pytest.mark.parametrize("cut", [0, 3, 15, 16, 17, 16 + 4 * 21 - 1])
    def test_truncated(self, cut):
        raw = encode_features(_seq(3, 7))
        with pytest.raises(FormatError):
            decode_features(raw[:cut])

    def test_trailing_bytes(self):
        with pytest.raises(FormatError):
            decode_features(encode_features(_seq(2, 2)) + b"\0")

    def test_bad_magic_and_version(self):
        raw = bytearray(encode_features(_seq(2, 2)))
        with pytest.raises(FormatError, match="magic"):
            decode_features(b"XVS1" + bytes(raw[4:]))
        raw[4] = 2
        with pytest.raises(FormatError, match="version"):
            decode_features(bytes(raw))

    def test_nan_payload(self):
        raw = bytearray(encode_features(_seq(2, 2)))
        raw[16:20] = struct.pack("<f", float("nan"))
        with pytest.raises(NumericError):
            decode_features(bytes(raw))

    @settings(max_examples=60, deadline=None)
    @given(hnp.arrays(np.float32, st.tuples(st.integers(1, 12), st.integers(1, 40)),
                      elements=st.floats(allow_nan=False, allow_infinity=False, width=32)))
    def test_round_trip_property(self, m):
        back = decode_features(encode_features(FeatureSequence(m)))
        assert back.matrix.tobytes() == m.tobytes()

    def test_feature_sequence_rejects_nan(self):
        with pytest.raises(NumericError):
            FeatureSequence(np.array([[np.nan]], dtype=np.float32))
        with pytest.raises(DimensionError):
            FeatureSequence(np.zeros((0, 3), dtype=np.float32))


def _clip(frames):
    return SampledClip(frames, list(range(len(frames))), "c")


class TestToyExtract:
    def test_black_frame_gives_zero(self):
        f = Frame(np.zeros((24, 24, 3), dtype=np.uint8))
        out = toy_extract(_clip([f]), 32, seed=1)
        assert out.matrix.shape == (1, 32)
        assert np.all(out.matrix == 0)

    def test_identical_frames_identical_rows(self):
        rng = SeededRng(4)
        px = (rng.uniform(16 * 16 * 3) * 255).astype(np.uint8).reshape(16, 16, 3)
        out = toy_extract(_clip([Frame(px), Frame(px.copy())]), 10, seed=2)
        assert np.array_equal(out.matrix[0], out.matrix[1])

    def test_checkerboard_block_means(self):
        y, x = np.mgrid[0:16, 0:16]
        board = np.where((x + y) % 2 == 0, 255, 0).astype(np.uint8)
        board[:8, :8] = 200  # break the symmetry so blocks differ
        px = np.repeat(board[:, :, None], 3, axis=2)
        d = 12
        out = toy_extract(_clip([Frame(px)]), d, seed=9)
        gray = [[0.299 * v + 0.587 * v + 0.114 * v for v in row] for row in board.tolist()]
        pooled = [m / 255.0 for m in block_means(gray)]
        proj = toy_projection(d, 9)
        expected = [sum(pooled[r] * proj[r][c] for r in range(64)) for c in range(d)]
        assert np.allclose(out.matrix[0], expected, atol=1e-6)

    def test_permutation_consistency(self):
        rng = SeededRng(0)
        frames = [Frame((rng.uniform(192) * 255).astype(np.uint8).reshape(8, 8, 3)) for _ in range(5)]
        perm = [3, 0, 4, 1, 2]
        a = toy_extract(_clip(frames), 8, seed=3)
        b = toy_extract(_clip([frames[i] for i in perm]), 8, seed=3)
        assert np.array_equal(a.matrix[perm], b.matrix)

    def test_deterministic_given_seed(self):
        f = Frame(np.full((9, 9, 1), 100, dtype=np.uint8))
        assert np.array_equal(toy_extract(_clip([f]), 5, 7).matrix, toy_extract(_clip([f]), 5, 7).matrix)
        assert not np.array_equal(toy_extract(_clip([f]), 5, 7).matrix, toy_extract(_clip([f]), 5, 8).matrix)

    def test_small_frames_are_pooled(self):
        f = Frame(np.full((3, 5, 3), 255, dtype=np.uint8))
        out = toy_extract(_clip([f]), 4, seed=0)
        expected = np.ones(64) @ toy_projection(4, 0)
        assert np.allclose(out.matrix[0], expected, atol=1e-5)


class TestNormalize:
    def test_none_is_identity(self):
        s = _seq(3, 4)
        assert feature_normalize(s, "none") is s

    def test_l2(self):
        s = FeatureSequence(np.array([[3.0, 4.0], [0.0, 0.0]], dtype=np.float32))
        out = feature_normalize(s, "l2").matrix
        assert np.allclose(out[0], [0.6, 0.8])
        assert out[1].tolist() == [0.0, 0.0]

    def test_unknown_mode(self):
        with pytest.raises(ConfigurationError):
            feature_normalize(_seq(1, 1), "zscore")
