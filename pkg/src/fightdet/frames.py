"""Frame loading, uniform temporal sampling, bicubic resizing and clip cutting.

Frames are held as ``uint8`` arrays of shape (height, width, channels).
Video decoding is out of scope: clips arrive as directories of binary P6/P5
PPM/PGM files named ``frame_000000.ppm``, ``frame_000001.ppm``, ...
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .errors import (
    ConsistencyError,
    EmptyInputError,
    FormatError,
    MissingMetadataError,
    ParameterError,
    RangeError,
)

FRAME_NAME = re.compile(r"^frame_(\d{6})(?:_(\d+))?\.ppm$")


@dataclass(frozen=True)
class Frame:
    pixels: np.ndarray  # (height, width, channels) uint8

    def __post_init__(self):
        px = self.pixels
        if px.dtype != np.uint8 or px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ConsistencyError(
                f"frame pixels must be uint8 (h, w, 1|3), got {px.dtype} {px.shape}"
            )

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @classmethod
    def from_array(cls, arr) -> "Frame":
        arr = np.asarray(arr)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        return cls(np.ascontiguousarray(arr, dtype=np.uint8))


@dataclass
class FrameSequence:
    frames: List[Frame]
    source_id: str = ""
    fps: Optional[float] = None

    def __post_init__(self):
        if not self.frames:
            raise EmptyInputError(f"frame sequence {self.source_id!r} has no frames")
        shape = self.frames[0].pixels.shape
        for i, fr in enumerate(self.frames):
            if fr.pixels.shape != shape:
                raise ConsistencyError(
                    f"{self.source_id}: frame {i} is {fr.pixels.shape}, expected {shape}"
                )

    def __len__(self) -> int:
        return len(self.frames)


@dataclass
class SampledClip:
    frames: List[Frame]
    indices: List[int]
    source_id: str = ""

    @property
    def k(self) -> int:
        return len(self.frames)


def uniform_sample_indices(total_frames: int, k: int) -> List[int]:
    """Evenly spaced indices ``floor(j * N / k)`` for ``j = 0..k-1``.

    Clips shorter than ``k`` frames repeat indices instead of being rejected.
    """
    if total_frames < 1:
        raise EmptyInputError("cannot sample from a clip with no frames")
    if k < 1:
        raise ParameterError(f"number of sampled frames must be >= 1, got {k}")
    return [(j * total_frames) // k for j in range(k)]


def sample_clip(seq: FrameSequence, k: int) -> SampledClip:
    idx = uniform_sample_indices(len(seq), k)
    return SampledClip([seq.frames[i] for i in idx], idx, seq.source_id)


CUBIC_A = -0.5


def cubic_kernel(x, a: float = CUBIC_A):
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2 = x * x
    x3 = x2 * x
    near = (a + 2.0) * x3 - (a + 3.0) * x2 + 1.0
    far = a * x3 - 5.0 * a * x2 + 8.0 * a * x - 4.0 * a
    return np.where(x <= 1.0, near, np.where(x < 2.0, far, 0.0))


def _resample_matrix(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) matrix of cubic weights with clamp-to-edge taps.

    Output pixel centres map to input coordinates by
    ``src = (dst + 0.5) * n_in / n_out - 0.5``.
    """
    m = np.zeros((n_out, n_in), dtype=np.float64)
    dst = np.arange(n_out, dtype=np.float64)
    src = (dst + 0.5) * (n_in / n_out) - 0.5
    base = np.floor(src)
    frac = src - base
    rows = np.arange(n_out)
    for tap in (-1, 0, 1, 2):
        w = cubic_kernel(frac - tap)
        idx = np.clip(base.astype(np.int64) + tap, 0, n_in - 1)
        np.add.at(m, (rows, idx), w)
    return m


def bicubic_resize(frame: Frame, target_w: int, target_h: int) -> Frame:
    """Separable bicubic resampling (kernel a = -0.5), rounded half-up to uint8."""
    if target_w < 1 or target_h < 1:
        raise ParameterError(f"target size must be positive, got {target_w}x{target_h}")
    wy = _resample_matrix(frame.height, target_h)
    wx = _resample_matrix(frame.width, target_w)
    src = frame.pixels.astype(np.float64)
    # (th, H) x (H, W, C) x (W, tw) -> (th, tw, C)
    out = np.einsum("yh,hwc,xw->yxc", wy, src, wx, optimize=True)
    out = np.floor(out + 0.5)
    return Frame(np.clip(out, 0, 255).astype(np.uint8))


def resize_clip(clip: SampledClip, size: int) -> SampledClip:
    frames = [bicubic_resize(f, size, size) for f in clip.frames]
    return SampledClip(frames, list(clip.indices), clip.source_id)


def cut_clip(
    seq: FrameSequence, start_seconds: float, duration_seconds: float = 2.0
) -> FrameSequence:
    """Frames whose timestamps ``i / fps`` fall in ``[start, start + duration)``."""
    if seq.fps is None or seq.fps <= 0:
        raise MissingMetadataError(f"{seq.source_id}: frame rate unknown, cannot cut by time")
    if start_seconds < 0 or duration_seconds <= 0:
        raise RangeError(f"invalid cut [{start_seconds}, +{duration_seconds})")
    span = len(seq) / seq.fps
    end = start_seconds + duration_seconds
    # tolerate float noise when the cut ends exactly at the clip end
    if start_seconds >= span or end > span + 1e-9:
        raise RangeError(
            f"{seq.source_id}: cut [{start_seconds}, {end}) outside source span [0, {span})"
        )
    first = math.ceil(start_seconds * seq.fps - 1e-9)
    stop = min(len(seq), math.ceil(end * seq.fps - 1e-9))
    if stop <= first:
        raise RangeError(f"{seq.source_id}: cut [{start_seconds}, {end}) contains no frames")
    return FrameSequence(seq.frames[first:stop], seq.source_id, seq.fps)


# -- PPM / PGM I/O ----------------------------------------------------------

def _read_tokens(data: bytes, count: int, name: str):
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError(f"{name}: truncated header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    if pos >= n or not data[pos:pos + 1].isspace():
        raise FormatError(f"{name}: truncated header")
    return tokens, pos + 1


def read_ppm(path) -> Frame:
    path = Path(path)
    data = path.read_bytes()
    name = path.name
    magic = data[:2]
    if magic not in (b"P6", b"P5"):
        raise FormatError(f"{name}: not a binary PPM/PGM (magic {magic!r})")
    try:
        (w, h, maxval), offset = _read_tokens(data[2:], 3, name)
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"{name}: malformed header") from exc
    if w < 1 or h < 1:
        raise FormatError(f"{name}: invalid dimensions {w}x{h}")
    if maxval != 255:
        raise FormatError(f"{name}: unsupported maxval {maxval} (only 255)")
    channels = 3 if magic == b"P6" else 1
    raster = data[2 + offset:]
    expected = w * h * channels
    if len(raster) < expected:
        raise FormatError(f"{name}: raster has {len(raster)} bytes, expected {expected}")
    px = np.frombuffer(raster[:expected], dtype=np.uint8).reshape(h, w, channels)
    return Frame(px.copy())


def write_ppm(frame: Frame, path) -> None:
    magic = b"P6" if frame.channels == 3 else b"P5"
    header = magic + f"\n{frame.width} {frame.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + frame.pixels.tobytes())


def frame_files(path) -> List[Path]:
    path = Path(path)
    if not path.is_dir():
        raise EmptyInputError(f"{path}: not a directory")
    return sorted(p for p in path.iterdir() if FRAME_NAME.match(p.name))


def load_frame_dir(path, fps: Optional[float] = None) -> FrameSequence:
    files = frame_files(path)
    if not files:
        raise EmptyInputError(f"{path}: no frame_NNNNNN.ppm files")
    frames = [read_ppm(p) for p in files]
    shape = frames[0].pixels.shape
    for p, fr in zip(files, frames):
        if fr.pixels.shape != shape:
            raise ConsistencyError(f"{p.name}: size {fr.pixels.shape} differs from {shape}")
    return FrameSequence(frames, Path(path).name, fps)


def write_frame_dir(frames: Sequence[Frame], path, names: Optional[Sequence[str]] = None):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    names = names or [f"frame_{i:06d}.ppm" for i in range(len(frames))]
    for fr, name in zip(frames, names):
        write_ppm(fr, path / name)
    return [path / n for n in names]


def sampled_frame_names(indices: Sequence[int]) -> List[str]:
    """Name sampled frames by source index; repeats get a ``_N`` suffix."""
    seen: dict = {}
    names = []
    for idx in indices:
        rep = seen.get(idx, 0)
        seen[idx] = rep + 1
        names.append(f"frame_{idx:06d}.ppm" if rep == 0 else f"frame_{idx:06d}_{rep}.ppm")
    return names
