"""Per-frame feature vectors: backbone registry, FVS1 files and a toy extractor.

Real CNN backbones are external.  Features computed elsewhere enter through
the FVS1 format; the built-in ``toy-8x8`` extractor makes the pipeline runnable
without any pretrained weights.

FVS1 layout (little-endian)::

    0-3   magic b"FVS1"
    4-5   version u16 = 1
    6-7   reserved u16 = 0
    8-11  k u32 (frames)
    12-15 d u32 (feature width)
    16-   k*d float32, row-major
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .errors import ConfigurationError, DimensionError, FormatError, NumericError
from .frames import SampledClip
from .numeric import FLOAT, SeededRng, Tensor2

FVS1_MAGIC = b"FVS1"
FVS1_VERSION = 1
_FVS1_HEADER = struct.Struct("<4sHHII")


@dataclass(frozen=True)
class BackboneSpec:
    name: str
    input_size: Optional[int]  # None: any frame size is accepted as-is
    feature_dim: int
    tap_description: str
    batch_size: int = 100
    extractable: bool = False  # True only for extractors shipped here

    def __post_init__(self):
        if self.feature_dim < 1:
            raise ConfigurationError(f"{self.name}: feature_dim must be >= 1")
        if self.input_size is not None and self.input_size < 1:
            raise ConfigurationError(f"{self.name}: input_size must be >= 1")


def builtin_backbones(fight_cnn_dim: int = 1024, toy_dim: int = 64) -> List[BackboneSpec]:
    return [
        BackboneSpec(
            "vgg16-fc2", 224, 4096, "VGG16, output of the second fully connected layer"
        ),
        BackboneSpec(
            "xception-gap", 299, 2048, "Xception, last global average pooling layer"
        ),
        BackboneSpec(
            "fight-cnn-fc1",
            299,
            fight_cnn_dim,
            "Xception variant fine-tuned on fight frames, first fully connected layer",
            batch_size=10,
        ),
        BackboneSpec(
            "toy-8x8",
            None,
            toy_dim,
            "grayscale 8x8 average pool followed by a seeded random projection",
            extractable=True,
        ),
    ]


def get_backbone(name: str, feature_dim: Optional[int] = None) -> BackboneSpec:
    """Look up a built-in backbone; ``feature_dim`` overrides configurable widths."""
    table: Dict[str, BackboneSpec] = {b.name: b for b in builtin_backbones()}
    if name not in table:
        raise ConfigurationError(
            f"unknown backbone {name!r}; choose from {', '.join(sorted(table))}"
        )
    spec = table[name]
    if feature_dim is not None and feature_dim != spec.feature_dim:
        if name not in ("fight-cnn-fc1", "toy-8x8"):
            raise ConfigurationError(f"{name} has a fixed feature width of {spec.feature_dim}")
        spec = replace(spec, feature_dim=feature_dim)
    return spec


@dataclass
class FeatureSequence:
    matrix: Tensor2  # (k, d) float32
    backbone: str = ""
    source_id: str = ""

    def __post_init__(self):
        m = np.asarray(self.matrix)
        if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
            raise DimensionError(f"feature matrix must be non-empty 2-D, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise NumericError(f"{self.source_id}: non-finite feature values")
        self.matrix = np.ascontiguousarray(m, dtype=FLOAT)

    @property
    def k(self) -> int:
        return self.matrix.shape[0]

    @property
    def d(self) -> int:
        return self.matrix.shape[1]


def encode_features(seq: FeatureSequence) -> bytes:
    k, d = seq.matrix.shape
    header = _FVS1_HEADER.pack(FVS1_MAGIC, FVS1_VERSION, 0, k, d)
    return header + seq.matrix.astype("<f4").tobytes()


def decode_features(data: bytes, backbone: str = "", source_id: str = "") -> FeatureSequence:
    if len(data) < _FVS1_HEADER.size:
        raise FormatError(f"{source_id}: truncated FVS1 header ({len(data)} bytes)")
    magic, version, reserved, k, d = _FVS1_HEADER.unpack_from(data)
    if magic != FVS1_MAGIC:
        raise FormatError(f"{source_id}: bad magic {magic!r}")
    if version != FVS1_VERSION:
        raise FormatError(f"{source_id}: unsupported FVS1 version {version}")
    if reserved != 0:
        raise FormatError(f"{source_id}: reserved header field is {reserved}, expected 0")
    expected = _FVS1_HEADER.size + 4 * k * d
    if len(data) != expected:
        raise FormatError(
            f"{source_id}: payload length {len(data)} bytes, expected {expected} for {k}x{d}"
        )
    if k == 0 or d == 0:
        raise FormatError(f"{source_id}: empty feature matrix {k}x{d}")
    m = np.frombuffer(data, dtype="<f4", offset=_FVS1_HEADER.size).reshape(k, d)
    if not np.all(np.isfinite(m)):
        raise NumericError(f"{source_id}: non-finite values in FVS1 payload")
    return FeatureSequence(m.astype(FLOAT), backbone, source_id)


def write_features(seq: FeatureSequence, path) -> None:
    Path(path).write_bytes(encode_features(seq))


def read_features(path, backbone: str = "") -> FeatureSequence:
    path = Path(path)
    return decode_features(path.read_bytes(), backbone, path.stem)


TOY_GRID = 8


def _grid_edges(n: int) -> List[tuple]:
    edges = []
    for i in range(TOY_GRID):
        lo = (i * n) // TOY_GRID
        hi = ((i + 1) * n) // TOY_GRID
        edges.append((min(lo, n - 1), max(hi, min(lo, n - 1) + 1)))
    return edges


def pool_grayscale(pixels: np.ndarray) -> np.ndarray:
    """Luma average-pooled onto an 8x8 grid, scaled to [0, 1], flattened to 64."""
    px = pixels.astype(np.float64)
    if px.shape[2] == 3:
        gray = 0.299 * px[:, :, 0] + 0.587 * px[:, :, 1] + 0.114 * px[:, :, 2]
    else:
        gray = px[:, :, 0]
    rows = _grid_edges(gray.shape[0])
    cols = _grid_edges(gray.shape[1])
    out = np.empty((TOY_GRID, TOY_GRID), dtype=np.float64)
    for i, (r0, r1) in enumerate(rows):
        for j, (c0, c1) in enumerate(cols):
            out[i, j] = gray[r0:r1, c0:c1].mean()
    return (out / 255.0).reshape(-1)


def toy_projection(d: int, seed: int) -> np.ndarray:
    """Fixed 64 x d projection, uniform in [-1/8, 1/8)."""
    rng = SeededRng(seed)
    u = rng.uniform(TOY_GRID * TOY_GRID * d).reshape(TOY_GRID * TOY_GRID, d)
    return (2.0 * u - 1.0) / TOY_GRID


def toy_extract(clip: SampledClip, d: int = 64, seed: int = 0) -> FeatureSequence:
    if d < 1:
        raise ConfigurationError(f"feature width must be >= 1, got {d}")
    pooled = np.stack([pool_grayscale(f.pixels) for f in clip.frames])
    feats = pooled @ toy_projection(d, seed)
    return FeatureSequence(feats.astype(FLOAT), "toy-8x8", clip.source_id)


def feature_normalize(seq: FeatureSequence, mode: str = "none") -> FeatureSequence:
    if mode == "none":
        return seq
    if mode != "l2":
        raise ConfigurationError(f"unknown normalization {mode!r} (none|l2)")
    m = seq.matrix.astype(np.float64)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    m = np.divide(m, norms, out=np.zeros_like(m), where=norms > 0)
    return FeatureSequence(m.astype(FLOAT), seq.backbone, seq.source_id)
