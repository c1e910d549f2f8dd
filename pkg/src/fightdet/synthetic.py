"""Linearly separable synthetic feature datasets for end-to-end checks.

Fight clips have every feature centred at +1, non-fight clips at -1, with
Gaussian noise on top.
"""
from __future__ import annotations

from pathlib import Path
from typing import List

import numpy as np

from .features import FeatureSequence, write_features
from .numeric import FLOAT, SeededRng
from .training import CLASSES, DatasetManifest, ManifestItem, Sample, write_manifest


def make_synthetic_samples(n: int = 200, d: int = 16, k: int = 5, sigma: float = 0.1,
                           seed: int = 0, backbone: str = "toy-8x8") -> List[Sample]:
    """``n`` clips alternating nonfight / fight, so classes are balanced."""
    rng = SeededRng(seed)
    samples = []
    for i in range(n):
        label = i % 2
        mean = 1.0 if label == 1 else -1.0
        m = mean + sigma * rng.normal(k * d).reshape(k, d)
        sid = f"synth{i:04d}"
        samples.append(Sample(sid, label, FeatureSequence(m.astype(FLOAT), backbone, sid)))
    return samples


def write_synthetic_dataset(root, n: int = 200, d: int = 16, k: int = 5, sigma: float = 0.1,
                            seed: int = 0) -> Path:
    """Write FVS1 files plus ``manifest.tsv`` under ``root``; returns the manifest path."""
    root = Path(root)
    (root / "features").mkdir(parents=True, exist_ok=True)
    items = []
    for s in make_synthetic_samples(n, d, k, sigma, seed):
        rel = f"features/{s.id}.fvs1"
        write_features(s.features, root / rel)
        items.append(ManifestItem(s.id, CLASSES[s.label], rel))
    path = root / "manifest.tsv"
    write_manifest(DatasetManifest(items, root), path)
    return path
