"""Dataset manifests, stratified splitting, training, evaluation and the experiment grid."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, DataError, DivergenceError, FightDetError, FormatError
from .features import (
    BackboneSpec,
    FeatureSequence,
    feature_normalize,
    get_backbone,
    read_features,
    toy_extract,
)
from .frames import load_frame_dir, resize_clip, sample_clip
from .model import (
    CLASSES,
    VARIANTS,
    ModelConfig,
    init_params,
    loss_and_grad,
    model_forward_batch,
    predict_label,
)
from .numeric import ParamStore, SeededRng

log = logging.getLogger(__name__)

LABELS = {"nonfight": 0, "fight": 1}
PROTOCOL_FRAME_COUNTS = (5, 10)


class StratificationWarning(UserWarning):
    pass


# -- manifests ----------------------------------------------------------------

@dataclass(frozen=True)
class ManifestItem:
    id: str
    label: str
    source: str

    @property
    def label_index(self) -> int:
        return LABELS[self.label]


@dataclass
class DatasetManifest:
    items: List[ManifestItem]
    root: Path = field(default_factory=Path)

    def __post_init__(self):
        seen = set()
        for it in self.items:
            if it.label not in LABELS:
                raise FormatError(f"{it.id}: label {it.label!r} is not fight|nonfight")
            if it.id in seen:
                raise FormatError(f"duplicate manifest id {it.id!r}")
            seen.add(it.id)

    def __len__(self) -> int:
        return len(self.items)

    def subset(self, items: Sequence[ManifestItem]) -> "DatasetManifest":
        return DatasetManifest(list(items), self.root)

    def counts(self) -> Dict[str, int]:
        out = {name: 0 for name in LABELS}
        for it in self.items:
            out[it.label] += 1
        return out

    def resolve(self, item: ManifestItem, backbone: str = "", frames: int = 0) -> Path:
        """Source path with ``{backbone}`` / ``{frames}`` placeholders filled in."""
        src = item.source.replace("{backbone}", backbone).replace("{frames}", str(frames))
        path = Path(src)
        return path if path.is_absolute() else self.root / path


def parse_manifest(text: str, root: Path = Path(".")) -> DatasetManifest:
    items = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise FormatError(f"manifest line {lineno}: expected id<TAB>label<TAB>source")
        items.append(ManifestItem(parts[0], parts[1], parts[2]))
    return DatasetManifest(items, Path(root))


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    return parse_manifest(text, path.parent)


def format_manifest(manifest: DatasetManifest) -> str:
    return "".join(f"{it.id}\t{it.label}\t{it.source}\n" for it in manifest.items)


def write_manifest(manifest: DatasetManifest, path) -> None:
    Path(path).write_text(format_manifest(manifest), encoding="utf-8")


# -- feature loading ----------------------------------------------------------

@dataclass
class Sample:
    id: str
    label: int
    features: FeatureSequence


@dataclass
class FeatureLoader:
    """Turns manifest sources (FVS1 files or frame dirs) into k x d features."""

    backbone: BackboneSpec
    frames: int
    feature_seed: int = 0
    normalize: str = "none"

    def from_frame_dir(self, path, item_id: str = "") -> FeatureSequence:
        if not self.backbone.extractable:
            raise DataError(
                f"{self.backbone.name} features are computed externally; supply FVS1 files",
                item_id,
            )
        clip = sample_clip(load_frame_dir(path), self.frames)
        if self.backbone.input_size is not None:
            clip = resize_clip(clip, self.backbone.input_size)
        seq = toy_extract(clip, self.backbone.feature_dim, self.feature_seed)
        return FeatureSequence(seq.matrix, self.backbone.name, item_id or clip.source_id)

    def check(self, seq: FeatureSequence, item_id: str = "") -> FeatureSequence:
        expected = (self.frames, self.backbone.feature_dim)
        if seq.matrix.shape != expected:
            raise DataError(f"features are {seq.matrix.shape}, expected {expected}", item_id)
        return feature_normalize(seq, self.normalize)

    def load_path(self, path, item_id: str = "") -> FeatureSequence:
        path = Path(path)
        try:
            if path.is_dir():
                seq = self.from_frame_dir(path, item_id)
            elif path.is_file():
                seq = read_features(path, self.backbone.name)
                seq.source_id = item_id or seq.source_id
            else:
                raise DataError(f"source {path} not found", item_id)
        except DataError:
            raise
        except FightDetError as exc:
            raise DataError(str(exc), item_id) from exc
        return self.check(seq, item_id)

    def load(self, manifest: DatasetManifest) -> List[Sample]:
        out = []
        for it in manifest.items:
            path = manifest.resolve(it, self.backbone.name, self.frames)
            out.append(Sample(it.id, it.label_index, self.load_path(path, it.id)))
        return out


# -- splitting ----------------------------------------------------------------

def split_dataset(manifest: DatasetManifest, fraction: float = 0.8,
                  seed: int = 0) -> Tuple[DatasetManifest, DatasetManifest]:
    """Per-class shuffled split; each class keeps ``floor(fraction * n)`` for training.

    Both halves are returned in manifest order.
    """
    if not len(manifest):
        raise DataError("cannot split an empty manifest")
    if not 0.0 < fraction < 1.0:
        raise ConfigurationError(f"split fraction must be in (0, 1), got {fraction}")
    rng = SeededRng(seed)
    train_idx = set()
    for label in LABELS:
        members = [i for i, it in enumerate(manifest.items) if it.label == label]
        if not members:
            warnings.warn(f"class {label!r} has no items", StratificationWarning, stacklevel=2)
            continue
        n_train = math.floor(fraction * len(members) + 1e-9)
        if n_train == 0:
            warnings.warn(
                f"class {label!r}: {len(members)} items give no training samples at "
                f"fraction {fraction}; all go to the test split",
                StratificationWarning,
                stacklevel=2,
            )
        order = rng.permutation(len(members))
        train_idx.update(members[j] for j in order[:n_train])
    train = [it for i, it in enumerate(manifest.items) if i in train_idx]
    test = [it for i, it in enumerate(manifest.items) if i not in train_idx]
    return manifest.subset(train), manifest.subset(test)


# -- optimisation -------------------------------------------------------------

@dataclass
class OptimizerState:
    kind: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ConfigurationError(f"unknown optimizer {self.kind!r} (sgd|adam)")


def optimizer_step(params: ParamStore, state: OptimizerState) -> None:
    """Update ``params`` in place from their stored gradients."""
    state.t += 1
    lr = state.learning_rate
    updates = {}
    for name, value in params.items():
        g = params.grad(name).astype(np.float64)
        if state.kind == "sgd":
            new = value - lr * g
        else:
            m = state.m.get(name, 0.0)
            v = state.v.get(name, 0.0)
            m = state.beta1 * m + (1.0 - state.beta1) * g
            v = state.beta2 * v + (1.0 - state.beta2) * g * g
            state.m[name], state.v[name] = m, v
            m_hat = m / (1.0 - state.beta1 ** state.t)
            v_hat = v / (1.0 - state.beta2 ** state.t)
            new = value - lr * m_hat / (np.sqrt(v_hat) + state.eps)
        with np.errstate(over="ignore", invalid="ignore"):
            new = new.astype(value.dtype)
        if not np.all(np.isfinite(new)):
            raise DivergenceError(f"non-finite update for {name}")
        updates[name] = new
    for name, new in updates.items():
        params.set_value(name, new)


# -- training and evaluation --------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: Optional[int] = None  # None: the backbone's default
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    split_fraction: float = 0.8
    frames: int = 10

    def __post_init__(self):
        if not 0.0 < self.split_fraction < 1.0:
            raise ConfigurationError("split_fraction must be in (0, 1)")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")

    def resolved_batch_size(self, backbone: BackboneSpec) -> int:
        return self.batch_size if self.batch_size is not None else backbone.batch_size


@dataclass
class MetricsReport:
    accuracy: float
    confusion: List[List[int]]  # rows: true class, cols: predicted class
    loss_history: List[float] = field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(sum(r) for r in self.confusion)


def _check_samples(samples: Sequence[Sample], config: ModelConfig) -> None:
    expected = (config.frames, config.input_dim)
    for s in samples:
        if s.features.matrix.shape != expected:
            raise DataError(f"features are {s.features.matrix.shape}, expected {expected}", s.id)


def train(config: ModelConfig, params: ParamStore, samples: Sequence[Sample],
          cfg: TrainConfig, batch_size: int) -> List[float]:
    """Mini-batch training in place; returns the mean loss of every epoch."""
    if not samples:
        raise DataError("no training samples")
    _check_samples(samples, config)
    rng = SeededRng(cfg.seed)
    shuffle_rng = rng.split()
    dropout_rng = rng.split()
    state = OptimizerState(cfg.optimizer, cfg.learning_rate)
    targets = np.zeros((len(samples), 2), dtype=params.dtype)
    targets[np.arange(len(samples)), [s.label for s in samples]] = 1.0
    history = []
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(len(samples))
        total = 0.0
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            try:
                loss, _ = loss_and_grad(
                    [samples[i].features for i in idx], targets[idx], config, params,
                    training=True, rng=dropout_rng,
                )
                optimizer_step(params, state)
            except (ArithmeticError, DivergenceError) as exc:
                raise DivergenceError(str(exc), epoch) from exc
            total += loss * len(idx)
        history.append(total / len(samples))
        log.debug("epoch %d loss %.6f", epoch, history[-1])
    return history


def predict_probs(config: ModelConfig, params: ParamStore, samples: Sequence[Sample],
                  batch: int = 256) -> np.ndarray:
    _check_samples(samples, config)
    chunks = [
        model_forward_batch([s.features for s in samples[i:i + batch]], config, params)
        for i in range(0, len(samples), batch)
    ]
    return np.concatenate(chunks, axis=0) if chunks else np.zeros((0, 2), dtype=params.dtype)


def evaluate(config: ModelConfig, params: ParamStore, samples: Sequence[Sample]) -> MetricsReport:
    """Accuracy and confusion counts; probability ties count as nonfight."""
    confusion = [[0, 0], [0, 0]]
    if samples:
        pred = predict_label(predict_probs(config, params, samples))
        for s, p in zip(samples, pred):
            confusion[s.label][int(p)] += 1
    total = sum(map(sum, confusion))
    acc = (confusion[0][0] + confusion[1][1]) / total if total else 0.0
    return MetricsReport(acc, confusion)


@dataclass
class ExperimentResult:
    config: ModelConfig
    params: ParamStore
    train_report: MetricsReport
    test_report: MetricsReport
    batch_size: int


def make_loader(config: ModelConfig, feature_dim: Optional[int] = None) -> FeatureLoader:
    backbone = get_backbone(config.backbone, feature_dim if feature_dim else config.input_dim)
    return FeatureLoader(backbone, config.frames, config.feature_seed, config.normalize)


def run_experiment(manifest: DatasetManifest, config: ModelConfig, cfg: TrainConfig,
                   init: str = "glorot") -> ExperimentResult:
    """Split, train and evaluate one (backbone, classifier, frames) setting."""
    loader = make_loader(config)
    samples = {s.id: s for s in loader.load(manifest)}
    train_m, test_m = split_dataset(manifest, cfg.split_fraction, cfg.seed)
    train_s = [samples[it.id] for it in train_m.items]
    test_s = [samples[it.id] for it in test_m.items]
    params = init_params(config, SeededRng(config.seed), init=init)
    batch_size = cfg.resolved_batch_size(loader.backbone)
    history = train(config, params, train_s, cfg, batch_size)
    train_report = evaluate(config, params, train_s)
    train_report.loss_history = history
    test_report = evaluate(config, params, test_s)
    return ExperimentResult(config, params, train_report, test_report, batch_size)


# -- experiment grid ----------------------------------------------------------

CLASSIFIER_LABELS = {"lstm": "LSTM", "bilstm": "Bi-LSTM", "bilstm_attn": "Bi-LSTM + attention"}


@dataclass(frozen=True)
class GridSpec:
    backbones: Tuple[str, ...]
    classifiers: Tuple[str, ...]
    frame_counts: Tuple[int, ...] = (10, 5)

    def __post_init__(self):
        for axis in ("backbones", "classifiers", "frame_counts"):
            if not getattr(self, axis):
                raise ConfigurationError(f"grid axis {axis} is empty")
        for c in self.classifiers:
            if c not in VARIANTS:
                raise ConfigurationError(f"unknown classifier {c!r}")
        for k in self.frame_counts:
            if k < 1:
                raise ConfigurationError(f"invalid frame count {k}")

    def cells(self):
        for b in self.backbones:
            for c in self.classifiers:
                for k in self.frame_counts:
                    yield b, c, k


def parse_grid(text: str) -> GridSpec:
    """``key=value`` pairs separated by newlines or ``;``; values are comma lists."""
    values: Dict[str, List[str]] = {}
    for chunk in text.replace(";", "\n").splitlines():
        chunk = chunk.strip()
        if not chunk or chunk.startswith("#"):
            continue
        key, sep, raw = chunk.partition("=")
        if not sep:
            raise ConfigurationError(f"bad grid entry {chunk!r}")
        values[key.strip()] = [v.strip() for v in raw.split(",") if v.strip()]
    unknown = set(values) - {"backbones", "classifiers", "frames"}
    if unknown:
        raise ConfigurationError(f"unknown grid keys {sorted(unknown)}")
    try:
        frames = tuple(int(v) for v in values.get("frames", ["10", "5"]))
    except ValueError as exc:
        raise ConfigurationError(f"bad frame counts: {exc}") from exc
    return GridSpec(tuple(values.get("backbones", [])), tuple(values.get("classifiers", [])), frames)


@dataclass
class ResultTable:
    frame_counts: List[int]
    rows: List[Tuple[str, str, Dict[int, Optional[float]]]] = field(default_factory=list)

    def header(self) -> List[str]:
        return ["backbone", "classifier"] + [f"{k} frames" for k in self.frame_counts]

    def to_tsv(self) -> str:
        lines = ["\t".join(self.header())]
        for backbone, clf, cells in self.rows:
            vals = ["n/a" if cells.get(k) is None else repr(cells[k]) for k in self.frame_counts]
            lines.append("\t".join([backbone, clf] + vals))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_tsv(cls, text: str) -> "ResultTable":
        lines = [l for l in text.splitlines() if l]
        if not lines:
            raise FormatError("empty results table")
        head = lines[0].split("\t")
        if head[:2] != ["backbone", "classifier"]:
            raise FormatError(f"bad results header {head!r}")
        try:
            counts = [int(h.split()[0]) for h in head[2:]]
        except (ValueError, IndexError) as exc:
            raise FormatError(f"bad frame-count column in {head!r}") from exc
        table = cls(counts)
        for line in lines[1:]:
            parts = line.split("\t")
            if len(parts) != len(head):
                raise FormatError(f"row has {len(parts)} fields, expected {len(head)}")
            cells = {k: None if v == "n/a" else float(v) for k, v in zip(counts, parts[2:])}
            table.rows.append((parts[0], parts[1], cells))
        return table

    def render_text(self) -> str:
        """Aligned plain-text table with percentage accuracies."""
        names = [f"{b} + {CLASSIFIER_LABELS.get(c, c)}" for b, c, _ in self.rows]
        width = max([len("model")] + [len(n) for n in names])
        cols = [f"{k} Frames" for k in self.frame_counts]
        out = ["  ".join([f"{'model':<{width}}"] + [f"{c:>10}" for c in cols])]
        for name, (_, _, cells) in zip(names, self.rows):
            vals = []
            for k in self.frame_counts:
                v = cells.get(k)
                vals.append(f"{'n/a' if v is None else f'{100 * v:.2f}%':>10}")
            out.append("  ".join([f"{name:<{width}}"] + vals))
        return "\n".join(out) + "\n"


def run_grid(grid: GridSpec, manifest: DatasetManifest, cfg: TrainConfig,
             template: ModelConfig, feature_dims: Optional[Dict[str, int]] = None) -> ResultTable:
    """Train and test every (backbone, classifier, frames) cell.

    Cells whose features cannot be loaded are reported as unavailable.  Cell
    ``i`` (in grid order) is seeded with ``cfg.seed + i``.
    """
    feature_dims = feature_dims or {}
    table = ResultTable(list(grid.frame_counts))
    rows: Dict[Tuple[str, str], Dict[int, Optional[float]]] = {}
    for index, (backbone, clf, k) in enumerate(grid.cells()):
        cells = rows.setdefault((backbone, clf), {})
        seed = cfg.seed + index
        try:
            spec = get_backbone(backbone, feature_dims.get(backbone))
            config = replace(template, variant=clf, backbone=backbone, frames=k,
                             input_dim=spec.feature_dim, seed=seed)
            result = run_experiment(manifest, config, replace(cfg, frames=k, seed=seed))
            cells[k] = result.test_report.accuracy
        except (DataError, ConfigurationError) as exc:
            log.warning("cell %s/%s/%d unavailable: %s", backbone, clf, k, exc)
            cells[k] = None
    table.rows = [(b, c, cells) for (b, c), cells in rows.items()]
    return table
