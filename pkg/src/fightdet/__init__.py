"""Fight detection on short video clips with LSTM-family classifiers over CNN frame features."""

__version__ = "0.1.0"

from .features import BackboneSpec, FeatureSequence, builtin_backbones, read_features, write_features
from .frames import Frame, FrameSequence, SampledClip, bicubic_resize, uniform_sample_indices
from .model import ModelConfig, init_params, model_backward, model_forward
from .numeric import ParamStore, SeededRng
from .training import DatasetManifest, GridSpec, TrainConfig, evaluate, run_grid, split_dataset, train

__all__ = [
    "BackboneSpec",
    "DatasetManifest",
    "FeatureSequence",
    "Frame",
    "FrameSequence",
    "GridSpec",
    "ModelConfig",
    "ParamStore",
    "SampledClip",
    "SeededRng",
    "TrainConfig",
    "bicubic_resize",
    "builtin_backbones",
    "evaluate",
    "init_params",
    "model_backward",
    "model_forward",
    "read_features",
    "run_grid",
    "split_dataset",
    "train",
    "uniform_sample_indices",
    "write_features",
]
