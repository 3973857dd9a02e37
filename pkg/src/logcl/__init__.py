"""Temporal knowledge graph extrapolation with local and global history encoders."""
from .config import ABLATIONS, DATASET_PRESETS, ConfigError, TrainConfig, load_config
from .data import DatasetError, Quadruple, Snapshot, TemporalKG, load_dataset, save_dataset
from .engine import GraphContext, evaluate_split, online_train, train
from .evaluation import MetricsReport
from .model import LogCL

__version__ = "0.1.0"
