"""Desk-scale NMT toolkit with compound attention and representation evaluation.

The package splits into three layers: a small reverse-mode tensor engine
(`tensor`, `nn`), the model family around fixed-size structured sentence
representations (`encoder`, `decoder`, `transformer`, `model`, `training`,
`checkpoint`), and the evaluation suite over translations, embeddings, and
attention maps (`evaluation`).  `cli` ties the layers into commands.
"""

from .config import (Architecture, DataConfig, ModelConfig, RunConfig,
                     TrainConfig)
from .data import BOS, EOS, PAD, UNK, BpeModel, Vocabulary
from .errors import (CatnmtError, ConfigError, DataError,
                     DegenerateDistributionError, DivergenceError,
                     EmptyInputError, ShapeError,
                     UndefinedCorrelationError, UnsupportedArchitectureError)
from .checkpoint import load_model, save_model
from .model import Seq2SeqModel, build_model, compound_alignment
from .training import Adam, train, xent_loss

__version__ = "0.1.0"

__all__ = [
    "Architecture", "DataConfig", "ModelConfig", "RunConfig", "TrainConfig",
    "PAD", "UNK", "BOS", "EOS", "Vocabulary", "BpeModel",
    "CatnmtError", "ConfigError", "DataError",
    "DegenerateDistributionError", "DivergenceError", "EmptyInputError",
    "ShapeError", "UndefinedCorrelationError",
    "UnsupportedArchitectureError",
    "load_model", "save_model",
    "Seq2SeqModel", "build_model", "compound_alignment",
    "Adam", "train", "xent_loss",
    "__version__",
]
