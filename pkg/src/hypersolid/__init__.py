"""Hard-ball repulsion with a max-pooled alignment target for self-supervised embeddings.

Pure numpy/scipy: a small reverse-mode tape (:mod:`ndtensor`), the loss, an
MLP encoder, AdamW, a training loop, probes, geometry metrics, energy walks
and feature inversion.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ArgumentError, ConfigError, DimensionError, FormatError, HypersolidError, NumericError,
)
from .loss import LossBreakdown, LossConfig, hypersolid_loss  # noqa: E402
from .model import EncoderConfig, Parameters  # noqa: E402
from .trainer import TrainConfig, train  # noqa: E402
from .views import EmbeddingSet, SampleSource, ViewConfig, synthetic_clusters  # noqa: E402

__all__ = [
    "ArgumentError", "ConfigError", "DimensionError", "FormatError", "HypersolidError", "NumericError",
    "LossBreakdown", "LossConfig", "hypersolid_loss", "EncoderConfig", "Parameters",
    "TrainConfig", "train", "EmbeddingSet", "SampleSource", "ViewConfig", "synthetic_clusters",
]
