"""Off-grid statistical downscaling with convolutional conditional neural processes."""

from .config import WET_THRESHOLD, RunConfig
from .convcnp import ConvCNP, ModelConfig
from .grid import PredictorGrid, TargetSite

__version__ = "0.1.0"

__all__ = ["WET_THRESHOLD", "RunConfig", "ConvCNP", "ModelConfig", "PredictorGrid", "TargetSite"]
