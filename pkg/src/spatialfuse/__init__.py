"""Camera and LiDAR feature fusion with 2-D spatial token encoding, a GRU
waypoint head, and the numpy autodiff engine and toy driving world that go
with them.
"""

from .errors import ConfigError, ContractError, DimensionError, FormatError
from .gradcheck import finite_diff_check
from .model import ModelConfig, ModelOutput, forward, init_model, predict
from .params import Params
from .tensor import Tensor, backward, precision

__all__ = [
    "ConfigError",
    "ContractError",
    "DimensionError",
    "FormatError",
    "ModelConfig",
    "ModelOutput",
    "Params",
    "Tensor",
    "backward",
    "finite_diff_check",
    "forward",
    "init_model",
    "precision",
    "predict",
]
