"""Spiking-neuron U-Net for single image dehazing on a numpy autodiff core."""

from .autodiff import Tensor, backward, no_grad
from .model import (DehazeSnnModel, ModelConfig, build, count_macs,
                    count_params, forward, named_parameters)

__version__ = "0.1.0"

__all__ = ["Tensor", "backward", "no_grad", "DehazeSnnModel", "ModelConfig",
           "build", "forward", "count_params", "count_macs",
           "named_parameters", "__version__"]
