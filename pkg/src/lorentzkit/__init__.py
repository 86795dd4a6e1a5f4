"""lorentzkit: hyperbolic deep learning on the Lorentz model.

Geometry primitives, gyrovector operations, Fréchet statistics, Lorentz
neural layers, two-stage domain alignment, a hybrid convolutional
classifier for epoched multichannel signals, delta-hyperbolicity
estimation, and deterministic synthetic data generators.
"""

__version__ = "0.1.0"

from . import alignment, autodiff, dataio, frechet, geometry, gyro, hyperbolicity, layers, synth
from .errors import (
    ConstraintError,
    ConvergenceError,
    DataFormatError,
    DimensionError,
    LorentzkitError,
    NumericError,
    ValidationError,
)
from .geometry import Curvature, LorentzPoint, TangentVector
from .model import Heegnet, ModelConfig, load_checkpoint, save_checkpoint

__all__ = [
    "__version__",
    "alignment", "autodiff", "dataio", "frechet", "geometry", "gyro",
    "hyperbolicity", "layers", "synth",
    "ConstraintError", "ConvergenceError", "DataFormatError", "DimensionError",
    "LorentzkitError", "NumericError", "ValidationError",
    "Curvature", "LorentzPoint", "TangentVector",
    "Heegnet", "ModelConfig", "load_checkpoint", "save_checkpoint",
]
