"""distana: a lattice of weight-shared recurrent prediction kernels for
spatio-temporal wave forecasting, with data generators, BPTT training and
a closed-loop evaluation harness."""

__version__ = "0.1.0"

from .errors import ConfigError, NumericError, ShapeError, TapeError
from .mesh import BorderMode, Direction, MeshTopology, grid
from .model import Model, PkConfig, Variant, init_params, param_count, variant_config
from .wavegen import DatasetKind, Ds1Config, Ds2Config, sample_dataset

__all__ = [
    "__version__",
    "ConfigError", "NumericError", "ShapeError", "TapeError",
    "BorderMode", "Direction", "MeshTopology", "grid",
    "Model", "PkConfig", "Variant", "init_params", "param_count", "variant_config",
    "DatasetKind", "Ds1Config", "Ds2Config", "sample_dataset",
]
