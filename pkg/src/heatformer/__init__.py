"""Physics-informed encoder-only Transformer surrogate for 2D heat conduction."""
from .errors import (
    ConfigurationError,
    DomainError,
    FormatError,
    HeatformerError,
    NumericalError,
    StabilityError,
)
from .geometry import PlateGeometry, cfl_max_timestep

__version__ = "0.1.0"
