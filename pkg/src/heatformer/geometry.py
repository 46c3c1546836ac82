"""Plate discretization and the explicit-Euler stability bound."""
from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigurationError, DomainError


@dataclass(frozen=True)
class PlateGeometry:
    """Uniform grid on the unit square; frames are indexed ``[j, i]`` = ``[eta, xi]``."""

    nx: int
    ny: int
    dxi: float = field(init=False)
    deta: float = field(init=False)

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise ConfigurationError(f"grid sizes must be integers, got nx={self.nx}, ny={self.ny}")
        if self.nx < 3 or self.ny < 3:
            raise ConfigurationError(f"grid needs at least 3 nodes per axis, got nx={self.nx}, ny={self.ny}")
        object.__setattr__(self, "dxi", 1.0 / (self.nx - 1))
        object.__setattr__(self, "deta", 1.0 / (self.ny - 1))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)


def cfl_max_timestep(geometry: PlateGeometry, beta: float) -> float:
    """Largest stable explicit-Euler step, ``(1/(2 beta)) / (1/dxi^2 + 1/deta^2)``."""
    if not beta > 0:
        raise DomainError(f"diffusivity must be positive, got beta={beta}")
    inv = 1.0 / geometry.dxi**2 + 1.0 / geometry.deta**2
    return 1.0 / (2.0 * beta * inv)
