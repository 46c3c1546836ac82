"""Randomized case sampling for the base, Challenge-1 and Challenge-2 setups.

Every side of the plate is stored as a per-node array, even when it holds one
broadcast value, so that plain sides and sides carrying a segment go through
the same code path.  Side arrays run along increasing ``i`` (top/bottom) or
increasing ``j`` (left/right) and include the corner nodes; segments are only
ever placed on the interior nodes of a side so corner ownership never clips them.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .errors import ConfigurationError
from .geometry import PlateGeometry, cfl_max_timestep

Side = Literal["left", "right", "top", "bottom"]
SIDES: tuple[Side, ...] = ("left", "right", "top", "bottom")
MODES = ("base", "challenge1", "challenge2")

BOTTOM_MAX = 0.10
DEFAULT_BETA_RANGE = (0.5, 1.5)
DEFAULT_DTAU_SAFETY = 0.9


@dataclass(frozen=True)
class Segment:
    side: Side
    start: int
    length: int
    value: float

    @property
    def stop(self) -> int:
        return self.start + self.length


@dataclass(frozen=True, eq=False)
class BoundarySpec:
    left: np.ndarray
    right: np.ndarray
    top: np.ndarray
    bottom: np.ndarray
    segments: tuple[Segment, ...] = ()

    def side(self, name: Side) -> np.ndarray:
        return getattr(self, name)

    def __eq__(self, other):
        if not isinstance(other, BoundarySpec):
            return NotImplemented
        return self.segments == other.segments and all(
            np.array_equal(self.side(s), other.side(s)) for s in SIDES
        )


@dataclass(frozen=True, eq=False)
class CaseSpec:
    geometry: PlateGeometry
    boundary: BoundarySpec
    theta_init: float
    beta: float
    dtau: float

    def __eq__(self, other):
        if not isinstance(other, CaseSpec):
            return NotImplemented
        return (
            self.geometry == other.geometry
            and self.boundary == other.boundary
            and self.theta_init == other.theta_init
            and self.beta == other.beta
            and self.dtau == other.dtau
        )


@dataclass(frozen=True)
class ScenarioConfig:
    """Sampling settings shared by a whole dataset."""

    mode: str = "base"
    nx: int = 16
    ny: int = 16
    beta_range: tuple[float, float] = DEFAULT_BETA_RANGE
    segment_length: int = 4
    # Challenge-1 fixed segment starts (node index along the side); None centres the segment.
    left_segment_start: int | None = None
    right_segment_start: int | None = None
    dtau_safety: float = DEFAULT_DTAU_SAFETY

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown scenario mode {self.mode!r}; expected one of {MODES}")
        if not 0 < self.dtau_safety <= 1:
            raise ConfigurationError(f"dtau_safety must lie in (0, 1], got {self.dtau_safety}")

    @property
    def geometry(self) -> PlateGeometry:
        return PlateGeometry(nx=self.nx, ny=self.ny)


def side_length(geometry: PlateGeometry, side: Side) -> int:
    return geometry.ny if side in ("left", "right") else geometry.nx


def _check_beta_range(beta_range: Sequence[float]) -> tuple[float, float]:
    lo, hi = (float(v) for v in beta_range)
    if not (lo > 0 and lo <= hi):
        raise ConfigurationError(f"invalid beta range [{lo}, {hi}]: need 0 < lo <= hi")
    return lo, hi


def _check_segment_fits(geometry: PlateGeometry, side: Side, length: int, start: int | None = None):
    n = side_length(geometry, side)
    if length < 1 or length > n - 2:
        raise ConfigurationError(
            f"segment of {length} nodes does not fit on the {n - 2} interior nodes of the {side} side"
        )
    if start is not None and not (1 <= start and start + length <= n - 1):
        raise ConfigurationError(
            f"segment [{start}, {start + length}) leaves the interior of the {side} side (1..{n - 2})"
        )


def centered_start(geometry: PlateGeometry, side: Side, length: int) -> int:
    n = side_length(geometry, side)
    return 1 + (n - 2 - length) // 2


def _sample_sides(rng: np.random.Generator, geometry: PlateGeometry) -> dict[str, np.ndarray]:
    # One draw per side, in a fixed order, broadcast along the side.
    left, top, right = rng.uniform(0.0, 1.0, size=3)
    bottom = rng.uniform(0.0, BOTTOM_MAX)
    return {
        "left": np.full(geometry.ny, left),
        "right": np.full(geometry.ny, right),
        "top": np.full(geometry.nx, top),
        "bottom": np.full(geometry.nx, bottom),
    }


def _finish_case(
    rng: np.random.Generator,
    geometry: PlateGeometry,
    sides: dict[str, np.ndarray],
    segments: tuple[Segment, ...],
    beta_range: tuple[float, float],
    dtau_safety: float,
) -> CaseSpec:
    theta_init = float(rng.uniform(0.0, 1.0))
    lo, hi = beta_range
    beta = float(lo) if lo == hi else float(rng.uniform(lo, hi))
    for seg in segments:
        sides[seg.side][seg.start : seg.stop] = seg.value
    for arr in sides.values():
        arr.setflags(write=False)
    boundary = BoundarySpec(segments=segments, **sides)
    dtau = dtau_safety * cfl_max_timestep(geometry, beta)
    return CaseSpec(geometry=geometry, boundary=boundary, theta_init=theta_init, beta=beta, dtau=dtau)


def sample_base_case(
    seed,
    geometry: PlateGeometry,
    beta_range: Sequence[float] = DEFAULT_BETA_RANGE,
    dtau_safety: float = DEFAULT_DTAU_SAFETY,
) -> CaseSpec:
    """Draw a case with uniform sides and no segments.

    ``seed`` is anything :func:`numpy.random.default_rng` accepts; the same seed
    always yields a bit-identical case.
    """
    beta_range = _check_beta_range(beta_range)
    rng = np.random.default_rng(seed)
    sides = _sample_sides(rng, geometry)
    return _finish_case(rng, geometry, sides, (), beta_range, dtau_safety)


def sample_challenge1_case(
    seed,
    geometry: PlateGeometry,
    beta_range: Sequence[float] = DEFAULT_BETA_RANGE,
    segment_length: int = 4,
    left_start: int | None = None,
    right_start: int | None = None,
    dtau_safety: float = DEFAULT_DTAU_SAFETY,
) -> CaseSpec:
    """Base case plus a hot (1) segment on the left side and a cold (0) one on the right.

    Segment positions are fixed across cases; by default both are centred.
    """
    beta_range = _check_beta_range(beta_range)
    if left_start is None:
        _check_segment_fits(geometry, "left", segment_length)
        left_start = centered_start(geometry, "left", segment_length)
    if right_start is None:
        _check_segment_fits(geometry, "right", segment_length)
        right_start = centered_start(geometry, "right", segment_length)
    _check_segment_fits(geometry, "left", segment_length, left_start)
    _check_segment_fits(geometry, "right", segment_length, right_start)
    rng = np.random.default_rng(seed)
    sides = _sample_sides(rng, geometry)
    segments = (
        Segment("left", int(left_start), int(segment_length), 1.0),
        Segment("right", int(right_start), int(segment_length), 0.0),
    )
    return _finish_case(rng, geometry, sides, segments, beta_range, dtau_safety)


def sample_challenge2_case(
    seed,
    geometry: PlateGeometry,
    beta_range: Sequence[float] = DEFAULT_BETA_RANGE,
    segment_length: int = 4,
    dtau_safety: float = DEFAULT_DTAU_SAFETY,
) -> CaseSpec:
    """Base case plus hot and cold segments on two distinct, randomly chosen sides."""
    beta_range = _check_beta_range(beta_range)
    for side in SIDES:
        _check_segment_fits(geometry, side, segment_length)
    rng = np.random.default_rng(seed)
    sides = _sample_sides(rng, geometry)
    hot_idx, cold_idx = rng.choice(len(SIDES), size=2, replace=False)
    segments = []
    for idx, value in ((hot_idx, 1.0), (cold_idx, 0.0)):
        side = SIDES[int(idx)]
        n = side_length(geometry, side)
        start = int(rng.integers(1, n - 1 - segment_length, endpoint=True))
        segments.append(Segment(side, start, int(segment_length), value))
    return _finish_case(rng, geometry, sides, tuple(segments), beta_range, dtau_safety)


def sample_case(seed, config: ScenarioConfig) -> CaseSpec:
    geometry = config.geometry
    if config.mode == "base":
        return sample_base_case(seed, geometry, config.beta_range, config.dtau_safety)
    if config.mode == "challenge1":
        return sample_challenge1_case(
            seed,
            geometry,
            config.beta_range,
            config.segment_length,
            config.left_segment_start,
            config.right_segment_start,
            config.dtau_safety,
        )
    return sample_challenge2_case(seed, geometry, config.beta_range, config.segment_length, config.dtau_safety)


@dataclass(frozen=True, eq=False)
class BoundaryOverlay:
    """Dirichlet ring: ``mask`` marks boundary nodes, ``values`` holds their temperatures."""

    mask: np.ndarray
    values: np.ndarray

    def apply(self, frame: np.ndarray) -> np.ndarray:
        out = np.array(frame, dtype=np.float64, copy=True)
        out[..., self.mask] = self.values[self.mask]
        return out


def boundary_frame(spec: CaseSpec) -> BoundaryOverlay:
    """Materialize the four Dirichlet sides onto the grid.

    Rows are written first (bottom at ``j=0``, top at ``j=ny-1``) and columns last
    (left at ``i=0``, right at ``i=nx-1``), so the corners belong to the left and
    right sides.
    """
    ny, nx = spec.geometry.shape
    b = spec.boundary
    values = np.zeros((ny, nx))
    values[0, :] = b.bottom
    values[-1, :] = b.top
    values[:, 0] = b.left
    values[:, -1] = b.right
    mask = np.zeros((ny, nx), dtype=bool)
    mask[0, :] = mask[-1, :] = True
    mask[:, 0] = mask[:, -1] = True
    values[~mask] = 0.0
    values.setflags(write=False)
    mask.setflags(write=False)
    return BoundaryOverlay(mask=mask, values=values)
