"""Explicit-Euler central-difference solver and dataset assembly."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, HeatformerError, StabilityError
from .geometry import PlateGeometry, cfl_max_timestep
from .scenario import CaseSpec, ScenarioConfig, boundary_frame, sample_case

__all__ = [
    "Trajectory",
    "DatasetSplit",
    "cfl_max_timestep",
    "laplacian",
    "euler_step",
    "initial_frame",
    "simulate",
    "split_counts",
    "generate_dataset",
]

log = logging.getLogger(__name__)

# Relative slack on the CFL comparison; dtau is usually a safety factor times the bound.
_CFL_RTOL = 1e-12


@dataclass(eq=False)
class Trajectory:
    frames: np.ndarray  # [T, ny, nx]
    case: CaseSpec
    record_stride: int = 1
    steadiness: float = float("nan")

    @property
    def dtau(self) -> float:
        return self.case.dtau

    @property
    def seq_len(self) -> int:
        return self.frames.shape[0]


@dataclass(eq=False)
class DatasetSplit:
    train: list[Trajectory]
    validation: list[Trajectory]
    test: list[Trajectory]
    fractions: tuple[float, float, float] = (0.7, 0.2, 0.1)
    mode: str = "base"

    def splits(self) -> dict[str, list[Trajectory]]:
        return {"train": self.train, "validation": self.validation, "test": self.test}


def laplacian(frame: np.ndarray, geometry: PlateGeometry) -> np.ndarray:
    """Five-point Laplacian on interior nodes, shape ``(..., ny-2, nx-2)``."""
    c = frame[..., 1:-1, 1:-1]
    d2xi = (frame[..., 1:-1, 2:] - 2.0 * c + frame[..., 1:-1, :-2]) / geometry.dxi**2
    d2eta = (frame[..., 2:, 1:-1] - 2.0 * c + frame[..., :-2, 1:-1]) / geometry.deta**2
    return d2xi + d2eta


def euler_step(frame: np.ndarray, case: CaseSpec) -> np.ndarray:
    """One explicit-Euler update; returns a new frame with the Dirichlet ring re-imposed."""
    frame = np.asarray(frame)
    if frame.shape != case.geometry.shape:
        raise DomainError(f"frame shape {frame.shape} does not match grid {case.geometry.shape}")
    out = np.array(frame, dtype=np.float64, copy=True)
    out[1:-1, 1:-1] = frame[1:-1, 1:-1] + case.dtau * case.beta * laplacian(frame, case.geometry)
    return boundary_frame(case).apply(out)


def initial_frame(case: CaseSpec) -> np.ndarray:
    frame = np.full(case.geometry.shape, case.theta_init, dtype=np.float64)
    return boundary_frame(case).apply(frame)


def _check_cfl(case: CaseSpec):
    bound = cfl_max_timestep(case.geometry, case.beta)
    if case.dtau > bound * (1.0 + _CFL_RTOL):
        raise StabilityError(f"dtau={case.dtau:.6g} exceeds the CFL bound {bound:.6g} for beta={case.beta:.6g}")


def simulate(case: CaseSpec, seq_len: int, record_stride: int = 1) -> Trajectory:
    """Integrate ``(seq_len - 1) * record_stride`` steps, keeping every ``record_stride``-th frame.

    ``Trajectory.steadiness`` is the max absolute change between the last two
    recorded frames; it is reported, never used as a stopping rule.
    """
    if seq_len < 2:
        raise DomainError(f"seq_len must be at least 2, got {seq_len}")
    if record_stride < 1:
        raise DomainError(f"record_stride must be at least 1, got {record_stride}")
    _check_cfl(case)
    overlay = boundary_frame(case)
    mask, values = overlay.mask, overlay.values[overlay.mask]
    coef = case.dtau * case.beta
    frames = np.empty((seq_len,) + case.geometry.shape)
    cur = initial_frame(case)
    frames[0] = cur
    for k in range(1, seq_len):
        for _ in range(record_stride):
            nxt = cur.copy()
            nxt[1:-1, 1:-1] = cur[1:-1, 1:-1] + coef * laplacian(cur, case.geometry)
            nxt[mask] = values
            cur = nxt
        frames[k] = cur
    steadiness = float(np.max(np.abs(frames[-1] - frames[-2])))
    return Trajectory(frames=frames, case=case, record_stride=record_stride, steadiness=steadiness)


def split_counts(n_cases: int, fractions: Sequence[float]) -> tuple[int, ...]:
    """Floor each share; the largest split absorbs the remainder."""
    fractions = tuple(float(f) for f in fractions)
    if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigurationError(f"split fractions must be nonnegative and sum to 1, got {fractions}")
    counts = [int(np.floor(n_cases * f + 1e-9)) for f in fractions]
    counts[int(np.argmax(fractions))] += n_cases - sum(counts)
    return tuple(counts)


def _simulate_indexed(args):
    index, seed, config, seq_len, record_stride = args
    try:
        case = sample_case(seed, config)
        return simulate(case, seq_len, record_stride)
    except HeatformerError as exc:
        raise type(exc)(f"case {index}: {exc}") from exc


def generate_dataset(
    config: ScenarioConfig,
    n_cases: int,
    seeds: Sequence[int] = (0, 1, 2),
    fractions: Sequence[float] = (0.7, 0.2, 0.1),
    seq_len: int = 401,
    record_stride: int = 1,
    workers: int = 1,
) -> DatasetSplit:
    """Sample and simulate a train/validation/test split.

    Case ``k`` of a split is drawn from ``default_rng([split_seed, k])``, so the
    splits never share RNG state and the result is independent of ``workers``.
    """
    if len(seeds) != 3 or len(set(seeds)) != 3:
        raise ConfigurationError(f"need three distinct split seeds, got {tuple(seeds)}")
    counts = split_counts(n_cases, fractions)
    jobs = []
    for split_seed, count in zip(seeds, counts):
        jobs.append([(k, [int(split_seed), k], config, seq_len, record_stride) for k in range(count)])
    flat = [job for split in jobs for job in split]
    if workers > 1 and len(flat) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_simulate_indexed, flat, chunksize=max(1, len(flat) // (4 * workers))))
    else:
        results = [_simulate_indexed(job) for job in flat]
    out, pos = [], 0
    for count in counts:
        out.append(results[pos : pos + count])
        pos += count
    log.info("generated %s dataset: %d/%d/%d cases", config.mode, *counts)
    return DatasetSplit(*out, fractions=tuple(float(f) for f in fractions), mode=config.mode)
