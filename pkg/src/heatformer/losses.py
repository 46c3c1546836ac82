"""Composite physics-informed loss: data MSE plus residual, boundary and initial-frame terms."""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np
import torch

from .errors import ConfigurationError, DomainError
from .geometry import PlateGeometry
from .scenario import CaseSpec, boundary_frame


@dataclass(frozen=True)
class LossWeights:
    lambda_pi: float = 1.0
    lambda_bc: float = 1.0
    lambda_ic: float = 1.0
    eps: float = 1e-8

    def __post_init__(self):
        if min(self.lambda_pi, self.lambda_bc, self.lambda_ic) < 0:
            raise ConfigurationError(f"loss weights must be nonnegative: {self}")
        if not self.eps > 0:
            raise ConfigurationError(f"eps must be positive, got {self.eps}")


@dataclass(frozen=True)
class LossBreakdown:
    mse: float
    physics: float
    boundary: float
    initial: float
    total: float

    @classmethod
    def mean(cls, items: Sequence["LossBreakdown"]) -> "LossBreakdown":
        if not items:
            raise DomainError("cannot average an empty list of losses")
        return cls(**{f.name: float(np.mean([getattr(x, f.name) for x in items])) for f in fields(cls)})

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True, eq=False)
class CaseBatch:
    """Per-case tensors the loss needs beyond the predicted and target frames."""

    geometry: PlateGeometry
    beta: torch.Tensor  # [B]
    dtau: torch.Tensor  # [B], effective step between recorded frames
    boundary_mask: torch.Tensor  # [ny, nx] bool
    boundary_values: torch.Tensor  # [B, ny, nx]
    n_visible: int

    @classmethod
    def from_cases(
        cls,
        cases: Sequence[CaseSpec],
        n_visible: int,
        record_stride: int = 1,
        dtype: torch.dtype = torch.float64,
    ) -> "CaseBatch":
        geometry = cases[0].geometry
        if any(c.geometry != geometry for c in cases):
            raise DomainError("all cases in a batch must share one grid")
        overlays = [boundary_frame(c) for c in cases]
        return cls(
            geometry=geometry,
            beta=torch.tensor([c.beta for c in cases], dtype=dtype),
            dtau=torch.tensor([c.dtau * record_stride for c in cases], dtype=dtype),
            boundary_mask=torch.from_numpy(np.array(overlays[0].mask)),
            boundary_values=torch.from_numpy(np.stack([o.values for o in overlays])).to(dtype),
            n_visible=n_visible,
        )

    def select(self, index) -> "CaseBatch":
        return CaseBatch(
            geometry=self.geometry,
            beta=self.beta[index],
            dtau=self.dtau[index],
            boundary_mask=self.boundary_mask,
            boundary_values=self.boundary_values[index],
            n_visible=self.n_visible,
        )


def _same_shape(pred: torch.Tensor, target: torch.Tensor):
    if pred.shape != target.shape:
        raise DomainError(f"prediction shape {tuple(pred.shape)} != target shape {tuple(target.shape)}")


def mse_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    _same_shape(pred, target)
    return torch.mean((pred - target) ** 2)


def physics_residual(
    pred: torch.Tensor, beta: torch.Tensor, dtau: torch.Tensor, geometry: PlateGeometry
) -> torch.Tensor:
    """Forward-difference heat-equation residual on interior nodes, ``[B, T-1, ny-2, nx-2]``.

    The Laplacian is taken at the earlier time level, the same stencil the solver
    advances with, so solver output has a residual at rounding level.
    """
    if pred.ndim != 4 or pred.shape[1] < 2:
        raise DomainError(f"need a [B, T>=2, ny, nx] prediction, got {tuple(pred.shape)}")
    beta = torch.as_tensor(beta, dtype=pred.dtype).reshape(-1, 1, 1, 1)
    dtau = torch.as_tensor(dtau, dtype=pred.dtype).reshape(-1, 1, 1, 1)
    cur = pred[:, :-1]
    c = cur[..., 1:-1, 1:-1]
    d2xi = (cur[..., 1:-1, 2:] - 2.0 * c + cur[..., 1:-1, :-2]) / geometry.dxi**2
    d2eta = (cur[..., 2:, 1:-1] - 2.0 * c + cur[..., :-2, 1:-1]) / geometry.deta**2
    dtheta = (pred[:, 1:, 1:-1, 1:-1] - c) / dtau
    return dtheta - beta * (d2xi + d2eta)


def normalized_residual(residual: torch.Tensor, eps: float = 1e-8) -> torch.Tensor:
    """Divide by ``sqrt(Var + eps)``, the (population) variance taken over every element."""
    if not eps > 0:
        raise ConfigurationError(f"eps must be positive, got {eps}")
    var = torch.var(residual, correction=0) if residual.numel() > 1 else residual.new_zeros(())
    return residual / torch.sqrt(var + eps)


def physics_loss(
    pred: torch.Tensor, beta: torch.Tensor, dtau: torch.Tensor, geometry: PlateGeometry, eps: float = 1e-8
) -> torch.Tensor:
    res = physics_residual(pred, beta, dtau, geometry)
    return torch.mean(normalized_residual(res, eps) ** 2)


def boundary_loss(pred: torch.Tensor, boundary_mask: torch.Tensor, boundary_values: torch.Tensor) -> torch.Tensor:
    """MSE over the Dirichlet ring at every time level."""
    if boundary_values.shape != (pred.shape[0],) + tuple(pred.shape[2:]):
        raise DomainError(
            f"boundary values {tuple(boundary_values.shape)} do not fit prediction {tuple(pred.shape)}"
        )
    diff = pred[..., boundary_mask] - boundary_values[:, None, boundary_mask]
    return torch.mean(diff**2)


def initial_loss(pred: torch.Tensor, target: torch.Tensor, n_visible: int) -> torch.Tensor:
    """MSE over the unmasked leading frames."""
    _same_shape(pred, target)
    if n_visible < 1:
        raise DomainError(f"n_visible must be >= 1, got {n_visible}")
    return torch.mean((pred[:, :n_visible] - target[:, :n_visible]) ** 2)


def loss_terms(
    pred: torch.Tensor, target: torch.Tensor, batch: CaseBatch, weights: LossWeights
) -> dict[str, torch.Tensor]:
    """Differentiable components and weighted total, as tensors."""
    terms = {
        "mse": mse_loss(pred, target),
        "physics": physics_loss(pred, batch.beta, batch.dtau, batch.geometry, weights.eps),
        "boundary": boundary_loss(pred, batch.boundary_mask, batch.boundary_values),
        "initial": initial_loss(pred, target, batch.n_visible),
    }
    terms["total"] = (
        terms["mse"]
        + weights.lambda_pi * terms["physics"]
        + weights.lambda_bc * terms["boundary"]
        + weights.lambda_ic * terms["initial"]
    )
    return terms


def breakdown(terms: dict[str, torch.Tensor]) -> LossBreakdown:
    return LossBreakdown(**{k: float(v.detach()) for k, v in terms.items()})


def total_loss(pred: torch.Tensor, target: torch.Tensor, batch: CaseBatch, weights: LossWeights) -> LossBreakdown:
    return breakdown(loss_terms(pred, target, batch, weights))
