"""Block prediction, autoregressive rollout, test-set evaluation and weight heatmaps."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import torch

from .errors import ConfigurationError, DomainError
from .fdsolver import Trajectory
from .losses import CaseBatch, LossBreakdown, LossWeights, total_loss
from .model import HeatTransformer, ModelConfig

Forward = Callable[[torch.Tensor, torch.Tensor], torch.Tensor]


@dataclass(eq=False)
class RolloutResult:
    prediction: torch.Tensor  # [B, T, ny, nx]
    frame_mse: np.ndarray  # [T]; NaN for frames that were given, not predicted (rollout only)
    loss: float
    breakdown: LossBreakdown | None = None


def _require_mask(config: ModelConfig, kind: str):
    if config.mask_type != kind:
        raise ConfigurationError(f"{kind} evaluation requested for a model trained with a {config.mask_type} mask")


def _frame_mse(pred: torch.Tensor, target: torch.Tensor) -> np.ndarray:
    return ((pred - target) ** 2).mean(dim=(0, 2, 3)).detach().cpu().numpy()


@torch.no_grad()
def block_predict(
    model: HeatTransformer,
    ground_truth: torch.Tensor,
    cases: CaseBatch,
    weights: LossWeights = LossWeights(),
) -> RolloutResult:
    """One forward pass over the whole sequence.

    ``frame_mse`` covers every frame, including the visible prefix, and compares
    the model's own output there rather than the copied ground truth.  The
    aggregate loss is the full training objective.
    """
    _require_mask(model.config, "block")
    pred = model(ground_truth, cases.beta)
    parts = total_loss(pred, ground_truth, cases, weights)
    return RolloutResult(prediction=pred, frame_mse=_frame_mse(pred, ground_truth), loss=parts.total, breakdown=parts)


@torch.no_grad()
def autoregressive_rollout(
    forward: Forward,
    ground_truth: torch.Tensor,
    beta: torch.Tensor,
    n_visible: int,
    boundary_mask: torch.Tensor | None = None,
    boundary_values: torch.Tensor | None = None,
) -> RolloutResult:
    """March from the visible prefix, filling one frame per forward pass.

    Frame ``t`` is taken from output position ``t - 1``.  Under the causal mask
    that row attends to the prefix and to frames before ``t - 1``, and its own
    input frame reaches it through the residual path, so it has seen exactly
    the frames before ``t``.  Slots not yet filled hold a copy of the last
    visible frame; ground truth beyond the prefix is read only for scoring.
    When a boundary ring is given it is rewritten on every inserted frame.
    """
    b, t_len = ground_truth.shape[:2]
    if not 1 <= n_visible <= t_len:
        raise DomainError(f"n_visible={n_visible} outside [1, {t_len}]")
    work = ground_truth[:, n_visible - 1 : n_visible].expand(-1, t_len, -1, -1).clone()
    work[:, :n_visible] = ground_truth[:, :n_visible]
    for t in range(n_visible, t_len):
        out = forward(work, beta)
        frame = out[:, t - 1]
        if boundary_mask is not None:
            frame = torch.where(boundary_mask, boundary_values.to(frame.dtype), frame)
        work[:, t] = frame
    frame_mse = _frame_mse(work, ground_truth)
    frame_mse[:n_visible] = np.nan
    if n_visible < t_len:
        loss = float(((work[:, n_visible:] - ground_truth[:, n_visible:]) ** 2).mean())
    else:
        loss = 0.0
    return RolloutResult(prediction=work, frame_mse=frame_mse, loss=loss)


def rollout_model(model: HeatTransformer, ground_truth: torch.Tensor, cases: CaseBatch,
                  reimpose_boundary: bool = True) -> RolloutResult:
    _require_mask(model.config, "causal")
    return autoregressive_rollout(
        model,
        ground_truth,
        cases.beta,
        model.config.start_predicting_from,
        cases.boundary_mask if reimpose_boundary else None,
        cases.boundary_values if reimpose_boundary else None,
    )


@dataclass(eq=False)
class TestReport:
    case_losses: np.ndarray
    mean_loss: float
    frame_mse: np.ndarray  # [N, T]
    predictions: torch.Tensor  # [N, T, ny, nx]


def evaluate_test_set(
    model: HeatTransformer,
    trajectories: Sequence[Trajectory],
    weights: LossWeights = LossWeights(),
    mode: str | None = None,
) -> TestReport:
    """Per-case losses and their mean.

    Block mode scores each case with the full training objective over its whole
    sequence; causal mode scores the rollout MSE over the predicted frames.
    """
    config = model.config
    mode = mode or config.mask_type
    _require_mask(config, mode)
    if not trajectories:
        raise DomainError("empty test set")
    dtype = next(model.parameters()).dtype
    losses, frame_mse, preds = [], [], []
    for traj in trajectories:
        gt = torch.from_numpy(traj.frames[None]).to(dtype)
        cases = CaseBatch.from_cases([traj.case], config.start_predicting_from, traj.record_stride, dtype)
        if mode == "block":
            res = block_predict(model, gt, cases, weights)
        else:
            res = rollout_model(model, gt, cases)
        losses.append(res.loss)
        frame_mse.append(res.frame_mse)
        preds.append(res.prediction[0])
    losses = np.asarray(losses)
    return TestReport(losses, float(np.mean(losses)), np.stack(frame_mse), torch.stack(preds))


def projection_weight_heatmap(model: HeatTransformer) -> np.ndarray:
    """Mean absolute output-projection weight per grid node, shape ``[ny, nx]``."""
    c = model.config
    w = model.output_projection.weight.detach().cpu().numpy().astype(np.float64)  # [ny*nx, d_e]
    return np.abs(w).mean(axis=1).reshape(c.ny, c.nx)
