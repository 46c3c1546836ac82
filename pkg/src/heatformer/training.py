"""Epoch-driven training with piecewise-constant learning-rate schedules."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .errors import ConfigurationError, DomainError, FormatError, NumericalError
from .fdsolver import Trajectory
from .formats import dataclass_to_kv, read_checkpoint, write_checkpoint
from .losses import CaseBatch, LossBreakdown, LossWeights, breakdown, loss_terms
from .model import HeatTransformer, ModelConfig
from .scenario import ScenarioConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LRSchedule:
    """Inclusive ``(first_epoch, last_epoch, rate)`` rows covering ``1..total_epochs``."""

    rows: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        expected = 1
        for first, last, rate in self.rows:
            if first != expected or last < first:
                raise ConfigurationError(f"schedule rows must tile epochs contiguously from 1; bad row {(first, last, rate)}")
            if rate < 0:
                raise ConfigurationError(f"negative learning rate in row {(first, last, rate)}")
            expected = last + 1
        if not self.rows:
            raise ConfigurationError("empty learning-rate schedule")

    @property
    def total_epochs(self) -> int:
        return self.rows[-1][1]

    def rescaled(self, total_epochs: int) -> "LRSchedule":
        """Stretch or compress the row boundaries proportionally to ``total_epochs``.

        Every row keeps at least one epoch, so ``total_epochs`` must be at least
        the number of rows.
        """
        if total_epochs == self.total_epochs:
            return self
        if total_epochs < len(self.rows):
            raise ConfigurationError(f"cannot fit {len(self.rows)} schedule rows into {total_epochs} epochs")
        factor = total_epochs / self.total_epochs
        rows, first = [], 1
        for k, (_, last, rate) in enumerate(self.rows):
            remaining = len(self.rows) - k - 1
            end = int(round(last * factor))
            end = max(end, first)
            end = min(end, total_epochs - remaining)
            if k == len(self.rows) - 1:
                end = total_epochs
            rows.append((first, end, rate))
            first = end + 1
        return LRSchedule(tuple(rows))

    def to_string(self) -> str:
        return ";".join(f"{a}-{b}:{r!r}" for a, b, r in self.rows)

    @classmethod
    def parse(cls, text: str) -> "LRSchedule":
        """Parse ``"base"``, ``"ch2"`` or explicit rows like ``"1-1:0;2-30:1e-3"``."""
        text = text.strip()
        if text in NAMED_SCHEDULES:
            return NAMED_SCHEDULES[text]
        rows = []
        try:
            for part in filter(None, (p.strip() for p in text.split(";"))):
                span, rate = part.split(":")
                first, _, last = span.partition("-")
                rows.append((int(first), int(last or first), float(rate)))
        except ValueError as exc:
            raise ConfigurationError(f"cannot parse learning-rate schedule {text!r}") from exc
        return cls(tuple(rows))


BASE_SCHEDULE = LRSchedule(
    (
        (1, 1, 0.0),
        (2, 2, 1e-5),
        (3, 3, 1e-4),
        (4, 4, 5e-4),
        (5, 30, 1e-3),
        (31, 40, 5e-4),
        (41, 100, 1e-4),
    )
)

# Epochs 5-40 have no row of their own; they are filled with 5e-4.
CH2_SCHEDULE = LRSchedule(
    (
        (1, 1, 0.0),
        (2, 2, 1e-5),
        (3, 3, 1e-4),
        (4, 4, 5e-4),
        (5, 40, 5e-4),
        (41, 100, 1e-4),
        (101, 200, 5e-5),
        (201, 300, 1e-5),
    )
)

NAMED_SCHEDULES = {"base": BASE_SCHEDULE, "ch2": CH2_SCHEDULE}


def lr_at_epoch(schedule: LRSchedule, epoch: int) -> float:
    for first, last, rate in schedule.rows:
        if first <= epoch <= last:
            return rate
    raise ConfigurationError(f"epoch {epoch} outside schedule domain 1..{schedule.total_epochs}")


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train: LossBreakdown
    validation: LossBreakdown | None
    wall_time: float


@dataclass
class TrainingHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def column(self, split: str, component: str) -> np.ndarray:
        return np.array([getattr(getattr(r, split), component) for r in self.records])

    def write_csv(self, path: str | Path) -> None:
        comps = ("mse", "physics", "boundary", "initial", "total")
        header = ["epoch", "lr"] + [f"train_{c}" for c in comps] + [f"val_{c}" for c in comps] + ["wall_time"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in self.records:
                val = [getattr(r.validation, c) for c in comps] if r.validation else [float("nan")] * len(comps)
                row = [r.epoch, r.lr] + [getattr(r.train, c) for c in comps] + val + [r.wall_time]
                w.writerow([v if isinstance(v, int) else f"{v:.9g}" for v in row])


@dataclass(eq=False)
class TensorData:
    """A list of trajectories stacked into tensors for batching."""

    frames: torch.Tensor  # [N, T, ny, nx]
    cases: CaseBatch

    @classmethod
    def from_trajectories(cls, trajectories: Sequence[Trajectory], n_visible: int,
                          dtype: torch.dtype = torch.float64) -> "TensorData":
        if not trajectories:
            raise DomainError("empty trajectory list")
        stride = trajectories[0].record_stride
        if any(t.record_stride != stride for t in trajectories):
            raise DomainError("trajectories in one set must share record_stride")
        frames = torch.from_numpy(np.stack([t.frames for t in trajectories])).to(dtype)
        cases = CaseBatch.from_cases([t.case for t in trajectories], n_visible, stride, dtype)
        return cls(frames=frames, cases=cases)

    def __len__(self):
        return self.frames.shape[0]

    def batches(self, batch_size: int, order: np.ndarray | None = None):
        if batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {batch_size}")
        order = np.arange(len(self)) if order is None else order
        for start in range(0, len(self), batch_size):
            idx = torch.from_numpy(np.asarray(order[start : start + batch_size], dtype=np.int64))
            yield self.frames[idx], self.cases.select(idx)


def _as_tensor_data(data, n_visible: int, dtype) -> TensorData:
    if isinstance(data, TensorData):
        return data
    return TensorData.from_trajectories(data, n_visible, dtype)


def _model_dtype(model: torch.nn.Module) -> torch.dtype:
    return next(model.parameters()).dtype


def _check_compatible(model: HeatTransformer, data: TensorData):
    c = model.config
    if tuple(data.frames.shape[1:]) != (c.seq_len, c.ny, c.nx):
        raise DomainError(
            f"data frames {tuple(data.frames.shape[1:])} do not match model (seq_len={c.seq_len}, ny={c.ny}, nx={c.nx})"
        )


@torch.no_grad()
def validate(model: HeatTransformer, data, weights: LossWeights, batch_size: int) -> LossBreakdown:
    """Mean of per-batch loss breakdowns; never touches the parameters."""
    data = _as_tensor_data(data, model.config.start_predicting_from, _model_dtype(model))
    _check_compatible(model, data)
    out = []
    for frames, cases in data.batches(batch_size):
        pred = model(frames, cases.beta)
        out.append(breakdown(loss_terms(pred, frames, cases, weights)))
    return LossBreakdown.mean(out)


def _check_finite(terms: dict[str, torch.Tensor], epoch: int, batch: int):
    values = {k: float(v.detach()) for k, v in terms.items()}
    if not all(np.isfinite(v) for v in values.values()):
        detail = ", ".join(f"{k}={v:.6g}" for k, v in values.items())
        raise NumericalError(f"non-finite loss at epoch {epoch}, batch {batch}: {detail}")


def train(
    model: HeatTransformer,
    train_data,
    val_data=None,
    weights: LossWeights = LossWeights(),
    schedule: LRSchedule = BASE_SCHEDULE,
    batch_size: int = 4,
    epochs: int | None = None,
    seed: int = 0,
    callback=None,
) -> TrainingHistory:
    """Train ``model`` in place with Adam; returns the per-epoch history.

    Each epoch shuffles the training set with a seeded generator, takes one
    optimizer step per batch at the epoch's scheduled rate (no step at all when
    the rate is zero), then evaluates the validation set without updates.
    """
    epochs = schedule.total_epochs if epochs is None else epochs
    if epochs > schedule.total_epochs:
        raise ConfigurationError(f"{epochs} epochs requested but schedule covers {schedule.total_epochs}")
    dtype = _model_dtype(model)
    n_visible = model.config.start_predicting_from
    train_data = _as_tensor_data(train_data, n_visible, dtype)
    _check_compatible(model, train_data)
    if val_data is not None:
        val_data = _as_tensor_data(val_data, n_visible, dtype)
        _check_compatible(model, val_data)

    rng = np.random.default_rng(seed)
    opt = torch.optim.Adam(model.parameters(), lr=0.0, betas=(0.9, 0.999), eps=1e-8)
    history = TrainingHistory()
    for epoch in range(1, epochs + 1):
        t0 = time.perf_counter()
        lr = lr_at_epoch(schedule, epoch)
        for group in opt.param_groups:
            group["lr"] = lr
        model.train()
        order = rng.permutation(len(train_data))
        parts = []
        for b, (frames, cases) in enumerate(train_data.batches(batch_size, order)):
            if lr > 0:
                opt.zero_grad(set_to_none=True)
                terms = loss_terms(model(frames, cases.beta), frames, cases, weights)
                _check_finite(terms, epoch, b)
                terms["total"].backward()
                opt.step()
            else:
                with torch.no_grad():
                    terms = loss_terms(model(frames, cases.beta), frames, cases, weights)
                _check_finite(terms, epoch, b)
            parts.append(breakdown(terms))
        model.eval()
        val = validate(model, val_data, weights, batch_size) if val_data is not None else None
        record = EpochRecord(epoch, lr, LossBreakdown.mean(parts), val, time.perf_counter() - t0)
        history.records.append(record)
        log.info(
            "epoch %d lr %.3g train %.4g%s", epoch, lr, record.train.total,
            f" val {val.total:.4g}" if val else "",
        )
        if callback is not None:
            callback(record)
    return history


def param_arrays(model: torch.nn.Module) -> list[tuple[str, np.ndarray]]:
    return [(name, t.detach().cpu().numpy()) for name, t in model.state_dict().items()]


def save_checkpoint(path: str | Path, model: HeatTransformer, scenario: ScenarioConfig | None = None,
                    extra: dict | None = None) -> None:
    c = model.config
    config = dataclass_to_kv(c, "model.")
    if scenario is not None:
        config.update(dataclass_to_kv(scenario, "scenario."))
    config.update(extra or {})
    write_checkpoint(path, param_arrays(model), config, c.ny, c.nx, c.seq_len)


_INT_FIELDS = {"ny", "nx", "seq_len", "embed_dim", "num_heads", "num_encoder_layers", "mlp_dim", "start_predicting_from"}


def _model_config_from_kv(config: dict[str, str]) -> ModelConfig:
    kwargs = {}
    for key, value in config.items():
        if not key.startswith("model."):
            continue
        name = key[len("model."):]
        kwargs[name] = int(value) if name in _INT_FIELDS else value
    try:
        return ModelConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"checkpoint model configuration is invalid: {exc}") from exc


def load_checkpoint(path: str | Path, expect_grid: tuple[int, int] | None = None,
                    expect_seq_len: int | None = None) -> tuple[HeatTransformer, dict[str, str]]:
    """Rebuild the model from a checkpoint; returns ``(model, raw config)``."""
    arrays, config, (ny, nx, seq_len) = read_checkpoint(path)
    mc = _model_config_from_kv(config)
    if (mc.ny, mc.nx, mc.seq_len) != (ny, nx, seq_len):
        raise FormatError(f"{path}: dimension header ({ny}, {nx}, {seq_len}) disagrees with the config block")
    if expect_grid is not None and tuple(expect_grid) != (ny, nx):
        raise FormatError(f"{path}: checkpoint grid {ny}x{nx} does not match requested {expect_grid[0]}x{expect_grid[1]}")
    if expect_seq_len is not None and expect_seq_len != seq_len:
        raise FormatError(f"{path}: checkpoint seq_len {seq_len} does not match requested {expect_seq_len}")
    dtypes = {a.dtype for a in arrays.values()}
    if len(dtypes) != 1:
        raise FormatError(f"{path}: mixed parameter dtypes {sorted(map(str, dtypes))}")
    model = HeatTransformer(mc).to(torch.from_numpy(next(iter(arrays.values()))).dtype)
    expected = model.state_dict()
    if list(arrays) != list(expected):
        missing = sorted(set(expected) - set(arrays))
        unexpected = sorted(set(arrays) - set(expected))
        raise FormatError(f"{path}: parameter names differ (missing {missing}, unexpected {unexpected})")
    for name, arr in arrays.items():
        if tuple(arr.shape) != tuple(expected[name].shape):
            raise FormatError(f"{path}: parameter {name!r} has shape {arr.shape}, expected {tuple(expected[name].shape)}")
    model.load_state_dict({k: torch.from_numpy(v) for k, v in arrays.items()})
    model.eval()
    return model, config


def scenario_from_kv(config: dict[str, str]) -> ScenarioConfig | None:
    keys = {k[len("scenario."):]: v for k, v in config.items() if k.startswith("scenario.")}
    if not keys:
        return None
    def opt_int(v):
        return None if v == "none" else int(v)
    try:
        return ScenarioConfig(
            mode=keys["mode"],
            nx=int(keys["nx"]),
            ny=int(keys["ny"]),
            beta_range=tuple(float(x) for x in keys["beta_range"].split(",")),
            segment_length=int(keys["segment_length"]),
            left_segment_start=opt_int(keys["left_segment_start"]),
            right_segment_start=opt_int(keys["right_segment_start"]),
            dtau_safety=float(keys["dtau_safety"]),
        )
    except (KeyError, ValueError) as exc:
        raise FormatError(f"checkpoint scenario configuration is invalid: {exc}") from exc
