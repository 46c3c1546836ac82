"""Flat ``key=value`` run configuration shared by every CLI command.

Recognized keys are exactly the field names of :class:`RunConfig`.  Tuples are
comma separated (``beta_range=0.5,1.5``), optional integers accept ``none``,
booleans accept ``true``/``false``.  Unknown keys are rejected.
"""
from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, fields
from pathlib import Path

import torch

from .errors import ConfigurationError, FormatError
from .formats import dump_kv, parse_kv
from .losses import LossWeights
from .model import ModelConfig
from .scenario import ScenarioConfig
from .training import LRSchedule


@dataclass(frozen=True)
class RunConfig:
    # scenario
    mode: str = "base"
    nx: int = 16
    ny: int = 16
    beta_range: tuple[float, float] = (0.5, 1.5)
    segment_length: int = 4
    left_segment_start: typing.Optional[int] = None
    right_segment_start: typing.Optional[int] = None
    dtau_safety: float = 0.9
    seq_len: int = 101
    record_stride: int = 1
    n_cases: int = 100
    fractions: tuple[float, float, float] = (0.7, 0.2, 0.1)
    seeds: tuple[int, int, int] = (1, 2, 3)
    workers: int = 1
    # model
    embed_dim: int = 64
    num_heads: int = 4
    num_encoder_layers: int = 3
    mlp_dim: int = 128
    start_predicting_from: int = 5
    mask_type: str = "block"
    activation: str = "gelu"
    dtype: str = "float64"
    # loss
    lambda_pi: float = 1.0
    lambda_bc: float = 1.0
    lambda_ic: float = 1.0
    eps: float = 1e-8
    # training
    schedule: str = "base"
    epochs: int = 100
    batch_size: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.dtype not in ("float32", "float64"):
            raise ConfigurationError(f"dtype must be float32 or float64, got {self.dtype!r}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigurationError("batch_size and epochs must be positive")
        if self.seq_len < 2 or self.record_stride < 1:
            raise ConfigurationError("seq_len must be >= 2 and record_stride >= 1")
        # Build the derived configs once so inconsistencies surface at load time.
        self.scenario_config()
        self.model_config()
        self.loss_weights()
        self.lr_schedule()

    def scenario_config(self) -> ScenarioConfig:
        return ScenarioConfig(
            mode=self.mode,
            nx=self.nx,
            ny=self.ny,
            beta_range=self.beta_range,
            segment_length=self.segment_length,
            left_segment_start=self.left_segment_start,
            right_segment_start=self.right_segment_start,
            dtau_safety=self.dtau_safety,
        )

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            ny=self.ny,
            nx=self.nx,
            seq_len=self.seq_len,
            embed_dim=self.embed_dim,
            num_heads=self.num_heads,
            num_encoder_layers=self.num_encoder_layers,
            mlp_dim=self.mlp_dim,
            start_predicting_from=self.start_predicting_from,
            mask_type=self.mask_type,
            activation=self.activation,
        )

    def loss_weights(self) -> LossWeights:
        return LossWeights(self.lambda_pi, self.lambda_bc, self.lambda_ic, self.eps)

    def lr_schedule(self) -> LRSchedule:
        """The configured schedule, proportionally rescaled to ``epochs`` when spans differ."""
        return LRSchedule.parse(self.schedule).rescaled(self.epochs)

    @property
    def torch_dtype(self) -> torch.dtype:
        return getattr(torch, self.dtype)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    # -- serialization ---------------------------------------------------------

    def to_text(self) -> str:
        return dump_kv({f.name: getattr(self, f.name) for f in fields(self)})

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "RunConfig":
        raw = parse_kv(text, source)
        hints = typing.get_type_hints(cls)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigurationError(f"{source}: unknown configuration key(s): {', '.join(unknown)}")
        kwargs = {}
        for key, value in raw.items():
            try:
                kwargs[key] = _convert(value, hints[key])
            except ValueError as exc:
                raise ConfigurationError(f"{source}: bad value for {key!r}: {value!r} ({exc})") from exc
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigurationError(f"cannot read configuration {path}: {exc}") from exc
        try:
            return cls.from_text(text, str(path))
        except FormatError as exc:
            raise ConfigurationError(str(exc)) from exc


def _convert(value: str, hint):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin is typing.Union and type(None) in args:
        if value.lower() == "none":
            return None
        inner = next(a for a in args if a is not type(None))
        return _convert(value, inner)
    if origin is tuple:
        parts = [p.strip() for p in value.split(",")]
        if len(parts) != len(args):
            raise ValueError(f"expected {len(args)} comma-separated values")
        return tuple(_convert(p, a) for p, a in zip(parts, args))
    if hint is bool:
        if value.lower() not in ("true", "false"):
            raise ValueError("expected true or false")
        return value.lower() == "true"
    if hint is int:
        return int(value)
    if hint is float:
        return float(value)
    return value
