"""Sinusoidal positional encodings and temporal attention masks."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import ConfigurationError

MaskKind = Literal["block", "causal"]

NEG_INF = float("-inf")


@dataclass(frozen=True, eq=False)
class PositionalEncoding:
    table: np.ndarray  # [L, D]
    dims: int
    scale: float


@dataclass(frozen=True, eq=False)
class MaskMatrix:
    """Additive attention mask: 0 where a column is visible, -inf where hidden."""

    entries: np.ndarray  # [T, T]
    n_visible: int
    kind: MaskKind

    @property
    def visible(self) -> np.ndarray:
        return self.entries == 0.0

    def __eq__(self, other):
        if not isinstance(other, MaskMatrix):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.n_visible == other.n_visible
            and np.array_equal(self.entries, other.entries)
        )


def default_scale(dims: int) -> float:
    return 1.0 / np.sqrt(dims // 2)


def sinusoidal_pe(length: int, dims: int, scale: float = 1.0) -> PositionalEncoding:
    """Interleaved table: ``sin(pos / 10000**(i/D))`` at even ``i``, the matching cosine at ``i+1``."""
    if dims < 2 or dims % 2:
        raise ConfigurationError(f"positional encoding width must be even and >= 2, got {dims}")
    if length < 1:
        raise ConfigurationError(f"positional encoding length must be >= 1, got {length}")
    pos = np.arange(length, dtype=np.float64)[:, None]
    even = np.arange(0, dims, 2, dtype=np.float64)
    angle = pos / np.power(10000.0, even / dims)
    table = np.empty((length, dims))
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle)
    table *= scale
    table.setflags(write=False)
    return PositionalEncoding(table=table, dims=dims, scale=float(scale))


def _check_visible(seq_len: int, n_visible: int):
    if not 1 <= n_visible <= seq_len:
        raise ConfigurationError(f"n_visible must satisfy 1 <= n_visible <= seq_len={seq_len}, got {n_visible}")


def block_mask(seq_len: int, n_visible: int) -> MaskMatrix:
    """Every query sees exactly the first ``n_visible`` frames."""
    _check_visible(seq_len, n_visible)
    m = np.full((seq_len, seq_len), NEG_INF)
    m[:, :n_visible] = 0.0
    m.setflags(write=False)
    return MaskMatrix(entries=m, n_visible=n_visible, kind="block")


def causal_mask(seq_len: int, n_visible: int) -> MaskMatrix:
    """Query ``i`` sees the first ``n_visible`` frames and every frame strictly before ``i``."""
    _check_visible(seq_len, n_visible)
    m = np.triu(np.full((seq_len, seq_len), NEG_INF), k=0)
    m[:, :n_visible] = 0.0
    m.setflags(write=False)
    return MaskMatrix(entries=m, n_visible=n_visible, kind="causal")


def make_mask(kind: str, seq_len: int, n_visible: int) -> MaskMatrix:
    if kind == "block":
        return block_mask(seq_len, n_visible)
    if kind == "causal":
        return causal_mask(seq_len, n_visible)
    raise ConfigurationError(f"unsupported mask type {kind!r}; expected 'block' or 'causal'")
