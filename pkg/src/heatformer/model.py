"""Encoder-only masked Transformer mapping a trajectory and its diffusivity to a trajectory."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .encodings import MaskMatrix, default_scale, make_mask, sinusoidal_pe
from .errors import ConfigurationError, DomainError

ACTIVATIONS = {"gelu": F.gelu, "relu": F.relu}


@dataclass(frozen=True)
class ModelConfig:
    ny: int
    nx: int
    seq_len: int
    embed_dim: int = 64
    num_heads: int = 4
    num_encoder_layers: int = 3
    mlp_dim: int = 128
    start_predicting_from: int = 5
    mask_type: str = "block"
    activation: str = "gelu"

    def __post_init__(self):
        if self.embed_dim < 4 or self.embed_dim % 2:
            raise ConfigurationError(f"embed_dim must be even and >= 4, got {self.embed_dim}")
        if (self.embed_dim // 2) % 2:
            raise ConfigurationError(f"embed_dim/2 must be even for the spatial encodings, got {self.embed_dim}")
        if self.num_heads < 1 or self.embed_dim % self.num_heads:
            raise ConfigurationError(f"embed_dim={self.embed_dim} is not divisible by num_heads={self.num_heads}")
        if not 1 <= self.start_predicting_from <= self.seq_len:
            raise ConfigurationError(
                f"start_predicting_from={self.start_predicting_from} outside [1, seq_len={self.seq_len}]"
            )
        if self.mask_type not in ("block", "causal"):
            raise ConfigurationError(f"unsupported mask type {self.mask_type!r}")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"unsupported activation {self.activation!r}; expected one of {sorted(ACTIVATIONS)}")
        if self.num_encoder_layers < 1 or self.mlp_dim < 1:
            raise ConfigurationError("num_encoder_layers and mlp_dim must be positive")
        if self.ny < 3 or self.nx < 3:
            raise ConfigurationError(f"grid needs at least 3 nodes per axis, got {self.ny}x{self.nx}")

    @property
    def spatial_features(self) -> int:
        return self.embed_dim // 2

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.num_heads

    def mask(self) -> MaskMatrix:
        return make_mask(self.mask_type, self.seq_len, self.start_predicting_from)

    def to_dict(self) -> dict:
        return asdict(self)


# -- attention primitives --------------------------------------------------------


def attention_scores(q: torch.Tensor, k: torch.Tensor) -> torch.Tensor:
    """Scaled dot products ``q_i . k_j / sqrt(d')`` over the last two axes."""
    if q.shape[-1] != k.shape[-1]:
        raise DomainError(f"query width {q.shape[-1]} != key width {k.shape[-1]}")
    return q @ k.transpose(-2, -1) / math.sqrt(q.shape[-1])


def masked_softmax(scores: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
    """Row-wise softmax of ``scores + mask``; rows must keep at least one finite entry."""
    if mask is None:
        return torch.softmax(scores, dim=-1)
    mask = torch.as_tensor(mask, dtype=scores.dtype, device=scores.device)
    if bool(torch.isneginf(mask).all(dim=-1).any()):
        raise DomainError("mask hides every column of at least one row")
    return torch.softmax(scores + mask, dim=-1)


def attention_output(weights: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    """``A_i = sum_j S_ij V_j``."""
    if weights.shape[-1] != v.shape[-2]:
        raise DomainError(f"weights have {weights.shape[-1]} columns but there are {v.shape[-2]} values")
    return weights @ v


class MultiHeadAttention(nn.Module):
    def __init__(self, embed_dim: int, num_heads: int):
        super().__init__()
        if embed_dim % num_heads:
            raise ConfigurationError(f"embed_dim={embed_dim} is not divisible by num_heads={num_heads}")
        self.num_heads = num_heads
        self.query = nn.Linear(embed_dim, embed_dim)
        self.key = nn.Linear(embed_dim, embed_dim)
        self.value = nn.Linear(embed_dim, embed_dim)
        self.out = nn.Linear(embed_dim, embed_dim)

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        *lead, n, d = x.shape
        return x.reshape(*lead, n, self.num_heads, d // self.num_heads).transpose(-3, -2)

    def forward(self, x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        q, k, v = self._split(self.query(x)), self._split(self.key(x)), self._split(self.value(x))
        heads = attention_output(masked_softmax(attention_scores(q, k), mask), v)
        concat = heads.transpose(-3, -2).reshape(x.shape)
        return self.out(concat)


class EncoderLayer(nn.Module):
    """Post-norm block: ``LN(x + MHA(x))`` then ``LN(x1 + FFN(x1))``."""

    def __init__(self, embed_dim: int, num_heads: int, mlp_dim: int, activation: str = "gelu"):
        super().__init__()
        self.attention = MultiHeadAttention(embed_dim, num_heads)
        self.norm1 = nn.LayerNorm(embed_dim)
        self.linear1 = nn.Linear(embed_dim, mlp_dim)
        self.linear2 = nn.Linear(mlp_dim, embed_dim)
        self.norm2 = nn.LayerNorm(embed_dim)
        self.activation = activation

    def forward(self, x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        x = self.norm1(x + self.attention(x, mask))
        ffn = self.linear2(ACTIVATIONS[self.activation](self.linear1(x)))
        return self.norm2(x + ffn)


class HeatTransformer(nn.Module):
    """Masked encoder-only surrogate; input and output are ``[B, T, ny, nx]``.

    Forward order: spatial encodings (y then x) added to each scalar, flatten and
    project to the latent width, add the temporal encoding and the diffusivity
    embedding, run the masked encoder stack, final layer norm, project back to
    the grid.
    """

    def __init__(self, config: ModelConfig, mask: MaskMatrix | None = None):
        super().__init__()
        self.config = config
        c = config
        ds = c.spatial_features
        self.projection_spatial = nn.Linear(c.ny * c.nx * ds, c.embed_dim)
        self.diffusivity_embedding = nn.Linear(1, c.embed_dim)
        self.layers = nn.ModuleList(
            EncoderLayer(c.embed_dim, c.num_heads, c.mlp_dim, c.activation) for _ in range(c.num_encoder_layers)
        )
        self.final_norm = nn.LayerNorm(c.embed_dim)
        self.output_projection = nn.Linear(c.embed_dim, c.ny * c.nx)

        mask = mask if mask is not None else c.mask()
        if mask.entries.shape != (c.seq_len, c.seq_len):
            raise ConfigurationError(f"mask shape {mask.entries.shape} does not match seq_len={c.seq_len}")
        self.mask_matrix = mask
        self.register_buffer("mask", torch.from_numpy(np.array(mask.entries)), persistent=False)
        pe_y = sinusoidal_pe(c.ny, ds, default_scale(ds)).table
        pe_x = sinusoidal_pe(c.nx, ds, default_scale(ds)).table
        pe_t = sinusoidal_pe(c.seq_len, c.embed_dim, default_scale(c.embed_dim)).table
        self.register_buffer("pe_y", torch.from_numpy(np.array(pe_y)), persistent=False)
        self.register_buffer("pe_x", torch.from_numpy(np.array(pe_x)), persistent=False)
        self.register_buffer("pe_t", torch.from_numpy(np.array(pe_t)), persistent=False)

    def embed(self, src: torch.Tensor, alpha: torch.Tensor) -> torch.Tensor:
        c = self.config
        b, t = src.shape[:2]
        x = src.unsqueeze(-1) + self.pe_y[None, None, :, None, :]
        x = x + self.pe_x[None, None, None, :, :]
        x = self.projection_spatial(x.reshape(b, t, c.ny * c.nx * c.spatial_features))
        x = x + self.pe_t[:t]
        x = x + self.diffusivity_embedding(alpha.reshape(b, 1, 1))
        return x

    def forward(self, src: torch.Tensor, alpha: torch.Tensor) -> torch.Tensor:
        c = self.config
        if src.ndim != 4 or src.shape[1:] != (c.seq_len, c.ny, c.nx):
            raise DomainError(f"expected input [B, {c.seq_len}, {c.ny}, {c.nx}], got {tuple(src.shape)}")
        alpha = torch.as_tensor(alpha, dtype=src.dtype, device=src.device)
        if alpha.numel() != src.shape[0]:
            raise DomainError(f"need one diffusivity per batch entry, got {alpha.numel()} for batch {src.shape[0]}")
        x = self.embed(src, alpha)
        mask = self.mask.to(x.dtype)
        for layer in self.layers:
            x = layer(x, mask)
        x = self.output_projection(self.final_norm(x))
        return x.reshape(src.shape)


def init_params(model: nn.Module, seed: int) -> nn.Module:
    """Glorot-uniform weights, zero biases, unit layer-norm gains; deterministic per seed."""
    gen = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, nn.Linear):
                fan_out, fan_in = module.weight.shape
                bound = math.sqrt(6.0 / (fan_in + fan_out))
                w = torch.rand(module.weight.shape, generator=gen, dtype=torch.float64) * (2 * bound) - bound
                module.weight.copy_(w)
                module.bias.zero_()
            elif isinstance(module, nn.LayerNorm):
                module.weight.fill_(1.0)
                module.bias.zero_()
    return model


def build_model(config: ModelConfig, seed: int = 0, dtype: torch.dtype = torch.float64) -> HeatTransformer:
    model = HeatTransformer(config).to(dtype)
    return init_params(model, seed)
