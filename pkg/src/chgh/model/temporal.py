"""Per-skill sequence encoder: lift -> stacked LSTM -> embedding-keyed attention -> fuse."""
from __future__ import annotations

import math

import torch
from torch import nn

from ..errors import DimensionError


def lift_sequence(series: torch.Tensor, lift: nn.Module, min_len: int = 1) -> torch.Tensor:
    """Map a ``(..., T)`` share sequence to ``(..., T, d)`` one timestep at a time."""
    if series.shape[-1] < min_len:
        raise DimensionError(f"sequence length {series.shape[-1]} is below the minimum {min_len}")
    return lift(series.unsqueeze(-1))


def encode_temporal(lifted: torch.Tensor, e: torch.Tensor, lstm: nn.LSTM) -> torch.Tensor:
    """Run ``lstm`` over ``(N, T, d)`` with the first layer's hidden state seeded by ``e`` (N, d).

    Deeper layers and all cell states start at zero.  Returns the top layer's
    hidden states, ``(N, T, d)``.
    """
    if lifted.dim() != 3 or e.shape != (lifted.shape[0], lstm.hidden_size):
        raise DimensionError(f"lifted {tuple(lifted.shape)} and embedding {tuple(e.shape)} disagree")
    h0 = e.new_zeros(lstm.num_layers, e.shape[0], lstm.hidden_size)
    h0 = torch.cat([e.unsqueeze(0), h0[1:]], dim=0)
    c0 = torch.zeros_like(h0)
    out, _ = lstm(lifted, (h0, c0))
    return out


def attention_aggregate(H: torch.Tensor, e: torch.Tensor, heads: int = 1):
    """Softmax attention over timesteps keyed by the skill embedding.

    ``H`` is ``(..., T, d)`` and ``e`` is ``(..., d)``.  With several heads each
    head attends over its own ``d / heads`` slice and the results are
    concatenated.  Returns ``(summary (..., d), weights (..., heads, T))``.
    """
    d = H.shape[-1]
    if e.shape[-1] != d or d % heads:
        raise DimensionError(f"cannot split d={d} into {heads} heads for embedding {tuple(e.shape)}")
    dh = d // heads
    Hh = H.unflatten(-1, (heads, dh))  # (..., T, heads, dh)
    eh = e.unflatten(-1, (heads, dh))  # (..., heads, dh)
    scores = torch.einsum("...thk,...hk->...ht", Hh, eh) / math.sqrt(dh)
    weights = torch.softmax(scores, dim=-1)
    summary = torch.einsum("...ht,...thk->...hk", weights, Hh).flatten(-2)
    return summary, weights


class Fuse(nn.Module):
    """``Linear(ReLU([e || s] W))`` back to ``d``."""

    def __init__(self, d: int, dropout: float = 0.0):
        super().__init__()
        self.proj = nn.Linear(2 * d, d, bias=False)
        self.out = nn.Linear(d, d)
        self.drop = nn.Dropout(dropout)

    def forward(self, e: torch.Tensor, s: torch.Tensor) -> torch.Tensor:
        return self.out(self.drop(torch.relu(self.proj(torch.cat([e, s], dim=-1)))))


def fuse(e: torch.Tensor, s: torch.Tensor, fuser: Fuse) -> torch.Tensor:
    return fuser(e, s)


class TemporalEncoder(nn.Module):
    """Encodes one view (demand or supply); the skill embedding table lives outside."""

    def __init__(self, d: int, layers: int = 3, heads: int = 4, dropout: float = 0.0, min_len: int = 1):
        super().__init__()
        self.d = d
        self.heads = heads
        self.min_len = min_len
        self.lift = nn.Sequential(nn.Linear(1, d), nn.ReLU(), nn.Dropout(dropout), nn.Linear(d, d))
        self.lstm = nn.LSTM(d, d, num_layers=layers, batch_first=True)
        self.fuser = Fuse(d, dropout)

    def forward(self, series: torch.Tensor, E: torch.Tensor, return_attention: bool = False):
        """``series`` is ``(B, K, T)``, ``E`` is ``(K, d)``; returns ``(B, K, d)``."""
        B, K, T = series.shape
        if E.shape != (K, self.d):
            raise DimensionError(f"embedding table {tuple(E.shape)} does not match {K} skills x d={self.d}")
        e = E.unsqueeze(0).expand(B, K, self.d).reshape(B * K, self.d)
        lifted = lift_sequence(series.reshape(B * K, T), self.lift, self.min_len)
        H = encode_temporal(lifted, e, self.lstm)
        s, w = attention_aggregate(H, e, self.heads)
        out = self.fuser(e, s).reshape(B, K, self.d)
        if return_attention:
            return out, w.reshape(B, K, self.heads, T)
        return out


def encode_view(series: torch.Tensor, E: torch.Tensor, encoder: TemporalEncoder) -> torch.Tensor:
    """``(K, T)`` or ``(B, K, T)`` shares to ``(K, d)`` / ``(B, K, d)`` view embeddings."""
    if series.dim() == 2:
        return encoder(series.unsqueeze(0), E)[0]
    return encoder(series, E)
