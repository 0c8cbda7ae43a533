"""Soft trend clusters over skill-view nodes, pooled and attended back."""
from __future__ import annotations

import math

import torch
from torch import nn

from ..errors import DimensionError

_LOG_FLOOR = 1e-12


def assign_clusters(E_tilde: torch.Tensor, W_assign: torch.Tensor) -> torch.Tensor:
    """Row-wise softmax of ``E~ W^T``; ``W_assign`` is ``(c, d)``."""
    return torch.softmax(E_tilde @ W_assign.transpose(-1, -2), dim=-1)


def pool_clusters(S: torch.Tensor, E_tilde: torch.Tensor, mean: bool = False) -> torch.Tensor:
    """Cluster representations ``S^T E~``, shape ``(…, c, d)``.

    With ``mean=True`` each cluster row is divided by its assignment mass
    (column sum of ``S``), giving a weighted mean instead of a weighted sum.
    """
    if S.shape[-2] != E_tilde.shape[-2]:
        raise DimensionError(f"assignment {tuple(S.shape)} vs embeddings {tuple(E_tilde.shape)}")
    X_h = S.transpose(-1, -2) @ E_tilde
    if mean:
        X_h = X_h / S.sum(dim=-2).clamp_min(_LOG_FLOOR).unsqueeze(-1)
    return X_h


def hierarchical_augment(E_tilde: torch.Tensor, X_h: torch.Tensor) -> torch.Tensor:
    """Each node attends over the cluster rows: ``softmax(E~ X_h^T / sqrt(d)) X_h``."""
    d = E_tilde.shape[-1]
    if X_h.shape[-1] != d:
        raise DimensionError(f"cluster width {X_h.shape[-1]} != d={d}")
    attn = torch.softmax(E_tilde @ X_h.transpose(-1, -2) / math.sqrt(d), dim=-1)
    return attn @ X_h


def cluster_entropy_loss(S: torch.Tensor, check: bool = True) -> torch.Tensor:
    """Mean row entropy of the assignment matrix (natural log)."""
    if check:
        err = (S.detach().sum(dim=-1) - 1).abs().max()
        if err > 1e-4:
            raise ValueError(f"assignment rows are not stochastic (max deviation {float(err):.3g})")
    ent = -(S * torch.log(S.clamp_min(_LOG_FLOOR))).sum(dim=-1)
    return ent.mean()


class HierarchicalEncoder(nn.Module):
    def __init__(self, d: int, n_clusters: int, pooling: str = "mean"):
        super().__init__()
        if pooling not in ("sum", "mean"):
            raise ValueError(f"pooling must be 'sum' or 'mean', got {pooling!r}")
        self.pooling = pooling
        self.W_assign = nn.Parameter(torch.empty(n_clusters, d))
        nn.init.xavier_uniform_(self.W_assign)

    def forward(self, E_tilde: torch.Tensor):
        """Returns ``(E_hat, S, X_h)``."""
        S = assign_clusters(E_tilde, self.W_assign)
        X_h = pool_clusters(S, E_tilde, mean=self.pooling == "mean")
        return hierarchical_augment(E_tilde, X_h), S, X_h
