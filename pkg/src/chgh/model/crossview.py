"""Learned cross-view adjacency and two-layer graph propagation.

Nodes are stacked supply-first: rows ``0..K-1`` are supply-view skills and
rows ``K..2K-1`` demand-view skills.
"""
from __future__ import annotations

import torch
from torch import nn

from ..errors import ConfigError, DimensionError

MODES = ("static", "adaptive", "cross")


def learn_adaptive_adjacency(E_S, E_D, alpha, beta, delta: float) -> torch.Tensor:
    """``ReLU(softmax_rows(ReLU(XA XB^T - XB XA^T)) - delta)`` over the stacked views.

    Inputs may carry a leading batch dimension.  The result is ``(…, 2K, 2K)``.
    """
    if delta < 0:
        raise ConfigError(f"delta must be >= 0, got {delta}")
    if E_S.shape != E_D.shape:
        raise DimensionError(f"view embeddings differ: {tuple(E_S.shape)} vs {tuple(E_D.shape)}")
    X = torch.cat([E_S, E_D], dim=-2)
    return _antisymmetric_adjacency(X, alpha, beta, delta)


def _antisymmetric_adjacency(X, alpha, beta, delta: float) -> torch.Tensor:
    XA = torch.tanh(alpha * X)
    XB = torch.tanh(beta * X)
    raw = XA @ XB.transpose(-1, -2) - XB @ XA.transpose(-1, -2)
    return torch.relu(torch.softmax(torch.relu(raw), dim=-1) - delta)


def block_diag_views(A_S: torch.Tensor, A_D: torch.Tensor) -> torch.Tensor:
    """``[[A_S, 0], [0, A_D]]`` for ``(…, K, K)`` inputs."""
    if A_S.shape != A_D.shape or A_S.shape[-1] != A_S.shape[-2]:
        raise DimensionError(f"per-view adjacencies must be equal square shapes, got {tuple(A_S.shape)}, {tuple(A_D.shape)}")
    zero = torch.zeros_like(A_S)
    top = torch.cat([A_S, zero], dim=-1)
    bottom = torch.cat([zero, A_D], dim=-1)
    return torch.cat([top, bottom], dim=-2)


def row_normalize(A: torch.Tensor) -> torch.Tensor:
    """``D^-1 A``; all-zero rows stay zero."""
    deg = A.sum(dim=-1, keepdim=True)
    return torch.where(deg > 0, A / torch.where(deg > 0, deg, torch.ones_like(deg)), torch.zeros_like(A))


def cross_view_augment(E_S, E_D, A_p, A_in, layers, activation=torch.relu):
    """Propagate ``A_p X W_p + A_in X W_in`` once per ``(W_p, W_in)`` pair in ``layers``.

    ``A_p`` may be ``None`` (no learned adjacency).  ``activation`` is applied
    between layers, not after the last one.  Returns ``(E~_S, E~_D)``.
    """
    K = E_S.shape[-2]
    X = torch.cat([E_S, E_D], dim=-2)
    for M in (A_p, A_in):
        if M is not None and M.shape[-2:] != (2 * K, 2 * K):
            raise DimensionError(f"adjacency {tuple(M.shape)} does not match {2 * K} nodes")
    for i, (W_p, W_in) in enumerate(layers):
        if i:
            X = activation(X)
        out = A_in @ (X @ W_in)
        if A_p is not None and W_p is not None:
            out = out + A_p @ (X @ W_p)
        X = out
    return X[..., :K, :], X[..., K:, :]


class CrossViewEncoder(nn.Module):
    """Graph encoder in one of three wirings.

    ``static``: co-occurrence graphs only.  ``adaptive``: adds a learned
    adjacency within each view.  ``cross``: the learned adjacency spans both
    views.
    """

    def __init__(self, d: int, A_S, A_D, mode: str = "cross", delta: float = 0.01, n_layers: int = 2,
                 dropout: float = 0.0, normalize: bool = True):
        super().__init__()
        if mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        self.mode = mode
        self.delta = delta
        self.normalize = normalize
        # raw co-occurrence graphs; row-normalized at propagation time
        self.register_buffer("A_in", block_diag_views(torch.as_tensor(A_S), torch.as_tensor(A_D)))
        self.W_in = nn.ParameterList([nn.Parameter(torch.empty(d, d)) for _ in range(n_layers)])
        if mode == "static":
            self.W_p = None
        else:
            self.W_p = nn.ParameterList([nn.Parameter(torch.empty(d, d)) for _ in range(n_layers)])
            # alpha == beta makes X_A == X_B and the score matrix vanishes identically
            self.alpha = nn.Parameter(torch.tensor(1.0))
            self.beta = nn.Parameter(torch.tensor(2.0))
        self.drop = nn.Dropout(dropout)
        self.reset_parameters()

    def reset_parameters(self):
        for W in self.W_in:
            nn.init.xavier_uniform_(W)
        if self.W_p is not None:
            for W in self.W_p:
                nn.init.xavier_uniform_(W)

    def adjacency(self, E_S, E_D):
        if self.mode == "static":
            return None
        if self.mode == "cross":
            return learn_adaptive_adjacency(E_S, E_D, self.alpha, self.beta, self.delta)
        return block_diag_views(
            _antisymmetric_adjacency(E_S, self.alpha, self.beta, self.delta),
            _antisymmetric_adjacency(E_D, self.alpha, self.beta, self.delta),
        )

    def forward(self, E_S, E_D):
        A_p = self.adjacency(E_S, E_D)
        W_p = list(self.W_p) if self.W_p is not None else [None] * len(self.W_in)
        act = lambda x: self.drop(torch.relu(x))
        A_in = row_normalize(self.A_in) if self.normalize else self.A_in
        E_S_t, E_D_t = cross_view_augment(E_S, E_D, A_p, A_in, list(zip(W_p, self.W_in)), act)
        return E_S_t, E_D_t, A_p
