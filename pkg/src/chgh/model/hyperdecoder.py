"""Per-skill decoder weights generated from the skill-gap history.

The generated decoder is ``d -> d -> m`` with a ReLU hidden layer; its flat
parameter vector is laid out as ``[W1 (d*d), b1 (d), W2 (d*m), b2 (m)]``
with weights stored input-major (``x @ W``).
"""
from __future__ import annotations

import torch
from torch import nn

from ..errors import DimensionError, NumericError


def theta_size(d: int, m: int) -> int:
    return d * d + d + d * m + m


def aggregate_representations(E_tilde: torch.Tensor, E_hat: torch.Tensor):
    """``E~ + E^`` split into its supply and demand halves."""
    if E_tilde.shape != E_hat.shape:
        raise DimensionError(f"{tuple(E_tilde.shape)} vs {tuple(E_hat.shape)}")
    E_bar = E_tilde + E_hat
    K = E_bar.shape[-2] // 2
    return E_bar[..., :K, :], E_bar[..., K:, :]


def standardize_condition(c: torch.Tensor, eps: float = 1e-12) -> torch.Tensor:
    """Zero mean, unit (population) variance over the last axis; constant vectors map to 0."""
    centered = c - c.mean(dim=-1, keepdim=True)
    var = (centered * centered).mean(dim=-1, keepdim=True)
    degenerate = var <= eps
    scale = torch.where(degenerate, torch.ones_like(var), var).rsqrt()
    return torch.where(degenerate, torch.zeros_like(centered), centered * scale)


def encode_gap_condition(gaps: torch.Tensor, e: torch.Tensor, lstm: nn.LSTM, min_len: int = 1) -> torch.Tensor:
    """Final LSTM state over ``gaps`` ``(N, T)`` seeded by ``e`` ``(N, d)``, then standardized."""
    if gaps.shape[-1] < min_len:
        raise DimensionError(f"gap sequence length {gaps.shape[-1]} is below the minimum {min_len}")
    h0 = e.unsqueeze(0).expand(lstm.num_layers, *e.shape).contiguous()
    if lstm.num_layers > 1:
        h0 = torch.cat([h0[:1], torch.zeros_like(h0[1:])], dim=0)
    out, _ = lstm(gaps.unsqueeze(-1), (h0, torch.zeros_like(h0)))
    return standardize_condition(out[:, -1, :])


def generate_decoder_weights(c: torch.Tensor, hypernet: nn.Module) -> torch.Tensor:
    return hypernet(c)


def split_theta(theta: torch.Tensor, d: int, m: int):
    if theta.shape[-1] != theta_size(d, m):
        raise DimensionError(f"theta has {theta.shape[-1]} entries, expected {theta_size(d, m)}")
    W1, b1, W2, b2 = torch.split(theta, [d * d, d, d * m, m], dim=-1)
    return W1.unflatten(-1, (d, d)), b1, W2.unflatten(-1, (d, m)), b2


def generated_mlp(x: torch.Tensor, theta: torch.Tensor, m: int) -> torch.Tensor:
    """Apply each row's own generated decoder: ``x`` is ``(…, d)``, ``theta`` ``(…, P)``."""
    W1, b1, W2, b2 = split_theta(theta, x.shape[-1], m)
    h = torch.relu(torch.einsum("...i,...ij->...j", x, W1) + b1)
    return torch.einsum("...i,...ij->...j", h, W2) + b2


def supportive_mlp(d: int, m: int, dropout: float = 0.0) -> nn.Sequential:
    return nn.Sequential(
        nn.Linear(d, d), nn.ReLU(), nn.Dropout(dropout),
        nn.Linear(d, d), nn.ReLU(), nn.Dropout(dropout),
        nn.Linear(d, m),
    )


def decode_joint(e_bar_s, e_bar_d, theta, support_s, support_d, m: int, return_logits: bool = False):
    """Softmax of generated-decoder logits plus the per-view supportive decoder.

    The same ``theta`` serves both views.  ``theta=None`` drops the generated
    term (plain decoder).
    """
    logits_s = support_s(e_bar_s)
    logits_d = support_d(e_bar_d)
    if theta is not None:
        logits_s = logits_s + generated_mlp(e_bar_s, theta, m)
        logits_d = logits_d + generated_mlp(e_bar_d, theta, m)
    if not (torch.isfinite(logits_s).all() and torch.isfinite(logits_d).all()):
        raise NumericError("non-finite decoder logits")
    probs = torch.softmax(logits_s, dim=-1), torch.softmax(logits_d, dim=-1)
    if return_logits:
        return probs, (logits_s, logits_d)
    return probs


class HyperDecoder(nn.Module):
    def __init__(self, d: int, m: int, dropout: float = 0.0, min_len: int = 1, conditioned: bool = True):
        super().__init__()
        self.d, self.m, self.min_len = d, m, min_len
        self.conditioned = conditioned
        self.support_s = supportive_mlp(d, m, dropout)
        self.support_d = supportive_mlp(d, m, dropout)
        if conditioned:
            self.gap_lstm = nn.LSTM(1, d, num_layers=1, batch_first=True)
            self.hypernet = nn.Sequential(nn.Linear(d, d), nn.ReLU(), nn.Dropout(dropout), nn.Linear(d, theta_size(d, m)))
            # small generated weights at start so the supportive decoder dominates early training
            with torch.no_grad():
                self.hypernet[-1].weight.mul_(0.1)
                self.hypernet[-1].bias.zero_()

    def hypernet_parameters(self):
        if not self.conditioned:
            return []
        return list(self.gap_lstm.parameters()) + list(self.hypernet.parameters())

    def forward(self, e_bar_s, e_bar_d, gaps, E):
        """``e_bar_*`` ``(B, K, d)``, ``gaps`` ``(B, K, T)``, ``E`` ``(K, d)``."""
        theta = None
        if self.conditioned:
            B, K, T = gaps.shape
            e = E.unsqueeze(0).expand(B, K, self.d).reshape(B * K, self.d)
            cond = encode_gap_condition(gaps.reshape(B * K, T), e, self.gap_lstm, self.min_len)
            theta = generate_decoder_weights(cond, self.hypernet).reshape(B, K, -1)
        (y_s, y_d), logits = decode_joint(e_bar_s, e_bar_d, theta, self.support_s, self.support_d, self.m,
                                          return_logits=True)
        return y_s, y_d, theta, logits
