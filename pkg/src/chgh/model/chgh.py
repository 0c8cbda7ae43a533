"""The full model and its ablation variants."""
from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from ..config import ModelConfig
from .crossview import CrossViewEncoder
from .hierarchical import HierarchicalEncoder
from .hyperdecoder import HyperDecoder, aggregate_representations
from .temporal import TemporalEncoder

# which blocks each ablation variant switches on
VARIANT_WIRING = {
    "static": dict(graph="static", hierarchical=False, hyper=False),
    "adaptive": dict(graph="adaptive", hierarchical=False, hyper=False),
    "cge": dict(graph="cross", hierarchical=False, hyper=False),
    "hge": dict(graph="cross", hierarchical=True, hyper=False),
    "full": dict(graph="cross", hierarchical=True, hyper=True),
}


@dataclass
class ModelOutput:
    y_s: torch.Tensor  # (B, K, m)
    y_d: torch.Tensor
    S: torch.Tensor | None  # (B, 2K, c)
    A_p: torch.Tensor | None  # (B, 2K, 2K)
    theta: torch.Tensor | None  # (B, K, P)
    E_tilde: torch.Tensor  # (B, 2K, d)
    E_hat: torch.Tensor  # (B, 2K, d)
    logits_s: torch.Tensor | None = None
    logits_d: torch.Tensor | None = None


class CHGH(nn.Module):
    def __init__(self, config: ModelConfig, A_S, A_D):
        super().__init__()
        A_S = torch.as_tensor(A_S, dtype=torch.get_default_dtype())
        A_D = torch.as_tensor(A_D, dtype=torch.get_default_dtype())
        K = A_S.shape[0]
        d = config.d
        wiring = VARIANT_WIRING[config.variant]
        self.config = config
        self.n_skills = K
        self.n_clusters = config.clusters_for(K)

        bound = 1 / math.sqrt(d)
        self.E = nn.Parameter(torch.empty(K, d).uniform_(-bound, bound))
        if config.shared_embedding:
            self.E_D = None
        else:
            self.E_D = nn.Parameter(torch.empty(K, d).uniform_(-bound, bound))
        enc = dict(layers=config.recurrent_layers, heads=config.heads, dropout=config.dropout, min_len=config.min_seq_len)
        self.enc_s = TemporalEncoder(d, **enc)
        self.enc_d = TemporalEncoder(d, **enc)
        self.graph = CrossViewEncoder(d, A_S, A_D, mode=wiring["graph"], delta=config.delta, dropout=config.dropout)
        self.hier = HierarchicalEncoder(d, self.n_clusters, config.cluster_pooling) if wiring["hierarchical"] else None
        self.decoder = HyperDecoder(d, config.n_classes, config.dropout, config.min_seq_len, conditioned=wiring["hyper"])

    def embedding_tables(self):
        return self.E, (self.E if self.E_D is None else self.E_D)

    def forward(self, supply, demand, gap) -> ModelOutput:
        """All inputs are ``(B, K, T)`` (or ``(K, T)``, which gets a batch axis of 1)."""
        if supply.dim() == 2:
            supply, demand, gap = supply.unsqueeze(0), demand.unsqueeze(0), gap.unsqueeze(0)
        E_sup, E_dem = self.embedding_tables()
        E_S = self.enc_s(supply, E_sup)
        E_D = self.enc_d(demand, E_dem)
        Et_S, Et_D, A_p = self.graph(E_S, E_D)
        E_tilde = torch.cat([Et_S, Et_D], dim=-2)
        S = None
        if self.hier is not None:
            E_hat, S, _ = self.hier(E_tilde)
        else:
            E_hat = torch.zeros_like(E_tilde)
        e_bar_s, e_bar_d = aggregate_representations(E_tilde, E_hat)
        y_s, y_d, theta, (l_s, l_d) = self.decoder(e_bar_s, e_bar_d, gap, E_sup)
        return ModelOutput(y_s, y_d, S, A_p, theta, E_tilde, E_hat, l_s, l_d)

    def param_groups(self):
        """``(base, hyper)`` parameter lists; the hyper group gets its own learning-rate multiplier."""
        hyper = self.decoder.hypernet_parameters()
        ids = {id(p) for p in hyper}
        base = [p for p in self.parameters() if id(p) not in ids]
        return base, hyper

    def named_parameter_groups(self) -> dict[str, list[tuple[str, nn.Parameter]]]:
        """Parameters bucketed by top-level block (for gradient-check reports)."""
        groups: dict[str, list] = {}
        for name, p in self.named_parameters():
            head = name.split(".")[0]
            if head == "decoder":
                head = "hypernet" if name.startswith(("decoder.gap_lstm", "decoder.hypernet")) else "support"
            groups.setdefault(head, []).append((name, p))
        return groups
