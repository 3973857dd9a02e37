"""Encoder over the timeless historical query subgraph."""
from __future__ import annotations

import torch
import torch.nn as nn

from .rgcn import EdgeIndex, make_aggregator


class GlobalEncoder(nn.Module):
    """Second R-GCN over the query subgraph plus a per-query sigmoid gate.

    The R-GCN consumes the initial embeddings directly (the subgraph carries
    no time). The gate ``beta = sigmoid(w . (h_g + h_ref))`` scales the
    aggregated row of the query entity; ``h_ref`` is the evolved local
    embedding by default.
    """

    def __init__(self, dim: int, num_layers: int = 2, dropout: float = 0.2, activation: str = "rrelu", aggregator: str = "rgcn"):
        super().__init__()
        self.rgcn = make_aggregator(aggregator, dim, num_layers, activation, dropout)
        self.w6 = nn.Linear(dim, 1)

    def aggregate(self, edges: EdgeIndex, h0: torch.Tensor, r0: torch.Tensor) -> torch.Tensor:
        return self.rgcn(h0, r0, edges)

    def gate(self, h_g: torch.Tensor, h_ref: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.w6(h_g + h_ref))

    def attend(self, h_g: torch.Tensor, h_ref: torch.Tensor, ent: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        rows = h_g[ent]
        beta = self.gate(rows, h_ref[ent])
        return beta * rows, beta
