"""Relational graph convolution used by both the local and global encoders.

Each layer computes, for every entity ``o``::

    h_o' = act( 1/c_o * sum_{(s, r) -> o} W1 (h_s + r) + W2 h_o )

with ``c_o`` the in-degree of ``o``. Isolated entities receive only the
self-loop term.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
import torch
import torch.nn as nn


class EdgeIndex(NamedTuple):
    src: torch.Tensor
    rel: torch.Tensor
    dst: torch.Tensor

    @classmethod
    def from_triples(cls, triples, device=None) -> "EdgeIndex":
        arr = torch.as_tensor(np.asarray(triples, dtype=np.int64).reshape(-1, 3), device=device)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2])

    def __len__(self) -> int:
        return self.src.numel()


def make_activation(name: str) -> nn.Module:
    if name == "rrelu":
        # eval mode uses the fixed midpoint slope (lower + upper) / 2
        return nn.RReLU()
    if name == "identity":
        return nn.Identity()
    if name == "relu":
        return nn.ReLU()
    raise ValueError(f"unknown activation {name!r}")


class RGCNLayer(nn.Module):
    def __init__(self, dim: int, activation: str = "rrelu", dropout: float = 0.0):
        super().__init__()
        self.w_msg = nn.Linear(dim, dim, bias=False)  # W1
        self.w_self = nn.Linear(dim, dim, bias=False)  # W2
        self.act = make_activation(activation)
        self.dropout = nn.Dropout(dropout)
        nn.init.xavier_uniform_(self.w_msg.weight, gain=nn.init.calculate_gain("relu"))
        nn.init.xavier_uniform_(self.w_self.weight, gain=nn.init.calculate_gain("relu"))

    def forward(self, h: torch.Tensor, r: torch.Tensor, edges: EdgeIndex) -> torch.Tensor:
        out = self.w_self(h)
        if len(edges):
            msg = self.w_msg(h[edges.src] + r[edges.rel])
            agg = torch.zeros_like(out).index_add_(0, edges.dst, msg)
            deg = torch.bincount(edges.dst, minlength=h.size(0)).clamp_(min=1).to(h.dtype)
            out = out + agg / deg.unsqueeze(1)
        return self.dropout(self.act(out))


class RGCN(nn.Module):
    """A stack of :class:`RGCNLayer`; relation embeddings are shared by all layers."""

    def __init__(self, dim: int, num_layers: int = 2, activation: str = "rrelu", dropout: float = 0.0):
        super().__init__()
        self.layers = nn.ModuleList(RGCNLayer(dim, activation, dropout) for _ in range(num_layers))

    def forward(self, h: torch.Tensor, r: torch.Tensor, edges: EdgeIndex) -> torch.Tensor:
        for layer in self.layers:
            h = layer(h, r, edges)
        return h


AGGREGATORS = {"rgcn": RGCN}


def make_aggregator(name: str, dim: int, num_layers: int, activation: str = "rrelu", dropout: float = 0.0) -> nn.Module:
    """Build a relation-aware aggregator; only ``rgcn`` ships."""
    try:
        cls = AGGREGATORS[name]
    except KeyError:
        raise ValueError(f"aggregator {name!r} not available (have {sorted(AGGREGATORS)})") from None
    return cls(dim, num_layers, activation, dropout)


def mean_by_index(values: torch.Tensor, index: torch.Tensor, size: int) -> tuple[torch.Tensor, torch.Tensor]:
    """Row means of ``values`` grouped by ``index``; returns (means, counts)."""
    sums = values.new_zeros(size, values.size(1)).index_add_(0, index, values)
    counts = torch.bincount(index, minlength=size).to(values.dtype)
    return sums / counts.clamp(min=1).unsqueeze(1), counts
