"""Recurrent encoder over the most recent snapshots with entity-aware attention."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import torch
import torch.nn as nn

from .data import Snapshot
from .rgcn import EdgeIndex, make_aggregator, mean_by_index


class SnapshotTensors(NamedTuple):
    time: int
    edges: EdgeIndex
    rel_ent: tuple[torch.Tensor, torch.Tensor]  # unique (relation, entity) incidences
    ent_rel: tuple[torch.Tensor, torch.Tensor]  # unique (subject, relation) pairs


def snapshot_tensors(snapshot: Snapshot) -> SnapshotTensors:
    tri = snapshot.triples
    rel_ent = np.unique(np.concatenate([tri[:, [1, 0]], tri[:, [1, 2]]]), axis=0) if len(tri) else np.zeros((0, 2), np.int64)
    ent_rel = np.unique(tri[:, [0, 1]], axis=0) if len(tri) else np.zeros((0, 2), np.int64)
    rel_ent_t = torch.as_tensor(rel_ent)
    ent_rel_t = torch.as_tensor(ent_rel)
    return SnapshotTensors(
        snapshot.time,
        EdgeIndex.from_triples(tri),
        (rel_ent_t[:, 0], rel_ent_t[:, 1]),
        (ent_rel_t[:, 0], ent_rel_t[:, 1]),
    )


class TimeEncoding(nn.Module):
    """cos(interval * w + b), elementwise over the embedding dimension."""

    def __init__(self, dim: int):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(dim))
        self.bias = nn.Parameter(torch.empty(dim))
        nn.init.uniform_(self.weight, -0.5, 0.5)
        nn.init.uniform_(self.bias, -0.5, 0.5)

    def forward(self, interval) -> torch.Tensor:
        interval = torch.as_tensor(interval, dtype=self.weight.dtype)
        return torch.cos(interval * self.weight + self.bias)


def time_encode(t_i: int, t_q: int, encoding: TimeEncoding) -> torch.Tensor:
    if t_i > t_q:
        raise ValueError(f"snapshot time {t_i} is after query time {t_q}")
    return encoding(float(t_q - t_i))


def dynamic_embed(h: torch.Tensor, phi: torch.Tensor, w0: nn.Linear) -> torch.Tensor:
    """W0 [h || phi] for every entity row, ``phi`` shared by all rows."""
    if phi.dim() != 1 or w0.in_features != h.size(1) + phi.size(0):
        raise ValueError(f"shape mismatch: h {tuple(h.shape)}, phi {tuple(phi.shape)}, W0 in={w0.in_features}")
    return w0(torch.cat([h, phi.expand(h.size(0), -1)], dim=1))


class RelationGate(nn.Module):
    """Time gate for relation embeddings.

    ``r'`` is the mean of the current embeddings of entities touching ``r``
    in the snapshot plus the static embedding ``r0`` (``r0`` alone when the
    relation is absent). The new state is ``U * r' + (1 - U) * r_prev`` with
    ``U = sigmoid(W3 r' + b)``.
    """

    def __init__(self, dim: int):
        super().__init__()
        self.linear = nn.Linear(dim, dim)

    def forward(self, snap: SnapshotTensors, h: torch.Tensor, r_prev: torch.Tensor, r0: torch.Tensor) -> torch.Tensor:
        rel, ent = snap.rel_ent
        mean, _ = mean_by_index(h[ent], rel, r0.size(0))
        r_prime = mean + r0
        u = torch.sigmoid(self.linear(r_prime))
        return u * r_prime + (1 - u) * r_prev


@dataclass
class LocalTrace:
    aggregated: list[torch.Tensor] = field(default_factory=list)  # H^Agg per step
    relations: list[torch.Tensor] = field(default_factory=list)  # R consumed by each step
    times: list[int] = field(default_factory=list)
    entity: torch.Tensor | None = None  # evolved H at t_q
    relation: torch.Tensor | None = None  # evolved R at t_q
    last: SnapshotTensors | None = None

    def __len__(self) -> int:
        return len(self.aggregated)


class LocalEncoder(nn.Module):
    def __init__(self, dim: int, num_layers: int = 2, dropout: float = 0.2, activation: str = "rrelu", aggregator: str = "rgcn"):
        super().__init__()
        self.dim = dim
        self.time_enc = TimeEncoding(dim)
        self.w0 = nn.Linear(2 * dim, dim, bias=False)
        self.rgcn = make_aggregator(aggregator, dim, num_layers, activation, dropout)
        self.gru = nn.GRUCell(dim, dim)
        self.rel_gate = RelationGate(dim)
        self.w4 = nn.Linear(2 * dim, dim, bias=False)
        self.w5 = nn.Linear(dim, 1, bias=False)

    def evolve(self, window: Sequence[SnapshotTensors], t_q: int, h0: torch.Tensor, r0: torch.Tensor) -> LocalTrace:
        if not window:
            raise ValueError("empty snapshot window")
        trace = LocalTrace()
        h, r = h0, r0
        for snap in window:
            phi = time_encode(snap.time, t_q, self.time_enc)
            h_dyn = dynamic_embed(h, phi, self.w0)
            h_agg = self.rgcn(h_dyn, r, snap.edges)
            trace.aggregated.append(h_agg)
            trace.relations.append(r)
            trace.times.append(snap.time)
            r_next = self.rel_gate(snap, h, r, r0)
            h = self.gru(h_agg, h)
            r = r_next
        trace.entity, trace.relation, trace.last = h, r, window[-1]
        return trace

    def query_vectors(self, trace: LocalTrace, ent: torch.Tensor, rel: torch.Tensor) -> torch.Tensor:
        """W4 [mean incident relation || evolved entity] per query."""
        r_cur = trace.relation
        subj, srel = trace.last.ent_rel
        mean, counts = mean_by_index(r_cur[srel], subj, trace.entity.size(0))
        has = (counts[ent] > 0).unsqueeze(1)
        rel_part = torch.where(has, mean[ent], r_cur[rel])
        return self.w4(torch.cat([rel_part, trace.entity[ent]], dim=1))

    def attend(self, trace: LocalTrace, query_vec: torch.Tensor, ent: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Softmax over window steps; returns (local representation, weights)."""
        if len(trace) == 0:
            raise ValueError("empty trace")
        steps = torch.stack([agg[ent] for agg in trace.aggregated], dim=1)  # (N, k, d)
        scores = self.w5(steps + query_vec.unsqueeze(1)).squeeze(-1)
        alpha = torch.softmax(scores, dim=1)
        out = trace.entity[ent] + (alpha.unsqueeze(-1) * steps).sum(dim=1)
        return out, alpha
