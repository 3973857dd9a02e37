"""LogCL: local and global entity-aware encoders fused for object prediction."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch
import torch.nn as nn

from .config import TrainConfig
from .contrast import ProjectionHead, contrastive_total
from .decoder import ConvTransE, fuse, tkg_loss
from .global_encoder import GlobalEncoder
from .local_encoder import LocalEncoder, LocalTrace, SnapshotTensors
from .rgcn import EdgeIndex


@dataclass
class PhaseOutput:
    logits: torch.Tensor
    l_tkg: torch.Tensor
    l_cl: torch.Tensor
    alpha: torch.Tensor | None = None
    beta: torch.Tensor | None = None

    @property
    def loss(self) -> torch.Tensor:
        return self.l_tkg + self.l_cl


class LogCL(nn.Module):
    def __init__(self, num_entities: int, num_relations: int, cfg: TrainConfig):
        super().__init__()
        self.cfg = cfg
        self.num_entities = num_entities
        self.num_relations = num_relations
        d = cfg.dim
        self.entity_emb = nn.Parameter(torch.empty(num_entities, d))
        self.relation_emb = nn.Parameter(torch.empty(2 * num_relations, d))
        nn.init.xavier_normal_(self.entity_emb)
        nn.init.xavier_normal_(self.relation_emb)

        self.local = LocalEncoder(d, cfg.gcn_layers, cfg.dropout, aggregator=cfg.aggregator)
        self.glob = GlobalEncoder(d, cfg.gcn_layers, cfg.dropout, aggregator=cfg.aggregator)
        self.proj_local = ProjectionHead(d)
        self.proj_global = ProjectionHead(d)
        self.decoder = ConvTransE(d, cfg.kernels, cfg.kernel_size, cfg.decoder_dropout, cfg.batch_norm)

    def encode_local(self, window: Sequence[SnapshotTensors], t_q: int, h0: torch.Tensor | None = None) -> LocalTrace | None:
        if not self.cfg.use_local:
            return None
        h0 = self.entity_emb if h0 is None else h0
        return self.local.evolve(window, t_q, h0, self.relation_emb)

    def phase(
        self,
        trace: LocalTrace | None,
        edges: EdgeIndex | None,
        queries: torch.Tensor,
        h0: torch.Tensor | None = None,
    ) -> PhaseOutput:
        """Score one orientation's queries, given as an (N, 3) tensor of (s, r, o)."""
        cfg = self.cfg
        h0 = self.entity_emb if h0 is None else h0
        r0 = self.relation_emb
        s, r, o = queries[:, 0], queries[:, 1], queries[:, 2]
        alpha = beta = None

        if cfg.use_local:
            if trace is None:
                raise ValueError("local encoder enabled but no trace given")
            if cfg.use_eatt:
                qv = self.local.query_vectors(trace, s, r)
                h_loc, alpha = self.local.attend(trace, qv, s)
            else:
                h_loc = trace.entity[s]
            cand_loc = trace.entity

        if cfg.use_global:
            if edges is None:
                raise ValueError("global encoder enabled but no subgraph given")
            h_g = self.glob.aggregate(edges, h0, r0)
            ref = trace.entity if (cfg.use_local and cfg.global_gate_ref == "evolved") else h0
            if cfg.use_eatt:
                h_glob, beta = self.glob.attend(h_g, ref, s)
                cand_glob = self.glob.gate(h_g, ref) * h_g
            else:
                h_glob, cand_glob = h_g[s], h_g

        if cfg.use_local and cfg.use_global:
            h_hat = fuse(h_loc, h_glob, cfg.lam)
            cand = fuse(cand_loc, cand_glob, cfg.lam) if cfg.candidates == "fused" else cand_loc
            rel_vec = trace.relation[r]
        elif cfg.use_local:
            h_hat, cand, rel_vec = h_loc, cand_loc, trace.relation[r]
        else:
            h_hat, cand, rel_vec = h_glob, cand_glob, r0[r]

        logits = self.decoder(h_hat, rel_vec, cand)
        l_tkg = tkg_loss(logits, o, cfg.score_mode, cfg.tkg_reduction)
        l_cl = self.contrast_loss(trace, h_g, s, r, o) if cfg.contrast_active else logits.new_zeros(())
        return PhaseOutput(logits, l_tkg, l_cl, alpha, beta)

    def contrast_loss(self, trace: LocalTrace, h_g: torch.Tensor, s, r, o) -> torch.Tensor:
        cfg = self.cfg
        z_glob = self.proj_global(h_g[s], self.relation_emb[r])
        if cfg.contrast_steps == "last":
            steps = [len(trace) - 1]
        else:
            steps = range(len(trace))
        total = 0.0
        for i in steps:
            z_loc = self.proj_local(trace.aggregated[i][s], trace.relations[i][r])
            total = total + contrastive_total(z_loc, z_glob, o, cfg.tau, cfg.cross_label_positives)
        return total / len(steps)
