"""Training, evaluation and online fine-tuning over timestamps."""
from __future__ import annotations

import copy
import json
import logging
import math
import random
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import torch

from .config import TrainConfig
from .data import TemporalKG, add_inverse
from .evaluation import MetricsReport, RankRecord, aggregate, rank_batch
from .local_encoder import SnapshotTensors, snapshot_tensors
from .model import LogCL, PhaseOutput
from .rgcn import EdgeIndex
from .sampler import IncidenceIndex

logger = logging.getLogger(__name__)

ORIGINAL, INVERSE = 0, 1
EVAL_NOISE_OFFSET = 7919


class TrainingDiverged(RuntimeError):
    pass


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)


def inject_noise(h0: torch.Tensor, sigma: float, seed: int | torch.Generator | None = None) -> torch.Tensor:
    """``h0`` plus i.i.d. N(0, sigma^2) noise; relations are never perturbed."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return h0
    gen = seed if isinstance(seed, torch.Generator) else torch.Generator().manual_seed(0 if seed is None else seed)
    eps = torch.randn(h0.shape, generator=gen, dtype=h0.dtype)
    return h0 + sigma * eps.to(h0.device)


class GraphContext:
    """Per-dataset tensors shared by training and evaluation.

    History is the ground truth of every split in both orientations, so a
    query at ``t_q`` sees all facts strictly before ``t_q``.
    """

    def __init__(self, kg: TemporalKG, subgraph_cache_edges: int = 20_000_000):
        self.kg = kg
        self.snapshots = [snapshot_tensors(s) for s in kg.snapshots]
        augmented = add_inverse(kg.all_quads(), kg.num_relations)
        self.index = IncidenceIndex(augmented, kg.num_entities)
        self._answers: dict[int, dict[tuple[int, int], set[int]]] = defaultdict(lambda: defaultdict(set))
        for s, r, o, t in augmented.tolist():
            self._answers[t][(s, r)].add(o)
        self._queries: dict[tuple[str, int], np.ndarray] = {}
        for split, quads in kg.splits.items():
            for t in np.unique(quads[:, 3]).tolist():
                self._queries[(split, t)] = quads[quads[:, 3] == t, :3]
        self._sub_cache: dict[tuple, EdgeIndex] = {}
        self._cache_budget = subgraph_cache_edges

    def window(self, t_q: int, m: int) -> list[SnapshotTensors]:
        if t_q < 1:
            raise ValueError("t_q = 0 has no history")
        return self.snapshots[max(0, t_q - m):t_q]

    def queries(self, split: str, t: int, orientation: int) -> torch.Tensor:
        q = self._queries.get((split, t), np.zeros((0, 3), dtype=np.int64))
        if orientation == INVERSE:
            q = q[:, [2, 1, 0]].copy()
            q[:, 1] += self.kg.num_relations
        return torch.as_tensor(q)

    def times(self, split: str) -> list[int]:
        return sorted(t for (sp, t) in self._queries if sp == split)

    def subgraph(self, split: str, t: int, orientation: int) -> EdgeIndex:
        key = (split, t, orientation)
        if key in self._sub_cache:
            return self._sub_cache[key]
        q = self.queries(split, t, orientation)
        pairs = sorted(set(map(tuple, q[:, :2].tolist())))
        edges = EdgeIndex.from_triples(self.index.subgraph(pairs, t).edges)
        if len(edges) * 3 <= self._cache_budget:
            self._cache_budget -= len(edges) * 3
            self._sub_cache[key] = edges
        return edges

    def filters(self, t: int, queries: torch.Tensor) -> list[set[int]]:
        at_t = self._answers.get(t, {})
        return [at_t.get((s, r), set()) for s, r in queries[:, :2].tolist()]


@dataclass
class StepResult:
    loss: torch.Tensor
    phases: list[PhaseOutput]


def _initial_entities(model: LogCL, cfg: TrainConfig, gen: torch.Generator | None) -> torch.Tensor:
    if cfg.noise_sigma > 0 and gen is not None:
        return inject_noise(model.entity_emb, cfg.noise_sigma, gen)
    return model.entity_emb


def two_phase_step(
    model: LogCL,
    ctx: GraphContext,
    t_q: int,
    cfg: TrainConfig,
    split: str = "train",
    h0: torch.Tensor | None = None,
) -> StepResult:
    """Original-orientation phase, then inverse-orientation phase; losses summed.

    The local evolution depends only on history (< t_q), so it is computed
    once and shared. Each phase samples its subgraph from, and attends
    with, its own query set only.
    """
    if t_q < 1:
        raise ValueError("t_q = 0 has no history")
    h0 = model.entity_emb if h0 is None else h0
    trace = model.encode_local(ctx.window(t_q, cfg.window), t_q, h0)
    phases = []
    for orientation in (ORIGINAL, INVERSE):
        queries = ctx.queries(split, t_q, orientation)
        if len(queries) == 0:
            continue
        edges = ctx.subgraph(split, t_q, orientation) if cfg.use_global else None
        phases.append(model.phase(trace, edges, queries, h0))
    if not phases:
        return StepResult(h0.sum() * 0.0, [])
    loss = phases[0].loss
    for out in phases[1:]:
        loss = loss + out.loss
    return StepResult(loss, phases)


@dataclass
class RunState:
    model: LogCL
    optimizer: torch.optim.Optimizer
    config: TrainConfig
    best_mrr: float = float("-inf")
    epoch: int = 0
    history: list[dict] = field(default_factory=list)

    def checkpoint(self) -> dict:
        return {
            "model": self.model.state_dict(),
            "optimizer": self.optimizer.state_dict(),
            "config": self.config.to_dict(),
            "num_entities": self.model.num_entities,
            "num_relations": self.model.num_relations,
            "best_mrr": self.best_mrr,
            "epoch": self.epoch,
            "history": self.history,
        }


def new_state(kg: TemporalKG, cfg: TrainConfig) -> RunState:
    seed_everything(cfg.seed)
    model = LogCL(kg.num_entities, kg.num_relations, cfg)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    return RunState(model, opt, cfg)


def save_checkpoint(state: RunState, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(state.checkpoint(), path)
    return path


def load_checkpoint(path) -> RunState:
    blob = torch.load(path, map_location="cpu", weights_only=False)
    cfg = TrainConfig.from_dict(blob["config"])
    model = LogCL(blob["num_entities"], blob["num_relations"], cfg)
    model.load_state_dict(blob["model"])
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    opt.load_state_dict(blob["optimizer"])
    return RunState(model, opt, cfg, blob["best_mrr"], blob["epoch"], blob["history"])


def _optimizer_step(state: RunState, loss: torch.Tensor) -> None:
    state.optimizer.zero_grad()
    loss.backward()
    if state.config.grad_clip > 0:
        torch.nn.utils.clip_grad_norm_(state.model.parameters(), state.config.grad_clip)
    state.optimizer.step()


def train_epoch(state: RunState, ctx: GraphContext, gen: torch.Generator | None = None) -> float:
    model, cfg = state.model, state.config
    model.train()
    total, steps = 0.0, 0
    for t in ctx.times("train"):
        if t < 1:
            continue
        h0 = _initial_entities(model, cfg, gen)
        res = two_phase_step(model, ctx, t, cfg, "train", h0)
        value = float(res.loss.detach())
        if not math.isfinite(value):
            raise TrainingDiverged(f"non-finite loss {value} at epoch {state.epoch}, t={t}")
        _optimizer_step(state, res.loss)
        total += value
        steps += 1
    return total / max(steps, 1)


def train(
    kg: TemporalKG,
    cfg: TrainConfig,
    ctx: GraphContext | None = None,
    log_path=None,
    state: RunState | None = None,
) -> RunState:
    """Epoch loop with validation-MRR model selection and early stopping."""
    ctx = ctx or GraphContext(kg)
    state = state or new_state(kg, cfg)
    gen = torch.Generator().manual_seed(cfg.seed) if cfg.noise_sigma > 0 else None
    best_weights = copy.deepcopy(state.model.state_dict())
    bad_epochs = 0
    log_fh = open(log_path, "a", encoding="utf-8") if log_path else None
    try:
        for epoch in range(cfg.epochs):
            state.epoch = epoch
            loss = train_epoch(state, ctx, gen)
            record = {"epoch": epoch, "loss": loss}
            if ctx.times("valid"):
                val = evaluate_split(state.model, ctx, "valid", cfg)
                record["valid_mrr"] = val.mrr
                score = val.mrr
            else:
                score = -loss
            state.history.append(record)
            logger.info("epoch %d loss %.4f valid_mrr %s", epoch, loss, record.get("valid_mrr"))
            if log_fh:
                log_fh.write(json.dumps(record) + "\n")
                log_fh.flush()
            if score > state.best_mrr:
                state.best_mrr = score
                best_weights = copy.deepcopy(state.model.state_dict())
                bad_epochs = 0
            else:
                bad_epochs += 1
                if bad_epochs >= cfg.patience:
                    logger.info("early stop after epoch %d", epoch)
                    break
    finally:
        if log_fh:
            log_fh.close()
    state.model.load_state_dict(best_weights)
    return state


Scorer = Callable[[int, int, torch.Tensor], torch.Tensor]


def _rank_records(ctx: GraphContext, t: int, orientation: int, queries: torch.Tensor, logits) -> list[RankRecord]:
    raw, filt = rank_batch(logits, queries[:, 2].numpy(), ctx.filters(t, queries))
    return [
        RankRecord(s, r, t, orientation, o, float(a), float(b))
        for (s, r, o), a, b in zip(queries.tolist(), raw, filt)
    ]


@torch.no_grad()
def _score_timestamp(model: LogCL, ctx: GraphContext, split: str, t: int, cfg: TrainConfig, h0) -> list[RankRecord]:
    trace = model.encode_local(ctx.window(t, cfg.window), t, h0)
    records = []
    for orientation in (ORIGINAL, INVERSE):
        queries = ctx.queries(split, t, orientation)
        if len(queries) == 0:
            continue
        edges = ctx.subgraph(split, t, orientation) if cfg.use_global else None
        out = model.phase(trace, edges, queries, h0)
        records += _rank_records(ctx, t, orientation, queries, out.logits.double().numpy())
    return records


def evaluate_split(
    model: LogCL | None,
    ctx: GraphContext,
    split: str,
    cfg: TrainConfig,
    scorer: Scorer | None = None,
) -> MetricsReport:
    """Rank every query of ``split`` against all entities.

    ``scorer(t, orientation, queries)`` replaces the model when given.
    Timestamp 0 has no history and is skipped.
    """
    records = []
    if model is not None:
        model.eval()
    gen = torch.Generator().manual_seed(cfg.seed + EVAL_NOISE_OFFSET) if cfg.noise_sigma > 0 else None
    for t in ctx.times(split):
        if t < 1:
            logger.warning("skipping %s timestamp 0 (no history)", split)
            continue
        if scorer is not None:
            for orientation in (ORIGINAL, INVERSE):
                queries = ctx.queries(split, t, orientation)
                logits = np.asarray(scorer(t, orientation, queries), dtype=np.float64)
                records += _rank_records(ctx, t, orientation, queries, logits)
            continue
        with torch.no_grad():
            h0 = _initial_entities(model, cfg, gen)
        records += _score_timestamp(model, ctx, split, t, cfg, h0)
    return aggregate(records, fingerprint=cfg.fingerprint())


def online_train(kg: TemporalKG, cfg: TrainConfig, state: RunState, ctx: GraphContext | None = None) -> tuple[RunState, MetricsReport]:
    """Predict each test timestamp, then fine-tune on its revealed facts."""
    ctx = ctx or GraphContext(kg)
    model = state.model
    gen = torch.Generator().manual_seed(cfg.seed + EVAL_NOISE_OFFSET) if cfg.noise_sigma > 0 else None
    records = []
    for t in ctx.times("test"):
        if t < 1:
            continue
        model.eval()
        with torch.no_grad():
            h0 = _initial_entities(model, cfg, gen)
        records += _score_timestamp(model, ctx, "test", t, cfg, h0)
        model.train()
        for _ in range(cfg.online_steps):
            res = two_phase_step(model, ctx, t, cfg, "test", _initial_entities(model, cfg, gen))
            if not math.isfinite(float(res.loss.detach())):
                raise TrainingDiverged(f"non-finite loss during online update at t={t}")
            _optimizer_step(state, res.loss)
    model.eval()
    return state, aggregate(records, fingerprint=cfg.fingerprint())
