"""Historical query subgraphs.

For a batch of queries ``(s, r, ?)`` at time ``t_q`` the subgraph is the
timeless union of

* every historical fact incident to a query subject ``s``, and
* every historical fact incident to an entity ``o`` that answered
  ``(s, r)`` somewhere in the history.

"Incident" means appearing as subject or object. Times are dropped and
duplicate triples merged.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

_EMPTY = np.zeros((0, 3), dtype=np.int64)


@dataclass
class QuerySubgraph:
    edges: np.ndarray  # (n, 3) sorted unique (s, r, o)
    query_anchor_map: dict[int, int] = field(default_factory=dict)

    @property
    def node_set(self) -> set[int]:
        if len(self.edges) == 0:
            return set()
        return set(np.unique(self.edges[:, [0, 2]]).tolist())

    def edge_set(self) -> set[tuple[int, int, int]]:
        return set(map(tuple, self.edges.tolist()))

    def __len__(self) -> int:
        return len(self.edges)


def _unique_rows(rows: np.ndarray) -> np.ndarray:
    if len(rows) == 0:
        return _EMPTY
    return np.unique(rows, axis=0)


def one_hop_targets(history, s: int, r: int) -> set[int]:
    """Objects ``o`` with ``(s, r, o, t)`` in ``history``."""
    h = np.asarray(history, dtype=np.int64).reshape(-1, 4)
    mask = (h[:, 0] == s) & (h[:, 1] == r)
    return set(h[mask, 2].tolist())


class IncidenceIndex:
    """Time-sorted incidence lists over a fixed quadruple set.

    Built once; any cut-off ``t_q`` is served by slicing each entity's list
    at the first fact with ``time >= t_q``, so sampling at successive
    timestamps reuses the same index instead of rescanning the history.
    """

    def __init__(self, quads, num_entities: int):
        q = np.asarray(quads, dtype=np.int64).reshape(-1, 4)
        self.quads = q
        self.num_entities = num_entities
        n = len(q)
        fact = np.concatenate([np.arange(n), np.arange(n)])
        ent = np.concatenate([q[:, 0], q[:, 2]])
        order = np.lexsort((q[fact, 3], ent))
        self._ent_fact = fact[order]
        self._ent_time = q[self._ent_fact, 3]
        self._ent_ptr = np.searchsorted(ent[order], np.arange(num_entities + 1))

        # (s, r) -> answers, keyed by s * R + r
        self._num_rel = int(q[:, 1].max()) + 1 if n else 1
        key = q[:, 0] * self._num_rel + q[:, 1]
        order = np.lexsort((q[:, 3], key))
        self._pair_key = key[order]
        self._pair_obj = q[order, 2]
        self._pair_time = q[order, 3]

    def incident(self, entity: int, t_q: int) -> np.ndarray:
        """Row indices of facts touching ``entity`` with time < ``t_q``."""
        lo, hi = self._ent_ptr[entity], self._ent_ptr[entity + 1]
        cut = lo + np.searchsorted(self._ent_time[lo:hi], t_q, side="left")
        return self._ent_fact[lo:cut]

    def targets(self, s: int, r: int, t_q: int) -> np.ndarray:
        if r >= self._num_rel:
            return np.zeros(0, dtype=np.int64)
        k = s * self._num_rel + r
        lo = np.searchsorted(self._pair_key, k, side="left")
        hi = np.searchsorted(self._pair_key, k, side="right")
        cut = lo + np.searchsorted(self._pair_time[lo:hi], t_q, side="left")
        return np.unique(self._pair_obj[lo:cut])

    def subgraph(self, queries: Sequence[tuple[int, int]], t_q: int) -> QuerySubgraph:
        queries = [(int(s), int(r)) for s, r in queries]
        anchors = set()
        for s, r in queries:
            anchors.add(s)
            anchors.update(self.targets(s, r, t_q).tolist())
        parts = [self.incident(e, t_q) for e in sorted(anchors)]
        rows = np.unique(np.concatenate(parts)) if parts else np.zeros(0, dtype=np.int64)
        edges = _unique_rows(self.quads[rows, :3])
        return QuerySubgraph(edges, {i: s for i, (s, _) in enumerate(queries)})


def build_query_subgraph(history, queries: Iterable[tuple[int, int]], num_entities: int | None = None) -> QuerySubgraph:
    """Subgraph for ``queries`` over ``history`` (all of which precedes t_q)."""
    h = np.asarray(history, dtype=np.int64).reshape(-1, 4)
    queries = list(queries)
    if num_entities is None:
        ids = [h[:, 0].max(), h[:, 2].max()] if len(h) else []
        ids += [s for s, _ in queries]
        num_entities = int(max(ids, default=-1)) + 1
    index = IncidenceIndex(h, num_entities)
    t_q = int(h[:, 3].max()) + 1 if len(h) else 0
    return index.subgraph(queries, t_q)


def dump_edges(subgraph: QuerySubgraph, path=None) -> str:
    """Sorted ``s r o`` edge list; written to ``path`` when given."""
    text = "".join(f"{s} {r} {o}\n" for s, r, o in sorted(subgraph.edge_set()))
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
