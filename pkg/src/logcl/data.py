"""Quadruple datasets: parsing, inverse augmentation and snapshot windows.

Dataset directories follow the layout used by the ICEWS/GDELT extrapolation
benchmarks::

    train.txt  valid.txt  test.txt   # "s r o t [extra columns]" per line
    stat.txt                         # "|E| |R|" (extra columns ignored)
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property, reduce
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

logger = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")

# raw time units per snapshot
GRANULARITY = {
    "icews14": 24,
    "icews18": 24,
    "icews05-15": 24,
    "gdelt": 15,
}


class DatasetError(ValueError):
    """Malformed dataset file; the message names the file and line."""


class Quadruple(NamedTuple):
    subject: int
    relation: int
    object: int
    time: int


@dataclass(frozen=True)
class Snapshot:
    time: int
    facts: frozenset

    @cached_property
    def triples(self) -> np.ndarray:
        """Facts as a sorted (n, 3) int64 array."""
        if not self.facts:
            return np.zeros((0, 3), dtype=np.int64)
        return np.array(sorted(self.facts), dtype=np.int64)

    def __len__(self) -> int:
        return len(self.facts)


@dataclass(frozen=True)
class DatasetStats:
    num_entities: int
    num_relations: int
    train: int
    valid: int
    test: int
    granularity: int
    num_snapshots: int

    def as_row(self) -> dict:
        return {
            "entities": self.num_entities,
            "relations": self.num_relations,
            "train": self.train,
            "valid": self.valid,
            "test": self.test,
            "granularity": self.granularity,
            "snapshots": self.num_snapshots,
        }


def _as_quads(quads) -> np.ndarray:
    arr = np.asarray(quads, dtype=np.int64)
    if arr.size == 0:
        return np.zeros((0, 4), dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise ValueError(f"expected (n, 4) quadruples, got shape {arr.shape}")
    return arr


@dataclass
class TemporalKG:
    """Integer-coded quadruple store.

    ``splits`` hold original-orientation quadruples with normalized times.
    ``snapshots`` is the time-indexed history built from the union of all
    splits in both orientations, one entry per index in ``range(num_times)``
    (empty snapshots are materialized).
    """

    num_entities: int
    num_relations: int
    splits: dict[str, np.ndarray]
    granularity: int = 1
    name: str = ""
    snapshots: list[Snapshot] = field(init=False, repr=False)

    def __post_init__(self):
        self.splits = {k: _as_quads(self.splits.get(k, ())) for k in SPLITS}
        for split, quads in self.splits.items():
            if len(quads) == 0:
                continue
            if quads[:, [0, 2]].min() < 0 or quads[:, [0, 2]].max() >= self.num_entities:
                raise DatasetError(f"{split}: entity id out of range [0, {self.num_entities})")
            if quads[:, 1].min() < 0 or quads[:, 1].max() >= self.num_relations:
                raise DatasetError(f"{split}: relation id out of range [0, {self.num_relations})")
            if quads[:, 3].min() < 0:
                raise DatasetError(f"{split}: negative time index")
        union = self.all_quads()
        self.num_times = int(union[:, 3].max()) + 1 if len(union) else 0
        augmented = add_inverse(union, self.num_relations)
        by_time = {s.time: s for s in build_snapshots(augmented)}
        self.snapshots = [by_time.get(t, Snapshot(t, frozenset())) for t in range(self.num_times)]

    @property
    def num_relations_total(self) -> int:
        return 2 * self.num_relations

    def all_quads(self) -> np.ndarray:
        return np.concatenate([self.splits[s] for s in SPLITS], axis=0)

    def split_times(self, split: str) -> list[int]:
        return sorted(set(self.splits[split][:, 3].tolist()))

    def stats(self) -> DatasetStats:
        return DatasetStats(
            num_entities=self.num_entities,
            num_relations=self.num_relations,
            train=len(self.splits["train"]),
            valid=len(self.splits["valid"]),
            test=len(self.splits["test"]),
            granularity=self.granularity,
            num_snapshots=len({int(t) for t in self.all_quads()[:, 3]}),
        )

    def restrict_times(self, train: range, valid: range, test: range) -> "TemporalKG":
        """Re-split by snapshot index ranges (used for reduced-scale runs).

        Facts are pooled across the original splits and reassigned by time;
        times outside all three ranges are dropped.
        """
        union = self.all_quads()
        parts = {}
        for name, rng in zip(SPLITS, (train, valid, test)):
            mask = (union[:, 3] >= rng.start) & (union[:, 3] < rng.stop)
            parts[name] = union[mask]
        return TemporalKG(self.num_entities, self.num_relations, parts, self.granularity, self.name)


def add_inverse(quads, num_relations: int) -> np.ndarray:
    """Append ``(o, r + num_relations, s, t)`` for every ``(s, r, o, t)``."""
    arr = _as_quads(quads)
    if len(arr) and arr[:, 1].max() >= num_relations:
        raise ValueError(
            f"relation id {int(arr[:, 1].max())} >= {num_relations}: input already augmented?"
        )
    inv = arr[:, [2, 1, 0, 3]].copy()
    inv[:, 1] += num_relations
    return np.concatenate([arr, inv], axis=0)


def build_snapshots(quads) -> list[Snapshot]:
    arr = _as_quads(quads)
    if len(arr) == 0:
        return []
    out = []
    for t in np.unique(arr[:, 3]):
        rows = arr[arr[:, 3] == t, :3]
        out.append(Snapshot(int(t), frozenset(map(tuple, rows.tolist()))))
    return out


def snapshot_window(kg: TemporalKG, t_q: int, m: int) -> list[Snapshot]:
    """Snapshots ``max(0, t_q - m) .. t_q - 1`` in ascending time order."""
    if t_q < 1:
        raise ValueError("t_q = 0 has no history")
    if m < 1:
        raise ValueError("window length must be >= 1")
    start = max(0, t_q - m)
    return [kg.snapshots[t] for t in range(start, min(t_q, kg.num_times))]


def _read_rows(path: Path, min_cols: int) -> list[list[int]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            if len(tokens) < min_cols:
                raise DatasetError(f"{path}:{lineno}: expected at least {min_cols} columns, got {len(tokens)}")
            try:
                rows.append([int(tok) for tok in tokens[:min_cols]])
            except ValueError as exc:
                raise DatasetError(f"{path}:{lineno}: non-integer token ({exc})") from None
    return rows


def infer_granularity(raw_times: Iterable[int]) -> int:
    times = sorted(set(raw_times))
    if len(times) < 2:
        return 1
    g = reduce(math.gcd, (b - a for a, b in zip(times, times[1:])))
    return max(g, 1)


def load_dataset(root, granularity: int | None = None) -> TemporalKG:
    """Parse a benchmark directory into a :class:`TemporalKG`.

    When ``granularity`` is None it is looked up by directory name
    (ICEWS*/GDELT) and otherwise inferred as the gcd of gaps between
    distinct raw timestamps.
    """
    root = Path(root)
    stat_path = root / "stat.txt"
    if not stat_path.exists():
        raise DatasetError(f"{stat_path}: missing stat file")
    stat = _read_rows(stat_path, 2)
    if not stat:
        raise DatasetError(f"{stat_path}:1: empty stat file")
    num_entities, num_relations = stat[0]

    raw = {}
    for split in SPLITS:
        path = root / f"{split}.txt"
        if not path.exists():
            raise DatasetError(f"{path}: missing split file")
        rows = _read_rows(path, 4)
        for lineno, (s, r, o, _t) in enumerate(rows, start=1):
            if not (0 <= s < num_entities and 0 <= o < num_entities):
                raise DatasetError(f"{path}:{lineno}: entity id >= declared {num_entities}")
            if not 0 <= r < num_relations:
                raise DatasetError(f"{path}:{lineno}: relation id >= declared {num_relations}")
        raw[split] = np.array(rows, dtype=np.int64).reshape(-1, 4)

    all_times = np.concatenate([raw[s][:, 3] for s in SPLITS])
    if granularity is None:
        granularity = GRANULARITY.get(root.name.lower()) or infer_granularity(all_times.tolist())
    t0 = int(all_times.min()) if len(all_times) else 0
    for split in SPLITS:
        raw[split][:, 3] = (raw[split][:, 3] - t0) // granularity
    kg = TemporalKG(num_entities, num_relations, raw, granularity=granularity, name=root.name)
    logger.info("loaded %s: %s", root, kg.stats().as_row())
    return kg


def save_dataset(kg: TemporalKG, root) -> Path:
    """Write ``kg`` in the on-disk benchmark format (times scaled back up)."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    (root / "stat.txt").write_text(f"{kg.num_entities}\t{kg.num_relations}\n", encoding="utf-8")
    for split in SPLITS:
        quads = kg.splits[split].copy()
        quads[:, 3] *= kg.granularity
        lines = ["\t".join(map(str, row)) for row in quads.tolist()]
        (root / f"{split}.txt").write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    return root


def quads_to_list(quads: Sequence) -> list[Quadruple]:
    return [Quadruple(*map(int, q)) for q in _as_quads(quads)]
