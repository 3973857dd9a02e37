"""Small constructed datasets with known answers."""
from __future__ import annotations

import numpy as np

from .data import TemporalKG


def repetition_dataset(
    num_entities: int = 10,
    num_relations: int = 3,
    num_times: int = 30,
    valid_times: int = 3,
    test_times: int = 3,
) -> TemporalKG:
    """Period-2 pattern: every fact at time t recurs at t + 2.

    Even times hold ``(s, s % R, (s + 1) % E)`` and odd times
    ``(s, (s + 1) % R, (s + 4) % E)`` for every entity ``s``. With R >= 3
    each (subject, relation) pair, inverse pairs included, has exactly one
    answer, so a model can reach MRR 1.
    """
    if num_relations < 3:
        raise ValueError("need at least 3 relations for unambiguous inverse queries")
    rows = []
    for t in range(num_times):
        for s in range(num_entities):
            if t % 2 == 0:
                rows.append((s, s % num_relations, (s + 1) % num_entities, t))
            else:
                rows.append((s, (s + 1) % num_relations, (s + 4) % num_entities, t))
    quads = np.array(rows, dtype=np.int64)
    train_end = num_times - valid_times - test_times
    t = quads[:, 3]
    splits = {
        "train": quads[t < train_end],
        "valid": quads[(t >= train_end) & (t < train_end + valid_times)],
        "test": quads[t >= train_end + valid_times],
    }
    return TemporalKG(num_entities, num_relations, splits, granularity=1, name="repetition")


def random_dataset(
    num_entities: int,
    num_relations: int,
    num_times: int,
    facts_per_time: int,
    seed: int = 0,
    split=(0.8, 0.1, 0.1),
) -> TemporalKG:
    """Uniformly random quadruples split chronologically (for plumbing tests)."""
    rng = np.random.default_rng(seed)
    rows = []
    for t in range(num_times):
        s = rng.integers(0, num_entities, facts_per_time)
        r = rng.integers(0, num_relations, facts_per_time)
        o = rng.integers(0, num_entities, facts_per_time)
        rows.append(np.stack([s, r, o, np.full(facts_per_time, t)], axis=1))
    quads = np.concatenate(rows).astype(np.int64)
    a = int(round(num_times * split[0]))
    b = a + int(round(num_times * split[1]))
    t = quads[:, 3]
    splits = {"train": quads[t < a], "valid": quads[(t >= a) & (t < b)], "test": quads[t >= b]}
    return TemporalKG(num_entities, num_relations, splits, name="random")
