"""Ranking metrics under the raw and time-aware filtered settings.

Ties are broken by the mean rank of the tied block, so a truth tied with
``k`` other candidates and beaten by ``g`` gets rank ``g + (k + 2) / 2``.
"""
from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

KS = (1, 3, 10)


class MetricSanityError(AssertionError):
    pass


@dataclass(frozen=True)
class RankRecord:
    subject: int
    relation: int
    time: int
    orientation: int
    truth: int
    raw_rank: float
    filtered_rank: float

    def __post_init__(self):
        if not 1 <= self.filtered_rank <= self.raw_rank:
            raise MetricSanityError(f"rank invariant violated: filtered {self.filtered_rank}, raw {self.raw_rank}")


def _rank_from_scores(scores: np.ndarray, truth: int, keep: np.ndarray | None = None) -> float:
    target = scores[truth]
    if keep is not None:
        scores = scores[keep]
    greater = int(np.sum(scores > target))
    ties = int(np.sum(scores == target))  # includes the truth itself
    return greater + (ties + 1) / 2


def raw_rank(scores, truth: int) -> float:
    return _rank_from_scores(np.asarray(scores, dtype=np.float64), truth)


def time_aware_filtered_rank(scores, truth: int, query: tuple[int, int, int], facts_at_t) -> float:
    """Rank of ``truth`` after removing the other true objects of ``(s, r, ?, t)``.

    ``facts_at_t`` holds the ground-truth facts at the query time, either as
    ``(s, r, o)`` triples or ``(s, r, o, t)`` quadruples.
    """
    scores = np.asarray(scores, dtype=np.float64)
    s, r, t = query
    keep = np.ones(len(scores), dtype=bool)
    for fact in facts_at_t:
        if len(fact) == 4 and fact[3] != t:
            continue
        if fact[0] == s and fact[1] == r and fact[2] != truth:
            keep[fact[2]] = False
    assert keep[truth]
    return _rank_from_scores(scores, truth, keep)


def rank_batch(logits, truths, filters: Sequence[Iterable[int]] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Raw and filtered ranks for a batch.

    ``filters[i]`` lists every true object of query ``i`` at its timestamp;
    the query's own truth may be included and is never removed.
    """
    scores = np.asarray(logits, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.int64)
    n = len(truths)
    target = scores[np.arange(n), truths][:, None]
    greater = scores > target
    ties = scores == target
    raw = greater.sum(1) + (ties.sum(1) + 1) / 2
    if filters is None:
        return raw, raw.copy()
    drop = np.zeros_like(greater)
    for i, objs in enumerate(filters):
        objs = np.fromiter(objs, dtype=np.int64)
        drop[i, objs[objs != truths[i]]] = True
    filt = (greater & ~drop).sum(1) + ((ties & ~drop).sum(1) + 1) / 2
    return raw, filt


def _summary(filtered: np.ndarray, raw: np.ndarray, ks=KS) -> dict:
    out = {"count": int(len(filtered))}
    if len(filtered) == 0:
        return out
    out["mrr"] = float(np.mean(1.0 / filtered))
    out.update({f"hits@{k}": float(np.mean(filtered <= k)) for k in ks})
    out["raw_mrr"] = float(np.mean(1.0 / raw))
    out.update({f"raw_hits@{k}": float(np.mean(raw <= k)) for k in ks})
    return out


@dataclass
class MetricsReport:
    mrr: float
    hits: dict[int, float]
    raw_mrr: float
    raw_hits: dict[int, float]
    count: int
    per_timestamp: dict[int, dict] = field(default_factory=dict)
    fingerprint: str = ""

    def check(self) -> "MetricsReport":
        for prefix, mrr, hits in (("filtered", self.mrr, self.hits), ("raw", self.raw_mrr, self.raw_hits)):
            if not 0.0 <= mrr <= 1.0:
                raise MetricSanityError(f"{prefix} MRR {mrr} outside [0, 1]")
            values = [hits[k] for k in sorted(hits)]
            if any(a > b for a, b in zip(values, values[1:])) or values[-1] > 1.0:
                raise MetricSanityError(f"{prefix} Hits@k not monotone: {hits}")
        if self.mrr < self.raw_mrr - 1e-12:
            raise MetricSanityError("filtered MRR below raw MRR")
        return self

    def as_dict(self) -> dict:
        d = {"mrr": self.mrr, "raw_mrr": self.raw_mrr, "count": self.count, "fingerprint": self.fingerprint}
        d.update({f"hits@{k}": v for k, v in self.hits.items()})
        d.update({f"raw_hits@{k}": v for k, v in self.raw_hits.items()})
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        hits = {int(k.split("@")[1]): v for k, v in d.items() if k.startswith("hits@")}
        raw_hits = {int(k.split("@")[1]): v for k, v in d.items() if k.startswith("raw_hits@")}
        return cls(d["mrr"], hits, d["raw_mrr"], raw_hits, d["count"], fingerprint=d.get("fingerprint", ""))


def aggregate(records: Sequence[RankRecord], ks=KS, fingerprint: str = "") -> MetricsReport:
    if not records:
        raise ValueError("no rank records to aggregate")
    filt = np.array([rec.filtered_rank for rec in records], dtype=np.float64)
    raw = np.array([rec.raw_rank for rec in records], dtype=np.float64)
    total = _summary(filt, raw, ks)
    by_time = defaultdict(list)
    for i, rec in enumerate(records):
        by_time[rec.time].append(i)
    per_t = {t: _summary(filt[idx], raw[idx], ks) for t, idx in sorted(by_time.items())}
    report = MetricsReport(
        mrr=total["mrr"],
        hits={k: total[f"hits@{k}"] for k in ks},
        raw_mrr=total["raw_mrr"],
        raw_hits={k: total[f"raw_hits@{k}"] for k in ks},
        count=total["count"],
        per_timestamp=per_t,
        fingerprint=fingerprint,
    )
    return report.check()


METRIC_COLUMNS = ("MRR", "Hits@1", "Hits@3", "Hits@10")


def _metric_values(report: MetricsReport) -> list[float]:
    return [report.mrr] + [report.hits[k] for k in KS]


def reports_to_csv(reports: dict[str, MetricsReport]) -> str:
    """One row per (config, metric); filtered values plus raw diagnostics."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["config", "metric", "filtered", "raw"])
    for name in sorted(reports):
        rep = reports[name]
        raws = [rep.raw_mrr] + [rep.raw_hits[k] for k in KS]
        for col, val, raw in zip(METRIC_COLUMNS, _metric_values(rep), raws):
            writer.writerow([name, col, f"{val:.6f}", f"{raw:.6f}"])
    return buf.getvalue()


def reports_to_markdown(reports: dict[str, MetricsReport]) -> str:
    """Model rows x (MRR, Hits@1/3/10) in percent, time-aware filtered."""
    lines = ["| Model | " + " | ".join(METRIC_COLUMNS) + " |", "|---|" + "---:|" * len(METRIC_COLUMNS)]
    for name in sorted(reports):
        vals = " | ".join(f"{100 * v:.2f}" for v in _metric_values(reports[name]))
        lines.append(f"| {name} | {vals} |")
    return "\n".join(lines) + "\n"
