"""Independent reference implementations used as test oracles.

Everything here is written with plain Python loops or dense numpy algebra
and shares no code with the package under test.
"""
from __future__ import annotations

import math

import numpy as np
import torch

RRELU_EVAL_SLOPE = (1.0 / 8.0 + 1.0 / 3.0) / 2.0


# ---------------------------------------------------------------- subgraphs

def brute_subgraph(history, queries) -> set[tuple[int, int, int]]:
    """Two-stage rule by exhaustive scans over the history list."""
    history = [tuple(int(x) for x in q) for q in history]
    anchors = set()
    for s, r in queries:
        anchors.add(s)
        for hs, hr, ho, _ in history:
            if hs == s and hr == r:
                anchors.add(ho)
    edges = set()
    for hs, hr, ho, _ in history:
        if hs in anchors or ho in anchors:
            edges.add((hs, hr, ho))
    return edges


# ---------------------------------------------------------------- ranks

def brute_rank(scores, truth, query, facts_at_t) -> float:
    """Sort the filtered candidate list and average the positions of the tied block."""
    s, r, t = query
    removed = {f[2] for f in facts_at_t if f[0] == s and f[1] == r and f[2] != truth and (len(f) < 4 or f[3] == t)}
    cands = [(float(scores[e]), e) for e in range(len(scores)) if e not in removed]
    cands.sort(key=lambda x: -x[0])
    target = float(scores[truth])
    positions = [i + 1 for i, (v, _) in enumerate(cands) if v == target]
    return sum(positions) / len(positions)


# ---------------------------------------------------------------- contrast

def brute_supcon(anchors, candidates, labels, tau, same_view=False, label_positives=True) -> float:
    a = np.asarray(anchors, dtype=np.float64)
    c = np.asarray(candidates, dtype=np.float64)
    n = len(a)
    total = 0.0
    for i in range(n):
        denom_idx = [k for k in range(n) if not (same_view and k == i)]
        if not denom_idx:
            continue
        denom = sum(math.exp(float(a[i] @ c[k]) / tau) for k in denom_idx)
        pos = []
        for j in range(n):
            if same_view and j == i:
                continue
            if (not same_view and j == i) or (label_positives and labels[j] == labels[i]):
                pos.append(j)
        if not pos:
            continue
        acc = 0.0
        for j in pos:
            acc += math.log(math.exp(float(a[i] @ c[j]) / tau) / denom)
        total += -acc / len(pos)
    return total / n


# ---------------------------------------------------------------- graph layers

def dense_rgcn_layer(h, r, triples, w1, w2, act=lambda x: x):
    """act( D^-1 A-messages W1^T + H W2^T ) with an explicit per-node loop."""
    h = np.asarray(h, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    n, d = h.shape
    out = h @ np.asarray(w2).T
    msgs = np.zeros((n, d))
    deg = np.zeros(n)
    for s, rel, o in triples:
        msgs[o] += (h[s] + r[rel]) @ np.asarray(w1).T
        deg[o] += 1
    for o in range(n):
        if deg[o] > 0:
            out[o] += msgs[o] / deg[o]
    return act(out)


def rrelu_eval(x):
    return np.where(x >= 0, x, RRELU_EVAL_SLOPE * x)


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def gru_cell(x, h, w_ih, w_hh, b_ih, b_hh):
    """Gate equations written out: reset, update, candidate, interpolation."""
    d = h.shape[1]
    wr, wz, wn = w_ih[:d], w_ih[d:2 * d], w_ih[2 * d:]
    ur, uz, un = w_hh[:d], w_hh[d:2 * d], w_hh[2 * d:]
    br, bz, bn = b_ih[:d], b_ih[d:2 * d], b_ih[2 * d:]
    cr, cz, cn = b_hh[:d], b_hh[d:2 * d], b_hh[2 * d:]
    reset = sigmoid(x @ wr.T + br + h @ ur.T + cr)
    update = sigmoid(x @ wz.T + bz + h @ uz.T + cz)
    cand = np.tanh(x @ wn.T + bn + reset * (h @ un.T + cn))
    return (1 - update) * cand + update * h


def relation_gate(triples, h, r_prev, r0, w3, b3):
    num_rel = r0.shape[0]
    r_prime = np.array(r0, dtype=np.float64)
    for rel in range(num_rel):
        ents = sorted({s for s, rr, _ in triples if rr == rel} | {o for _, rr, o in triples if rr == rel})
        if ents:
            r_prime[rel] = r_prime[rel] + np.mean([h[e] for e in ents], axis=0)
    u = sigmoid(r_prime @ w3.T + b3)
    return u * r_prime + (1 - u) * r_prev


def to_np(t: torch.Tensor) -> np.ndarray:
    return t.detach().cpu().numpy().astype(np.float64)


def local_encoder_oracle(enc, window_triples, window_times, t_q, h0, r0):
    """Numpy re-derivation of the recurrent local encoder in eval mode.

    ``enc`` supplies parameter values only; every operation is re-done here.
    Returns (aggregated list, final H, final R).
    """
    h, r = np.array(h0, dtype=np.float64), np.array(r0, dtype=np.float64)
    w_t, b_t = to_np(enc.time_enc.weight), to_np(enc.time_enc.bias)
    w0 = to_np(enc.w0.weight)
    layers = [(to_np(l.w_msg.weight), to_np(l.w_self.weight)) for l in enc.rgcn.layers]
    g = enc.gru
    gw = [to_np(x) for x in (g.weight_ih, g.weight_hh, g.bias_ih, g.bias_hh)]
    w3, b3 = to_np(enc.rel_gate.linear.weight), to_np(enc.rel_gate.linear.bias)
    aggs = []
    for tri, t in zip(window_triples, window_times):
        phi = np.cos((t_q - t) * w_t + b_t)
        x = np.concatenate([h, np.tile(phi, (len(h), 1))], axis=1) @ w0.T
        for w1, w2 in layers:
            x = dense_rgcn_layer(x, r, tri, w1, w2, rrelu_eval)
        aggs.append(x)
        r_next = relation_gate(tri, h, r, np.asarray(r0, dtype=np.float64), w3, b3)
        h = gru_cell(x, h, *gw)
        r = r_next
    return aggs, h, r


# ---------------------------------------------------------------- finite differences

def central_difference(loss_fn, param: torch.Tensor, index: tuple, eps: float = 1e-6) -> float:
    """d loss / d param[index] by a symmetric two-point stencil (no autograd)."""
    with torch.no_grad():
        orig = param[index].item()
        param[index] = orig + eps
        plus = float(loss_fn())
        param[index] = orig - eps
        minus = float(loss_fn())
        param[index] = orig
    return (plus - minus) / (2 * eps)


def sample_indices(shape, k: int, rng: np.random.Generator) -> list[tuple]:
    total = int(np.prod(shape)) if len(shape) else 1
    flat = rng.choice(total, size=min(k, total), replace=False)
    return [tuple(int(i) for i in np.unravel_index(f, shape)) for f in flat]


def gradient_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a||, ||n||), with a tiny floor for all-zero groups."""
    diff = np.linalg.norm(analytic - numeric)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(diff / scale)
