import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from logcl.data import Snapshot, TemporalKG, add_inverse, build_snapshots
from logcl.local_encoder import (
    LocalEncoder,
    LocalTrace,
    RelationGate,
    TimeEncoding,
    dynamic_embed,
    snapshot_tensors,
    time_encode,
)
from oracles import gru_cell, local_encoder_oracle, relation_gate, sigmoid, to_np

pytestmark = pytest.mark.usefixtures("double")


def snap(time, triples):
    return snapshot_tensors(Snapshot(time, frozenset(triples)))


def encoder(dim=3, seed=0):
    torch.manual_seed(seed)
    enc = LocalEncoder(dim, num_layers=2, dropout=0.0)
    enc.eval()
    return enc


# ------------------------------------------------------------------ time encoding

def test_interval_zero_with_zero_bias_is_ones():
    enc = TimeEncoding(4)
    with torch.no_grad():
        enc.bias.zero_()
    assert torch.all(time_encode(5, 5, enc) == 1)


def test_zero_frequency_ignores_interval():
    enc = TimeEncoding(3)
    with torch.no_grad():
        enc.weight.zero_()
    torch.testing.assert_close(time_encode(1, 9, enc), torch.cos(enc.bias))
    torch.testing.assert_close(time_encode(1, 2, enc), torch.cos(enc.bias))


def test_scalar_time_feature():
    enc = TimeEncoding(1)
    with torch.no_grad():
        enc.weight.fill_(0.5)
        enc.bias.fill_(0.1)
    value = time_encode(2, 5, enc).item()
    assert value == pytest.approx(math.cos(1.6))
    assert value == pytest.approx(-0.0292, abs=5e-5)


def test_future_snapshot_rejected():
    with pytest.raises(ValueError):
        time_encode(6, 5, TimeEncoding(2))


# ------------------------------------------------------------------ dynamic embedding

def test_dynamic_embed_projections():
    d = 3
    w0 = torch.nn.Linear(2 * d, d, bias=False)
    h, phi = torch.randn(4, d), torch.randn(d)
    with torch.no_grad():
        w0.weight.copy_(torch.cat([torch.eye(d), torch.zeros(d, d)], 1))
    torch.testing.assert_close(dynamic_embed(h, phi, w0), h)
    with torch.no_grad():
        w0.weight.copy_(torch.cat([torch.zeros(d, d), torch.eye(d)], 1))
    torch.testing.assert_close(dynamic_embed(h, phi, w0), phi.expand(4, d))


def test_dynamic_embed_dense_oracle():
    torch.manual_seed(1)
    w0 = torch.nn.Linear(8, 4, bias=False)
    h, phi = torch.randn(3, 4), torch.randn(4)
    expected = np.hstack([to_np(h), np.tile(to_np(phi), (3, 1))]) @ to_np(w0.weight).T
    np.testing.assert_allclose(to_np(dynamic_embed(h, phi, w0)), expected, atol=1e-12)


def test_dynamic_embed_shape_error():
    with pytest.raises(ValueError, match="shape"):
        dynamic_embed(torch.randn(3, 4), torch.randn(3), torch.nn.Linear(8, 4))


# ------------------------------------------------------------------ GRU

def gru(dim=3):
    torch.manual_seed(2)
    return torch.nn.GRUCell(dim, dim)


def test_gru_matches_gate_equations():
    cell = gru()
    x, h = torch.randn(2, 3), torch.randn(2, 3)
    expected = gru_cell(to_np(x), to_np(h), *(to_np(p) for p in (cell.weight_ih, cell.weight_hh, cell.bias_ih, cell.bias_hh)))
    np.testing.assert_allclose(to_np(cell(x, h)), expected, atol=1e-12)


def saturate_update_gate(cell, value):
    d = cell.hidden_size
    with torch.no_grad():
        cell.bias_ih[d:2 * d] = value
        cell.weight_ih[d:2 * d] = 0
        cell.weight_hh[d:2 * d] = 0


def test_gru_gate_keeping_state():
    cell = gru()
    saturate_update_gate(cell, 50.0)
    x, h = torch.randn(2, 3), torch.randn(2, 3)
    torch.testing.assert_close(cell(x, h), h, atol=1e-10, rtol=0)


def test_gru_gate_taking_candidate():
    cell = gru()
    saturate_update_gate(cell, -50.0)
    x, h = torch.randn(2, 3), torch.randn(2, 3)
    d = 3
    w_ih, w_hh, b_ih, b_hh = (to_np(p) for p in (cell.weight_ih, cell.weight_hh, cell.bias_ih, cell.bias_hh))
    xn, hn = to_np(x), to_np(h)
    reset = sigmoid(xn @ w_ih[:d].T + b_ih[:d] + hn @ w_hh[:d].T + b_hh[:d])
    cand = np.tanh(xn @ w_ih[2 * d:].T + b_ih[2 * d:] + reset * (hn @ w_hh[2 * d:].T + b_hh[2 * d:]))
    np.testing.assert_allclose(to_np(cell(x, h)), cand, atol=1e-10)


# ------------------------------------------------------------------ relation gate

def gate(dim=2, seed=3):
    torch.manual_seed(seed)
    return RelationGate(dim)


def test_absent_relation_uses_static_row():
    g = gate()
    with torch.no_grad():
        g.linear.weight.zero_()
        g.linear.bias.fill_(60.0)  # U -> 1, output -> r'
    h, r_prev, r0 = torch.randn(3, 2), torch.randn(2, 2), torch.randn(2, 2)
    out = g(snap(0, [(0, 0, 1)]), h, r_prev, r0)
    torch.testing.assert_close(out[1], r0[1])
    torch.testing.assert_close(out[0], (h[0] + h[1]) / 2 + r0[0])


def test_relation_touching_two_entities_matches_oracle():
    g = gate(3)
    h, r_prev, r0 = torch.randn(6, 3), torch.randn(4, 3), torch.randn(4, 3)
    triples = [(2, 1, 5)]
    out = g(snap(0, triples), h, r_prev, r0)
    expected = relation_gate(triples, to_np(h), to_np(r_prev), to_np(r0), to_np(g.linear.weight), to_np(g.linear.bias))
    np.testing.assert_allclose(to_np(out), expected, atol=1e-12)
    r_prime = (to_np(h[2]) + to_np(h[5])) / 2 + to_np(r0[1])
    u = sigmoid(to_np(g.linear.weight) @ r_prime + to_np(g.linear.bias))
    np.testing.assert_allclose(to_np(out[1]), u * r_prime + (1 - u) * to_np(r_prev[1]), atol=1e-12)


def test_relation_mean_counts_each_entity_once():
    g = gate(2)
    h, r_prev, r0 = torch.randn(4, 2), torch.randn(1, 2), torch.zeros(1, 2)
    triples = [(0, 0, 1), (0, 0, 2), (3, 0, 0)]
    out = g(snap(0, triples), h, r_prev, r0)
    expected = relation_gate(triples, to_np(h), to_np(r_prev), to_np(r0), to_np(g.linear.weight), to_np(g.linear.bias))
    np.testing.assert_allclose(to_np(out), expected, atol=1e-12)


# ------------------------------------------------------------------ query vector

def trace_with(entity, relation, last_triples):
    return LocalTrace(aggregated=[entity], relations=[relation], times=[0], entity=entity, relation=relation, last=snap(0, last_triples))


def identity_w4(enc, d):
    with torch.no_grad():
        enc.w4.weight.copy_(torch.cat([torch.eye(d), torch.zeros(d, d)], 1))


def test_query_vector_single_incident_relation():
    enc = encoder(2)
    identity_w4(enc, 2)
    ent, rel = torch.randn(3, 2), torch.randn(4, 2)
    tr = trace_with(ent, rel, [(0, 3, 1)])
    qv = enc.query_vectors(tr, torch.tensor([0]), torch.tensor([1]))
    torch.testing.assert_close(qv[0], rel[3])


def test_query_vector_fallback_to_query_relation():
    enc = encoder(2)
    identity_w4(enc, 2)
    ent, rel = torch.randn(3, 2), torch.randn(4, 2)
    tr = trace_with(ent, rel, [(0, 3, 1)])
    qv = enc.query_vectors(tr, torch.tensor([2]), torch.tensor([1]))
    torch.testing.assert_close(qv[0], rel[1])


def test_query_vector_two_relations_oracle():
    enc = encoder(3)
    ent, rel = torch.randn(4, 3), torch.randn(6, 3)
    tr = trace_with(ent, rel, [(2, 1, 0), (2, 4, 3), (2, 4, 1), (0, 5, 2)])
    qv = enc.query_vectors(tr, torch.tensor([2]), torch.tensor([0]))
    mean = (to_np(rel[1]) + to_np(rel[4])) / 2
    expected = to_np(enc.w4.weight) @ np.concatenate([mean, to_np(ent[2])])
    np.testing.assert_allclose(to_np(qv[0]), expected, atol=1e-12)


# ------------------------------------------------------------------ attention

def test_single_step_attention():
    enc = encoder(2)
    agg = torch.randn(3, 2)
    tr = LocalTrace(aggregated=[agg], entity=torch.randn(3, 2))
    out, alpha = enc.attend(tr, torch.randn(1, 2), torch.tensor([1]))
    assert alpha.tolist() == [[1.0]]
    torch.testing.assert_close(out[0], tr.entity[1] + agg[1])


def test_identical_steps_give_uniform_weights():
    enc = encoder(2)
    agg = torch.randn(3, 2)
    tr = LocalTrace(aggregated=[agg, agg.clone(), agg.clone(), agg.clone()], entity=torch.randn(3, 2))
    _, alpha = enc.attend(tr, torch.randn(2, 2), torch.tensor([0, 2]))
    torch.testing.assert_close(alpha, torch.full((2, 4), 0.25))


def test_three_step_scalar_attention():
    enc = encoder(1)
    with torch.no_grad():
        enc.w5.weight.fill_(2.0)
    steps = [torch.tensor([[0.5]]), torch.tensor([[-1.0]]), torch.tensor([[2.0]])]
    tr = LocalTrace(aggregated=steps, entity=torch.tensor([[0.3]]))
    out, alpha = enc.attend(tr, torch.tensor([[0.25]]), torch.tensor([0]))
    scores = [2.0 * (v + 0.25) for v in (0.5, -1.0, 2.0)]
    z = sum(math.exp(s) for s in scores)
    weights = [math.exp(s) / z for s in scores]
    assert alpha[0].tolist() == pytest.approx(weights)
    assert out.item() == pytest.approx(0.3 + sum(w * v for w, v in zip(weights, (0.5, -1.0, 2.0))))


def test_empty_trace_rejected():
    with pytest.raises(ValueError):
        encoder(2).attend(LocalTrace(entity=torch.zeros(1, 2)), torch.zeros(1, 2), torch.tensor([0]))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(1, 6), st.integers(0, 10_000))
def test_attention_weights_form_distribution(k, n, seed):
    g = torch.Generator().manual_seed(seed)
    enc = encoder(3)
    tr = LocalTrace(aggregated=[torch.randn(6, 3, generator=g) * 5 for _ in range(k)], entity=torch.randn(6, 3, generator=g))
    ent = torch.randint(0, 6, (n,), generator=g)
    _, alpha = enc.attend(tr, torch.randn(n, 3, generator=g), ent)
    assert torch.all(alpha >= 0)
    torch.testing.assert_close(alpha.sum(1), torch.ones(n))


# ------------------------------------------------------------------ full evolution

def chain_kg(num_times=6):
    rows = [(t % 4, t % 2, (t + 1) % 4, t) for t in range(num_times)] + [(1, 1, 3, t) for t in range(0, num_times, 2)]
    return TemporalKG(5, 2, {"train": rows})


def window_tensors(kg, t_q, m):
    return [snapshot_tensors(kg.snapshots[t]) for t in range(max(0, t_q - m), t_q)]


def test_window_of_one_gives_single_step():
    kg = chain_kg()
    enc = encoder(3)
    tr = enc.evolve(window_tensors(kg, 4, 1), 4, torch.randn(5, 3), torch.randn(4, 3))
    assert len(tr) == 1 and tr.times == [3]


def test_truncated_window():
    kg = chain_kg()
    enc = encoder(3)
    tr = enc.evolve(window_tensors(kg, 2, 7), 2, torch.randn(5, 3), torch.randn(4, 3))
    assert len(tr) == 2 and tr.times == [0, 1]


def test_three_steps_equal_composed_oracles():
    kg = chain_kg()
    enc = encoder(3, seed=5)
    h0, r0 = torch.randn(5, 3), torch.randn(4, 3)
    t_q = 5
    window = window_tensors(kg, t_q, 3)
    tr = enc.evolve(window, t_q, h0, r0)
    triples = [sorted(kg.snapshots[t].facts) for t in range(2, 5)]
    aggs, h, r = local_encoder_oracle(enc, triples, [2, 3, 4], t_q, to_np(h0), to_np(r0))
    assert len(tr) == 3
    for got, want in zip(tr.aggregated, aggs):
        np.testing.assert_allclose(to_np(got), want, atol=1e-10)
    np.testing.assert_allclose(to_np(tr.entity), h, atol=1e-10)
    np.testing.assert_allclose(to_np(tr.relation), r, atol=1e-10)


def test_snapshot_tensors_incidence():
    st_ = snap(0, [(0, 1, 2), (2, 3, 0)])
    rel, ent = st_.rel_ent
    assert sorted(zip(rel.tolist(), ent.tolist())) == [(1, 0), (1, 2), (3, 0), (3, 2)]
    subj, srel = st_.ent_rel
    assert sorted(zip(subj.tolist(), srel.tolist())) == [(0, 1), (2, 3)]


def test_augmented_snapshot_covers_object_role():
    # in the augmented snapshot an object-role incidence shows up as a subject-role inverse pair
    snaps = build_snapshots(add_inverse([(0, 1, 2, 0)], 2))
    subj, srel = snapshot_tensors(snaps[0]).ent_rel
    assert sorted(zip(subj.tolist(), srel.tolist())) == [(0, 1), (2, 3)]
