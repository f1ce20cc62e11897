import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import make_instance, orthogonal_instance, random_instances
from mimo_gnn.autodiff import Tape
from mimo_gnn.channel import ChannelModel, stack_instances
from mimo_gnn.constellation import build_alphabet
from mimo_gnn.detectors import mmse_estimate
from mimo_gnn.errors import ShapeMismatch
from mimo_gnn.gnn import (GnnArch, GnnParameters, Network, build_features, detect_batch, forward,
                          forward_logits, init_params, readout, zero_params)
from mimo_gnn.numerics import RngStream

A16 = build_alphabet(16)
SMALL = dict(hidden=16, state=4, message=4, iterations=3, alphabet_size=4)
MODEL = ChannelModel("iid", 8, 16)


def small(variant, **kw):
    return GnnArch(variant=variant, **{**SMALL, **kw})


def test_plain_features_n2():
    H = np.array([[1.0, 0.5], [0.0, 2.0], [1.0, -1.0]])
    y = np.array([0.2, -0.4, 1.0])
    f = build_features(make_instance(H, y, 0.3), "plain")
    g12 = H[:, 0] @ H[:, 1]
    assert f.edge_feat.shape == (1, 2, 2, 2)
    np.testing.assert_array_equal(f.edge_feat[0, 0, 1], [-g12, 0.3])
    np.testing.assert_array_equal(f.edge_feat[0, 1, 0], [-g12, 0.3])
    np.testing.assert_allclose(f.node_init[0], np.stack([y @ H, np.sum(H * H, 0), [0.3, 0.3]], 1),
                               atol=1e-15)


def test_orthogonal_columns_have_zero_coupling_features():
    inst = orthogonal_instance(np.random.default_rng(0), 4, 8, A16, 0.1)
    f = build_features(inst, "plain")
    off = ~np.eye(4, dtype=bool)
    assert np.max(np.abs(f.edge_feat[0][off][:, 0])) < 1e-12


def test_mmse_features_match_detector():
    for inst in random_instances(1, ChannelModel("kron", 8, 16, 0.3), A16, 10.0, 5):
        f = build_features(inst, "mmse")
        est = mmse_estimate(inst)
        np.testing.assert_allclose(f.edge_feat[0, ..., 0], est.rho, atol=1e-12)
        np.testing.assert_allclose(f.node_init[0, :, 0], est.z, atol=1e-12)
        np.testing.assert_allclose(f.node_init[0, :, 1], np.diag(est.C), atol=1e-12)
        assert np.array_equal(f.edge_feat[0, ..., 1], f.edge_feat[0, ..., 1].T)


def test_encoder_zero_identity_and_affine():
    feat = build_features(random_instances(2, MODEL, A16, 10.0, 1)[0], "plain")
    arch = small("plain", state=3)
    p = zero_params(arch)
    net = Network(p, Tape(record=False))
    assert np.all(net.encode_nodes(feat).value == 0)
    p.tensors["enc.W"] = np.eye(3)
    net = Network(p, Tape(record=False))
    np.testing.assert_array_equal(net.encode_nodes(feat).value, feat.node_init)
    p = init_params(arch, RngStream(1))
    p.tensors["enc.b"] = np.arange(3.0)
    net = Network(p, Tape(record=False))
    twice = type(feat)(feat.edge_feat, 2 * feat.node_init)
    diff = net.encode_nodes(twice).value - net.encode_nodes(feat).value
    np.testing.assert_allclose(diff, feat.node_init @ p["enc.W"].T, atol=1e-13)


def test_encoder_rejects_wrong_width():
    feat = build_features(random_instances(2, MODEL, A16, 10.0, 1)[0], "mmse")
    with pytest.raises(ShapeMismatch):
        Network(zero_params(small("plain")), Tape(record=False)).encode_nodes(feat)


def test_zero_params_messages_equal_bias_and_uniform_readout():
    arch = small("plain")
    p = zero_params(arch)
    p.tensors["msg.b3"] = np.array([1.0, -2.0, 0.5, 3.0])
    net = Network(p, Tape(record=False))
    u = Tape.const(np.random.default_rng(0).normal(size=(1, 5, 4)))
    eps = Tape.const(np.ones((1, 5, 5, 2)))
    m = net.propagate(u, eps).value
    assert np.all(m == p["msg.b3"])
    probs = readout(np.zeros((2, 5, 4)), zero_params(arch))
    assert np.all(probs == 0.25)


def test_messages_are_directed():
    arch = small("plain")
    net = Network(init_params(arch, RngStream(3)), Tape(record=False))
    u = Tape.const(np.random.default_rng(1).normal(size=(1, 4, 4)))
    eps = Tape.const(np.ones((1, 4, 4, 2)))
    m = net.propagate(u, eps).value[0]
    assert not np.allclose(m[0, 1], m[1, 0])


def test_two_nodes_sum_is_single_message():
    t = Tape(record=False)
    m = np.random.default_rng(2).normal(size=(1, 2, 2, 4))
    s = t.neighbor_sum(Tape.const(m)).value
    np.testing.assert_array_equal(s[0, 0], m[0, 1, 0])
    np.testing.assert_array_equal(s[0, 1], m[0, 0, 1])


def test_zero_projection_gives_bias():
    arch = small("plain")
    p = init_params(arch, RngStream(5))
    p.tensors["proj.W"] = np.zeros_like(p["proj.W"])
    p.tensors["proj.b"] = np.array([1.0, 2.0, 3.0, 4.0])
    net = Network(p, Tape(record=False))
    rng = np.random.default_rng(3)
    u = Tape.const(rng.normal(size=(2, 3, 4)))
    h = Tape.const(rng.normal(size=(2, 3, 16)))
    msgs = Tape.const(rng.normal(size=(2, 3, 3, 4)))
    u_next, _ = net.aggregate(u, h, msgs)
    assert np.all(u_next.value == p["proj.b"])


def test_neighbor_order_does_not_matter():
    arch = small("plain")
    net = Network(init_params(arch, RngStream(6)), Tape(record=False))
    rng = np.random.default_rng(4)
    u = Tape.const(rng.normal(size=(1, 5, 4)))
    h = Tape.const(rng.normal(size=(1, 5, 16)))
    m = rng.normal(size=(1, 5, 5, 4))
    perm = np.array([0, 3, 1, 4, 2])
    # shuffle senders only: node j keeps its own row/column label for receivers
    a, _ = net.aggregate(u, h, Tape.const(m))
    shuffled = m.copy()
    for j in range(5):
        senders = [i for i in range(5) if i != j]
        order = [senders[k] for k in np.argsort(perm[:4])]
        shuffled[0, senders, j] = m[0, order, j]
    b, _ = net.aggregate(u, h, Tape.const(shuffled))
    np.testing.assert_allclose(a.value, b.value, atol=1e-12)


@pytest.mark.parametrize("variant", ["plain", "mmse"])
def test_forward_permutation_equivariance(variant):
    p = init_params(small(variant), RngStream(7))
    perm = np.random.default_rng(5).permutation(8)
    for inst in random_instances(8, MODEL, A16, 8.0, 5):
        base = forward(inst, p, A16).probs
        permuted = make_instance(inst.H[:, perm], inst.y, inst.sigma2, inst.x_idx[perm])
        np.testing.assert_allclose(forward(permuted, p, A16).probs, base[perm], atol=1e-9)


@pytest.mark.parametrize("variant", ["plain", "mmse"])
def test_eval_mode_deterministic_and_soft_bounds(variant):
    p = init_params(small(variant), RngStream(8))
    insts = random_instances(9, MODEL, A16, 5.0, 20)
    H, y, s2, _ = stack_instances(insts)
    r1 = detect_batch(H, y, s2, p, A16)
    r2 = detect_batch(H, y, s2, p, A16, chunk=7)
    assert np.array_equal(r1.probs, r2.probs)
    np.testing.assert_allclose(r1.probs.sum(-1), 1.0, atol=1e-12)
    np.testing.assert_allclose(r1.soft, r1.probs @ A16.levels, atol=1e-12)
    assert np.all(r1.soft >= A16.levels[0] - 1e-15) and np.all(r1.soft <= A16.levels[-1] + 1e-15)
    logits, _ = forward_logits(H, y, s2, p)
    assert np.array_equal(r1.hard_idx, np.argmax(logits.value, -1))
    assert r1.detector == ("gnn" if variant == "plain" else "gnn-mmse")


def test_train_mode_dropout_is_stream_driven():
    p = init_params(small("plain"), RngStream(9))
    inst = random_instances(10, MODEL, A16, 5.0, 1)[0]
    a = forward(inst, p, A16, rng=RngStream(1), train_mode=True).probs
    b = forward(inst, p, A16, rng=RngStream(1), train_mode=True).probs
    c = forward(inst, p, A16, rng=RngStream(2), train_mode=True).probs
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    assert np.array_equal(forward(inst, p, A16, rng=RngStream(2)).probs, forward(inst, p, A16).probs)


def test_zero_iterations_reads_out_initial_states():
    arch = small("plain", iterations=0)
    p = init_params(arch, RngStream(10))
    inst = random_instances(11, MODEL, A16, 5.0, 1)[0]
    f = build_features(inst, "plain")
    u0 = f.node_init @ p["enc.W"].T + p["enc.b"]
    np.testing.assert_allclose(forward(inst, p, A16).probs, readout(u0, p)[0], atol=1e-14)


def test_plain_reads_y_only_through_correlations():
    # two observations with the same H^T y give identical outputs
    p = init_params(small("plain"), RngStream(11))
    inst = random_instances(12, MODEL, A16, 5.0, 1)[0]
    Q, _ = np.linalg.qr(inst.H, mode="complete")
    y2 = inst.y + Q[:, 8:] @ np.random.default_rng(6).normal(size=8)
    other = make_instance(inst.H, y2, inst.sigma2)
    np.testing.assert_allclose(forward(other, p, A16).probs, forward(inst, p, A16).probs, atol=1e-12)


def test_parameter_validation():
    arch = small("plain")
    t = zero_params(arch).tensors
    t["enc.W"] = np.zeros((4, 5))
    with pytest.raises(ShapeMismatch):
        GnnParameters(arch, t)
    with pytest.raises(ShapeMismatch):
        detect_batch(np.zeros((1, 16, 8)), np.zeros((1, 16)), np.ones(1), zero_params(arch),
                     build_alphabet(64))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from(["plain", "mmse"]))
def test_probabilities_are_distributions(seed, variant):
    p = init_params(small(variant), RngStream(seed))
    insts = random_instances(seed, ChannelModel("iid", 4, 8), A16, 3.0, 2)
    H, y, s2, _ = stack_instances(insts)
    r = detect_batch(H, y, s2, p, A16)
    assert np.all(r.probs >= 0)
    np.testing.assert_allclose(r.probs.sum(-1), 1.0, atol=1e-12)
