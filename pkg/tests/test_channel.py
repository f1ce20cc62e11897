import numpy as np
import pytest

from mimo_gnn.channel import (ChannelModel, exp_corr_matrix, gen_iid, gen_kronecker,
                              reconstruct_noise, sample_instance, sigma2_from_snr)
from mimo_gnn.constellation import build_alphabet, hard_slice
from mimo_gnn.numerics import RngStream, cholesky, gaussian


def test_sigma2_examples():
    assert sigma2_from_snr(10, 32, 64) == pytest.approx(0.05, rel=1e-15)
    assert sigma2_from_snr(0, 8, 8) == 1.0


def test_snr_definition_by_simulation():
    # ratio of average signal to average noise power, 1e5 draws at 10 dB
    m = ChannelModel("iid", 8, 16)
    a = build_alphabet(16)
    s2 = sigma2_from_snr(10, 8, 16)
    rng = np.random.default_rng(0)
    n = 100_000
    H = rng.normal(0, 1 / np.sqrt(16), size=(n, 16, 8))
    x = a.levels[rng.integers(0, 4, size=(n, 8))]
    sig = np.einsum("nrt,nt->nr", H, x)
    noise = rng.normal(0, np.sqrt(s2), size=(n, 16))
    ratio = np.sum(sig ** 2) / np.sum(noise ** 2)
    assert ratio == pytest.approx(10.0, rel=0.03)
    assert m.n_t == 8


def test_gen_iid_statistics():
    H = gen_iid(RngStream(1), 64, 32)
    assert np.array_equal(H, gen_iid(RngStream(1), 64, 32))
    big = np.concatenate([gen_iid(RngStream(2, (k,)), 64, 32).ravel() for k in range(500)])
    assert big.size >= 10 ** 6
    assert big.var() == pytest.approx(1 / 64, rel=0.01)
    G = sum(h.T @ h for h in (gen_iid(RngStream(3, (k,)), 16, 8) for k in range(10_000))) / 10_000
    off = G - np.diag(np.diag(G))
    assert np.max(np.abs(off)) < 0.02
    np.testing.assert_allclose(np.diag(G), 1.0, atol=0.03)


def test_exp_corr_matrix():
    assert np.array_equal(exp_corr_matrix(5, 0.0), np.eye(5))
    np.testing.assert_allclose(exp_corr_matrix(3, 0.5),
                               [[1, .5, .25], [.5, 1, .5], [.25, .5, 1]], atol=0)
    cholesky(exp_corr_matrix(64, 0.99))


def test_kronecker_rho_zero_matches_iid():
    m = ChannelModel("kron", 8, 16, 0.0)
    assert np.array_equal(gen_kronecker(RngStream(5), m), gen_iid(RngStream(5), 16, 8))


def test_kronecker_second_order_statistics():
    m = ChannelModel("kron", 8, 16, 0.3)
    R_T = exp_corr_matrix(8, 0.3)
    G = sum(h.T @ h for h in (gen_kronecker(RngStream(4, (k,)), m) for k in range(10_000))) / 10_000
    assert np.max(np.abs(G - R_T)) < 0.03
    assert np.trace(G) == pytest.approx(8, rel=0.02)


def test_channel_model_validation():
    with pytest.raises(ValueError):
        ChannelModel("iid", 16, 8)
    with pytest.raises(ValueError):
        ChannelModel("kron", 8, 16, 1.0)
    with pytest.raises(ValueError):
        ChannelModel("iid", 7, 16)


def test_sample_instance_noiseless_recovery():
    m = ChannelModel("iid", 8, 16)
    a = build_alphabet(16)
    for k in range(20):
        inst = sample_instance(RngStream(8, (k,)), m, a, 200.0)
        x_ls = np.linalg.lstsq(inst.H, inst.y, rcond=None)[0]
        assert np.array_equal(hard_slice(x_ls, a), inst.x_idx)


def test_sample_instance_reconstruction_bitwise():
    m = ChannelModel("kron", 8, 16, 0.3)
    a = build_alphabet(16)
    inst = sample_instance(RngStream(9, (3,)), m, a, 10.0)
    n = reconstruct_noise(inst)
    assert np.array_equal(inst.y, inst.H @ a.levels[inst.x_idx] + n)
    again = sample_instance(RngStream(9, (3,)), m, a, 10.0)
    assert np.array_equal(again.y, inst.y) and np.array_equal(again.H, inst.H)
    # noise stream is independent of the channel stream
    assert not np.array_equal(n, gaussian(inst.rng.child(0), 16, 0, np.sqrt(inst.sigma2)))


def test_sample_instance_symbol_energy():
    m = ChannelModel("iid", 8, 16)
    a = build_alphabet(16)
    e = np.mean([np.sum(sample_instance(RngStream(10, (k,)), m, a, 10.0).x(a) ** 2) / 8
                 for k in range(10_000)])
    assert e == pytest.approx(1.0, rel=0.01)
