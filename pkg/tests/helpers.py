"""Shared oracles and instance builders for the test suite."""
import itertools

import numpy as np

from mimo_gnn.channel import ChannelModel, MimoInstance, sample_instance
from mimo_gnn.numerics import RngStream


def make_instance(H, y, sigma2, x_idx=None, snr_db=0.0):
    H = np.asarray(H, dtype=float)
    n_r, n_t = H.shape
    model = ChannelModel("iid", max(n_t, 2) + (max(n_t, 2) % 2), max(n_r, n_t, 2) + (max(n_r, n_t, 2) % 2))
    if x_idx is None:
        x_idx = np.zeros(n_t, dtype=np.int64)
    return MimoInstance(H=H, y=np.asarray(y, dtype=float), x_idx=np.asarray(x_idx), sigma2=sigma2,
                        snr_db=snr_db, model=model, rng=RngStream(0))


def orthogonal_instance(rng, n_t, n_r, a, sigma2):
    """Instance whose channel has mutually orthogonal (unequal-norm) columns."""
    Q, _ = np.linalg.qr(rng.normal(size=(n_r, n_t)))
    H = Q * rng.uniform(0.5, 1.5, size=n_t)
    x = rng.integers(0, a.size, size=n_t)
    y = H @ a.levels[x] + rng.normal(0, np.sqrt(sigma2), size=n_r)
    return make_instance(H, y, sigma2, x)


def enumerate_log_posterior(H, y, sigma2, log_prior, levels):
    """All configurations and their log p(x|y) up to a constant, by brute force."""
    n_t = H.shape[1]
    cfgs = np.array(list(itertools.product(range(len(levels)), repeat=n_t)))
    X = levels[cfgs]
    resid = y[None, :] - X @ H.T
    lp = -np.sum(resid ** 2, axis=1) / (2 * sigma2)
    lp = lp + log_prior[np.arange(n_t), cfgs].sum(axis=1)
    return cfgs, lp


def exact_marginals(H, y, sigma2, log_prior, levels):
    cfgs, lp = enumerate_log_posterior(H, y, sigma2, log_prior, levels)
    w = np.exp(lp - lp.max())
    w /= w.sum()
    n_t = H.shape[1]
    out = np.zeros((n_t, len(levels)))
    for i in range(n_t):
        np.add.at(out[i], cfgs[:, i], w)
    return out


def random_instances(seed, model, a, snr_db, count):
    return [sample_instance(RngStream(seed, (k,)), model, a, snr_db) for k in range(count)]


def tiny_batch(seed, n_t=4, n_r=8, qam=4, count=3, snr_db=5.0, model_kind="iid", rho=0.0):
    """Small stacked batch (H, y, sigma2, x_idx) for gradient checks."""
    from mimo_gnn.channel import stack_instances
    from mimo_gnn.constellation import build_alphabet
    m = ChannelModel(model_kind, n_t, n_r, rho)
    a = build_alphabet(qam)
    return stack_instances([sample_instance(RngStream(seed, (k,)), m, a, snr_db)
                            for k in range(count)])


def fd_gradients(loss_fn, params, step=1e-6):
    """Central finite differences of ``loss_fn(params)`` w.r.t. every entry."""
    out = {}
    for name, arr in params.tensors.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            up = loss_fn(params)
            flat[k] = orig - step
            down = loss_fn(params)
            flat[k] = orig
            g.reshape(-1)[k] = (up - down) / (2 * step)
        out[name] = g
    return out


def relative_errors(analytic, numeric):
    errs = {}
    for k in analytic:
        a, n = analytic[k], numeric[k]
        scale = max(np.linalg.norm(a), np.linalg.norm(n))
        errs[k] = 0.0 if scale == 0 else float(np.linalg.norm(a - n) / scale)
    return errs


def gradient_check(variant, seed=0, step=1e-6):
    """Tape gradients vs central differences on the tiny reference model, dropout frozen."""
    from mimo_gnn.gnn import GnnArch, init_params
    from mimo_gnn.training import batch_loss, loss_and_grads
    arch = GnnArch(variant=variant, hidden=8, state=4, message=4, iterations=2, alphabet_size=2)
    params = init_params(arch, RngStream(seed))
    # larger-than-default init so every unit is exercised
    for k, v in params.tensors.items():
        params.tensors[k] = v * 2.0 + (0.1 if v.ndim == 1 else 0.0)
    H, y, s2, x = tiny_batch(seed + 1)
    drop = RngStream(seed + 2)
    _, grads = loss_and_grads(params, H, y, s2, x, drop)
    numeric = fd_gradients(lambda p: batch_loss(p, H, y, s2, x, rng=drop), params, step)
    return relative_errors(grads, numeric)
