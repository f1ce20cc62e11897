"""Log-domain pairwise MRF for the posterior p(x | y) of a MIMO instance.

Self potential (log):  (y^T h_i s - 0.5 h_i^T h_i s^2) / sigma2 + log p_i(s)
Pair potential (log):  -h_i^T h_j / sigma2 * x_i * x_j
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import MimoInstance
from .constellation import Alphabet
from .errors import ZeroNoiseVariance
from .numerics import logsumexp


@dataclass(frozen=True)
class PairwiseMrf:
    alphabet: Alphabet
    log_self: np.ndarray        # (N_t, K), prior included
    log_pair_coeff: np.ndarray  # (N_t, N_t), diagonal zeroed
    log_prior: np.ndarray       # (N_t, K)

    @property
    def n_nodes(self) -> int:
        return self.log_self.shape[-2]

    @property
    def log_likelihood(self) -> np.ndarray:
        """Self potentials without the prior factor."""
        return self.log_self - self.log_prior


def uniform_log_prior(n_t: int, a: Alphabet) -> np.ndarray:
    return np.full((n_t, a.size), -np.log(a.size))


def mrf_terms(H: np.ndarray, y: np.ndarray, sigma2, levels: np.ndarray):
    """Batched likelihood self terms and pair coefficients.

    ``H`` is ``(..., N_r, N_t)``; returns ``(..., N_t, K)`` and ``(..., N_t, N_t)``.
    """
    sigma2 = np.asarray(sigma2, dtype=float)
    if np.any(sigma2 <= 0):
        raise ZeroNoiseVariance("sigma2 must be positive")
    s2 = sigma2[..., None, None]
    G = np.swapaxes(H, -1, -2) @ H
    yh = np.einsum("...r,...rt->...t", y, H)
    gii = np.diagonal(G, axis1=-2, axis2=-1)
    lik = (yh[..., None] * levels - 0.5 * gii[..., None] * levels ** 2) / s2
    coeff = -G / s2
    n = H.shape[-1]
    coeff = coeff * (1.0 - np.eye(n))
    return lik, coeff


def build_mrf(inst: MimoInstance, log_prior: np.ndarray, a: Alphabet) -> PairwiseMrf:
    if inst.sigma2 <= 0:
        raise ZeroNoiseVariance("sigma2 must be positive")
    log_prior = np.asarray(log_prior, dtype=float)
    if not np.allclose(logsumexp(log_prior, axis=-1), 0.0, atol=1e-9):
        raise ValueError("prior rows must be normalised log-probabilities")
    lik, coeff = mrf_terms(inst.H, inst.y, inst.sigma2, a.levels)
    return PairwiseMrf(alphabet=a, log_self=lik + log_prior, log_pair_coeff=coeff,
                       log_prior=log_prior)


def log_density(mrf: PairwiseMrf, idx: np.ndarray) -> np.ndarray:
    """Unnormalised log-density of complete assignments ``idx`` (..., N_t)."""
    idx = np.asarray(idx)
    s = mrf.alphabet.levels[idx]
    n = mrf.n_nodes
    self_terms = mrf.log_self[np.arange(n), idx].sum(axis=-1)
    # each undirected edge counted once: half of the symmetric quadratic form
    pair_terms = 0.5 * np.einsum("...i,ij,...j->...", s, mrf.log_pair_coeff, s)
    return self_terms + pair_terms
