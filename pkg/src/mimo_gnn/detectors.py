"""Baseline detectors: linear MMSE, damped loopy BP, and exhaustive ML.

All detectors accept stacked batches (leading axis) as well as single
instances; ``DetectionResult`` mirrors whichever shape it was given.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .channel import MimoInstance
from .constellation import Alphabet, hard_slice
from .errors import NonFiniteMessage, TooLarge
from .mrf import PairwiseMrf
from .numerics import log_normalize, softmax, sym_posdef_solve


@dataclass
class DetectionResult:
    probs: np.ndarray      # (..., N_t, K)
    soft: np.ndarray       # (..., N_t)
    hard_idx: np.ndarray   # (..., N_t)
    detector: str

    @classmethod
    def from_probs(cls, probs: np.ndarray, levels: np.ndarray, detector: str,
                   hard_idx: np.ndarray | None = None) -> "DetectionResult":
        soft = probs @ levels
        if hard_idx is None:
            hard_idx = np.argmax(probs, axis=-1)
        return cls(probs=probs, soft=soft, hard_idx=hard_idx, detector=detector)


@dataclass
class MmseOutput:
    z: np.ndarray    # (..., N_t)
    C: np.ndarray    # (..., N_t, N_t)
    rho: np.ndarray  # (..., N_t, N_t)


def mmse_terms(H: np.ndarray, y: np.ndarray, sigma2) -> MmseOutput:
    """Batched MMSE estimate, error covariance and squared correlation."""
    sigma2 = np.asarray(sigma2, dtype=float)
    n = H.shape[-1]
    Ht = np.swapaxes(H, -1, -2)
    A = Ht @ H + sigma2[..., None, None] * np.eye(n)
    rhs = np.concatenate([(Ht @ y[..., None]), np.broadcast_to(np.eye(n), A.shape)], axis=-1)
    sol = sym_posdef_solve(A, rhs)
    z = sol[..., 0]
    C = sigma2[..., None, None] * sol[..., 1:]
    C = 0.5 * (C + np.swapaxes(C, -1, -2))
    d = np.diagonal(C, axis1=-2, axis2=-1)
    rho = C ** 2 / (d[..., :, None] * d[..., None, :])
    return MmseOutput(z=z, C=C, rho=rho)


def mmse_estimate(inst: MimoInstance) -> MmseOutput:
    return mmse_terms(inst.H, inst.y, inst.sigma2)


def mmse_probs(est: MmseOutput, levels: np.ndarray) -> np.ndarray:
    var = np.diagonal(est.C, axis1=-2, axis2=-1)
    scores = -(levels - est.z[..., None]) ** 2 / (2.0 * var[..., None])
    return softmax(scores, axis=-1)


def mmse_detect_batch(H, y, sigma2, a: Alphabet) -> DetectionResult:
    est = mmse_terms(H, y, sigma2)
    return DetectionResult.from_probs(mmse_probs(est, a.levels), a.levels, "mmse",
                                      hard_idx=hard_slice(est.z, a))


def mmse_detect(inst: MimoInstance, a: Alphabet) -> DetectionResult:
    return mmse_detect_batch(inst.H, inst.y, inst.sigma2, a)


@dataclass(frozen=True)
class BpConfig:
    iterations: int = 8
    damping: float = 0.75
    prior_feedback: bool = True

    def __post_init__(self):
        if not 0.0 <= self.damping < 1.0:
            raise ValueError(f"damping must lie in [0, 1), got {self.damping}")
        if self.iterations < 1:
            raise ValueError("BP needs at least one iteration")


def _damp(log_old: np.ndarray, log_new: np.ndarray, damping: float) -> np.ndarray:
    # convex mix in the probability domain, then renormalise
    if damping == 0.0:
        return log_new
    mixed = np.logaddexp(np.log(damping) + log_old, np.log1p(-damping) + log_new)
    return log_normalize(mixed)


def bp_beliefs(log_lik: np.ndarray, log_prior: np.ndarray, coeff: np.ndarray,
               levels: np.ndarray, cfg: BpConfig) -> np.ndarray:
    """Flooding-schedule sum-product BP in the log domain.

    Shapes: ``log_lik``/``log_prior`` ``(..., N, K)``, ``coeff`` ``(..., N, N)``.
    ``logm[..., i, j, :]`` is the message from node i to node j over x_j.
    Returns normalised beliefs ``(..., N, K)``.
    """
    n, k = log_lik.shape[-2:]
    off = ~np.eye(n, dtype=bool)
    pair = coeff[..., :, :, None, None] * np.multiply.outer(levels, levels)  # (..., i, j, xi, xj)
    logm = np.where(off[..., None], -np.log(k), 0.0) * np.ones(log_lik.shape[:-2] + (n, n, k))
    prior = log_prior
    belief = None
    for t in range(cfg.iterations):
        phi = log_lik + prior
        incoming = np.sum(logm, axis=-3)                       # (..., i, xi)
        cavity = (phi + incoming)[..., :, None, :] - np.swapaxes(logm, -2, -3)
        fresh = log_normalize(_lse_over_xi(cavity, pair))
        fresh = np.where(off[..., None], fresh, 0.0)
        logm = fresh if t == 0 else np.where(off[..., None], _damp(logm, fresh, cfg.damping), 0.0)
        b_fresh = log_normalize(phi + np.sum(logm, axis=-3))
        belief = b_fresh if t == 0 else _damp(belief, b_fresh, cfg.damping)
        if not (np.all(np.isfinite(logm)) and np.all(np.isfinite(belief))):
            raise NonFiniteMessage(f"non-finite BP message at iteration {t + 1}")
        if cfg.prior_feedback:
            prior = belief
    return np.exp(belief)


def _lse_over_xi(cavity: np.ndarray, pair: np.ndarray) -> np.ndarray:
    s = cavity[..., :, None] + pair                           # (..., i, j, xi, xj)
    mx = np.max(s, axis=-2, keepdims=True)
    return np.squeeze(mx, -2) + np.log(np.sum(np.exp(s - mx), axis=-2))


def bp_detect(mrf: PairwiseMrf, cfg: BpConfig = BpConfig()) -> DetectionResult:
    levels = mrf.alphabet.levels
    probs = bp_beliefs(mrf.log_likelihood, mrf.log_prior, mrf.log_pair_coeff, levels, cfg)
    return DetectionResult.from_probs(probs, levels, "bp")


MAX_ML_CANDIDATES = 2 ** 20


def ml_candidates(n_t: int, a: Alphabet) -> np.ndarray:
    if a.size ** n_t > MAX_ML_CANDIDATES:
        raise TooLarge(f"{a.size}^{n_t} candidates exceed the exhaustive-search limit")
    return np.array(list(itertools.product(range(a.size), repeat=n_t)), dtype=np.int64)


def ml_detect_batch(H: np.ndarray, y: np.ndarray, a: Alphabet) -> np.ndarray:
    """Exhaustive argmin of ||Hx - y||^2, returns indices (..., N_t)."""
    n_t = H.shape[-1]
    cand = ml_candidates(n_t, a)
    X = a.levels[cand]                                        # (C, N)
    Ht = np.swapaxes(H, -1, -2)
    G = Ht @ H
    hy = np.einsum("...rt,...r->...t", H, y)
    # ||Hx - y||^2 - ||y||^2 = x^T G x - 2 x^T H^T y
    cost = np.einsum("cn,...nm,cm->...c", X, G, X) - 2.0 * hy @ X.T
    return cand[np.argmin(cost, axis=-1)]


def ml_oracle(inst: MimoInstance, a: Alphabet) -> np.ndarray:
    return ml_detect_batch(inst.H, inst.y, a)
