"""Channel matrices, SNR-to-noise mapping and detection instances.

All dimensions are those of the real-valued system ``y = H x + n``; a complex
system with ``N_r/2`` receive and ``N_t/2`` transmit antennas maps onto it.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .constellation import Alphabet
from .numerics import RngStream, gaussian, sym_sqrt


class ChannelKind(str, Enum):
    IID = "iid"
    KRONECKER = "kron"


@dataclass(frozen=True)
class ChannelModel:
    kind: ChannelKind
    n_t: int
    n_r: int
    rho: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ChannelKind(self.kind))
        if not (self.n_r >= self.n_t >= 2):
            raise ValueError(f"need N_r >= N_t >= 2, got N_t={self.n_t}, N_r={self.n_r}")
        if self.n_t % 2 or self.n_r % 2:
            raise ValueError("real-valued dimensions must be even")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")
        if self.kind is ChannelKind.IID and self.rho != 0.0:
            raise ValueError("rho only applies to the Kronecker model")


@dataclass
class MimoInstance:
    H: np.ndarray
    y: np.ndarray
    x_idx: np.ndarray
    sigma2: float
    snr_db: float
    model: ChannelModel
    rng: RngStream

    @property
    def n_t(self) -> int:
        return self.H.shape[1]

    def x(self, a: Alphabet) -> np.ndarray:
        return a.levels[self.x_idx]


def sigma2_from_snr(snr_db: float, n_t: int, n_r: int) -> float:
    """Noise variance for a given SNR, using E||Hx||^2 = N_t."""
    if n_t <= 0 or n_r <= 0:
        raise ValueError("dimensions must be positive")
    return n_t / (n_r * 10.0 ** (snr_db / 10.0))


def gen_iid(rng: RngStream, n_r: int, n_t: int) -> np.ndarray:
    return gaussian(rng, (n_r, n_t), 0.0, 1.0 / np.sqrt(n_r))


def exp_corr_matrix(n: int, rho: float) -> np.ndarray:
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    k = np.arange(n)
    d = np.abs(k[:, None] - k[None, :])
    if rho == 0.0:
        return np.eye(n)
    return rho ** d


_SQRT_CACHE: dict[tuple[int, float], np.ndarray] = {}


def _corr_sqrt(n: int, rho: float) -> np.ndarray:
    key = (n, rho)
    if key not in _SQRT_CACHE:
        S = sym_sqrt(exp_corr_matrix(n, rho))
        S.setflags(write=False)
        _SQRT_CACHE[key] = S
    return _SQRT_CACHE[key]


def gen_kronecker(rng: RngStream, model: ChannelModel) -> np.ndarray:
    """``R_R^{1/2} K R_T^{1/2}`` with real K, entries N(0, 1/N_r)."""
    K = gen_iid(rng, model.n_r, model.n_t)
    if model.rho == 0.0:
        return K
    return _corr_sqrt(model.n_r, model.rho) @ K @ _corr_sqrt(model.n_t, model.rho)


def gen_channel(rng: RngStream, model: ChannelModel) -> np.ndarray:
    if model.kind is ChannelKind.IID:
        return gen_iid(rng, model.n_r, model.n_t)
    return gen_kronecker(rng, model)


def draw_noise(rng: RngStream, n_r: int, sigma2: float) -> np.ndarray:
    return gaussian(rng, n_r, 0.0, float(np.sqrt(sigma2)))


def sample_instance(rng: RngStream, model: ChannelModel, a: Alphabet, snr_db: float,
                    sigma2: float | None = None) -> MimoInstance:
    """Draw H, x and n from independent children of ``rng``.

    ``sigma2`` overrides the SNR mapping (used to reach the noiseless limit).
    """
    if sigma2 is None:
        sigma2 = sigma2_from_snr(snr_db, model.n_t, model.n_r)
    H = gen_channel(rng.child(0), model)
    x_idx = rng.child(1).generator.integers(0, a.size, size=model.n_t)
    n = draw_noise(rng.child(2), model.n_r, sigma2)
    y = H @ a.levels[x_idx] + n
    return MimoInstance(H=H, y=y, x_idx=x_idx, sigma2=float(sigma2), snr_db=float(snr_db),
                        model=model, rng=rng)


def reconstruct_noise(inst: MimoInstance) -> np.ndarray:
    return draw_noise(inst.rng.child(2), inst.model.n_r, inst.sigma2)


def stack_instances(instances) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Batch arrays ``(H, y, sigma2, x_idx)`` from a list of same-sized instances."""
    H = np.stack([i.H for i in instances])
    y = np.stack([i.y for i in instances])
    s2 = np.array([i.sigma2 for i in instances])
    x = np.stack([i.x_idx for i in instances])
    return H, y, s2, x
