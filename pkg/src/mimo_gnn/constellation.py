"""Real-valued square-QAM alphabets, slicing and symbol error counting."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import IndexOutOfRange, LengthMismatch, UnsupportedOrder

SUPPORTED_ORDERS = (4, 16, 64)


@dataclass(frozen=True)
class Alphabet:
    """One real dimension of square M-QAM: sqrt(M) equally spaced levels.

    Levels are sorted ascending and scaled to unit mean energy, so a vector
    of uniformly drawn symbols has E{x^T x} = len(x).
    """

    order: int
    levels: np.ndarray
    scale: float

    @property
    def size(self) -> int:
        return len(self.levels)

    def __hash__(self) -> int:
        return hash(self.order)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Alphabet) and other.order == self.order


def build_alphabet(M: int) -> Alphabet:
    if M not in SUPPORTED_ORDERS:
        raise UnsupportedOrder(f"unsupported QAM order {M}; expected one of {SUPPORTED_ORDERS}")
    k = math.isqrt(M)
    raw = np.arange(-(k - 1), k, 2, dtype=float)
    scale = 1.0 / math.sqrt(np.mean(raw ** 2))
    levels = raw * scale
    levels.setflags(write=False)
    return Alphabet(order=M, levels=levels, scale=scale)


def hard_slice(v, a: Alphabet):
    """Index of the nearest level (ties go to the smaller level).

    Works elementwise on arrays; returns an int for scalar input.
    """
    v = np.asarray(v, dtype=float)
    dist = np.abs(v[..., None] - a.levels)
    idx = np.argmin(dist, axis=-1)  # argmin picks the first (smaller) level on ties
    return int(idx) if idx.ndim == 0 else idx


def one_hot(idx, a: Alphabet) -> np.ndarray:
    idx = np.asarray(idx)
    if np.any(idx < 0) or np.any(idx >= a.size):
        raise IndexOutOfRange(f"symbol index out of range [0, {a.size})")
    return np.eye(a.size)[idx]


def symbol_error_rate(truth, detected) -> float:
    truth = np.asarray(truth).ravel()
    detected = np.asarray(detected).ravel()
    if truth.shape != detected.shape:
        raise LengthMismatch(f"{truth.size} truth symbols vs {detected.size} detected")
    if truth.size == 0:
        raise LengthMismatch("empty symbol lists")
    return float(np.count_nonzero(truth != detected)) / truth.size
