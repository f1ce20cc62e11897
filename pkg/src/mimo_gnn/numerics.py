"""Small dense linear algebra, stable softmax and reproducible random streams.

Everything is float64 numpy arrays. Functions accept stacked inputs where it
is cheap to do so (leading batch axes), since the detectors run vectorised
over many instances.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special

from .errors import NotPositiveDefinite, NotSymmetric

RNG_ALGORITHM = "sfc64-seedsequence"


@dataclass(frozen=True)
class RngStream:
    """A named, splittable random stream.

    The stream is identified by ``seed`` and a path of child ids; two
    streams with equal identity produce bitwise-identical draws on every
    platform. Children are derived by id, never by consuming the parent, so
    per-trial streams do not depend on scheduling order.
    """

    seed: int
    path: tuple[int, ...] = ()
    _gen: Optional[np.random.Generator] = field(
        default=None, init=False, repr=False, compare=False)

    @property
    def stream_id(self) -> tuple[int, ...]:
        return self.path

    def child(self, *ids: int) -> "RngStream":
        return RngStream(self.seed, self.path + tuple(int(i) for i in ids))

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(self.seed, spawn_key=self.path)
            object.__setattr__(self, "_gen", np.random.Generator(np.random.SFC64(ss)))
        return self._gen


def _check_symmetric(A: np.ndarray, rtol: float = 1e-10) -> None:
    scale = max(np.max(np.abs(A)), 1e-300)
    if np.max(np.abs(A - np.swapaxes(A, -1, -2))) > rtol * scale:
        raise NotSymmetric("matrix is not symmetric")


def cholesky(A: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor; raises NotPositiveDefinite on a bad pivot."""
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None


def sym_posdef_solve(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve ``A X = B`` for symmetric positive definite ``A`` via Cholesky.

    ``A`` may be stacked ``(..., n, n)``; ``B`` is ``(..., n)`` or
    ``(..., n, k)``.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    _check_symmetric(A)
    L = cholesky(A)
    vec = B.ndim == A.ndim - 1
    rhs = B[..., None] if vec else B
    w = np.linalg.solve(L, rhs)
    X = np.linalg.solve(np.swapaxes(L, -1, -2), w)
    return X[..., 0] if vec else X


def sym_sqrt(A: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root; negative round-off eigenvalues clamp to 0."""
    A = np.asarray(A, dtype=float)
    _check_symmetric(A)
    w, V = np.linalg.eigh(A)
    S = (V * np.sqrt(np.clip(w, 0.0, None))[..., None, :]) @ np.swapaxes(V, -1, -2)
    return 0.5 * (S + np.swapaxes(S, -1, -2))


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    return special.softmax(np.asarray(z, dtype=float), axis=axis)


def logsumexp(z: np.ndarray, axis: int = -1, keepdims: bool = False) -> np.ndarray:
    return special.logsumexp(z, axis=axis, keepdims=keepdims)


def log_normalize(z: np.ndarray, axis: int = -1) -> np.ndarray:
    """Shift log-weights so they logsumexp to zero along ``axis``."""
    return z - special.logsumexp(z, axis=axis, keepdims=True)


def gaussian(rng: RngStream, n: int | tuple[int, ...], mean: float = 0.0,
             std: float = 1.0) -> np.ndarray:
    if std < 0:
        raise ValueError("std must be non-negative")
    return rng.generator.normal(mean, std, size=n)
