"""Tensor-level reverse-mode differentiation on numpy arrays.

A ``Tape`` records each primitive as it runs (value plus a closure that
pushes the output gradient to the inputs). ``Tape.backward`` replays the
record in reverse. With ``record=False`` the same primitives just compute,
which is how evaluation-mode forward passes run.

Only the primitives the detector network needs are provided.
"""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .errors import TapeNotScalarRooted
from .numerics import RngStream


class Var:
    __slots__ = ("value", "grad", "name", "tracked")

    def __init__(self, value: np.ndarray, tracked: bool = False, name: Optional[str] = None):
        self.value = value
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self.tracked = tracked

    @property
    def shape(self):
        return self.value.shape

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g
        else:
            self.grad = self.grad + g

    def __repr__(self):
        return f"Var(shape={self.value.shape}, name={self.name})"


def _sum_to(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to ``shape``."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


class Tape:
    def __init__(self, record: bool = True):
        self.record = record
        self._ops: list[tuple[Var, Callable[[np.ndarray], None]]] = []

    def __len__(self):
        return len(self._ops)

    # -- leaves -------------------------------------------------------
    def param(self, value: np.ndarray, name: Optional[str] = None) -> Var:
        return Var(value, tracked=self.record, name=name)

    @staticmethod
    def const(value) -> Var:
        return Var(np.asarray(value, dtype=float))

    # -- bookkeeping --------------------------------------------------
    def _emit(self, value: np.ndarray, inputs: Sequence[Var],
              backward: Callable[[np.ndarray], None]) -> Var:
        tracked = self.record and any(v.tracked for v in inputs)
        out = Var(value, tracked=tracked)
        if tracked:
            self._ops.append((out, backward))
        return out

    def backward(self, loss: Var) -> None:
        if loss.value.size != 1:
            raise TapeNotScalarRooted(f"loss has shape {loss.value.shape}, expected a scalar")
        if not loss.tracked or not self._ops:
            raise TapeNotScalarRooted("loss was not recorded on this tape")
        loss.grad = np.ones_like(loss.value)
        for out, fn in reversed(self._ops):
            if out.grad is not None:
                fn(out.grad)

    # -- primitives ---------------------------------------------------
    def linear(self, x: Var, W: Var, b: Optional[Var] = None) -> Var:
        """``x @ W.T + b`` over the last axis of ``x``; W is (out, in)."""
        lead = x.value.shape[:-1]
        x2 = x.value.reshape(-1, x.value.shape[-1])
        val = x2 @ W.value.T
        if b is not None:
            val += b.value
        val = val.reshape(lead + (W.value.shape[0],))
        inputs = (x, W) if b is None else (x, W, b)

        def back(g):
            g2 = g.reshape(-1, g.shape[-1])
            if x.tracked:
                x._accumulate((g2 @ W.value).reshape(x.value.shape))
            if W.tracked:
                W._accumulate(g2.T @ x2)
            if b is not None and b.tracked:
                b._accumulate(g2.sum(axis=0))
        return self._emit(val, inputs, back)

    def add(self, a: Var, b: Var) -> Var:
        def back(g):
            if a.tracked:
                a._accumulate(_sum_to(g, a.value.shape))
            if b.tracked:
                b._accumulate(_sum_to(g, b.value.shape))
        return self._emit(a.value + b.value, (a, b), back)

    def mul(self, a: Var, b: Var) -> Var:
        def back(g):
            if a.tracked:
                a._accumulate(_sum_to(g * b.value, a.value.shape))
            if b.tracked:
                b._accumulate(_sum_to(g * a.value, b.value.shape))
        return self._emit(a.value * b.value, (a, b), back)

    def one_minus(self, a: Var) -> Var:
        def back(g):
            a._accumulate(-g)
        return self._emit(1.0 - a.value, (a,), back)

    def relu(self, a: Var) -> Var:
        mask = a.value > 0

        def back(g):
            a._accumulate(g * mask)
        return self._emit(a.value * mask, (a,), back)

    def sigmoid(self, a: Var) -> Var:
        # 0.5*(1+tanh(x/2)) avoids overflow for large |x|
        s = 0.5 * (1.0 + np.tanh(0.5 * a.value))

        def back(g):
            a._accumulate(g * s * (1.0 - s))
        return self._emit(s, (a,), back)

    def tanh(self, a: Var) -> Var:
        t = np.tanh(a.value)

        def back(g):
            a._accumulate(g * (1.0 - t * t))
        return self._emit(t, (a,), back)

    def concat(self, parts: Sequence[Var], axis: int = -1) -> Var:
        sizes = [p.value.shape[axis] for p in parts]
        splits = np.cumsum(sizes)[:-1]

        def back(g):
            for p, gp in zip(parts, np.split(g, splits, axis=axis)):
                if p.tracked:
                    p._accumulate(gp)
        return self._emit(np.concatenate([p.value for p in parts], axis=axis), parts, back)

    def edge_inputs(self, u: Var, edge_feat: Var) -> Var:
        """Per directed edge (i, j): ``[u_i, u_j, eps_ij]``.

        ``u`` is (B, N, S); ``edge_feat`` is (B, N, N, E); output (B, N, N, 2S+E).
        """
        B, N, S = u.value.shape
        ui = np.broadcast_to(u.value[:, :, None, :], (B, N, N, S))
        uj = np.broadcast_to(u.value[:, None, :, :], (B, N, N, S))
        val = np.concatenate([ui, uj, edge_feat.value], axis=-1)

        def back(g):
            if u.tracked:
                u._accumulate(g[..., :S].sum(axis=2) + g[..., S:2 * S].sum(axis=1))
            if edge_feat.tracked:
                edge_feat._accumulate(g[..., 2 * S:])
        return self._emit(val, (u, edge_feat), back)

    def neighbor_sum(self, m: Var) -> Var:
        """Incoming-message sum at each node: ``out[b, j] = sum_{i != j} m[b, i, j]``."""
        n = m.value.shape[1]
        mask = (1.0 - np.eye(n))[None, :, :, None]
        val = (m.value * mask).sum(axis=1)

        def back(g):
            m._accumulate(g[:, None, :, :] * mask)
        return self._emit(val, (m,), back)

    def dropout(self, a: Var, rate: float, rng: Optional[RngStream]) -> Var:
        """Inverted dropout; identity when ``rng`` is None or rate is 0."""
        if rng is None or rate == 0.0:
            return a
        keep = rng.generator.random(a.value.shape, dtype=np.float32) >= rate
        mask = keep / (1.0 - rate)

        def back(g):
            a._accumulate(g * mask)
        return self._emit(a.value * mask, (a,), back)

    def relu_dropout(self, a: Var, rate: float, rng: Optional[RngStream]) -> Var:
        """``dropout(relu(a))`` in one pass; same values and gradients as the composition."""
        if rng is None or rate == 0.0:
            return self.relu(a)
        keep = rng.generator.random(a.value.shape, dtype=np.float32) >= rate
        mask = np.logical_and(a.value > 0, keep) / (1.0 - rate)

        def back(g):
            a._accumulate(g * mask)
        return self._emit(a.value * mask, (a,), back)

    def softmax_cross_entropy(self, logits: Var, labels: np.ndarray) -> Var:
        """Cross-entropy of softmax(logits) against one-hot ``labels``.

        Summed over nodes (axis -2) and averaged over the leading batch axis.
        """
        z = logits.value
        zmax = z.max(axis=-1, keepdims=True)
        lse = zmax + np.log(np.exp(z - zmax).sum(axis=-1, keepdims=True))
        logp = z - lse
        batch = z.shape[0] if z.ndim == 3 else 1
        loss = -np.sum(labels * logp) / batch

        def back(g):
            p = np.exp(logp)
            logits._accumulate(g * (p - labels) / batch)
        return self._emit(np.asarray(loss), (logits,), back)
