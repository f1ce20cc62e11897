"""Learned message passing over the complete MIMO graph.

Per iteration, every directed edge (i, j) runs the message MLP on
``[u_i, u_j, eps_ij]``; each node sums its incoming messages, feeds
``[u_i, sum m]`` to a GRU cell whose hidden state (width ``l``) persists
across iterations, and projects the new hidden state back to the node-state
width ``S_u``. After the last iteration a readout MLP and softmax give
per-symbol probabilities.

Two feature variants exist: ``plain`` (uniform prior) and ``mmse`` (MMSE
estimate, error variance and squared error correlations added to the node
and edge features).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .autodiff import Tape, Var
from .channel import MimoInstance
from .constellation import Alphabet
from .detectors import DetectionResult, MmseOutput, mmse_terms
from .errors import ShapeMismatch
from .numerics import RngStream, softmax


class Variant(str, Enum):
    PLAIN = "plain"
    MMSE = "mmse"


@dataclass(frozen=True)
class GnnArch:
    variant: Variant = Variant.PLAIN
    hidden: int = 128        # l: MLP width and GRU hidden size
    state: int = 8           # S_u
    message: int = 8         # S_m
    iterations: int = 10     # T
    alphabet_size: int = 4   # sqrt(M)
    dropout_m: float = 0.1
    dropout_r: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        for name in ("hidden", "state", "message", "alphabet_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.hidden % 2:
            raise ValueError("hidden width must be even (second layer is hidden/2)")

    @property
    def node_features(self) -> int:
        return 3 if self.variant is Variant.PLAIN else 5

    @property
    def edge_features(self) -> int:
        return 2 if self.variant is Variant.PLAIN else 3

    def shapes(self) -> dict[str, tuple[int, ...]]:
        """Name -> shape for every learnable tensor, in canonical order."""
        l, h2, S, Sm, K = self.hidden, self.hidden // 2, self.state, self.message, self.alphabet_size
        gru_in = S + Sm
        shapes = {
            "enc.W": (S, self.node_features), "enc.b": (S,),
            "msg.W1": (l, 2 * S + self.edge_features), "msg.b1": (l,),
            "msg.W2": (h2, l), "msg.b2": (h2,),
            "msg.W3": (Sm, h2), "msg.b3": (Sm,),
        }
        for gate in ("r", "z", "n"):
            shapes[f"gru.Wx_{gate}"] = (l, gru_in)
            shapes[f"gru.bx_{gate}"] = (l,)
            shapes[f"gru.Wh_{gate}"] = (l, l)
            shapes[f"gru.bh_{gate}"] = (l,)
        shapes.update({
            "proj.W": (S, l), "proj.b": (S,),
            "out.W1": (l, S), "out.b1": (l,),
            "out.W2": (h2, l), "out.b2": (h2,),
            "out.W3": (K, h2), "out.b3": (K,),
        })
        return shapes


@dataclass
class GnnParameters:
    arch: GnnArch
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        expected = self.arch.shapes()
        if set(self.tensors) != set(expected):
            missing = set(expected) - set(self.tensors)
            extra = set(self.tensors) - set(expected)
            raise ShapeMismatch(f"parameter names differ: missing={sorted(missing)} extra={sorted(extra)}")
        for name, shape in expected.items():
            if self.tensors[name].shape != shape:
                raise ShapeMismatch(f"{name}: shape {self.tensors[name].shape}, expected {shape}")
        self.tensors = {k: self.tensors[k] for k in expected}

    def copy(self) -> "GnnParameters":
        return GnnParameters(self.arch, {k: v.copy() for k, v in self.tensors.items()})

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.tensors.values()])


def init_params(arch: GnnArch, rng: RngStream) -> GnnParameters:
    """Weights uniform in +-1/sqrt(fan_in), biases zero."""
    tensors = {}
    for i, (name, shape) in enumerate(arch.shapes().items()):
        if len(shape) == 1:
            tensors[name] = np.zeros(shape)
        else:
            bound = 1.0 / np.sqrt(shape[1])
            tensors[name] = rng.child(i).generator.uniform(-bound, bound, size=shape)
    return GnnParameters(arch, tensors)


def zero_params(arch: GnnArch) -> GnnParameters:
    return GnnParameters(arch, {k: np.zeros(s) for k, s in arch.shapes().items()})


@dataclass
class GraphFeatures:
    edge_feat: np.ndarray   # (B, N, N, 2|3)
    node_init: np.ndarray   # (B, N, 3|5)
    mmse: Optional[MmseOutput] = None


def build_features_batch(H: np.ndarray, y: np.ndarray, sigma2, variant: Variant) -> GraphFeatures:
    """Node and edge features for a stacked batch ``H (B, N_r, N_t)``."""
    variant = Variant(variant)
    sigma2 = np.asarray(sigma2, dtype=float)
    B, _, n = H.shape
    G = np.swapaxes(H, -1, -2) @ H
    yh = np.einsum("br,brt->bt", y, H)
    gii = np.diagonal(G, axis1=-2, axis2=-1)
    s2n = np.broadcast_to(sigma2[:, None], (B, n))
    s2e = np.broadcast_to(sigma2[:, None, None], (B, n, n))
    if variant is Variant.PLAIN:
        node = np.stack([yh, gii, s2n], axis=-1)
        edge = np.stack([-G, s2e], axis=-1)
        return GraphFeatures(edge_feat=edge, node_init=node)
    est = mmse_terms(H, y, sigma2)
    cii = np.diagonal(est.C, axis1=-2, axis2=-1)
    node = np.stack([est.z, cii, yh, gii, s2n], axis=-1)
    edge = np.stack([est.rho, -G, s2e], axis=-1)
    return GraphFeatures(edge_feat=edge, node_init=node, mmse=est)


def build_features(inst: MimoInstance, variant: Variant) -> GraphFeatures:
    return build_features_batch(inst.H[None], inst.y[None], np.array([inst.sigma2]), variant)


class Network:
    """Binds parameters to a tape; each method is one stage of the forward pass.

    ``rng`` drives dropout and must be given only in training mode.
    """

    def __init__(self, params: GnnParameters, tape: Tape, rng: Optional[RngStream] = None):
        self.arch = params.arch
        self.tape = tape
        self.p = {k: tape.param(v, name=k) for k, v in params.tensors.items()}
        self.rng = rng
        self._draws = 0

    def _dropout_rng(self) -> Optional[RngStream]:
        if self.rng is None:
            return None
        self._draws += 1
        return self.rng.child(self._draws)

    def encode_nodes(self, feat: GraphFeatures) -> Var:
        if feat.node_init.shape[-1] != self.arch.node_features:
            raise ShapeMismatch(f"node features have width {feat.node_init.shape[-1]}, "
                                f"encoder expects {self.arch.node_features}")
        t, p = self.tape, self.p
        return t.linear(t.const(feat.node_init), p["enc.W"], p["enc.b"])

    def _mlp(self, x: Var, prefix: str, rate: float) -> Var:
        t, p = self.tape, self.p
        h = t.relu_dropout(t.linear(x, p[f"{prefix}.W1"], p[f"{prefix}.b1"]), rate,
                           self._dropout_rng())
        h = t.relu(t.linear(h, p[f"{prefix}.W2"], p[f"{prefix}.b2"]))
        return t.linear(h, p[f"{prefix}.W3"], p[f"{prefix}.b3"])

    def propagate(self, u: Var, edge_feat: Var) -> Var:
        """Messages ``m[b, i, j]`` for every ordered pair; the diagonal is ignored downstream."""
        return self._mlp(self.tape.edge_inputs(u, edge_feat), "msg", self.arch.dropout_m)

    def aggregate(self, u: Var, hidden: Var, messages: Var) -> tuple[Var, Var]:
        t, p = self.tape, self.p
        if messages.shape[-1] != self.arch.message or u.shape[-1] != self.arch.state:
            raise ShapeMismatch("message/state widths do not match the architecture")
        x = t.concat([u, t.neighbor_sum(messages)])

        def gate(g):
            return t.add(t.linear(x, p[f"gru.Wx_{g}"], p[f"gru.bx_{g}"]),
                         t.linear(hidden, p[f"gru.Wh_{g}"], p[f"gru.bh_{g}"]))

        r = t.sigmoid(gate("r"))
        z = t.sigmoid(gate("z"))
        cand = t.tanh(t.add(t.linear(x, p["gru.Wx_n"], p["gru.bx_n"]),
                            t.mul(r, t.linear(hidden, p["gru.Wh_n"], p["gru.bh_n"]))))
        h_next = t.add(t.mul(t.one_minus(z), cand), t.mul(z, hidden))
        return t.linear(h_next, p["proj.W"], p["proj.b"]), h_next

    def logits(self, u: Var) -> Var:
        return self._mlp(u, "out", self.arch.dropout_r)

    def run(self, feat: GraphFeatures) -> Var:
        """Encoder, T rounds of message passing, readout logits (B, N, K)."""
        u = self.encode_nodes(feat)
        B, n = feat.node_init.shape[:2]
        hidden = self.tape.const(np.zeros((B, n, self.arch.hidden)))
        edge = self.tape.const(feat.edge_feat)
        for _ in range(self.arch.iterations):
            messages = self.propagate(u, edge)
            u, hidden = self.aggregate(u, hidden, messages)
        return self.logits(u)


def readout(u: np.ndarray, params: GnnParameters, rng: Optional[RngStream] = None) -> np.ndarray:
    net = Network(params, Tape(record=False), rng)
    return softmax(net.logits(Tape.const(u)).value, axis=-1)


def forward_logits(H, y, sigma2, params: GnnParameters, tape: Optional[Tape] = None,
                   rng: Optional[RngStream] = None) -> tuple[Var, Network]:
    tape = tape if tape is not None else Tape(record=False)
    net = Network(params, tape, rng)
    feat = build_features_batch(np.asarray(H), np.asarray(y), sigma2, params.arch.variant)
    return net.run(feat), net


def detect_batch(H, y, sigma2, params: GnnParameters, a: Alphabet,
                 rng: Optional[RngStream] = None, chunk: int = 256) -> DetectionResult:
    """Evaluation-mode detection on a stacked batch (dropout only if ``rng``)."""
    if a.size != params.arch.alphabet_size:
        raise ShapeMismatch(f"alphabet has {a.size} levels, network outputs {params.arch.alphabet_size}")
    H = np.asarray(H)
    y = np.asarray(y)
    sigma2 = np.asarray(sigma2, dtype=float)
    probs = []
    for s in range(0, len(H), chunk):
        sub_rng = None if rng is None else rng.child(s)
        logits, _ = forward_logits(H[s:s + chunk], y[s:s + chunk], sigma2[s:s + chunk],
                                   params, rng=sub_rng)
        probs.append(softmax(logits.value, axis=-1))
    tag = "gnn" if params.arch.variant is Variant.PLAIN else "gnn-mmse"
    return DetectionResult.from_probs(np.concatenate(probs), a.levels, tag)


def forward(inst: MimoInstance, params: GnnParameters, a: Alphabet,
            rng: Optional[RngStream] = None, train_mode: bool = False) -> DetectionResult:
    """Detect one instance. Dropout is applied only when ``train_mode``."""
    res = detect_batch(inst.H[None], inst.y[None], np.array([inst.sigma2]), params, a,
                       rng=rng if train_mode else None)
    return DetectionResult(res.probs[0], res.soft[0], res.hard_idx[0], res.detector)
