"""Supervised training of the detector network: loss, Adam, early stopping."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .autodiff import Tape
from .dataset import MimoDataset, read_container, write_container, _params_from
from .errors import EmptyDataset, ShapeMismatch
from .gnn import GnnParameters, forward_logits
from .numerics import RngStream

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    dataset_size: int = 65536
    validation_fraction: float = 0.25
    learning_rate: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    max_epochs: int = 100
    patience: int = 5
    snr_range_db: tuple[float, float] = (6.0, 16.0)
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning rate must be non-negative")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Softmax cross-entropy, summed over nodes and averaged over the batch axis."""
    tape = Tape()
    z = tape.param(np.asarray(logits, dtype=float))
    return float(tape.softmax_cross_entropy(z, labels).value)


def cross_entropy_grad(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    tape = Tape()
    z = tape.param(np.asarray(logits, dtype=float))
    tape.backward(tape.softmax_cross_entropy(z, labels))
    return z.grad


def loss_and_grads(params: GnnParameters, H, y, sigma2, x_idx,
                   rng: Optional[RngStream]) -> tuple[float, dict[str, np.ndarray]]:
    """Cross-entropy on one batch and exact gradients of every parameter.

    Dropout masks are drawn from ``rng``; passing the same stream again
    reproduces the same sub-network (what the gradient checks rely on).
    """
    tape = Tape()
    logits, net = forward_logits(H, y, sigma2, params, tape=tape, rng=rng)
    labels = np.eye(params.arch.alphabet_size)[np.asarray(x_idx, dtype=np.int64)]
    loss = tape.softmax_cross_entropy(logits, labels)
    tape.backward(loss)
    grads = {k: (v.grad if v.grad is not None else np.zeros_like(v.value))
             for k, v in net.p.items()}
    return float(loss.value), grads


def batch_loss(params: GnnParameters, H, y, sigma2, x_idx, rng: Optional[RngStream] = None) -> float:
    logits, _ = forward_logits(H, y, sigma2, params, rng=rng)
    labels = np.eye(params.arch.alphabet_size)[np.asarray(x_idx, dtype=np.int64)]
    return float(Tape(record=False).softmax_cross_entropy(logits, labels).value)


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: GnnParameters) -> "AdamState":
        return cls({k: np.zeros_like(a) for k, a in params.tensors.items()},
                   {k: np.zeros_like(a) for k, a in params.tensors.items()})


def adam_step(params: GnnParameters, grads: dict[str, np.ndarray], state: AdamState,
              cfg: TrainConfig) -> tuple[GnnParameters, AdamState]:
    """One bias-corrected Adam update; returns new objects, inputs untouched."""
    t = state.step + 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.tensors.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ShapeMismatch(f"gradient for {k} has shape {g.shape}, parameter {p.shape}")
        m = b1 * state.m[k] + (1.0 - b1) * g
        v = b2 * state.v[k] + (1.0 - b2) * g * g
        new_p[k] = p - cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps)
        new_m[k], new_v[k] = m, v
    return GnnParameters(params.arch, new_p), AdamState(new_m, new_v, t)


class EarlyStopping:
    """Track the best validation loss; stop after ``patience`` epochs without improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_loss = np.inf
        self.best_epoch = 0
        self.best_params: Optional[GnnParameters] = None
        self.bad_epochs = 0

    def update(self, epoch: int, val_loss: float, params: GnnParameters) -> bool:
        """Record epoch results; returns True when training should stop."""
        if val_loss < self.best_loss:
            self.best_loss, self.best_epoch = val_loss, epoch
            self.best_params = params.copy()
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        return self.bad_epochs >= self.patience


@dataclass
class History:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False
    seconds: float = 0.0


def evaluate_loss(params: GnnParameters, data: MimoDataset) -> float:
    """Mean per-sample validation loss (evaluation mode, no dropout)."""
    total, n = 0.0, 0
    for H, y, s2, x in data.batches():
        total += batch_loss(params, H, y, s2, x) * len(H)
        n += len(H)
    return total / n


def fit(params: GnnParameters, train: MimoDataset, val: MimoDataset, cfg: TrainConfig,
        on_epoch: Optional[Callable[[int, float, float], None]] = None,
        state: Optional[AdamState] = None, start_epoch: int = 0,
        checkpoint_path=None) -> tuple[GnnParameters, History]:
    """Train with Adam on whole sigma-groups, shuffled each epoch.

    Returns the parameters from the epoch with the lowest validation loss.
    With ``checkpoint_path`` the current parameters, Adam moments and epoch
    are written after every epoch; resuming passes them back through
    ``params``, ``state`` and ``start_epoch`` (early-stopping counters restart).
    """
    if len(train) == 0 or len(val) == 0:
        raise EmptyDataset("training and validation sets must be non-empty")
    root = RngStream(cfg.seed)
    state = state or AdamState.zeros_like(params)
    stopper = EarlyStopping(cfg.patience)
    hist = History()
    t0 = time.perf_counter()
    for epoch in range(start_epoch + 1, cfg.max_epochs + 1):
        ep_rng = root.child(epoch)
        order = ep_rng.child(0).generator.permutation(train.n_groups)
        losses = []
        for b, (H, y, s2, x) in enumerate(train.batches(order)):
            loss, grads = loss_and_grads(params, H, y, s2, x, ep_rng.child(1, b))
            params, state = adam_step(params, grads, state, cfg)
            losses.append(loss)
        train_loss = float(np.mean(losses))
        val_loss = evaluate_loss(params, val)
        hist.train_loss.append(train_loss)
        hist.val_loss.append(val_loss)
        log.info("epoch %d train %.5f val %.5f (%.0fs)", epoch, train_loss, val_loss,
                 time.perf_counter() - t0)
        if checkpoint_path is not None:
            save_checkpoint(checkpoint_path, params, state, epoch)
        if on_epoch is not None:
            on_epoch(epoch, train_loss, val_loss)
        if stopper.update(epoch, val_loss, params):
            hist.stopped_early = True
            break
    hist.best_epoch = stopper.best_epoch
    hist.seconds = time.perf_counter() - t0
    best = stopper.best_params if stopper.best_params is not None else params
    return best, hist


# -- checkpoints ------------------------------------------------------------

def save_checkpoint(path, params: GnnParameters, state: AdamState, epoch: int) -> None:
    tensors = dict(params.tensors)
    for k in params.tensors:
        tensors[f"adam.m.{k}"] = state.m[k]
        tensors[f"adam.v.{k}"] = state.v[k]
    tensors["adam.step"] = np.array(float(state.step))
    tensors["train.epoch"] = np.array(float(epoch))
    write_container(path, params.arch, tensors)


def load_checkpoint(path) -> tuple[GnnParameters, AdamState, int]:
    arch, tensors = read_container(path)
    params = _params_from(arch, tensors)
    m = {k: tensors[f"adam.m.{k}"] for k in params.tensors}
    v = {k: tensors[f"adam.v.{k}"] for k in params.tensors}
    state = AdamState(m, v, int(tensors["adam.step"]))
    return params, state, int(tensors["train.epoch"])
