"""Fixed experiment recipes shared by the scripts and the acceptance suite.

Trained weights are cached under a directory keyed by a digest of the
recipe, so a rerun with the same recipe reuses them; deleting the cache
retrains from scratch with identical results.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

from .channel import ChannelModel
from .constellation import build_alphabet
from .dataset import DatasetConfig, generate_dataset, load_weights, save_weights
from .gnn import GnnArch, GnnParameters, Variant, init_params
from .harness import SweepConfig, SweepResult, run_sweep
from .numerics import RngStream
from .training import History, TrainConfig, fit

log = logging.getLogger(__name__)
ARTIFACTS_ENV = "MIMO_GNN_ARTIFACTS"


@dataclass(frozen=True)
class Recipe:
    """Everything that determines a trained model and its evaluation sweeps."""
    n_t: int = 8
    n_r: int = 16
    qam: int = 16
    train_count: int = 16384
    validation_fraction: float = 0.25
    snr_range: tuple[float, float] = (6.0, 16.0)
    hidden: int = 128
    state: int = 8
    iterations: int = 10
    learning_rate: float = 1e-4
    max_epochs: int = 60
    patience: int = 5
    data_seed: int = 1
    init_seed: int = 2
    train_seed: int = 3
    sweep_snr: tuple[float, ...] = (4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0)
    sweep_trials: int = 20000
    sweep_seed: int = 1000
    rho: float = 0.3

    def digest(self) -> str:
        text = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:12]

    @property
    def val_count(self) -> int:
        return int(round(self.train_count * self.validation_fraction))

    def arch(self, variant) -> GnnArch:
        return GnnArch(variant=variant, hidden=self.hidden, state=self.state, message=self.state,
                       iterations=self.iterations, alphabet_size=build_alphabet(self.qam).size)


DESK = Recipe()
FULL = Recipe(n_t=32, n_r=64, train_count=65536, max_epochs=100)


def artifacts_dir(default: Optional[Path] = None) -> Path:
    env = os.environ.get(ARTIFACTS_ENV)
    return Path(env) if env else (default or Path("artifacts"))


def datasets(r: Recipe):
    """Training and (additional, disjoint-seed) validation sets, i.i.d. channels."""
    model = ChannelModel("iid", r.n_t, r.n_r)
    train = generate_dataset(DatasetConfig(model, r.qam, r.snr_range, r.train_count, r.data_seed))
    val = generate_dataset(DatasetConfig(model, r.qam, r.snr_range, r.val_count, r.data_seed + 1))
    return train, val


def trained_model(r: Recipe, variant, cache: Path, retrain: bool = False
                  ) -> tuple[GnnParameters, Optional[dict]]:
    """Load the cached model for ``(r, variant)`` or train and cache it.

    Returns the parameters and the training summary (None when the cache
    had no summary file).
    """
    variant = Variant(variant)
    cache.mkdir(parents=True, exist_ok=True)
    stem = cache / f"{variant.value}-{r.digest()}"
    wpath, hpath = stem.with_suffix(".mgwt"), stem.with_suffix(".json")
    if wpath.exists() and not retrain:
        params = load_weights(wpath, r.arch(variant))
        summary = json.loads(hpath.read_text()) if hpath.exists() else None
        return params, summary
    train, val = datasets(r)
    cfg = TrainConfig(dataset_size=r.train_count, validation_fraction=r.validation_fraction,
                      learning_rate=r.learning_rate, max_epochs=r.max_epochs, patience=r.patience,
                      snr_range_db=r.snr_range, seed=r.train_seed)
    params = init_params(r.arch(variant), RngStream(r.init_seed))
    best, hist = fit(params, train, val, cfg)
    save_weights(best, wpath)
    summary = _summary(r, variant, hist)
    hpath.write_text(json.dumps(summary, indent=1))
    return best, summary


def _summary(r: Recipe, variant: Variant, hist: History) -> dict:
    return {"recipe": asdict(r), "variant": variant.value, "train_loss": hist.train_loss,
            "val_loss": hist.val_loss, "best_epoch": hist.best_epoch,
            "stopped_early": hist.stopped_early, "seconds": hist.seconds}


def evaluation_sweep(r: Recipe, weights, correlated: bool, detectors,
                     trials: Optional[int] = None) -> SweepResult:
    """Held-out sweep on i.i.d. or Kronecker(rho) channels, seeds disjoint from training."""
    model = (ChannelModel("kron", r.n_t, r.n_r, r.rho) if correlated
             else ChannelModel("iid", r.n_t, r.n_r))
    cfg = SweepConfig(model, r.sweep_snr, qam=r.qam, trials_per_point=trials or r.sweep_trials,
                      detectors=tuple(detectors), seed=r.sweep_seed + int(correlated))
    return run_sweep(cfg, weights)
