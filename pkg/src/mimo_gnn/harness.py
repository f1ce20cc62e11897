"""SER-vs-SNR sweeps over paired instances, CSV/SVG output and gain readout."""
from __future__ import annotations

import csv
import hashlib
import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .channel import ChannelModel, sample_instance, stack_instances
from .constellation import Alphabet, build_alphabet
from .detectors import BpConfig, bp_beliefs, ml_detect_batch, mmse_detect_batch
from .errors import MissingWeights
from .gnn import GnnParameters, Variant, detect_batch
from .mrf import mrf_terms
from .numerics import RngStream

DETECTORS = ("mmse", "bp", "gnn", "gnn-mmse", "ml")
WORKERS_ENV = "MIMO_GNN_WORKERS"
_GNN_VARIANT = {"gnn": Variant.PLAIN, "gnn-mmse": Variant.MMSE}


@dataclass(frozen=True)
class SweepConfig:
    model: ChannelModel
    snr_points: tuple[float, ...]
    qam: int = 16
    trials_per_point: int = 20000
    detectors: tuple[str, ...] = ("mmse", "bp", "gnn", "gnn-mmse")
    bp: BpConfig = BpConfig()
    seed: int = 0
    chunk: int = 500

    def __post_init__(self):
        object.__setattr__(self, "snr_points", tuple(float(s) for s in self.snr_points))
        object.__setattr__(self, "detectors", tuple(self.detectors))
        if self.trials_per_point <= 0:
            raise ValueError("trials_per_point must be positive")
        if not self.snr_points or np.any(np.diff(self.snr_points) <= 0):
            raise ValueError("snr_points must be non-empty and strictly increasing")
        unknown = set(self.detectors) - set(DETECTORS)
        if unknown:
            raise ValueError(f"unknown detectors {sorted(unknown)}; choose from {DETECTORS}")


@dataclass
class PointResult:
    detector: str
    snr_db: float
    errors: int
    symbols: int
    seconds: float
    trial_errors: np.ndarray = field(default=None, repr=False)   # per-trial symbol errors

    @property
    def ser(self) -> float:
        return self.errors / self.symbols


@dataclass
class SweepResult:
    config: SweepConfig
    points: list[PointResult]
    metadata: dict = field(default_factory=dict)

    def curve(self, detector: str) -> tuple[np.ndarray, np.ndarray]:
        rows = [p for p in self.points if p.detector == detector]
        return np.array([p.snr_db for p in rows]), np.array([p.ser for p in rows])

    def point(self, detector: str, snr_db: float) -> PointResult:
        for p in self.points:
            if p.detector == detector and p.snr_db == snr_db:
                return p
        raise KeyError((detector, snr_db))


def file_digest(path) -> str:
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()


def _instances(cfg: SweepConfig, a: Alphabet, p: int, t0: int, t1: int):
    root = RngStream(cfg.seed)
    snr = cfg.snr_points[p]
    return stack_instances([sample_instance(root.child(p, t), cfg.model, a, snr)
                            for t in range(t0, t1)])


def _detect(name: str, H, y, s2, a: Alphabet, cfg: SweepConfig,
            weights: dict[Variant, GnnParameters]) -> np.ndarray:
    if name == "mmse":
        return mmse_detect_batch(H, y, s2, a).hard_idx
    if name == "bp":
        lik, coeff = mrf_terms(H, y, s2, a.levels)
        prior = np.full(lik.shape, -np.log(a.size))
        return np.argmax(bp_beliefs(lik, prior, coeff, a.levels, cfg.bp), axis=-1)
    if name == "ml":
        return ml_detect_batch(H, y, a)
    return detect_batch(H, y, s2, weights[_GNN_VARIANT[name]], a).hard_idx


def _run_chunk(args) -> list[tuple[np.ndarray, float]]:
    cfg, weights, p, t0, t1 = args
    a = build_alphabet(cfg.qam)
    H, y, s2, x = _instances(cfg, a, p, t0, t1)
    out = []
    for name in cfg.detectors:
        start = time.perf_counter()
        hard = _detect(name, H, y, s2, a, cfg, weights)
        out.append((np.count_nonzero(hard != x, axis=-1).astype(np.int32),
                    time.perf_counter() - start))
    return out


def _workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def run_sweep(cfg: SweepConfig, weights: Sequence[GnnParameters] = (),
              weight_paths: Sequence[str] = ()) -> SweepResult:
    """Evaluate every detector on the same instances at every SNR point.

    Instance (p, t) is drawn from child stream ``(p, t)`` of the sweep seed,
    so results do not depend on chunking or worker count.
    """
    by_variant = {w.arch.variant: w for w in weights}
    for name in cfg.detectors:
        if name in _GNN_VARIANT and _GNN_VARIANT[name] not in by_variant:
            raise MissingWeights(f"detector {name!r} needs {_GNN_VARIANT[name].value} weights")
    jobs = [(cfg, by_variant, p, t0, min(t0 + cfg.chunk, cfg.trials_per_point))
            for p in range(len(cfg.snr_points))
            for t0 in range(0, cfg.trials_per_point, cfg.chunk)]
    n_workers = _workers()
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(n_workers) as pool:
            results = list(pool.map(_run_chunk, jobs))
    else:
        results = [_run_chunk(j) for j in jobs]
    trial_err = np.zeros((len(cfg.snr_points), len(cfg.detectors), cfg.trials_per_point),
                         dtype=np.int32)
    seconds = np.zeros(trial_err.shape[:2])
    for (_, _, p, t0, t1), res in zip(jobs, results):
        for d, (e, s) in enumerate(res):
            trial_err[p, d, t0:t1] = e
            seconds[p, d] += s
    symbols = cfg.trials_per_point * cfg.model.n_t
    points = [PointResult(name, snr, int(trial_err[p, d].sum(dtype=np.int64)), symbols,
                          float(seconds[p, d]), trial_err[p, d])
              for d, name in enumerate(cfg.detectors)
              for p, snr in enumerate(cfg.snr_points)]
    meta = {"seed": cfg.seed, "weights": {os.path.basename(w): file_digest(w) for w in weight_paths}}
    return SweepResult(cfg, points, meta)


# -- output -------------------------------------------------------------------

CSV_COLUMNS = ("snr_db", "detector", "ser", "errors", "symbols", "seed")


def csv_text(res: SweepResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for name in res.config.detectors:
        for p in sorted((q for q in res.points if q.detector == name), key=lambda q: q.snr_db):
            w.writerow([f"{p.snr_db:g}", p.detector, repr(p.ser), p.errors, p.symbols,
                        res.config.seed])
    return buf.getvalue()


def emit_csv(res: SweepResult, path) -> None:
    with open(path, "w", newline="") as f:
        f.write(csv_text(res))


def read_csv(path) -> dict[str, tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]:
    """Detector -> (snr, ser, errors, symbols) arrays, in file order."""
    rows: dict[str, list] = {}
    with open(path, newline="") as f:
        for r in csv.DictReader(f):
            rows.setdefault(r["detector"], []).append(
                (float(r["snr_db"]), float(r["ser"]), int(r["errors"]), int(r["symbols"])))
    return {k: tuple(np.array(c) for c in zip(*v)) for k, v in rows.items()}


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
_W, _H = 640, 480
_ML, _MR, _MT, _MB = 70, 20, 20, 55


def svg_text(curves: dict[str, tuple[Sequence[float], Sequence[float]]],
             title: str = "") -> str:
    """Static log-scale SER plot; one polyline per detector."""
    allsnr = np.concatenate([np.asarray(s, float) for s, _ in curves.values()])
    allser = np.concatenate([np.asarray(e, float) for _, e in curves.values()])
    positive = allser[allser > 0]
    floor = positive.min() / 2 if positive.size else 1e-6
    y_lo = 10.0 ** math.floor(math.log10(floor))
    x_lo, x_hi = float(allsnr.min()), float(allsnr.max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    pw, ph = _W - _ML - _MR, _H - _MT - _MB

    def sx(v):
        return _ML + (v - x_lo) / (x_hi - x_lo) * pw

    def sy(v):
        return _MT + (0.0 - math.log10(v)) / (0.0 - math.log10(y_lo)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
           f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
           f'<rect x="{_ML}" y="{_MT}" width="{pw}" height="{ph}" fill="none" stroke="#000"/>']
    for k in range(0, -int(round(math.log10(y_lo))) + 1):
        yv = 10.0 ** -k
        yy = sy(yv)
        out.append(f'<line x1="{_ML}" y1="{yy:.2f}" x2="{_ML + pw}" y2="{yy:.2f}" stroke="#ddd"/>')
        out.append(f'<text x="{_ML - 6}" y="{yy + 4:.2f}" text-anchor="end">1e-{k}</text>'
                   if k else f'<text x="{_ML - 6}" y="{yy + 4:.2f}" text-anchor="end">1</text>')
    for xv in np.unique(allsnr):
        xx = sx(xv)
        out.append(f'<line x1="{xx:.2f}" y1="{_MT}" x2="{xx:.2f}" y2="{_MT + ph}" stroke="#eee"/>')
        out.append(f'<text x="{xx:.2f}" y="{_MT + ph + 16}" text-anchor="middle">{xv:g}</text>')
    out.append(f'<text x="{_ML + pw / 2:.2f}" y="{_H - 12}" text-anchor="middle">SNR (dB)</text>')
    out.append(f'<text x="16" y="{_MT + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {_MT + ph / 2:.2f})">SER</text>')
    if title:
        out.append(f'<text x="{_ML + pw / 2:.2f}" y="{_MT - 6}" text-anchor="middle">{_esc(title)}</text>')
    clamped = False
    for c, (name, (snr, ser)) in enumerate(curves.items()):
        color = _COLORS[c % len(_COLORS)]
        pts = []
        for s, e in zip(snr, ser):
            if e <= 0:
                clamped = True
            pts.append(f"{sx(float(s)):.2f},{sy(max(float(e), floor)):.2f}")
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{" ".join(pts)}"/>')
        ly = _MT + 14 + 16 * c
        out.append(f'<line x1="{_ML + pw - 130}" y1="{ly - 4}" x2="{_ML + pw - 110}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{_ML + pw - 104}" y="{ly}">{_esc(name)}</text>')
    if clamped:
        ly = _MT + 14 + 16 * len(curves)
        out.append(f'<text x="{_ML + pw - 130}" y="{ly}" font-size="10">zero SER drawn at floor</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def emit_svg(res: SweepResult, path, title: str = "") -> None:
    curves = {name: res.curve(name) for name in res.config.detectors}
    with open(path, "w") as f:
        f.write(svg_text(curves, title))


# -- gain readout -------------------------------------------------------------

def snr_at_ser(snr: Sequence[float], ser: Sequence[float], target: float) -> Optional[float]:
    """SNR where the curve reaches ``target``, interpolating log10(SER) linearly.

    Returns None if the curve never crosses the target within the grid.
    """
    snr = np.asarray(snr, float)
    lser = np.log10(np.maximum(np.asarray(ser, float), 1e-300))
    lt = math.log10(target)
    if lser[0] <= lt:
        return float(snr[0]) if lser[0] == lt else None
    for k in range(len(snr) - 1):
        a, b = lser[k], lser[k + 1]
        if a >= lt >= b and a != b:
            return float(snr[k] + (a - lt) / (a - b) * (snr[k + 1] - snr[k]))
    return None


def reference_point(res: SweepResult, reference: str = "mmse", target: float = 1e-2) -> float:
    """SNR grid point where the reference SER is nearest ``target`` (log distance)."""
    snr, ser = res.curve(reference)
    dist = np.abs(np.log10(np.maximum(ser, 1e-300)) - math.log10(target))
    return float(snr[int(np.argmin(dist))])


def gain_db(res: SweepResult, detector: str, reference: str = "mmse",
            target: float = 1e-2) -> Optional[float]:
    """SNR saving of ``detector`` over ``reference`` at the reference's operating point.

    The operating SER is the reference's measured SER at the grid point
    nearest ``target``; both curves are interpolated to that SER.
    """
    p0 = reference_point(res, reference, target)
    ser0 = res.point(reference, p0).ser
    s_ref = snr_at_ser(*res.curve(reference), ser0)
    s_det = snr_at_ser(*res.curve(detector), ser0)
    if s_ref is None or s_det is None:
        return None
    return s_ref - s_det


def binomial_std(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


def paired_z(res: SweepResult, better: str, worse: str, snr_db: float) -> float:
    """z-score for SER(better) < SER(worse) at one point.

    Paired over trials: the statistic is the mean per-trial difference in
    symbol errors divided by its standard error, which accounts for errors
    clustering within a received vector.
    """
    a, b = res.point(better, snr_db), res.point(worse, snr_db)
    d = b.trial_errors.astype(float) - a.trial_errors.astype(float)
    se = d.std(ddof=1) / math.sqrt(len(d)) if len(d) > 1 else 0.0
    mean = d.mean()
    if se == 0:
        return math.inf if mean > 0 else (-math.inf if mean < 0 else 0.0)
    return float(mean / se)
