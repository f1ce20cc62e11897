"""Binary dataset files, group-aware splits and the weights container.

Dataset file (little-endian)::

    header  "MGDS" u8:version u32:N_t u32:N_r u32:M u64:count
            u8:model-kind f64:rho f64:snr_lo f64:snr_hi u64:seed
    record  f64:sigma2  f64[N_r*N_t]:H (row-major)  f64[N_r]:y  u16[N_t]:x-index

Records come in consecutive groups of ``GROUP_SIZE`` sharing one noise
variance; a training batch is one group.

Weights file (little-endian)::

    "MGWT" u8:version u8:variant u32:l u32:S_u u32:S_m u32:T u32:M u32:n-records
    n-records x (u32:name-len bytes:name u32:rank u32[rank]:dims f64[...]:payload)
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

from .channel import ChannelKind, ChannelModel, reconstruct_noise, sample_instance
from .constellation import build_alphabet
from .errors import ArchMismatch, BadFractions, CorruptFile, EmptyDataset, IoFailure
from .gnn import GnnArch, GnnParameters, Variant
from .numerics import RngStream

GROUP_SIZE = 64
DATA_MAGIC = b"MGDS"
WEIGHTS_MAGIC = b"MGWT"
VERSION = 1
_HEADER = struct.Struct("<4sBIIIQBdddQ")
_KIND_CODE = {ChannelKind.IID: 0, ChannelKind.KRONECKER: 1}
_VARIANT_CODE = {Variant.PLAIN: 0, Variant.MMSE: 1}


@dataclass(frozen=True)
class DatasetConfig:
    model: ChannelModel
    qam: int = 16
    snr_range: tuple[float, float] = (6.0, 16.0)
    count: int = 16384
    seed: int = 0


@dataclass
class MimoDataset:
    config: DatasetConfig
    sigma2: np.ndarray   # (count,)
    H: np.ndarray        # (count, N_r, N_t)
    y: np.ndarray        # (count, N_r)
    x_idx: np.ndarray    # (count, N_t) uint16

    def __len__(self) -> int:
        return len(self.sigma2)

    @property
    def n_groups(self) -> int:
        return -(-len(self) // GROUP_SIZE)

    def group_slice(self, g: int) -> slice:
        return slice(g * GROUP_SIZE, min((g + 1) * GROUP_SIZE, len(self)))

    def take_groups(self, groups: Sequence[int]) -> "MimoDataset":
        if len(groups) == 0:
            idx = np.zeros(0, dtype=np.int64)
        else:
            idx = np.concatenate([np.arange(len(self))[self.group_slice(g)] for g in groups])
        return MimoDataset(replace(self.config, count=len(idx)), self.sigma2[idx], self.H[idx],
                           self.y[idx], self.x_idx[idx])

    def batches(self, order: Optional[Sequence[int]] = None) -> Iterator[tuple]:
        """Yield ``(H, y, sigma2, x_idx)`` one sigma-group at a time."""
        for g in (range(self.n_groups) if order is None else order):
            s = self.group_slice(g)
            yield self.H[s], self.y[s], self.sigma2[s], self.x_idx[s]

    def equals(self, other: "MimoDataset") -> bool:
        return (self.config == other.config
                and all(np.array_equal(a, b) for a, b in zip(
                    (self.sigma2, self.H, self.y, self.x_idx),
                    (other.sigma2, other.H, other.y, other.x_idx))))


def generate_dataset(cfg: DatasetConfig) -> MimoDataset:
    """Draw ``cfg.count`` instances; each group of 64 shares one SNR drawn uniformly."""
    if cfg.count <= 0:
        raise EmptyDataset("count must be positive")
    a = build_alphabet(cfg.qam)
    m = cfg.model
    root = RngStream(cfg.seed)
    sigma2 = np.empty(cfg.count)
    H = np.empty((cfg.count, m.n_r, m.n_t))
    y = np.empty((cfg.count, m.n_r))
    x = np.empty((cfg.count, m.n_t), dtype=np.uint16)
    lo, hi = cfg.snr_range
    for g in range(-(-cfg.count // GROUP_SIZE)):
        stream = root.child(g)
        snr = float(stream.child(0).generator.uniform(lo, hi)) if hi > lo else float(lo)
        for k in range(g * GROUP_SIZE, min((g + 1) * GROUP_SIZE, cfg.count)):
            inst = sample_instance(stream.child(1, k), m, a, snr)
            if not np.array_equal(inst.y, inst.H @ a.levels[inst.x_idx] + reconstruct_noise(inst)):
                raise RuntimeError(f"record {k} failed the y = Hx + n reconstruction check")
            sigma2[k], H[k], y[k], x[k] = inst.sigma2, inst.H, inst.y, inst.x_idx
    return MimoDataset(cfg, sigma2, H, y, x)


def _record_dtype(n_t: int, n_r: int) -> np.dtype:
    return np.dtype([("sigma2", "<f8"), ("H", "<f8", (n_r, n_t)), ("y", "<f8", (n_r,)),
                     ("x", "<u2", (n_t,))])


def record_size(n_t: int, n_r: int) -> int:
    return _record_dtype(n_t, n_r).itemsize


def save_dataset(ds: MimoDataset, path) -> None:
    c = ds.config
    header = _HEADER.pack(DATA_MAGIC, VERSION, c.model.n_t, c.model.n_r, c.qam, len(ds),
                          _KIND_CODE[c.model.kind], c.model.rho, c.snr_range[0], c.snr_range[1],
                          c.seed)
    rec = np.empty(len(ds), dtype=_record_dtype(c.model.n_t, c.model.n_r))
    rec["sigma2"], rec["H"], rec["y"], rec["x"] = ds.sigma2, ds.H, ds.y, ds.x_idx
    try:
        with open(path, "wb") as f:
            f.write(header)
            f.write(rec.tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write dataset {path}: {exc}") from exc


def load_dataset(path) -> MimoDataset:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read dataset {path}: {exc}") from exc
    if len(raw) < _HEADER.size:
        raise CorruptFile("dataset file shorter than its header")
    magic, ver, n_t, n_r, qam, count, kind, rho, lo, hi, seed = _HEADER.unpack_from(raw)
    if magic != DATA_MAGIC or ver != VERSION:
        raise CorruptFile(f"bad dataset magic/version {magic!r}/{ver}")
    kinds = {v: k for k, v in _KIND_CODE.items()}
    if kind not in kinds:
        raise CorruptFile(f"unknown channel kind code {kind}")
    dt = _record_dtype(n_t, n_r)
    if len(raw) - _HEADER.size != count * dt.itemsize:
        raise CorruptFile(f"declared {count} records but payload holds "
                          f"{(len(raw) - _HEADER.size) / dt.itemsize:g}")
    rec = np.frombuffer(raw, dtype=dt, offset=_HEADER.size)
    model = ChannelModel(kinds[kind], n_t, n_r, rho)
    cfg = DatasetConfig(model=model, qam=qam, snr_range=(lo, hi), count=count, seed=seed)
    return MimoDataset(cfg, rec["sigma2"].copy(), rec["H"].copy(), rec["y"].copy(),
                       rec["x"].copy())


def split_dataset(ds: MimoDataset, fractions: Sequence[float],
                  seed: Optional[int] = None) -> list[MimoDataset]:
    """Split at sigma-group granularity; sizes round to whole groups.

    With ``seed`` the groups are shuffled first, otherwise taken in order.
    """
    fr = np.asarray(fractions, dtype=float)
    if fr.size == 0 or np.any(fr < 0) or fr.sum() > 1.0 + 1e-12:
        raise BadFractions(f"fractions must be non-negative and sum to at most 1: {list(fractions)}")
    order = np.arange(ds.n_groups)
    if seed is not None:
        order = RngStream(seed).generator.permutation(order)
    bounds = np.concatenate([[0], np.round(np.cumsum(fr) * ds.n_groups).astype(int)])
    bounds = np.minimum(bounds, ds.n_groups)
    return [ds.take_groups(order[bounds[i]:bounds[i + 1]]) for i in range(len(fr))]


# -- weights ---------------------------------------------------------------

def _pack_tensor(name: str, arr: np.ndarray) -> bytes:
    arr = np.asarray(arr, dtype="<f8")
    nb = name.encode("utf-8")
    return (struct.pack("<I", len(nb)) + nb + struct.pack("<I", arr.ndim)
            + struct.pack(f"<{arr.ndim}I", *arr.shape) + arr.tobytes())


def write_container(path, arch: GnnArch, tensors: dict[str, np.ndarray]) -> None:
    head = WEIGHTS_MAGIC + struct.pack("<BB6I", VERSION, _VARIANT_CODE[arch.variant], arch.hidden,
                                       arch.state, arch.message, arch.iterations,
                                       arch.alphabet_size ** 2, len(tensors))
    body = b"".join(_pack_tensor(k, v) for k, v in tensors.items())
    tmp = f"{os.fspath(path)}.tmp"
    try:
        with open(tmp, "wb") as f:
            f.write(head + body)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailure(f"cannot write weights {path}: {exc}") from exc


def read_container(path) -> tuple[GnnArch, dict[str, np.ndarray]]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read weights {path}: {exc}") from exc
    try:
        if raw[:4] != WEIGHTS_MAGIC:
            raise CorruptFile("not a weights file (bad magic)")
        ver, var, l, su, sm, T, M, n = struct.unpack_from("<BB6I", raw, 4)
        if ver != VERSION:
            raise CorruptFile(f"unsupported weights version {ver}")
        variants = {v: k for k, v in _VARIANT_CODE.items()}
        k = int(round(np.sqrt(M)))
        if var not in variants or k * k != M:
            raise CorruptFile("bad architecture metadata")
        arch = GnnArch(variant=variants[var], hidden=l, state=su, message=sm, iterations=T,
                       alphabet_size=k)
        off = 4 + struct.calcsize("<BB6I")
        tensors: dict[str, np.ndarray] = {}
        for _ in range(n):
            (ln,) = struct.unpack_from("<I", raw, off)
            off += 4
            name = raw[off:off + ln].decode("utf-8")
            if len(name.encode()) != ln:
                raise CorruptFile("truncated tensor name")
            off += ln
            (rank,) = struct.unpack_from("<I", raw, off)
            off += 4
            dims = struct.unpack_from(f"<{rank}I", raw, off)
            off += 4 * rank
            nbytes = 8 * int(np.prod(dims, dtype=np.int64))
            if off + nbytes > len(raw):
                raise CorruptFile(f"truncated payload for {name}")
            if name in tensors:
                raise CorruptFile(f"duplicate tensor {name}")
            tensors[name] = np.frombuffer(raw, dtype="<f8", count=nbytes // 8,
                                          offset=off).reshape(dims).astype(float)
            off += nbytes
        if off != len(raw):
            raise CorruptFile("trailing bytes after last tensor")
    except (struct.error, UnicodeDecodeError, ValueError) as exc:
        if isinstance(exc, CorruptFile):
            raise
        raise CorruptFile(f"malformed weights file: {exc}") from None
    return arch, tensors


def save_weights(params: GnnParameters, path) -> None:
    write_container(path, params.arch, params.tensors)


def _params_from(arch: GnnArch, tensors: dict[str, np.ndarray]) -> GnnParameters:
    expected = arch.shapes()
    for name, shape in expected.items():
        if name not in tensors:
            raise CorruptFile(f"missing tensor {name}")
        if tensors[name].shape != shape:
            raise CorruptFile(f"{name} stored with shape {tensors[name].shape}, arch needs {shape}")
    return GnnParameters(arch, {k: tensors[k] for k in expected})


def load_weights(path, arch: Optional[GnnArch] = None) -> GnnParameters:
    """Load and validate a weights file; ``arch`` (if given) must match the stored one."""
    stored, tensors = read_container(path)
    if arch is not None and arch != stored:
        raise ArchMismatch(f"file holds {stored}, caller expects {arch}")
    extra = set(tensors) - set(stored.shapes())
    if any(not n.startswith(("adam.", "train.")) for n in extra):
        raise CorruptFile(f"unexpected tensors {sorted(extra)}")
    return _params_from(stored, tensors)
