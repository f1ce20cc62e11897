"""Command line entry point: gen-data, train, eval, sweep, report.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .channel import ChannelModel
from .constellation import build_alphabet, symbol_error_rate
from .dataset import (DatasetConfig, generate_dataset, load_dataset, load_weights, save_dataset,
                      save_weights, split_dataset)
from .detectors import BpConfig
from .errors import ArchMismatch, MimoGnnError
from .gnn import GnnArch, detect_batch, init_params
from .harness import (DETECTORS, PointResult, SweepConfig, SweepResult, emit_csv, emit_svg,
                      gain_db, read_csv, run_sweep, svg_text)
from .numerics import RngStream
from .training import TrainConfig, evaluate_loss, fit, load_checkpoint

log = logging.getLogger("mimo_gnn")


def parse_snr(text: str) -> tuple[float, ...]:
    """``a:b:step`` (inclusive), a comma list, or a single value."""
    try:
        if ":" in text:
            lo, hi, step = (float(v) for v in text.split(":"))
            if step <= 0 or hi < lo:
                raise ValueError
            n = int(np.floor((hi - lo) / step + 1e-9)) + 1
            pts = tuple(round(lo + k * step, 10) for k in range(n))
        else:
            pts = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad SNR specification {text!r}") from None
    if any(b <= a for a, b in zip(pts, pts[1:])):
        raise argparse.ArgumentTypeError(f"SNR points must be strictly increasing: {text!r}")
    return pts


def parse_range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LOW:HIGH, got {text!r}") from None
    if hi < lo:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return lo, hi


def _channel_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--nt", type=int, default=8, help="real-valued transmit dimension N_t")
    p.add_argument("--nr", type=int, default=16, help="real-valued receive dimension N_r")
    p.add_argument("--qam", type=int, default=16, choices=(4, 16, 64))
    p.add_argument("--model", choices=("iid", "kron"), default="iid")
    p.add_argument("--rho", type=float, default=0.0, help="Kronecker correlation coefficient")
    p.add_argument("--seed", type=int, default=0)


def _model(args) -> ChannelModel:
    return ChannelModel(args.model, args.nt, args.nr, args.rho if args.model == "kron" else 0.0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mimo-gnn", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a binary dataset file")
    _channel_args(g)
    g.add_argument("--snr-range", type=parse_range, default=(6.0, 16.0))
    g.add_argument("--count", type=int, default=16384)
    g.add_argument("--out", required=True)

    t = sub.add_parser("train", help="train a detector network")
    t.add_argument("--data", required=True, help="training dataset file")
    t.add_argument("--val", help="validation dataset file (default: hold out 20%% of --data)")
    t.add_argument("--variant", choices=("plain", "mmse"), default="plain")
    t.add_argument("--hidden", type=int, default=128, help="MLP width / GRU size l")
    t.add_argument("--state", type=int, default=8, help="node state size S_u (= S_m)")
    t.add_argument("--iters", type=int, default=10, help="message-passing iterations T")
    t.add_argument("--epochs", type=int, default=100)
    t.add_argument("--patience", type=int, default=5)
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True, help="output weights file")
    t.add_argument("--checkpoint", help="write a checkpoint (weights + Adam moments) here each epoch")
    t.add_argument("--resume", help="continue from a checkpoint written by --checkpoint")

    e = sub.add_parser("eval", help="SER and loss of a trained network on a dataset file")
    e.add_argument("--data", required=True)
    e.add_argument("--weights", required=True)

    s = sub.add_parser("sweep", help="SER-vs-SNR sweep over paired random instances")
    _channel_args(s)
    s.add_argument("--snr", type=parse_snr, default=parse_snr("4:18:2"))
    s.add_argument("--trials", type=int, default=20000)
    s.add_argument("--detectors", default=None,
                   help=f"comma list from {','.join(DETECTORS)} (default: mmse,bp + loaded networks)")
    s.add_argument("--weights", action="append", default=[], help="weights file (repeatable)")
    s.add_argument("--iters", type=int, default=8, help="BP iterations")
    s.add_argument("--damping", type=float, default=0.75, help="BP damping")
    s.add_argument("--out", required=True, help="output prefix; writes PREFIX.csv and PREFIX.svg")

    r = sub.add_parser("report", help="render a sweep CSV as SVG and print gains over MMSE")
    r.add_argument("--csv", required=True)
    r.add_argument("--out", required=True, help="output SVG path")
    r.add_argument("--title", default="")
    return ap


def cmd_gen_data(args) -> int:
    cfg = DatasetConfig(model=_model(args), qam=args.qam, snr_range=args.snr_range,
                        count=args.count, seed=args.seed)
    save_dataset(generate_dataset(cfg), args.out)
    print(f"wrote {args.count} instances to {args.out}")
    return 0


def cmd_train(args) -> int:
    data = load_dataset(args.data)
    if args.val:
        train, val = data, load_dataset(args.val)
    else:
        train, val = split_dataset(data, (0.8, 0.2))
    arch = GnnArch(variant=args.variant, hidden=args.hidden, state=args.state, message=args.state,
                   iterations=args.iters, alphabet_size=build_alphabet(data.config.qam).size)
    cfg = TrainConfig(learning_rate=args.lr, max_epochs=args.epochs, patience=args.patience,
                      seed=args.seed, snr_range_db=data.config.snr_range)
    state, start = None, 0
    if args.resume:
        params, state, start = load_checkpoint(args.resume)
        if params.arch != arch:
            raise ArchMismatch(f"checkpoint holds {params.arch}, flags request {arch}")
    else:
        params = init_params(arch, RngStream(args.seed).child(0))
    best, hist = fit(params, train, val, cfg,
                     on_epoch=lambda ep, tl, vl: print(f"epoch {ep}: train {tl:.5f} val {vl:.5f}",
                                                       flush=True),
                     state=state, start_epoch=start, checkpoint_path=args.checkpoint)
    save_weights(best, args.out)
    print(f"best epoch {hist.best_epoch}; weights written to {args.out}")
    return 0


def cmd_eval(args) -> int:
    data = load_dataset(args.data)
    params = load_weights(args.weights)
    a = build_alphabet(data.config.qam)
    res = detect_batch(data.H, data.y, data.sigma2, params, a)
    ser = symbol_error_rate(data.x_idx, res.hard_idx)
    print(f"ser {ser:.6g} loss {evaluate_loss(params, data):.6g} samples {len(data)}")
    return 0


def cmd_sweep(args) -> int:
    weights = [load_weights(w) for w in args.weights]
    if args.detectors:
        dets = tuple(d.strip() for d in args.detectors.split(","))
    else:
        dets = ("mmse", "bp") + tuple("gnn" if w.arch.variant.value == "plain" else "gnn-mmse"
                                      for w in weights)
    cfg = SweepConfig(model=_model(args), snr_points=args.snr, qam=args.qam,
                      trials_per_point=args.trials, detectors=dets,
                      bp=BpConfig(iterations=args.iters, damping=args.damping), seed=args.seed)
    res = run_sweep(cfg, weights, args.weights)
    out = Path(args.out)
    emit_csv(res, out.parent / f"{out.name}.csv")
    title = f"{args.qam}-QAM, N_t={args.nt}, N_r={args.nr}, " + (
        "i.i.d." if args.model == "iid" else f"Kronecker rho={args.rho:g}")
    emit_svg(res, out.parent / f"{out.name}.svg", title)
    for p in res.points:
        print(f"{p.detector:9s} {p.snr_db:6g} dB  ser {p.ser:.4e}  ({p.errors}/{p.symbols})")
    return 0


def cmd_report(args) -> int:
    curves = read_csv(args.csv)
    Path(args.out).write_text(svg_text({k: (v[0], v[1]) for k, v in curves.items()}, args.title))
    if "mmse" in curves:
        pts = [PointResult(k, float(s), int(e), int(n), 0.0)
               for k, v in curves.items() for s, _, e, n in zip(*v)]
        res = SweepResult(None, pts)  # type: ignore[arg-type]
        for k in curves:
            if k != "mmse":
                g = gain_db(res, k)
                print(f"{k}: gain over mmse at SER~1e-2: " + ("n/a" if g is None else f"{g:.2f} dB"))
    print(f"wrote {args.out}")
    return 0


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval,
            "sweep": cmd_sweep, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (MimoGnnError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
