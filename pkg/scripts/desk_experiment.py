"""Desk-scale reproduction: N_t=8, N_r=16, 16-QAM.

Trains both network variants on i.i.d. channels (or reuses the cached
weights), then sweeps SER against SNR on i.i.d. and Kronecker (rho=0.3)
channels and writes CSV/SVG figures next to the weights.

    python3 scripts/desk_experiment.py [--full] [--retrain] [--trials N]
                                       [--max-epochs N] [--patience N]

Overriding the epoch cap or the early-stopping patience gives a separate
recipe digest, so its weights and figures go to their own directory.
"""
import argparse
import logging
import time
from dataclasses import replace
from pathlib import Path

from mimo_gnn.experiments import DESK, FULL, artifacts_dir, evaluation_sweep, trained_model
from mimo_gnn.harness import emit_csv, emit_svg, gain_db, paired_z, reference_point


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--full", action="store_true", help="N_t=32, N_r=64, 65536 samples instead")
    ap.add_argument("--retrain", action="store_true", help="ignore cached weights")
    ap.add_argument("--trials", type=int, default=None, help="trials per SNR point")
    ap.add_argument("--variants", default="plain,mmse")
    ap.add_argument("--out", type=Path, default=None, help="artifact directory")
    ap.add_argument("--max-epochs", type=int, default=None, help="override the epoch cap")
    ap.add_argument("--patience", type=int, default=None, help="override early-stopping patience")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    recipe = FULL if args.full else DESK
    name = "full" if args.full else "desk"
    if args.max_epochs is not None:
        recipe = replace(recipe, max_epochs=args.max_epochs)
        name += f"-e{args.max_epochs}"
    if args.patience is not None:
        recipe = replace(recipe, patience=args.patience)
        name += f"-p{args.patience}"
    out = args.out or artifacts_dir(Path(__file__).resolve().parents[1] / "artifacts") / name
    weights = []
    for v in args.variants.split(","):
        t0 = time.perf_counter()
        params, summary = trained_model(recipe, v, out, retrain=args.retrain)
        weights.append(params)
        if summary:
            print(f"{v}: best epoch {summary['best_epoch']} of {len(summary['val_loss'])}, "
                  f"val loss {min(summary['val_loss']):.4f}, trained in {summary['seconds'] / 60:.1f} min")
        else:
            print(f"{v}: loaded in {time.perf_counter() - t0:.1f}s")

    nets = tuple("gnn" if w.arch.variant.value == "plain" else "gnn-mmse" for w in weights)
    for correlated in (False, True):
        tag = f"kron{recipe.rho:g}" if correlated else "iid"
        res = evaluation_sweep(recipe, weights, correlated, ("mmse", "bp") + nets, args.trials)
        csv_path, svg_path = out / f"sweep-{tag}.csv", out / f"sweep-{tag}.svg"
        emit_csv(res, csv_path)
        title = (f"{recipe.qam}-QAM, N_t={recipe.n_t}, N_r={recipe.n_r}, "
                 + (f"Kronecker rho={recipe.rho:g}" if correlated else "i.i.d."))
        emit_svg(res, svg_path, title)
        p0 = reference_point(res)
        print(f"\n{title}: operating point {p0:g} dB (MMSE SER nearest 1e-2)")
        for name in ("bp",) + nets:
            g = gain_db(res, name)
            print(f"  {name:9s} SER {res.point(name, p0).ser:.3e} vs MMSE "
                  f"{res.point('mmse', p0).ser:.3e}; gain {'n/a' if g is None else f'{g:.2f} dB'}; "
                  f"paired z {paired_z(res, name, 'mmse', p0):.1f}")
        print(f"  wrote {csv_path} and {svg_path}")


if __name__ == "__main__":
    main()
