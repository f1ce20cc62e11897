"""Small-system baseline sweep: MMSE, BP and the exhaustive ML oracle.

    python3 scripts/bp_vs_ml.py [--trials N] [--out PREFIX]
"""
import argparse

from mimo_gnn.channel import ChannelModel
from mimo_gnn.harness import SweepConfig, emit_csv, emit_svg, run_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=5000)
    ap.add_argument("--out", default="artifacts/baselines")
    args = ap.parse_args()
    cfg = SweepConfig(ChannelModel("iid", 4, 8), (0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0), qam=4,
                      trials_per_point=args.trials, detectors=("mmse", "bp", "ml"), seed=7)
    res = run_sweep(cfg)
    emit_csv(res, args.out + ".csv")
    emit_svg(res, args.out + ".svg", "4-QAM, N_t=4, N_r=8, i.i.d.")
    for p in res.points:
        print(f"{p.detector:5s} {p.snr_db:5g} dB  SER {p.ser:.4e}")


if __name__ == "__main__":
    main()
