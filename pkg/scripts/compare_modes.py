"""Paired runs of the training modes on one problem, sharing seeds and batches.

Writes one directory per (seed, mode) with epochs.csv / traces.csv and prints
a summary table of mass drift and final error.

    python scripts/compare_modes.py --problem fp_test1 --seeds 0 1 2 --modes unconstrained augmented
"""
import argparse
import logging
import time
from pathlib import Path

import numpy as np

from conspinn.cli import write_run
from conspinn.trainer import MODES, TrainerConfig, make_problem, train


def drift_summary(report):
    mass = np.asarray(report.traces["mass"])
    t = np.asarray(report.traces["t"])
    # rank correlation of mass against time, as a monotone-trend indicator
    ranks = np.argsort(np.argsort(mass))
    rho = np.corrcoef(ranks, np.arange(t.size))[0, 1]
    return float(np.abs(mass - 1.0).max()), float(rho)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--problem", default="fp_test1")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--modes", nargs="+", default=list(MODES), choices=MODES)
    ap.add_argument("--epochs", type=int, default=3000)
    ap.add_argument("--hidden", type=int, nargs="+", default=[64, 64])
    ap.add_argument("--out", default="runs/compare")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    reference = None
    rows = []
    for seed in args.seeds:
        for mode in args.modes:
            cfg = TrainerConfig(problem=args.problem, mode=mode, seed=seed, epochs=args.epochs,
                                hidden=tuple(args.hidden))
            if reference is None:
                reference = make_problem(cfg).reference()
            t0 = time.time()
            report = train(cfg, reference=reference)
            out = Path(args.out) / f"seed{seed}" / mode
            write_run(report, out)
            max_dev, rho = drift_summary(report)
            rows.append((seed, mode, max_dev, rho, report.records[-1].error_vs_reference,
                         report.records[-1].loss_total, time.time() - t0))
            print(f"seed={seed} mode={mode:13s} max|mass-1|={max_dev:.4e} rank_corr={rho:+.3f} "
                  f"err={rows[-1][4]:.4e} loss={rows[-1][5]:.4e} ({rows[-1][6]:.0f}s)", flush=True)


if __name__ == "__main__":
    main()
