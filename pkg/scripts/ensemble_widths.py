#!/usr/bin/env python3
"""Quenched vs annealed spectrum widths for an ensemble of randomized cascades."""
import argparse

import numpy as np

from mfpart import analyze
from mfpart.ensemble import ensemble_analysis, ensemble_from_series
from mfpart.synth import CascadeSpec, generate_cascade


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--members", type=int, default=50)
    ap.add_argument("--p-lo", type=float, default=0.35)
    ap.add_argument("--p-hi", type=float, default=0.45)
    ap.add_argument("--depth", type=int, default=14)
    ap.add_argument("--draws", type=int, default=0,
                    help="also repeat with this many random p draws (0 = midpoint grid only)")
    args = ap.parse_args()

    def run(ps, label):
        series = {f"m{k:03d}": generate_cascade(CascadeSpec(float(p), args.depth, "randomized", k))
                  for k, p in enumerate(ps)}
        res = ensemble_analysis(ensemble_from_series(series))
        widths = [analyze(v)[1].delta_alpha for v in series.values()]
        print(f"{label:>10}  da_Q={res.quenched.delta_alpha:.4f}  da_A={res.annealed.delta_alpha:.4f}"
              f"  member mean={np.mean(widths):.4f}  median={np.median(widths):.4f}")

    m = args.members
    run(args.p_lo + (args.p_hi - args.p_lo) * (np.arange(m) + 0.5) / m, "midpoints")
    rng = np.random.default_rng(2024)
    for d in range(args.draws):
        run(rng.uniform(args.p_lo, args.p_hi, m), f"draw {d}")


if __name__ == "__main__":
    main()
