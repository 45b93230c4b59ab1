#!/usr/bin/env python3
"""Compare fitted tau(q) and f(alpha) of p-model cascades with the closed form."""
import argparse

import numpy as np

from mfpart import analyze, fit_pmodel, pmodel_tau
from mfpart.pmodel import pmodel_alpha
from mfpart.synth import CascadeSpec, generate_cascade


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=float, nargs="+", default=[0.3, 0.4, 0.45])
    ap.add_argument("--depth", type=int, default=14)
    ap.add_argument("--mode", choices=("deterministic", "randomized"), default="deterministic")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"{'p':>6} {'max|dtau|':>10} {'max|dalpha|':>12} {'p_fit':>8} {'delta_alpha':>12} {'F':>8}")
    for p in args.p:
        v = generate_cascade(CascadeSpec(p, args.depth, args.mode, args.seed))
        _, res = analyze(v)
        q = res.q_values
        dtau = np.nanmax(np.abs(res.tau - pmodel_tau(p, q)))
        dalpha = np.nanmax(np.abs(res.alpha - pmodel_alpha(p, q)))
        fit = fit_pmodel(q, res.tau)
        print(f"{p:6.3f} {dtau:10.2e} {dalpha:12.2e} {fit.p:8.4f} {res.delta_alpha:12.4f} {res.F:8.4f}")


if __name__ == "__main__":
    main()
