"""Per-k gradient term magnitudes of a coRNN against a matched tanh RNN."""

import argparse
import csv

import numpy as np

from cornn.diagnostics import eta, eta_satisfying_params, fit_log_decay, ltd_profile, matched_tanh_params
from cornn.tasks import gen_adding


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m", type=int, default=32)
    ap.add_argument("--N", type=int, default=200)
    ap.add_argument("--dt", type=float, default=0.01)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="ltd_profile.csv")
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    p = eta_satisfying_params(rng, args.m, 2, args.dt, 0.5)
    inputs = gen_adding(args.N, 1, args.seed).inputs[0]
    prof = ltd_profile(p, inputs, np.zeros((args.N, args.m)), "b",
                       tanh_params=matched_tanh_params(p, args.seed))
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, ["k", "magnitude", "reference", "tanh_magnitude"])
        w.writeheader()
        w.writerows(prof.rows())
    half = args.N // 2
    slope, r2 = fit_log_decay(args.N - prof.k[:half], prof.tanh_magnitude[:half])
    e, thr = eta(p, 0.5)
    print(f"eta {e:.4f} <= {thr:.4f}")
    print(f"coRNN max/min over k <= N/2: {prof.ratio():.3g}")
    print(f"tanh log-magnitude slope {slope:.4f} per step (R^2 {r2:.4f})")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
