"""Integrate every oscillator scenario and write one CSV per scenario."""

import argparse
import os

from cornn.errors import NumericalError
from cornn.ode import SCENARIOS, integrate, scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--T", type=float, default=10.0)
    ap.add_argument("--h", type=float, default=1e-3)
    ap.add_argument("--input", default="cos", choices=["cos", "step"])
    ap.add_argument("--out", default="runs/ode")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    for name in SCENARIOS:
        y0 = [1.0] if name == "SHO" else None
        try:
            traj = integrate(scenario(name, args.input, args.T), args.T, args.h, y0=y0)
        except NumericalError as exc:
            print(f"{name}: {exc}")
            continue
        path = os.path.join(args.out, f"{name}.csv")
        traj.to_csv(path, {"scenario": name, "T": args.T, "h": args.h, "input": args.input})
        print(f"{name}: |y(T)|_inf = {abs(traj.ys[-1]).max():.4g}, wrote {path}")


if __name__ == "__main__":
    main()
