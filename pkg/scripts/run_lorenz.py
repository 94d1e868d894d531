"""Lorenz-96 next-state prediction with coRNN at several forcing values."""

import argparse

from cornn.train import TrainConfig, train

BASE = dict(task="lorenz96", hidden_size=64, dt=0.042, gamma=2.7, eps=4.7, lr=0.0075, batch=16,
            epochs=400, variant="explicit", dtype="float32", length=500, train_count=128,
            valid_count=32, test_count=64, select_best=True)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--F", type=float, nargs="+", default=[0.9, 8.0])
    ap.add_argument("--epochs", type=int, default=BASE["epochs"])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    for F in args.F:
        res = train(TrainConfig(**dict(BASE, F=F, epochs=args.epochs, seed=args.seed)))
        print(f"F={F:g}: test NRMSE {res.test_metric:.4f}", flush=True)


if __name__ == "__main__":
    main()
