"""Command-line entry point: generate, train, evaluate, simulate, verify, sweep.

Exit codes: 0 success, 1 usage error, 2 verification failure, 3 numeric divergence.
"""

import argparse
import csv
import itertools
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .cell import Variant, rollout
from .diagnostics import (BoundReport, all_passed, check_energy, check_jacobian_products,
                          check_jacobians, check_sensitivity, eta, eta_satisfying_params,
                          fit_log_decay, gradcheck_instance, gradcheck_reports, ltd_profile,
                          matched_tanh_params, random_params, write_jsonl)
from .errors import ConfigError, FormatError, NumericalError
from .ode import (SCENARIOS, check_continuous_energy, check_continuous_sensitivity,
                  check_gradient_ode_bound, integrate, integrate_gradient_ode, random_system, scenario)
from .tasks import gen_adding, gen_lorenz96, write_jsonl as write_dataset
from .train import (TrainConfig, TrainingDiverged, _TaskData, evaluate, load_checkpoint,
                    save_checkpoint, train, write_metrics_csv)

EXIT_OK, EXIT_USAGE, EXIT_FAIL, EXIT_DIVERGED = 0, 1, 2, 3
SUITES = ("energy", "sensitivity", "jacobian", "gradcheck", "ltd", "ode-bounds")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _header(args, seed=None):
    return {"tool": "cornn", "version": __version__, "command": sys.argv[:] or ["cornn"],
            "seed": seed if seed is not None else getattr(args, "seed", None)}


def _threads():
    try:
        return max(1, int(os.environ.get("CORNN_THREADS", "1")))
    except ValueError:
        return 1


# -- generate -------------------------------------------------------------------

def cmd_generate(args):
    if args.task == "adding":
        ds = gen_adding(args.T, args.count, args.seed)
    else:
        ds = gen_lorenz96(args.F, args.count, args.length, args.seed, shift=args.shift)
    out = args.out or f"{args.task}.jsonl"
    write_dataset(ds, out, _header(args))
    print(f"wrote {len(ds)} samples to {out}")
    return EXIT_OK


# -- train / evaluate -------------------------------------------------------------

def cmd_train(args):
    cfg = TrainConfig.load(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.json", "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2)
    header = _header(args, cfg.seed)

    def log(row):
        if not args.quiet and (row.eval_metric is not None):
            print(f"step {row.step} epoch {row.epoch} loss {row.train_loss:.6g} "
                  f"eval {row.eval_metric:.6g} eta {row.eta if row.eta is None else round(row.eta, 6)}")

    code = EXIT_OK
    try:
        res = train(cfg, log=log, max_seconds=args.max_seconds)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        res = exc.result
        code = EXIT_DIVERGED
    write_metrics_csv(res.metrics, out / "metrics.csv", header)
    if cfg.model == "cornn":
        save_checkpoint(out / "checkpoint.bin", res.params, res.readout)
    summary = {"header": header, "metric": res.metric_name, "test_metric": res.test_metric,
               "steps": len(res.metrics), "eta_fraction_sqrt_dt": res.eta_fraction,
               "diverged": res.diverged,
               "loss_convention": "train_loss is the half squared error; reported mse omits the 1/2"}
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    if code == EXIT_OK:
        print(f"test {res.metric_name}: {res.test_metric:.6g}; "
              f"eta <= sqrt(dt) on {100 * res.eta_fraction:.1f}% of steps")
    return code


def cmd_evaluate(args):
    cfg = TrainConfig.load(args.config)
    p, ro = load_checkpoint(args.checkpoint, cfg.dt, cfg.gamma, cfg.eps, Variant(cfg.variant))
    data = _TaskData(cfg)
    ds = {"test": data.test, "valid": data.valid}[args.split]
    metric = {"adding": "mse", "lorenz96": "nrmse"}.get(cfg.task, "accuracy")
    value = evaluate(p, ro, ds, metric, cfg.head_mode)
    print(json.dumps({"split": args.split, "metric": metric, "value": value}))
    return EXIT_OK


# -- simulate -------------------------------------------------------------------

def cmd_simulate(args):
    sys_ = scenario(args.scenario, args.input, args.T)
    try:
        traj = integrate(sys_, args.T, args.h)
    except NumericalError as exc:
        print(f"error: {args.scenario}: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    out = args.out or f"{args.scenario.lower()}.csv"
    traj.to_csv(out, dict(_header(args, 0), scenario=args.scenario, input=args.input))
    print(f"wrote {len(traj.times)} samples to {out}")
    return EXIT_OK


# -- verify ---------------------------------------------------------------------

def _verify_energy(args, rng):
    variant = Variant(args.variant)
    reports = []
    for _ in range(args.trials):
        p = random_params(rng, args.m, args.d, args.dt, args.gamma, args.eps, variant, scale=args.scale)
        r = rollout(p, rng.uniform(-1, 1, (args.N, args.d)))
        reports.extend(check_energy(r, p))
    return reports


def _verify_sensitivity(args, rng):
    reports = []
    for _ in range(args.trials):
        p = random_params(rng, args.m, args.d, args.dt, scale=args.scale)
        a = rng.uniform(-1, 1, (args.N, args.d))
        b = rng.uniform(-1, 1, (args.N, args.d))
        reports.extend(check_sensitivity(p, a, b))
    return reports


def _verify_jacobian(args, rng):
    reports = []
    for t in range(args.trials):
        rexp = args.r if args.r is not None else (0.5, 1.0)[t % 2]
        p = eta_satisfying_params(rng, args.m, args.d, args.dt, rexp)
        r = rollout(p, rng.uniform(-1, 1, (args.N, args.d)))
        reports.extend(check_jacobians(p, r, rexp))
        reports.extend(check_jacobian_products(p, r, rexp))
    return reports


def _verify_gradcheck(args, rng):
    reports = []
    for t in range(args.trials):
        p, u, tg = gradcheck_instance(rng, unit_eta=(t % 3 == 0))
        reports.extend(gradcheck_reports(p, u, tg))
    return reports


def _verify_ltd(args, rng):
    p = eta_satisfying_params(rng, args.m, 2, args.dt, 0.5)
    if args.task == "adding":
        ds = gen_adding(args.T, 1, args.seed)
        inputs = ds.inputs[0]
    else:
        inputs = rng.uniform(0, 1, (args.T, 2))
    targets = np.zeros((args.T, args.m))
    tp = matched_tanh_params(p, args.seed)
    ns = [args.T] if not args.average else list(range(args.T // 2, args.T + 1, max(1, args.T // 10)))
    profiles = [ltd_profile(p, inputs, targets, args.theta, n=n, tanh_params=tp) for n in ns]
    prof = profiles[0]
    out = args.csv or "ltd_profile.csv"
    with open(out, "w", newline="") as fh:
        fh.write("# " + json.dumps(_header(args)) + "\n")
        w = csv.writer(fh)
        w.writerow(["n", "k", "magnitude", "reference", "tanh_magnitude"])
        for pr in profiles:
            for row in pr.rows():
                w.writerow([pr.n, row["k"], row["magnitude"], row["reference"], row["tanh_magnitude"]])
    print(f"wrote per-k profile to {out}")
    half = prof.n // 2
    dist = prof.n - prof.k[:half]
    slope, r2 = fit_log_decay(dist, prof.tanh_magnitude[:half])
    ratio = max(pr.ratio() for pr in profiles)
    e, thr = eta(p, 0.5)
    return [BoundReport("ltd_ratio", ratio, 100.0, claimed=bool(e <= thr), context={"n": prof.n}),
            BoundReport("tanh_decay_slope", slope, 0.0, satisfied=slope < 0 and r2 > 0.9,
                        context={"r2": r2})]


def _verify_ode(args, rng):
    reports = []
    for _ in range(args.trials):
        m = int(rng.integers(1, 5))
        sys_ = random_system(rng, m, 2, rng.uniform(0.2, 4), rng.uniform(0.5, 4))
        traj = integrate(sys_, args.T, args.h)
        reports.extend(check_continuous_energy(traj, m, sys_.gamma, sys_.eps))
        other = random_system(rng, m, 2, sys_.gamma, sys_.eps).input_signal
        reports.extend(check_continuous_sensitivity(sys_, sys_.input_signal, other, args.T, args.h))
        shrink = 0.999 * sys_.eps / max(np.abs(sys_.W).sum(1).max() + np.abs(sys_.Wvel).sum(1).max(), 1e-300)
        if shrink < 1:
            sys_.W = sys_.W * shrink
            sys_.Wvel = sys_.Wvel * shrink
            traj = integrate(sys_, args.T, args.h)
        sens = integrate_gradient_ode(sys_, ("W", (0, 0)), traj)
        reports.extend(check_gradient_ode_bound(sys_, sens))
    return reports


def cmd_verify(args):
    rng = np.random.default_rng(args.seed)
    runner = {"energy": _verify_energy, "sensitivity": _verify_sensitivity,
              "jacobian": _verify_jacobian, "gradcheck": _verify_gradcheck,
              "ltd": _verify_ltd, "ode-bounds": _verify_ode}[args.suite]
    reports = runner(args, rng)
    out = args.out or f"verify_{args.suite}.jsonl"
    write_jsonl(reports, out, _header(args))
    claimed = [r for r in reports if r.claimed]
    failed = [r for r in claimed if not r.satisfied]
    print(f"{args.suite}: {len(reports)} checks, {len(claimed)} with precondition met, "
          f"{len(failed)} violated; reports in {out}")
    unclaimed = {r.context.get("condition", r.name) for r in reports if not r.claimed}
    for why in sorted(map(str, unclaimed)):
        print(f"  condition not met, bound not claimed: {why}")
    for r in failed[:10]:
        print(f"  VIOLATION {r.name}: observed {r.observed:.6g} > bound {r.bound:.6g} {r.context}")
    return EXIT_OK if all_passed(reports) else EXIT_FAIL


# -- sweep ----------------------------------------------------------------------

def _parse_grid(items):
    grid = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"grid entry {item!r} must look like name=v1,v2")
        name, values = item.split("=", 1)
        if name not in ("eps", "gamma"):
            raise ConfigError(f"grid axis must be eps or gamma, got {name!r}")
        vals = [float(v) for v in values.split(",") if v]
        if not vals or any(v <= 0 for v in vals):
            raise ConfigError(f"grid values for {name} must be positive")
        grid[name] = sorted(vals)
    return grid


def _sweep_point(cfg_dict, eps, gamma):
    cfg = TrainConfig.from_dict(dict(cfg_dict, eps=eps, gamma=gamma))
    try:
        res = train(cfg)
        return eps, gamma, res.metric_name, res.test_metric, False
    except TrainingDiverged as exc:
        return eps, gamma, exc.result.metric_name, math.nan, True


def cmd_sweep(args):
    base = TrainConfig.load(args.config).to_dict()
    grid = _parse_grid(args.grid)
    eps_vals = grid.get("eps", [base["eps"]])
    gamma_vals = grid.get("gamma", [base["gamma"]])
    points = list(itertools.product(eps_vals, gamma_vals))
    workers = min(_threads(), len(points))
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            rows = list(ex.map(_sweep_point, [base] * len(points), *zip(*points)))
    else:
        rows = [_sweep_point(base, e, g) for e, g in points]
    rows.sort(key=lambda r: (r[0], r[1]))
    out = args.out or "sweep.csv"
    with open(out, "w", newline="") as fh:
        fh.write("# " + json.dumps(_header(args, base["seed"])) + "\n")
        w = csv.writer(fh)
        w.writerow(["eps", "gamma", "metric", "value", "diverged"])
        w.writerows(rows)
    print(f"wrote {len(rows)} rows to {out}")
    return EXIT_OK


# -- parser ---------------------------------------------------------------------

def build_parser():
    ap = _Parser(prog="cornn", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"cornn {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a dataset as JSON lines")
    g.add_argument("task", choices=("adding", "lorenz96"))
    g.add_argument("--T", type=int, default=100, help="adding: sequence length")
    g.add_argument("--count", type=int, default=128)
    g.add_argument("--F", type=float, default=0.9, help="lorenz96: forcing")
    g.add_argument("--length", type=int, default=2000, help="lorenz96: samples per trajectory")
    g.add_argument("--shift", type=int, default=25, help="lorenz96: prediction horizon")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train from a JSON config")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--max-seconds", type=float, default=None)
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="evaluate a checkpoint")
    e.add_argument("--config", required=True)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--split", choices=("test", "valid"), default="test")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("simulate", help="integrate a waveform scenario")
    s.add_argument("scenario", type=str.upper, choices=SCENARIOS)
    s.add_argument("--T", type=float, default=10.0)
    s.add_argument("--h", type=float, default=1e-2)
    s.add_argument("--input", choices=("cos", "step"), default="cos")
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="run a bound-verification suite")
    v.add_argument("suite", choices=SUITES)
    v.add_argument("--trials", type=int, default=20)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--variant", choices=[x.value for x in Variant], default="implicit")
    v.add_argument("--eps", type=float, default=1.0)
    v.add_argument("--gamma", type=float, default=1.0)
    v.add_argument("--dt", type=float, default=0.01)
    v.add_argument("--m", type=int, default=None, help="hidden size (8; ltd: 32)")
    v.add_argument("--d", type=int, default=2)
    v.add_argument("--N", type=int, default=100)
    v.add_argument("--scale", type=float, default=1.0, help="recurrent weight scale")
    v.add_argument("--r", type=float, default=None, help="jacobian: exponent in eta <= dt^r")
    v.add_argument("--task", choices=("adding", "random"), default="adding")
    v.add_argument("--T", type=float, default=None, help="ltd: sequence length; ode-bounds: horizon")
    v.add_argument("--h", type=float, default=1e-2, help="ode-bounds: step")
    v.add_argument("--theta", default="b", help="ltd: parameter block")
    v.add_argument("--average", action="store_true", help="ltd: profiles for several n")
    v.add_argument("--csv", help="ltd: per-k profile path")
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    w = sub.add_parser("sweep", help="train over an (eps, gamma) grid")
    w.add_argument("--config", required=True)
    w.add_argument("--grid", nargs="+", required=True, metavar="NAME=V1,V2")
    w.add_argument("--out")
    w.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "verify":
        if args.T is None:
            args.T = 200 if args.suite == "ltd" else 5.0
        if args.m is None:
            args.m = 32 if args.suite == "ltd" else 8
        if args.suite == "ltd":
            args.T = int(args.T)
    try:
        return args.func(args)
    except (ConfigError, FormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
