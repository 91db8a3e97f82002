"""Command-line entry point: ``sdqcal <command> ...``.

Commands
--------
run          train every seed of a config and write run directories
summarize    final-return table over run directories
bias-report  value-estimation bias table over run directories
grad-check   finite-difference check of the hand-written backward pass
tabular      one tabular run on a built-in or JSON-described MDP
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import experiment
from .tabular import ALGOS, TabularConfig, train_tabular


def _cmd_run(args) -> int:
    overrides = {"env.name": args.env, "agent.variant": args.variant, "run.out_dir": args.out,
                 "run.total_steps": args.steps}
    if args.seed is not None:
        overrides["run.seeds"] = [args.seed]
    try:
        cfg = experiment.load_config(args.config, overrides)
    except (ValueError, TypeError, OSError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    manifests = experiment.run(cfg, workers=args.workers)
    for m in manifests:
        print(f"{cfg.env}/{cfg.variant}/seed_{m['seed']}: {m['status']}")
    return 0 if all(m["status"] == "completed" for m in manifests) else 1


def _cmd_summarize(args) -> int:
    try:
        rows = experiment.summarize(args.runs, last=args.last)
    except FileNotFoundError as exc:
        print(exc, file=sys.stderr)
        return 2
    print(experiment.write_summary(rows, args.csv, "final_return"))
    return 0


def _cmd_bias_report(args) -> int:
    try:
        rows = experiment.bias_report(args.runs, last=args.last)
    except FileNotFoundError as exc:
        print(exc, file=sys.stderr)
        return 2
    print(experiment.write_summary(rows, args.csv, "bias"))
    return 0


def _cmd_grad_check(args) -> int:
    from .neural import MlpNet, finite_diff_check

    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for i in range(args.nets):
        in_dim = int(rng.integers(1, 7))
        sizes = [in_dim] + [int(h) for h in rng.integers(2, 17, size=rng.integers(1, 4))] + [int(rng.integers(1, 4))]
        output = "tanh" if i % 2 else "identity"
        net = MlpNet(sizes, output=output, output_scale=float(rng.uniform(0.5, 2.0)), rng=rng)
        x = rng.normal(size=(int(rng.integers(1, 9)), in_dim))
        rep = finite_diff_check(net, x, h=args.h, rng=rng)
        worst = max(worst, rep.max_error)
        print(f"net {i:2d} {sizes} {output:8s} param {rep.param_error:.2e} input {rep.input_error:.2e}")
    ok = worst < args.tol
    print(f"max relative error {worst:.2e} ({'pass' if ok else 'FAIL'} at {args.tol:g})")
    return 0 if ok else 1


def _cmd_tabular(args) -> int:
    from .envs import BUILTIN_MDPS, load_mdp, value_iteration

    spec = BUILTIN_MDPS[args.mdp]() if args.mdp in BUILTIN_MDPS else load_mdp(args.mdp)
    cfg = TabularConfig(beta=args.beta, total_steps=args.steps)
    q_star = value_iteration(spec)
    res = train_tabular(spec, cfg, args.algo, args.seed, q_star=q_star)
    if args.out:
        res.write_trace_csv(args.out)
    print(f"{args.algo} on {spec.name}: final max|Q-Q*| {res.linf_error[-1]:.4f}, "
          f"mean action gap {res.mean_action_gap[-1]:.4f}, episodes {len(res.episode_returns)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sdqcal", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="train and evaluate")
    r.add_argument("--config", help="TOML file with dotted keys")
    r.add_argument("--seed", type=int)
    r.add_argument("--variant")
    r.add_argument("--env")
    r.add_argument("--out")
    r.add_argument("--steps", type=int, help="override run.total_steps")
    r.add_argument("--workers", type=int, default=1, help="seeds run in parallel processes")
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("summarize", help="final return per env and variant")
    s.add_argument("--runs", nargs="+", required=True)
    s.add_argument("--last", type=int, default=10)
    s.add_argument("--csv")
    s.set_defaults(func=_cmd_summarize)

    b = sub.add_parser("bias-report", help="estimation bias per env and variant")
    b.add_argument("--runs", nargs="+", required=True)
    b.add_argument("--last", type=int, default=5)
    b.add_argument("--csv")
    b.set_defaults(func=_cmd_bias_report)

    g = sub.add_parser("grad-check", help="finite-difference gradient check")
    g.add_argument("--nets", type=int, default=20)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--h", type=float, default=1e-5)
    g.add_argument("--tol", type=float, default=1e-4)
    g.set_defaults(func=_cmd_grad_check)

    t = sub.add_parser("tabular", help="one tabular run")
    t.add_argument("--mdp", default="chain5", help="built-in name or JSON path")
    t.add_argument("--algo", choices=sorted(ALGOS), default="SDQ_CAL")
    t.add_argument("--beta", type=float, default=0.019)
    t.add_argument("--steps", type=int, default=200_000)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", help="trace CSV path")
    t.set_defaults(func=_cmd_tabular)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
