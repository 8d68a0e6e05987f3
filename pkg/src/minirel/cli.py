"""Command line: ``minirel {cluster,experiment,prefix,round}``.

Exit codes: 0 success, 2 no fair clustering exists (or the fixed representation
cannot be met), 3 configuration or input error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .core import ClusteringProblem, InvalidArgumentError, clustering_cost, fairness_metrics
from .data import DataParseError
from .driver import Strategy, minirel_run
from .flow import round_assignment
from .harness import (ConfigError, ExperimentConfig, dataset_name, emit_report, load_config_data,
                      make_spec, run_experiment)
from .lloyd import greedy_assign, lloyd_run
from .models import InfeasibleError, PrefixInfeasibleError
from .prefix import myopic_costs, solve_prefix

EXIT_OK, EXIT_INFEASIBLE, EXIT_CONFIG = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p, single=True):
    p.add_argument("--config", help="JSON config file (see README)")
    p.add_argument("--synthetic", choices=["blobs", "line", "inapprox"],
                   help="use a bundled synthetic data set instead of --config's dataset")
    p.add_argument("--n", type=int, help="points for --synthetic blobs")
    p.add_argument("--seed", type=int, help="run seed")
    p.add_argument("--k", type=int, nargs="+" if not single else None, help="number of clusters")
    p.add_argument("--alpha", type=float, nargs="+" if not single else None, help="representation fraction")
    p.add_argument("--beta-policy", choices=["sp", "eqop", "custom"])
    p.add_argument("--balanced", action="store_true", help="require |C_k| >= ceil(0.8 n / K)")
    p.add_argument("--time-limit", type=float, help="seconds per run")
    p.add_argument("--node-limit", type=int, help="branch-and-bound nodes per solve")
    p.add_argument("--out", help="output file or directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="minirel", description="Minimum-representation fair k-means / k-medians.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("cluster", help="one MiniReL run")
    _common(p)
    p.add_argument("--strategy", choices=[s.value for s in Strategy] + ["lloyd"])
    p = sub.add_parser("experiment", help="run a config grid and write reports")
    _common(p, single=False)
    p.add_argument("--strategy", nargs="+")
    p = sub.add_parser("prefix", help="pre-fix the representation matrix and print it")
    _common(p)
    p.add_argument("--kind", choices=["local", "proportion", "weighted"], default="local")
    p = sub.add_parser("round", help="round a fractional assignment file through the flow network")
    _common(p)
    p.add_argument("--fractional", required=True,
                   help='JSON file with "z" (n x K), "y" (G x K) and "centers" (K x m)')
    return parser


def _config(args, single=True) -> ExperimentConfig:
    if args.config:
        try:
            with open(args.config) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"{args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}:{exc.lineno}: {exc.msg}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    else:
        raw = {}
    if args.synthetic:
        raw["dataset"] = {"synthetic": args.synthetic}
        if args.n is not None:
            raw["dataset"]["n"] = args.n
    raw.setdefault("strategies", ["full_ip"])
    if args.k is not None:
        raw["K"] = args.k
    if args.alpha is not None:
        raw["alpha"] = args.alpha
    if args.beta_policy:
        raw["beta_policy"] = args.beta_policy
    if args.balanced:
        raw["balanced"] = True
    if args.time_limit is not None:
        raw["time_limit"] = args.time_limit
    if args.node_limit is not None:
        raw["node_limit"] = args.node_limit
    if args.seed is not None:
        raw["seeds"] = [args.seed]
    if getattr(args, "strategy", None):
        raw["strategies"] = args.strategy if isinstance(args.strategy, list) else [args.strategy]
    raw.setdefault("alpha", 0.51)
    if "dataset" not in raw:
        raise ConfigError("no data set: pass --config or --synthetic")
    if "K" not in raw:
        raise ConfigError("no K: pass --k or set it in the config")
    if args.config and "path" in raw["dataset"]:
        base = os.path.dirname(os.path.abspath(args.config))
        if not os.path.isabs(raw["dataset"]["path"]):
            raw["dataset"]["path"] = os.path.join(base, raw["dataset"]["path"])
    cfg = ExperimentConfig.from_dict(raw)
    if single and (len(cfg.K) != 1 or len(cfg.alpha) != 1):
        raise ConfigError("this command takes a single K and alpha")
    return cfg


def _single_setup(cfg):
    ds, groups = load_config_data(cfg.dataset, cfg.data_seed, cfg.subsample)
    K, alpha = cfg.K[0], cfg.alpha[0]
    problem = ClusteringProblem(ds, groups, K, cfg.mode)
    spec = make_spec(cfg, groups, K, alpha, ds.n)
    return problem, spec


def _emit(payload, out):
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)


def cmd_cluster(args) -> int:
    cfg = _config(args)
    problem, spec = _single_setup(cfg)
    strategy = cfg.strategies[0]
    seed = cfg.seeds[0]
    if strategy == "lloyd":
        sol = lloyd_run(problem, rng=seed)
        status, iters, y = "ok", sol.info["n_iter"], None
    else:
        sol, trace = minirel_run(problem, spec, strategy, rng=seed, max_iter=cfg.max_iter,
                                 time_limit=cfg.time_limit, node_limit=cfg.node_limit,
                                 prefix_kind=cfg.prefix_kind,
                                 mip_gap=cfg.mip_gap, warm_mode=cfg.warm_start)
        status, iters, y = trace.status, trace.n_iter, sol.y
    m = fairness_metrics(sol.assignment, spec, problem.groups, problem.K, y)
    payload = {"dataset": dataset_name(cfg.dataset), "strategy": strategy, "seed": seed, "K": problem.K,
               "alpha": cfg.alpha[0], "beta": [int(b) for b in spec.beta], "status": status,
               "iterations": iters, "cost": sol.cost, **m.as_dict(),
               "assignment": [int(a) for a in sol.assignment],
               "centers": [[float(v) for v in c] for c in sol.centers],
               "y": m.y.astype(int).tolist()}
    _emit(payload, args.out)
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = _config(args, single=False)
    if not args.out:
        raise ConfigError("experiment needs --out DIR")
    report = run_experiment(cfg)
    paths = emit_report(report, args.out)
    failed = sum(r["status"] in ("error",) for r in report.rows)
    print(f"{len(report.rows)} rows written to {paths['report']} ({failed} failed runs)")
    return EXIT_OK


def cmd_prefix(args) -> int:
    cfg = _config(args)
    problem, spec = _single_setup(cfg)
    seed = cfg.seeds[0]
    centers = lloyd_run(problem, rng=seed).centers
    assignment = greedy_assign(problem, centers)
    costs = myopic_costs(problem, centers, assignment, spec, args.kind)
    pre = solve_prefix(costs, spec, problem.K, problem.groups)
    width = max(len(g) for g in problem.groups.groups)
    lines = [" " * width + "  " + " ".join(f"{k:>2d}" for k in range(problem.K))]
    for g, name in enumerate(problem.groups.groups):
        lines.append(f"{name:<{width}}  " + " ".join(f"{int(v):>2d}" for v in pre.y[g]))
    lines.append(f"objective {pre.objective!r}")
    if pre.fallback:
        lines.append(f"donor-short pairs used {pre.fallback}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_round(args) -> int:
    cfg = _config(args)
    problem, spec = _single_setup(cfg)
    try:
        with open(args.fractional) as fh:
            frac = json.load(fh)
        z = np.asarray(frac["z"], dtype=float)
        y = np.asarray(frac["y"], dtype=bool)
        centers = np.asarray(frac["centers"], dtype=float)
    except OSError as exc:
        raise ConfigError(f"{args.fractional}: {exc}") from exc
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise ConfigError(f"{args.fractional}: bad fractional assignment file ({exc})") from exc
    res = round_assignment(problem, centers, spec, y, z)
    payload = {"assignment": [int(a) for a in res.assignment], "cost": res.cost, "lp_cost": res.lp_cost,
               "violation_max": res.report.max_violation, "violation_sum": res.report.sum_violation,
               "bound": res.report.bound.bound,
               "sizes": np.bincount(res.assignment, minlength=problem.K).tolist(),
               "check_cost": clustering_cost(res.assignment, centers, problem)}
    _emit(payload, args.out)
    return EXIT_OK


COMMANDS = {"cluster": cmd_cluster, "experiment": cmd_experiment, "prefix": cmd_prefix, "round": cmd_round}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except PrefixInfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, DataParseError, InvalidArgumentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
