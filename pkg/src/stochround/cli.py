"""Command line entry point: generate, validate, solve and evaluate instances."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness import (CIP_ALGOS, SUFL_ALGOS, EvalParams, default_workers, evaluate, render_comparison,
                      report_json, report_text)
from .instances import (GeneratorConfig, InstanceError, ScenarioTreeCip, SuflInstance, generate_cip_tree,
                        generate_sufl, load_instance, save_instance, serialize, validate_metric)
from .lp import solution_to_dict, solve_cip, solve_sufl
from .oracles import OracleCapError
from .per_scenario import GAMMA_DEFAULT, StrictModeViolation
from .primal_dual import ALPHA_DEFAULT
from .simplex import InfeasibleError

EXIT_OK, EXIT_BOUND, EXIT_INPUT = 0, 1, 2

GEN_KINDS = {"sufl": "sufl", "vc": "vertex-cover", "sc": "set-cover", "cip": "general"}


class UsageError(Exception):
    pass


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load(path: str):
    try:
        return load_instance(path)
    except FileNotFoundError as exc:
        raise UsageError(f"no such file: {path}") from exc


def cmd_gen(args) -> int:
    cfg = GeneratorConfig(seed=args.seed, kind=GEN_KINDS[args.kind], n_facilities=args.facilities,
                          n_clients=args.clients, n_scenarios=args.scenarios, stages=args.stages,
                          rows=args.rows, n_vars=args.vars, arity=args.arity, metric=args.metric)
    inst = generate_sufl(cfg) if args.kind == "sufl" else generate_cip_tree(cfg)
    if args.out:
        save_instance(inst, args.out)
    else:
        sys.stdout.write(serialize(inst))
    return EXIT_OK


def cmd_validate(args) -> int:
    inst = _load(args.file)
    if isinstance(inst, SuflInstance):
        bad = validate_metric(inst)
        print(f"sufl: {inst.n_facilities} facilities, {inst.n_clients} clients, {inst.n_scenarios} scenarios")
        if bad:
            print(f"{len(bad)} triangle-inequality violations, first {bad[0]}")
            return EXIT_INPUT
        print("metric ok")
    else:
        print(f"cip-tree: {inst.stages} stages, {len(inst.nodes)} nodes, {inst.rows} rows, "
              f"{len(inst.leaves)} leaves")
    return EXIT_OK


def cmd_solve_lp(args) -> int:
    inst = _load(args.file)
    if isinstance(inst, SuflInstance):
        sol, dual = solve_sufl(inst)
        doc = solution_to_dict(sol, dual if args.dual else None)
    else:
        if args.dual:
            raise UsageError("--dual is only available for facility-location instances")
        sol = solve_cip(inst)
        doc = {"objective": sol.objective, "x": [v.tolist() for v in sol.x]}
    _write(json.dumps(doc, indent=1) + "\n", args.out)
    return EXIT_OK


def _params(args) -> EvalParams:
    lam = getattr(args, "lam", "auto")
    try:
        lam_val = None if lam in (None, "auto") else float(lam)
    except ValueError as exc:
        raise UsageError(f"--lambda must be 'auto' or a number, got {lam!r}") from exc
    return EvalParams(alpha=getattr(args, "alpha", ALPHA_DEFAULT), gamma=getattr(args, "gamma", GAMMA_DEFAULT),
                      strict=getattr(args, "strict", False), lam=lam_val, coin=getattr(args, "coin", False),
                      closest=getattr(args, "closest", False), cost_mode=getattr(args, "cost_mode", "once"),
                      oracle=getattr(args, "oracle", False), workers=default_workers())


def _check_kind(inst, problem: str) -> None:
    want = SuflInstance if problem == "sufl" else ScenarioTreeCip
    if not isinstance(inst, want):
        raise UsageError(f"{problem} rounding needs a {'sufl' if problem == 'sufl' else 'cip-tree'} instance")


def cmd_round(args) -> int:
    inst = _load(args.file)
    _check_kind(inst, args.problem)
    rep = evaluate(inst, args.algo, _params(args), args.trials, args.seed)
    sys.stdout.write(report_text(rep))
    if args.report:
        Path(args.report).write_text(report_json(rep))
    return EXIT_OK if rep.passed else EXIT_BOUND


def cmd_evaluate(args) -> int:
    inst = _load(args.file)
    algos = args.algo or list(SUFL_ALGOS if isinstance(inst, SuflInstance) else CIP_ALGOS)
    params = _params(args)
    reports = [evaluate(inst, a, params, args.trials, args.seed) for a in algos]
    for r in reports:
        sys.stdout.write(report_text(r))
    if len(reports) > 1:
        sys.stdout.write("\n" + render_comparison(reports))
        doc = "[\n" + ",\n".join(report_json(r).rstrip("\n") for r in reports) + "\n]\n"
    else:
        doc = report_json(reports[0])
    if args.out:
        Path(args.out).write_text(doc)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_BOUND


def _sufl_flags(p) -> None:
    p.add_argument("--alpha", type=float, default=ALPHA_DEFAULT)
    p.add_argument("--gamma", type=float, default=GAMMA_DEFAULT)
    p.add_argument("--strict", action="store_true", help="gamma = 5 with hard stretch assertions")
    p.add_argument("--coin", action="store_true", help="ALG3 by coin flip instead of best of two")
    p.add_argument("--closest", action="store_true", help="primal-dual: connect to the closest open facility")
    p.add_argument("--cost-mode", choices=("once", "per-copy"), default="once")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stochround")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a random instance")
    g.add_argument("--kind", choices=sorted(GEN_KINDS), required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.add_argument("--facilities", type=int, default=4)
    g.add_argument("--clients", type=int, default=6)
    g.add_argument("--scenarios", type=int, default=3)
    g.add_argument("--stages", type=int, default=2)
    g.add_argument("--rows", type=int, default=10)
    g.add_argument("--vars", type=int, default=6)
    g.add_argument("--arity", type=int, default=2)
    g.add_argument("--metric", choices=("euclidean", "graph", "set-system"), default="euclidean")
    g.set_defaults(fn=cmd_gen)

    v = sub.add_parser("validate", help="check an instance file")
    v.add_argument("file")
    v.set_defaults(fn=cmd_validate)

    s = sub.add_parser("solve-lp", help="solve the LP relaxation")
    s.add_argument("file")
    s.add_argument("--dual", action="store_true")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_solve_lp)

    r = sub.add_parser("round", help="run one rounding algorithm over many trials")
    rsub = r.add_subparsers(dest="problem", required=True)
    rc = rsub.add_parser("cip")
    rc.add_argument("file")
    rc.add_argument("--algo", choices=CIP_ALGOS, default="independent")
    rc.add_argument("--lambda", dest="lam", default="auto")
    rs = rsub.add_parser("sufl")
    rs.add_argument("file")
    rs.add_argument("--algo", choices=SUFL_ALGOS, default="alg3")
    _sufl_flags(rs)
    for p in (rc, rs):
        p.add_argument("--trials", type=int, default=10_000)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--oracle", action="store_true")
        p.add_argument("--report")
        p.set_defaults(fn=cmd_round)

    e = sub.add_parser("evaluate", help="evaluate one or more algorithms and compare")
    e.add_argument("file")
    e.add_argument("--algo", nargs="+", choices=SUFL_ALGOS + CIP_ALGOS)
    e.add_argument("--trials", type=int, default=10_000)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--oracle", action="store_true")
    e.add_argument("--lambda", dest="lam", default="auto")
    e.add_argument("--out")
    _sufl_flags(e)
    e.set_defaults(fn=cmd_evaluate)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except StrictModeViolation as exc:
        print(f"strict mode: {exc}", file=sys.stderr)
        return EXIT_BOUND
    except (UsageError, InstanceError, OracleCapError, InfeasibleError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
