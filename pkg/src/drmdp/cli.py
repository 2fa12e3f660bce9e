"""Command-line entry point: ``drmdp solve | verify | bench | simulate``.

Exit codes are stable: 0 success, 1 input error, 2 non-convergence,
3 solver failure.  Every output is written next to a ``manifest.json`` (or
``<out>.manifest.json`` for single files) that records the command line,
input digests, seed, tolerances and tool version.

``bench`` writes ``runs.csv`` with the columns

    machine: variant, run, return, steps, capped
    maze:    variant, lambda, run, exit_time, return, capped

and ``summary.json`` with one entry per variant (and lambda).  Floats are
written with 17 significant digits so they round-trip exactly.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as _dt
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ambiguity import AmbiguityError
from .ambiguity.verify import check_regularity, verify_nesting
from .conic import Tolerances
from .dp import backward_induction, value_iteration
from .io import ProblemError, load_problem
from .mdp import MdpError, Policy, evaluate_policy
from .srobust import SRobustError

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED, EXIT_SOLVER = 0, 1, 2, 3

log = logging.getLogger("drmdp")


class InputError(Exception):
    pass


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _kernel_name(requested) -> str:
    from .kernels import get_kernel
    return get_kernel(requested)[0]


def write_manifest(path: Path, args, inputs: list, outputs: list, seed=None, kernel=None, extra=None):
    tol = Tolerances.from_env()
    man = {
        "subcommand": args.command,
        "argv": sys.argv[1:] if args.argv is None else args.argv,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "seed": seed,
        "tolerances": dataclasses.asdict(tol),
        "outputs": [str(p) for p in outputs],
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    if kernel is not None:
        man["kernel"] = kernel
    if extra:
        man.update(extra)
    path.write_text(json.dumps(man, indent=2))


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {v}")
    return v


# ---------------------------------------------------------------------------
# solve / verify


def _solve(problem, eps: float, max_iter: int, backend: str, check: bool = True):
    tol = Tolerances.from_env()
    if problem.mdp.horizon.finite:
        return backward_induction(problem, check=check, fast_point=True, tol=tol, backend=backend)
    return value_iteration(problem, eps=eps, max_iter=max_iter, check=check, fast_point=True, tol=tol,
                           backend=backend)


def cmd_solve(args) -> int:
    problem = load_problem(args.problem)
    sol = _solve(problem, args.eps, args.max_iter, args.backend)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    body = sol.to_json()
    body["initial_value"] = sol.value(problem.mdp.space.initial_state)
    out.write_text(json.dumps(body, indent=1))
    write_manifest(out.with_name(out.name + ".manifest.json"), args, [args.problem], [out],
                   extra={"eps": args.eps, "max_iter": args.max_iter, "backend": args.backend})
    print(f"value at initial state: {body['initial_value']:.10g}  iterations: {sol.iterations}  "
          f"converged: {sol.converged}")
    return EXIT_OK if sol.converged else EXIT_NONCONVERGED


def cmd_verify(args) -> int:
    problem = load_problem(args.problem)
    failed = 0
    for s in problem.decision_states():
        amb = problem.ambiguity[s]
        nest = verify_nesting(amb, args.mode, n_samples=args.samples)
        reg = check_regularity(amb)
        ok = nest.ok and reg.certified
        failed += not ok
        if not ok or args.verbose:
            print(f"state {s!r}: {'pass' if ok else 'FAIL'}  nesting: {nest.summary()}  "
                  f"regularity: {reg.summary()}")
    n = len(problem.decision_states())
    print(f"{n - failed}/{n} states pass")
    return EXIT_OK if failed == 0 else EXIT_INPUT


# ---------------------------------------------------------------------------
# benchmarks


def _machine_variants(args) -> list:
    from .bench.machine import VARIANTS
    if args.variant != "all":
        return [args.variant]
    return [v for v in VARIANTS if v != "dr_disjoint" or args.case == "mixed"]


def _maze_variants(args) -> list:
    from .bench.maze import VARIANTS
    return list(VARIANTS) if args.variant == "all" else [args.variant]


def _machine_config(args, variant):
    from .bench.machine import MachineReplacementConfig
    return MachineReplacementConfig(n_states=args.n_states, case=args.case, variant=variant,
                                    estimation=args.estimation, sample_size=args.sample_size, seed=args.seed)


def _maze_config(args, variant, lam):
    from .bench.maze import MazeConfig
    kw = {}
    if args.layout:
        kw["layout"] = Path(args.layout).read_text()
    return MazeConfig(lam=lam, variant=variant, **kw)


def _policy_json(policy: Policy) -> dict:
    return {str(s): [float(x) for x in policy[s]] for s in policy.rows}


def _policy_from_json(mdp, obj: dict) -> Policy:
    by_name = {str(s): s for s in mdp.states}
    rows = {}
    for key, row in obj.items():
        if key not in by_name:
            raise InputError(f"solution names unknown state {key!r}")
        s = by_name[key]
        if len(row) != mdp.n_actions(s):
            raise InputError(f"policy row of state {key!r} has {len(row)} entries, expected {mdp.n_actions(s)}")
        rows[s] = np.asarray(row, dtype=float)
    missing = [str(s) for s in mdp.states if s not in rows]
    if missing:
        raise InputError(f"solution has no policy row for states {missing[:5]}")
    return Policy(rows)


def cmd_bench(args) -> int:
    from .bench.machine import generate_machine_problem, repair_state
    from .bench.maze import generate_maze_problem
    from .bench.simulate import simulate

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kernel = _kernel_name(args.kernel)
    maze = args.benchmark == "maze"
    lams = args.lam if maze else [None]
    variants = _maze_variants(args) if maze else _machine_variants(args)
    summary, rows, policies = [], [], {}
    for lam in lams:
        for variant in variants:
            inst = generate_maze_problem(_maze_config(args, variant, lam)) if maze else \
                generate_machine_problem(_machine_config(args, variant))
            sol = _solve(inst.problem, args.eps, args.max_iter, "clarabel")
            if not sol.converged:
                print(f"{variant}: value iteration did not converge", file=sys.stderr)
                return EXIT_NONCONVERGED
            rep = simulate(inst.truth, sol.policy, args.runs, args.seed, kernel=args.kernel, workers=args.workers,
                           metric="exit_time" if maze else "return")
            entry = {"variant": variant, **rep.summary(), "iterations": sol.iterations,
                     "robust_value": sol.value(inst.problem.mdp.space.initial_state)}
            entry["exact_mean_return"] = evaluate_policy(inst.problem.mdp, inst.truth.mean_parameters(), sol.policy)
            if maze:
                entry["lambda"] = lam
                policies[f"{variant}@{lam}"] = _policy_json(sol.policy)
                for k in range(args.runs):
                    rows.append([variant, lam, k, int(rep.steps[k]), rep.returns[k], int(rep.capped[k])])
            else:
                entry["repair_state"] = repair_state(sol.policy, args.n_states)
                policies[variant] = _policy_json(sol.policy)
                for k in range(args.runs):
                    rows.append([variant, k, rep.returns[k], int(rep.steps[k]), int(rep.capped[k])])
            summary.append(entry)
            tag = f"{variant} lambda={lam}" if maze else variant
            extra = "" if maze else f"  repair_state={entry['repair_state']}"
            print(f"{tag:24s} mean={rep.mean:.6g}  se={rep.stderr:.3g}{extra}")
    header = ["variant", "lambda", "run", "exit_time", "return", "capped"] if maze else \
        ["variant", "run", "return", "steps", "capped"]
    with open(out / "runs.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])
    (out / "summary.json").write_text(json.dumps({"benchmark": args.benchmark, "variants": summary}, indent=1))
    (out / "policies.json").write_text(json.dumps(policies))
    inputs = [args.layout] if maze and args.layout else []
    write_manifest(out / "manifest.json", args, inputs,
                   [out / "runs.csv", out / "summary.json", out / "policies.json"], seed=args.seed, kernel=kernel,
                   extra={"config": {k: v for k, v in vars(args).items() if k not in ("func", "argv")}})
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .bench.machine import generate_machine_problem
    from .bench.maze import generate_maze_problem
    from .bench.simulate import simulate

    maze = args.benchmark == "maze"
    inst = generate_maze_problem(_maze_config(args, "nominal", args.lam[0])) if maze else \
        generate_machine_problem(_machine_config(args, "nominal"))
    try:
        obj = json.loads(Path(args.solution).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{args.solution}: not valid JSON: {exc}") from None
    rows = obj.get("policy", obj)
    if args.key is not None:
        rows = rows[args.key]
    policy = _policy_from_json(inst.problem.mdp, rows)
    rep = simulate(inst.truth, policy, args.runs, args.seed, kernel=args.kernel, workers=args.workers,
                   metric="exit_time" if maze else "return")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "runs.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run", "return", "steps", "capped"])
        for k in range(args.runs):
            w.writerow([k, _fmt(rep.returns[k]), int(rep.steps[k]), int(rep.capped[k])])
    summ = rep.summary()
    (out / "summary.json").write_text(json.dumps(summ, indent=1))
    write_manifest(out / "manifest.json", args, [args.solution], [out / "runs.csv", out / "summary.json"],
                   seed=args.seed, kernel=rep.kernel)
    print(f"mean={rep.mean:.6g}  se={rep.stderr:.3g}  capped={rep.n_capped}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _bench_options(p, runs_default: int):
    p.add_argument("benchmark", choices=["machine", "maze"])
    p.add_argument("--runs", type=_positive_int, default=runs_default)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--case", choices=["gaussian", "mixed"], default="gaussian", help="machine terminal cost law")
    p.add_argument("--n-states", type=int, default=50, help="machine chain length")
    p.add_argument("--estimation", choices=["exact", "sample"], default="exact")
    p.add_argument("--sample-size", type=int, default=10_000)
    p.add_argument("--lambda", dest="lam", type=float, nargs="+", default=[0.5], help="maze mixture weight(s)")
    p.add_argument("--layout", help="maze layout file")
    p.add_argument("--kernel", choices=["python", "compiled"], default=None)
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="drmdp", description="Distributionally robust MDP toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a problem file")
    p.add_argument("--problem", required=True)
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--max-iter", type=_positive_int, default=10_000)
    p.add_argument("--backend", default="clarabel")
    p.add_argument("--out", required=True, help="solution JSON path")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="check nesting and regularity of every ambiguity set")
    p.add_argument("--problem", required=True)
    p.add_argument("--mode", choices=["declared", "optimize", "sample"], default="optimize")
    p.add_argument("--samples", type=_positive_int, default=1000)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="generate, solve and simulate a benchmark")
    _bench_options(p, 10_000)
    p.add_argument("--variant", default="all",
                   choices=["all", "nominal", "robust", "dr_nested", "dr_disjoint"])
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--max-iter", type=_positive_int, default=10_000)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("simulate", help="simulate a stored policy on a benchmark")
    _bench_options(p, 10_000)
    p.add_argument("--solution", required=True, help="solution JSON or policies.json from bench")
    p.add_argument("--key", help="entry of a policies.json file, e.g. dr_nested")
    p.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    args.argv = list(argv) if argv is not None else None
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ProblemError as exc:
        print(f"invalid problem: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InputError, AmbiguityError, MdpError, ValueError, KeyError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SRobustError as exc:
        print(f"solver failure ({exc.reason}): {exc}", file=sys.stderr)
        return EXIT_SOLVER


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
