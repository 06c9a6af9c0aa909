"""``umvd`` command line: solve, lower-bound, exact, bench, check, newick.

Exit status: 0 success, 1 "no" answer (``check`` on a non-ultrametric,
``newick`` on a non-ultrametric input), 2 parse or validation error, 3 solver
failure.  Diagnostics go to standard error; results go to standard output or
the requested files.
"""

from __future__ import annotations

import argparse
import csv
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .instance import InstanceError, Mode, Ultrametric, build_ladder, check_ultrametric, read_instance
from .lp import EdgeClass, LPBudgetError, build_lp, edge_costs, normalize_top_level, solve_lp, write_lp_file
from .newick import NewickError, to_newick
from .oracle import DEFAULT_BUDGET, OracleBudgetError, exact_opt
from .pivot import PivotError, Rounder
from .simplex import SimplexError

EXIT_OK, EXIT_NO, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2, 3


class _InputError(Exception):
    pass


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def _err(msg: str) -> None:
    print(f"umvd: {msg}", file=sys.stderr)


def _parameters(args) -> tuple[Fraction, Fraction]:
    from .harness.study import guarantee, resolve_parameters

    alpha, beta = resolve_parameters(args.mode, args.alpha, args.beta)
    if args.alpha is not None or args.beta is not None:
        g, warn = guarantee(args.mode, alpha, beta)
        if warn:
            _err(f"warning: {warn}")
        elif g is not None:
            _err(f"guarantee at alpha={float(alpha):g}, beta={float(beta):g}: {g:.6g}")
    return alpha, beta


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    seed = int(np.random.SeedSequence().entropy)
    _err(f"seed={seed}")
    return seed


def _load(args):
    try:
        return read_instance(args.input, args.mode, args.format)
    except (InstanceError, ValueError) as exc:
        raise _InputError(str(exc)) from None
    except OSError as exc:
        raise _InputError(f"cannot read {args.input}: {exc.strerror or exc}") from None


def _num(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


def _matrix_text(u: Ultrametric) -> str:
    D = u.distance_matrix()
    rows = [str(u.n)] + [",".join("0" if i == j else _num(D[i, j]) for j in range(u.n)) for i in range(u.n)]
    return "\n".join(rows) + "\n"


def _solve_lp(inst, args):
    lp = build_lp(inst)
    if getattr(args, "dump_lp", None):
        write_lp_file(lp, args.dump_lp)
    return lp, normalize_top_level(solve_lp(lp))


def cmd_solve(args) -> int:
    inst = _load(args)
    alpha, beta = _parameters(args)
    seed = _seed(args)
    _, y = _solve_lp(inst, args)
    bound = edge_costs(inst, y, alpha).lp_lower_bound
    res = Rounder(inst, y, alpha, beta, force_random=args.force_random).run(seed, trace=bool(args.trace))
    u = res.ultrametric
    if args.trace:
        with open(args.trace, "w") as fh:
            res.trace.write_jsonl(fh, inst.labels)
    D = u.distance_matrix()
    lab = inst.labels
    out = sys.stdout
    if args.output:
        Path(args.output).write_text(_matrix_text(u))
    else:
        out.write("# fitted distance matrix\n")
        out.write(_matrix_text(u))
    w = csv.writer(out, lineterminator="\n")
    out.write("# pairs\n")
    w.writerow(["u", "v", "distance", "specified"])
    for i, j in inst.pairs:
        w.writerow([lab[i], lab[j], _num(D[i, j]), int(inst.specified[i, j])])
    out.write("# modifications\n")
    w.writerow(["u", "v", "old", "new"])
    for i, j in inst.edges:
        if D[i, j] != inst.distances[i, j]:
            w.writerow([lab[i], lab[j], _num(inst.distances[i, j]), _num(D[i, j])])
    ratio = res.cost / bound if bound > 1e-9 else (1.0 if res.cost == 0 else float("inf"))
    out.write(f"cost={_num(res.cost)} lp_bound={bound:.10g} ratio={ratio:.6g}\n")
    return EXIT_OK


def cmd_lower_bound(args) -> int:
    inst = _load(args)
    alpha, _ = _parameters(args)
    lp, y = _solve_lp(inst, args)
    costs = edge_costs(inst, y, alpha)
    counts = {k.value: len(costs.of_class(k)) for k in EdgeClass}
    print(f"lp_bound={costs.lp_lower_bound:.10g} variables={lp.n_variables} constraints={lp.A_ub.shape[0]} iterations={y.iterations}")
    if inst.edges:
        print(" ".join(f"{k}={v}" for k, v in counts.items()))
    return EXIT_OK


def cmd_exact(args) -> int:
    inst = _load(args)
    try:
        res = exact_opt(inst, budget=args.oracle_budget)
    except OracleBudgetError as exc:
        _err(str(exc))
        return EXIT_SOLVER
    if args.output:
        Path(args.output).write_text(_matrix_text(res.witness))
    else:
        sys.stdout.write(_matrix_text(res.witness))
    print(f"opt_cost={_num(res.opt_cost)} enumerated={res.enumerated_count}")
    return EXIT_OK


def cmd_check(args) -> int:
    args.mode = Mode.COMPLETE  # a candidate must be a full matrix
    inst = _load(args)
    D = np.where(inst.specified, inst.distances, 0.0)
    ok, bad = check_ultrametric(D) if inst.n >= 3 else (True, None)
    if ok:
        print("ultrametric")
        return EXIT_OK
    a, b, c = (inst.labels[v] for v in bad)
    print(f"not ultrametric: triple ({a},{b},{c}) has a unique largest distance")
    return EXIT_NO


def cmd_newick(args) -> int:
    inst = _load(args)
    if args.fit:
        alpha, beta = _parameters(args)
        _, y = _solve_lp(inst, args)
        u = Rounder(inst, y, alpha, beta, force_random=args.force_random).run(_seed(args), trace=False).ultrametric
    else:
        if inst.unspecified:
            raise _InputError("newick export needs every pair specified (use --fit to fill them)")
        lad = build_ladder(inst)
        u = Ultrametric(lad.level_of.copy(), lad)
    try:
        text = to_newick(u, list(inst.labels))
    except NewickError as exc:
        _err(str(exc))
        return EXIT_NO
    if args.output:
        Path(args.output).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def cmd_bench(args) -> int:
    from .harness.report import write_report
    from .harness.study import StudyConfig, ratio_study

    alpha, beta = _parameters(args)
    seed = _seed(args)
    reports = []
    for n in args.n:
        cfg = StudyConfig(
            mode=Mode(args.mode).value, alpha=alpha, beta=beta, kind=args.kind, n=n, L=args.levels,
            k=args.k, p=args.p, parts=args.parts, trials=args.trials, seed=seed,
            runs_per_instance=args.runs_per_instance, oracle_budget=args.oracle_budget or None,
            audit=args.audit, force_random=args.force_random,
        )
        reports.append(ratio_study(cfg, jobs=args.jobs))
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["n", "trials", "failed", "perfect", "mean_cost", "stderr_cost", "mean_ratio_lp",
                "stderr_ratio_lp", "mean_ratio_opt", "stderr_ratio_opt", "guarantee"])
    for rep in reports:
        s = rep.summary()
        w.writerow([rep.config.n, s["trials"], s["failed_trials"], s["perfect_trials"]] + [
            f"{s[key]:.6g}" if s[key] is not None else ""
            for key in ("mean_cost", "stderr_cost", "mean_ratio_lp", "stderr_ratio_lp",
                        "mean_ratio_opt", "stderr_ratio_opt", "guarantee")
        ])
    if args.report_dir:
        paths = write_report(reports, args.report_dir)
        _err("wrote " + ", ".join(str(p) for p in paths.values()))
    failed = sum(len(r.failed_trials) for r in reports)
    if failed:
        _err(f"{failed} trial(s) failed; see the report for details")
    return EXIT_OK


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="umvd", description="Fit ultrametrics minimizing the number (or weight) of changed distances.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_input=True, params=True):
        if needs_input:
            p.add_argument("input", help="instance file")
            p.add_argument("--format", choices=("edges", "matrix"), default="edges", help="input format (default: edges)")
        p.add_argument("--mode", choices=[m.value for m in Mode], default="complete")
        if params:
            p.add_argument("--alpha", type=_fraction, help="rounding threshold (default per mode)")
            p.add_argument("--beta", type=_fraction, help="unspecified-pair threshold factor (default per mode)")
            p.add_argument("--seed", type=int, help="random seed (drawn and printed if omitted)")
            p.add_argument("--force-random", action="store_true", help="sample every pivot edge from its CCDF")

    p = sub.add_parser("solve", help="fit an ultrametric with the LP-rounding pivot")
    common(p)
    p.add_argument("--output", help="write the fitted distance matrix here instead of stdout")
    p.add_argument("--trace", help="write the recursion trace as JSON lines")
    p.add_argument("--dump-lp", help="write the relaxation in CPLEX LP format")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("lower-bound", help="solve the relaxation and print the bound")
    common(p)
    p.add_argument("--dump-lp", help="write the relaxation in CPLEX LP format")
    p.set_defaults(func=cmd_lower_bound)

    p = sub.add_parser("exact", help="exact optimum by exhaustive search (small inputs)")
    common(p, params=False)
    p.add_argument("--oracle-budget", type=int, default=DEFAULT_BUDGET, help="maximum number of assignments")
    p.add_argument("--output", help="write the optimal distance matrix here instead of stdout")
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("check", help="exit 0 if the matrix is an ultrametric, 1 otherwise")
    p.add_argument("input", help="candidate distance matrix")
    p.add_argument("--format", choices=("edges", "matrix"), default="matrix")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("newick", help="export an ultrametric (or a fitted one) as a Newick tree")
    common(p)
    p.add_argument("--fit", action="store_true", help="fit the input first instead of requiring an ultrametric")
    p.add_argument("--output", help="write the tree here instead of stdout")
    p.set_defaults(func=cmd_newick)

    p = sub.add_parser("bench", help="Monte-Carlo ratio study on generated instances")
    common(p, needs_input=False)
    p.add_argument("--kind", default="perturbed_ultrametric",
                   choices=("perturbed_ultrametric", "random_levels", "cc_random", "kpartite_perturbed"))
    p.add_argument("--n", type=_int_list, default=[10], help="instance size(s), comma-separated")
    p.add_argument("--levels", "-L", type=int, default=3, help="number of distance levels")
    p.add_argument("--k", type=int, default=1, help="corrupted pairs per instance")
    p.add_argument("--p", type=float, default=0.5, help="density for cc_random")
    p.add_argument("--parts", type=int, default=3, help="parts for k-partite instances")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--runs-per-instance", type=int, default=1)
    p.add_argument("--oracle-budget", type=int, default=0, help="compare with the exact optimum when it fits")
    p.add_argument("--audit", action="store_true", help="audit invariants on every trace")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--report-dir", help="write trials.csv, summary.json and figures here")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _InputError as exc:
        _err(str(exc))
        return EXIT_INPUT
    except (SimplexError, LPBudgetError, PivotError) as exc:
        _err(f"solver failure: {exc}")
        return EXIT_SOLVER
    except (ValueError, InstanceError) as exc:
        _err(str(exc))
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
