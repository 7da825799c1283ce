"""Command-line entry point: one subcommand per study.

Every subcommand writes one CSV or JSON document to ``--out`` (stdout by
default).  Seeds default to 0, so equal arguments give byte-identical
output.  Exit codes: 0 success, 1 a selftest check failed, 2 invalid
arguments, 3 a size budget was exceeded.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from typing import Optional

from . import __version__, checks, cube, gns, hermite, l1degree, learner, resilience, tables
from .errors import BudgetExceeded, InsufficientSamples

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INVALID = 2
EXIT_BUDGET = 3

MAX_COEFF_ROWS = 200000


class InvalidParameter(Exception):
    def __init__(self, name: str, message: str):
        self.name = name
        super().__init__(f"invalid {name}: {message}")


def _require(cond: bool, name: str, message: str):
    if not cond:
        raise InvalidParameter(name, message)


def _float_list(text: str) -> list:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _int_list(text: str) -> list:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _noise(text: str) -> learner.NoiseModel:
    try:
        return learner.NoiseModel.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


# ---------------------------------------------------------------------------
# subcommands; each returns the document text


def cmd_theta(args) -> str:
    ks = args.k
    for k in ks:
        _require(k >= 1 and math.isfinite(k), "--k", "every k must be >= 1")
    rows = []
    for k in ks:
        t = cube.theta_k(k)
        lo, hi = cube.mills_bounds(k) if k >= 2 else (None, None)
        inside = None if lo is None else bool(lo <= t <= hi)
        rows.append({"k": int(k) if float(k).is_integer() else k, "theta": t, "lower": lo, "upper": hi, "inside": inside})
    return _emit(args, rows, ("k", "theta", "lower", "upper", "inside"))


def cmd_coeffs(args) -> str:
    _require(args.jmax >= 0, "--jmax", "must be >= 0")
    if args.k is None:
        theta = cube.theta_k(1) if args.theta is None else args.theta
        _require(theta > 0, "--theta", "must be positive")
        c = cube.interval_coeffs(theta, args.jmax)
        rows = []
        for j in range(args.jmax + 1):
            bound = cube.interval_coeff_bound(theta, j) if j >= 2 and j % 2 == 0 else None
            rows.append({"theta": theta, "j": j, "coeff": float(c[j]), "squared_bound": bound})
        return _emit(args, rows, ("theta", "j", "coeff", "squared_bound"))
    _require(args.k >= 1, "--k", "must be >= 1")
    _require(args.theta is None or args.theta > 0, "--theta", "must be positive")
    spec = cube.CubeSpec.balanced(args.k) if args.theta is None else cube.CubeSpec(args.k, args.theta)
    # only all-even indices carry weight; enumerate halves and double them
    count = math.comb(args.k + args.jmax // 2, args.jmax // 2) - 1
    if count > MAX_COEFF_ROWS:
        raise BudgetExceeded("coefficient rows", count, MAX_COEFF_ROWS)
    half = hermite.enumerate_multi_indices(args.k, args.jmax // 2, include_zero=False)
    rows = []
    for H in half:
        J = tuple(2 * e for e in H)
        rows.append({"k": spec.k, "theta": spec.theta, "index": " ".join(map(str, J)),
                     "degree": sum(J), "coeff": cube.cube_coeff(spec, J)})
    return _emit(args, rows, ("k", "theta", "index", "degree", "coeff"))


def cmd_lowdeg(args) -> str:
    for k in args.k:
        _require(k >= 2, "--k", "every k must be >= 2")
    for d in args.d:
        _require(d >= 0, "--d", "every d must be >= 0")
    rows = []
    for k in args.k:
        spec = cube.CubeSpec.balanced(k)
        for d in args.d:
            row = cube.cube_low_degree_weight(spec, d).csv_row()
            row["in_range"] = bool(d <= k / (2 * math.e ** 2 * math.log(k)))
            rows.append(row)
    return _emit(args, rows, cube.WeightReport.CSV_FIELDS + ("in_range",))


def _grid_function(name: str, k: int, Q: int, theta: Optional[float]):
    _require(theta is None or theta > 0, "--theta", "must be positive")
    if name == "cube":
        S = hermite.gauss_hermite_grid(k, Q)
        spec = cube.CubeSpec.balanced(k) if theta is None else cube.CubeSpec(k, theta)
        return cube.cube_function(spec, S)
    S = hermite.gauss_hermite_grid(1, Q)
    if name == "sign":
        return cube.sign_function(S)
    return cube.interval_pm_function(cube.theta_k(1) if theta is None else theta, S)


def cmd_witness(args) -> str:
    _require(1 <= args.k <= resilience.MAX_CONSTRUCTION_DIM, "--k",
             f"must be in [1, {resilience.MAX_CONSTRUCTION_DIM}]")
    _require(args.Q >= 2, "--Q", "must be >= 2")
    _require(args.d >= 2, "--d", "must be >= 2")
    f = _grid_function("cube", args.k, args.Q, args.theta)
    rep = resilience.build_witness(f, args.d, max_iter=args.max_iter)
    doc = {
        "k": rep.k, "d": rep.d, "Q": args.Q, "alpha_predicted": rep.alpha_predicted,
        "alpha_achieved": rep.alpha_achieved, "sup_norm_g": rep.sup_norm_g,
        "max_low_coeff": rep.max_low_coeff, "normalized": rep.normalized,
        "converged": rep.converged,
        "iterations": [s.as_dict() for s in rep.iterations],
        "flags": [{"i": fl.i, "claim": fl.claim, "value": fl.value, "bound": fl.bound}
                  for fl in rep.flags],
        "hard_failures": [{"i": fl.i, "claim": fl.claim, "value": fl.value, "bound": fl.bound}
                          for fl in rep.hard_failures],
    }
    if not args.no_lp:
        doc["alpha_star_lp"] = l1degree.best_resilient_distance(f, args.d).objective
    if args.format == "csv":
        rows = [s.as_dict() for s in rep.iterations]
        fields = ("i", "low_norm", "sup_norm", "tau", "l1_drift", "l2_norm")
        return tables.rows_to_csv(rows, fields)
    return tables.to_json(doc)


def cmd_l1degree(args) -> str:
    _require(args.Q >= 2, "--Q", "must be >= 2")
    for d in args.d:
        _require(d >= 0, "--d", "every d must be >= 0")
    if args.function == "cube":
        _require(args.k >= 1, "--k", "must be >= 1")
    f = _grid_function(args.function, args.k, args.Q, args.theta)
    fid = args.function if args.function != "cube" else f"cube{args.k}"
    rows = l1degree.degree_sweep_rows(fid, f, args.d, with_alpha=not args.no_alpha, grid_q=args.Q)
    return _emit(args, rows, l1degree.SWEEP_FIELDS)


def cmd_ganzburg(args) -> str:
    for e in args.eps:
        _require(0 < e < 1, "--eps", "every eps must be in (0, 1)")
    _require(args.d_max >= 1, "--d-max", "must be >= 1")
    _require(args.spacing > 0, "--spacing", "must be positive")
    sw = l1degree.sign_degree_sweep(args.eps, args.d_max, args.spacing, check_drift=not args.no_drift)
    rows = []
    for e, deg in zip(sw.eps, sw.degrees):
        rows.append({"eps": e, "degree": deg, "e_star": sw.curve.get(deg) if deg is not None else None,
                     "drift": sw.drift.get(deg) if deg is not None else None, "slope": sw.slope,
                     "support_size": sw.support_size})
    if args.format == "json":
        return tables.to_json({"rows": rows, "slope": sw.slope, "d_max": args.d_max,
                               "spacing": args.spacing, "support_size": sw.support_size,
                               "fine_support_size": sw.fine_support_size,
                               "drift": {str(d): v for d, v in sorted(sw.drift.items())}})
    return tables.rows_to_csv(rows, ("eps", "degree", "e_star", "drift", "slope", "support_size"))


def cmd_gns(args) -> str:
    for r in args.rho:
        _require(0 <= r <= 1, "--rho", "every rho must be in [0, 1]")
    _require(args.N >= 1, "--N", "must be >= 1")
    for k in args.k:
        _require(k >= 1, "--k", "every k must be >= 1")
    for d in args.d:
        _require(d >= 2, "--d", "every d must be >= 2")
    _require(args.lp_Q >= 0, "--lp-Q", "must be >= 0")
    if args.table == "sign":
        rows = []
        for r in args.rho:
            est = gns.gns_estimate(gns.sign_eval, 1, r, args.N, seed=args.seed)
            exact = gns.gns_sign_analytic(r)
            rows.append({"rho": r, "monte_carlo": est.value, "stderr": est.stderr, "closed_form": exact,
                         "within_3_stderr": est.agrees_with(exact), "N": args.N, "seed": args.seed})
        return _emit(args, rows, ("rho", "monte_carlo", "stderr", "closed_form", "within_3_stderr",
                                  "N", "seed"))
    lp_values = {}
    if args.lp_Q:
        for k in args.k:
            if k > 2:
                continue
            f = _grid_function("cube", k, args.lp_Q, None)
            for d in args.d:
                e = l1degree.best_l1_poly(f, d, tie_break=False).objective
                a = l1degree.best_resilient_distance(f, d).objective
                lp_values[(k, d)] = (e, a)
    rows = gns.comparison_rows(args.k, args.d, lp_values)
    return _emit(args, rows, gns.COMPARISON_FIELDS)


def cmd_learn(args) -> str:
    _require(args.n >= 1, "--n", "must be >= 1")
    _require(1 <= args.k <= args.n, "--k", "must be in [1, n]")
    _require(args.d >= 0, "--d", "must be >= 0")
    _require(args.m >= 1, "--m", "must be >= 1")
    _require(args.m_test >= 1, "--m-test", "must be >= 1")
    _require(args.seeds >= 1, "--seeds", "must be >= 1")
    cols = len(learner.learner_indices(args.n, args.d))
    _require(args.m >= cols, "--m", f"{InsufficientSamples(args.m, cols)}")
    rows = []
    for s in range(args.seed, args.seed + args.seeds):
        rec, _ = learner.run_experiment(args.n, args.k, args.d, args.m, args.noise, s,
                                        m_test=args.m_test)
        rows.append(json.loads(rec))
    fields = ("seed", "n", "k", "d", "m", "noise", "test_error", "opt", "excess")
    if args.format == "json":
        # JSON lines, one experiment record per seed
        return "".join(tables.to_json(r) for r in rows)
    return tables.rows_to_csv(rows, fields)


def cmd_selftest(args) -> str:
    results = checks.run_checks()
    args._status = EXIT_OK if all(r.passed for r in results) else EXIT_CHECK_FAILED
    if args.format == "json":
        return tables.to_json([{"name": r.name, "passed": r.passed, "detail": r.detail}
                               for r in results])
    # timings are shown on stderr only so the document stays reproducible
    for r in results:
        print(r.line(), file=sys.stderr)
    return tables.rows_to_csv([{"name": r.name, "passed": r.passed, "detail": r.detail}
                               for r in results], ("name", "passed", "detail"))


def _emit(args, rows, fields) -> str:
    if args.format == "json":
        return tables.rows_to_json(rows, fields)
    return tables.rows_to_csv(rows, fields)


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="reslab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=None, help="output file (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default=None,
                        help="output format (default: json for witness, csv otherwise)")
    common.add_argument("--seed", type=int, default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("theta", parents=[common], help="theta_k with its Mills-ratio sandwich")
    s.add_argument("--k", type=_float_list, default=[8, 64, 1000, 10**4, 10**6],
                   help="comma-separated cube dimensions")
    s.set_defaults(func=cmd_theta)

    s = sub.add_parser("coeffs", parents=[common], help="interval or cube Hermite coefficients")
    s.add_argument("--theta", type=float, default=None, help="half-width (default: balanced)")
    s.add_argument("--k", type=int, default=None, help="cube dimension; omit for the interval")
    s.add_argument("--jmax", type=int, default=20, help="largest degree (per axis for the interval, total for the cube)")
    s.set_defaults(func=cmd_coeffs)

    s = sub.add_parser("lowdeg", parents=[common], help="cube low-degree weight against 20 d (3 ln k)^d / k")
    s.add_argument("--k", type=_int_list, default=[16, 64, 256, 1024, 4096])
    s.add_argument("--d", type=_int_list, default=[2, 4, 6])
    s.set_defaults(func=cmd_lowdeg)

    s = sub.add_parser("witness", parents=[common], help="truncation-iteration witness for a cube")
    s.add_argument("--k", type=int, default=2)
    s.add_argument("--Q", type=int, default=80, help="Gauss-Hermite points per axis")
    s.add_argument("--d", type=int, default=2)
    s.add_argument("--theta", type=float, default=None)
    s.add_argument("--max-iter", type=int, default=60)
    s.add_argument("--no-lp", action="store_true", help="skip the LP value of alpha*")
    s.set_defaults(func=cmd_witness, format_default="json")

    s = sub.add_parser("l1degree", parents=[common], help="e* and alpha* curves with duality residuals")
    s.add_argument("--function", choices=("sign", "interval", "cube"), default="sign")
    s.add_argument("--k", type=int, default=2, help="cube dimension")
    s.add_argument("--Q", type=int, default=80)
    s.add_argument("--d", type=_int_list, default=[0, 2, 4, 6])
    s.add_argument("--theta", type=float, default=None)
    s.add_argument("--no-alpha", action="store_true", help="skip alpha* and the residual")
    s.set_defaults(func=cmd_l1degree)

    s = sub.add_parser("ganzburg", parents=[common], help="L1 approximate degree of sign against eps")
    s.add_argument("--eps", type=_float_list, default=[0.2, 0.1, 0.05])
    s.add_argument("--d-max", type=int, default=600)
    s.add_argument("--spacing", type=float, default=0.0073, help="line support node spacing")
    s.add_argument("--no-drift", action="store_true", help="skip the half-spacing re-check")
    s.set_defaults(func=cmd_ganzburg)

    s = sub.add_parser("gns", parents=[common], help="noise sensitivity tables")
    s.add_argument("--table", choices=("comparison", "sign"), default="comparison")
    s.add_argument("--k", type=_int_list, default=[2, 16, 256, 4096])
    s.add_argument("--d", type=_int_list, default=[2, 4, 6])
    s.add_argument("--lp-Q", type=int, default=0, help="grid size for LP columns when k <= 2 (0: off)")
    s.add_argument("--rho", type=_float_list, default=[0.1, 0.5, 1.0])
    s.add_argument("--N", type=int, default=10**6, help="Monte Carlo pairs")
    s.set_defaults(func=cmd_gns)

    s = sub.add_parser("learn", parents=[common], help="agnostic L1 regression experiment")
    s.add_argument("--n", type=int, default=8)
    s.add_argument("--k", type=int, default=2)
    s.add_argument("--d", type=int, default=2)
    s.add_argument("--m", type=int, default=20000)
    s.add_argument("--m-test", type=int, default=10**5)
    s.add_argument("--noise", type=_noise, default=learner.NoiseModel(),
                   help="none, random_flip:ETA, adversarial_margin:BUDGET or uniform")
    s.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    s.set_defaults(func=cmd_learn)

    s = sub.add_parser("selftest", parents=[common], help="reduced-size invariant suite")
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.format = args.format or getattr(args, "format_default", "csv")
    args._status = EXIT_OK
    try:
        text = args.func(args)
    except InvalidParameter as exc:
        print(f"reslab {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except BudgetExceeded as exc:
        print(f"reslab {args.command}: budget refusal: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return args._status


if __name__ == "__main__":
    sys.exit(main())
