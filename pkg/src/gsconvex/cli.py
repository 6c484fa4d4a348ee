"""Command-line front end.

Usage::

    gsconvex <command> PROBLEM [--tol T] [--seed N] [--pairs N] [--truncate B]
                               [--strict] [--json | --no-json] [--quiet]

Commands: check, sets, algebra, gradineq, certify-min, kkt, oracle-min.
PROBLEM is a path or the name of a bundled problem (``--list`` shows them).

Exit codes: 0 certified/agree, 1 refuted/not certified, 2 inconclusive,
3 usage or schema error. The report goes to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time

from . import __version__
from .algebra import (
    NOTES,
    CertifiedInstance,
    DecreasingComposition,
    EmptyList,
    MismatchedDomain,
    MismatchedS,
    MixedModifierMaps,
    NegativeAlpha,
    NotCertified,
    combine_composition,
    combine_max,
    combine_scale,
    combine_sum,
    combine_sup,
    combine_weighted_sum,
    recertify,
)
from .defcheck import (
    TWO_POINT,
    Verdict,
    check_convex,
    check_general_s_convex,
    check_s_convex_second_sense,
    check_sub_b_convex,
    check_sub_b_s_convex,
)
from .expr import to_string
from .gradineq import verify_corollary2, verify_theorem4, verify_theorem5
from .optim import (
    ConstrainedProblem,
    Infeasible,
    KKTCertificate,
    NegativeMultiplier,
    SingularGradient,
    DivergentLimit,
    UnconstrainedProblem,
    brute_force_min,
    certify_kkt,
    certify_unconstrained,
    check_uniqueness_note,
)
from .problem import Problem, SchemaError, bundled_problems, load_problem
from .report import canonical_json
from .sets import GeneralSConvexSetSpec, epigraph_equivalence, set_check

log = logging.getLogger("gsconvex")

EXIT_OK, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_USAGE = 0, 1, 2, 3

_VERDICT_EXIT = {
    Verdict.CERTIFIED_ON_SAMPLES: EXIT_OK,
    Verdict.REFUTED: EXIT_FAIL,
    Verdict.INCONCLUSIVE: EXIT_INCONCLUSIVE,
}


def _point(p: Problem, values, where):
    if len(values) != p.arity:
        raise SchemaError(where, f"expected {p.arity} coordinates, got {len(values)}")
    if not p.domain.contains(values)[0]:
        raise SchemaError(where, f"point {values} lies outside the domain")
    return values


def _cmd_check(p: Problem, args):
    sec = p.section("check")
    h = p.function(sec["function"], "check.function")
    definition = sec.get("definition", "general")
    strict = bool(sec.get("strict", False))
    where = "check.map"
    if definition == "general":
        rep = check_general_s_convex(h, p.map(sec.get("map"), where), p.domain, p.plan, p.tol, p.rtol)
    elif definition == "second-sense":
        rep = check_s_convex_second_sense(h, p.domain, p.plan, p.tol, p.rtol, strict)
    elif definition == "sub-b":
        rep = check_sub_b_convex(h, p.map(sec.get("map"), where, TWO_POINT), p.domain, p.plan, p.tol, p.rtol)
    elif definition == "sub-b-s":
        rep = check_sub_b_s_convex(h, p.map(sec.get("map"), where, TWO_POINT), p.domain, p.plan, p.tol, p.rtol,
                                   strict)
    else:
        rep = check_convex(h, p.domain, p.plan, p.tol, p.rtol)
    return {"check": rep.to_dict()}, _VERDICT_EXIT[rep.verdict]


def _cmd_sets(p: Problem, args):
    sec = p.section("sets")
    fs = [p.function(name, f"sets.functions[{i}]") for i, name in enumerate(sec["functions"])]
    theta = p.map(sec.get("map"), "sets.map")
    offsets = sec.get("beta_offsets", [0.0, 1.0])
    if len(fs) == 1:
        fn, st, agree = epigraph_equivalence(fs[0], theta, p.domain, p.plan, p.tol, p.rtol, offsets)
        result = {"function_check": fn.to_dict(), "set_check": st.to_dict(), "agree": agree}
        if not agree:
            return result, EXIT_FAIL
        return result, _VERDICT_EXIT[st.verdict]
    st = set_check(GeneralSConvexSetSpec(tuple(fs), theta, p.s), p.domain, p.plan, offsets, p.tol, p.rtol)
    return {"set_check": st.to_dict()}, _VERDICT_EXIT[st.verdict]


def _cmd_algebra(p: Problem, args):
    sec = p.section("algebra")
    insts = []
    for i, ref in enumerate(sec["instances"]):
        where = f"algebra.instances[{i}]"
        h = p.function(ref["function"], where + ".function")
        theta = p.map(ref.get("map"), where + ".map")
        try:
            insts.append(CertifiedInstance.certify(h, theta, p.domain, p.plan, p.tol, p.rtol))
        except NotCertified as exc:
            return {"op": sec["op"], "error": "NotCertified", "message": str(exc), "instance": i}, EXIT_FAIL
    op = sec["op"]
    if op == "sum":
        if len(insts) != 2:
            raise SchemaError("algebra.instances", "sum takes exactly two instances")
        h, theta = combine_sum(*insts)
    elif op == "scale":
        h, theta = combine_scale(insts[0], float(sec.get("alpha", 1.0)))
    elif op == "weighted-sum":
        h, theta = combine_weighted_sum(insts, sec.get("alphas", [1.0] * len(insts)))
    elif op == "max":
        h, theta = combine_max(insts)
    elif op == "composition":
        h, theta = combine_composition(insts[0], float(sec.get("slope", 1.0)), float(sec.get("intercept", 0.0)))
    else:
        h, theta = combine_sup(insts)
    rep = recertify(h, theta, insts[0], p.plan, p.tol, p.rtol)
    key = op.replace("-", "_")
    result = {
        "op": op,
        "inputs": [{"h": to_string(i.h), "map": to_string(i.theta.expr)} for i in insts],
        "result": {"h": to_string(h), "map": to_string(theta.expr)},
        "recheck": rep.to_dict(),
        "notes": [NOTES[key]] if key in NOTES else [],
    }
    return result, _VERDICT_EXIT[rep.verdict]


def _cmd_gradineq(p: Problem, args):
    sec = p.section("gradineq")
    h = p.function(sec["function"], "gradineq.function")
    theta = p.map(sec.get("map"), "gradineq.map")
    runners = {"theorem4": verify_theorem4, "theorem5": verify_theorem5, "corollary2": verify_corollary2}
    names = sec.get("theorems", list(runners))
    grad_tol = max(p.tol, 1e-7)
    reports = {n: runners[n](h, theta, p.domain, p.plan, grad_tol, p.rtol) for n in names}
    verdicts = [r.verdict for r in reports.values()]
    if Verdict.REFUTED in verdicts:
        code = EXIT_FAIL
    elif Verdict.INCONCLUSIVE in verdicts:
        code = EXIT_INCONCLUSIVE
    else:
        code = EXIT_OK
    return {n: r.to_dict() for n, r in reports.items()}, code


def _cmd_certify_min(p: Problem, args):
    sec = p.section("optimize")
    h = p.function(sec["function"], "optimize.function")
    theta = p.map(sec.get("map"), "optimize.map")
    prob = UnconstrainedProblem(h, theta, p.s, p.domain)
    _point(p, sec["b2"], "optimize.b2")
    rep = certify_unconstrained(prob, sec["b2"], p.plan, p.tol, p.rtol)
    note = check_uniqueness_note(prob, sec["b2"], sec.get("perturbations", 16), tol=p.tol, seed=p.plan.seed,
                                 prior=rep)
    b, val = brute_force_min(h, p.domain, p.grid_n)
    result = {"certification": rep.to_dict(), "uniqueness": note,
              "grid_oracle": {"b": [float(x) for x in b], "value": val, "grid_n": p.grid_n}}
    return result, EXIT_OK if rep.certified else EXIT_FAIL


def _cmd_kkt(p: Problem, args):
    sec = p.section("kkt")
    h = p.function(sec["function"], "kkt.function")
    theta = p.map(sec.get("map"), "kkt.map")
    cons = tuple(
        (p.function(c["function"], f"kkt.constraints[{i}].function"),
         p.map(c.get("map"), f"kkt.constraints[{i}].map"))
        for i, c in enumerate(sec["constraints"])
    )
    prob = ConstrainedProblem(h, theta, p.s, cons, p.domain)
    _point(p, sec["b_star"], "kkt.b_star")
    if len(sec["multipliers"]) != len(cons):
        raise SchemaError("kkt.multipliers", f"expected {len(cons)} multipliers, got {len(sec['multipliers'])}")
    try:
        cert = KKTCertificate(sec["b_star"], sec["multipliers"])
        rep = certify_kkt(prob, cert, p.plan, p.tol, p.rtol, p.grid_n)
    except (Infeasible, NegativeMultiplier) as exc:
        return {"kkt": {"verdict": "NOT_CERTIFIED", "error": type(exc).__name__, "message": str(exc)}}, EXIT_FAIL
    return {"kkt": rep.to_dict()}, EXIT_OK if rep.certified else EXIT_FAIL


def _cmd_oracle_min(p: Problem, args):
    sec = p.section("oracle")
    h = p.function(sec["function"], "oracle.function")
    grid_n = int(sec.get("grid_n", p.grid_n))
    b, val = brute_force_min(h, p.domain, grid_n)
    return {"oracle": {"b": [float(x) for x in b], "value": val, "grid_n": grid_n, "h": to_string(h),
                       "domain": p.domain.to_dict()}}, EXIT_OK


COMMANDS = {
    "check": _cmd_check,
    "sets": _cmd_sets,
    "algebra": _cmd_algebra,
    "gradineq": _cmd_gradineq,
    "certify-min": _cmd_certify_min,
    "kkt": _cmd_kkt,
    "oracle-min": _cmd_oracle_min,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gsconvex", description="Sampled certification of general s-convexity.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--list", action="store_true", help="list bundled problem files and exit")
    parser.add_argument("command", nargs="?", choices=sorted(COMMANDS))
    parser.add_argument("problem", nargs="?", help="problem file path or bundled problem name")
    parser.add_argument("--tol", type=float, help="absolute tolerance")
    parser.add_argument("--seed", type=int, help="sampling seed")
    parser.add_argument("--pairs", type=int, dest="n_pairs", help="number of sampled pairs")
    parser.add_argument("--truncate", type=float, help="bound replacing infinite upper limits")
    parser.add_argument("--strict", action="store_true", help="strict inequality at interior sigma")
    parser.add_argument("--json", action=argparse.BooleanOptionalAction, default=True,
                        help="emit the JSON report (default) or a one-line summary")
    parser.add_argument("--quiet", action="store_true", help="suppress diagnostics on stderr")
    return parser


def _summary(command, result, code) -> str:
    label = {0: "OK", 1: "FAIL", 2: "INCONCLUSIVE"}.get(code, "ERROR")
    return f"{command}: {label} (exit {code})\n"


def _configure_logging(quiet: bool):
    for handler in list(log.handlers):
        log.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
    log.addHandler(handler)
    log.propagate = False
    log.setLevel(logging.WARNING if quiet else logging.INFO)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else 0
    _configure_logging(args.quiet)
    if args.list:
        for name in sorted(bundled_problems()):
            print(name)
        return EXIT_OK
    if not args.command or not args.problem:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    overrides = {"tol": args.tol, "seed": args.seed, "n_pairs": args.n_pairs, "truncate": args.truncate,
                 "strict": args.strict}
    start = time.perf_counter()
    try:
        problem = load_problem(args.problem, overrides)
        result, code = COMMANDS[args.command](problem, args)
    except SchemaError as exc:
        log.error("schema error at %s", exc)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except (MismatchedS, MismatchedDomain, MixedModifierMaps, NegativeAlpha, DecreasingComposition,
            EmptyList) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_USAGE
    except (SingularGradient, DivergentLimit) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_INCONCLUSIVE
    doc = {
        "tool": "gsconvex",
        "version": __version__,
        "command": args.command,
        "problem": problem.raw,
        "result": result,
        "exit_code": code,
    }
    sys.stdout.write(canonical_json(doc) if args.json else _summary(args.command, result, code))
    log.info("%s finished in %.3f s", args.command, time.perf_counter() - start)
    return code


if __name__ == "__main__":
    sys.exit(main())
