"""Acceptance suite. Each test prints one PASS/FAIL line for its criterion."""

import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from gsconvex.algebra import CertifiedInstance, combine_scale, combine_sum, combine_weighted_sum
from gsconvex.defcheck import (
    TWO_POINT,
    CheckReport,
    ModifierMap,
    Verdict,
    check_convex,
    check_general_s_convex,
    check_s_convex_second_sense,
    check_sub_b_convex,
    check_sub_b_s_convex,
    general_margins,
    witness_violation,
)
from gsconvex.expr import parse
from gsconvex.gradineq import verify_corollary2, verify_theorem4, verify_theorem5
from gsconvex.gradineq import witness_violation as grad_witness_violation
from gsconvex.optim import ConstrainedProblem, KKTCertificate, brute_force_min, certify_kkt
from gsconvex.sampling import BoxDomain, SamplePlan
from gsconvex.sets import epigraph_equivalence, set_witness_violation

WORKED_H = "((x1-1)^2+(x1-1))^s"
WORKED_T = "sigma*(2*x1+6)"
MARGIN_TOL = 1e-9
GRAD_MARGIN_TOL = 1e-7
GRAD_FD_RTOL = 1e-5
KKT_RESIDUAL_TOL = 1e-12
KKT_ORACLE_TOL = 1e-6
RUNTIME_LIMIT_S = 10.0

# every REFUTED report produced below is collected here for criterion 7
REFUTED = []


def _collect(*reports):
    for rep in reports:
        if rep.refuted:
            REFUTED.append(rep)
    return reports[0] if len(reports) == 1 else reports


def _map(text, m=1, kind="one-point"):
    return ModifierMap(parse(text, m if kind == "one-point" else 2 * m), kind)


# ---------------------------------------------------------------------------
# 1. worked example
# ---------------------------------------------------------------------------


def test_criterion_1_worked_example(criterion):
    start = time.perf_counter()
    plan = SamplePlan(n_pairs=512, s=0.5)
    dom = BoxDomain([1.0], [math.inf], truncation_bound=10.0)
    rep = _collect(check_general_s_convex(parse(WORKED_H, 1, s=0.5), _map(WORKED_T), dom, plan))
    b, value = brute_force_min(parse(WORKED_H, 1, s=0.5), BoxDomain([1.0], [10.0]), 10001)
    elapsed = time.perf_counter() - start
    ok = (rep.verdict is Verdict.CERTIFIED_ON_SAMPLES and rep.worst_margin >= -MARGIN_TOL
          and rep.n_evaluated >= 512 * len(plan.sigma_grid) and b.tolist() == [1.0] and value <= 1e-9
          and elapsed < RUNTIME_LIMIT_S)
    criterion(1, ok, f"verdict={rep.verdict.value} worst_margin={rep.worst_margin:.3g} samples={rep.n_evaluated} "
                     f"argmin={b.tolist()} min={value:.3g} time={elapsed:.2f}s")
    assert ok


# ---------------------------------------------------------------------------
# 2. reduction chain on generated polynomials
# ---------------------------------------------------------------------------


def _polynomials(n=20, seed=2024):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        s = 1.0 if i % 2 == 0 else float(rng.choice([0.25, 0.5, 0.75]))
        if i % 4 < 2:  # nonnegative convex
            a, p, c, q = rng.uniform(0.1, 2), rng.uniform(-1, 1), rng.uniform(0, 2), rng.uniform(0, 0.5)
            text = f"{a:.6g}*(x1-({p:.6g}))^2 + {q:.6g}*(x1-({p:.6g}))^4 + {c:.6g}"
        else:
            coef = rng.normal(size=5)
            text = " + ".join(f"({c:.6g})*x1^{k}" for k, c in enumerate(coef))
        out.append((parse(text, 1), s))
    return out


def test_criterion_2_reduction_chain(criterion):
    dom = BoxDomain([-2.0], [2.0])
    agree, counts = 0, {}
    polys = _polynomials()
    for h, s in polys:
        plan = SamplePlan(n_pairs=256, s=s)
        g = check_general_s_convex(h, None, dom, plan)
        ss = check_s_convex_second_sense(h, dom, plan)
        verdicts = {g.verdict, ss.verdict}
        if s == 1.0:
            verdicts.add(_collect(check_convex(h, dom, plan)).verdict)
        _collect(g, ss)
        agree += len(verdicts) == 1
        counts[g.verdict.value] = counts.get(g.verdict.value, 0) + 1
    ok = agree == len(polys)
    criterion(2, ok, f"agreement {agree}/{len(polys)}; general verdicts {dict(sorted(counts.items()))}")
    assert ok


# ---------------------------------------------------------------------------
# 3. closure under sum, scaling and weighted sums
# ---------------------------------------------------------------------------


def _certified_pairs(n=10, seed=7):
    rng = np.random.default_rng(seed)
    wdom, wplan = BoxDomain([1.0], [10.0]), SamplePlan(n_pairs=256, s=0.5)
    worked = CertifiedInstance.certify(parse(WORKED_H, 1, s=0.5), _map(WORKED_T), wdom, wplan)
    pairs = [(worked, CertifiedInstance.certify(parse("x1^2", 1), _map("sigma"), wdom, wplan), wplan)]
    dom = BoxDomain([-3.0], [3.0])
    while len(pairs) < n:
        s = float(rng.choice([0.5, 0.75, 1.0]))
        plan = SamplePlan(n_pairs=256, s=s, seed=int(rng.integers(0, 1000)))
        insts = []
        for _ in range(2):
            a, p, c = rng.uniform(0.1, 3), rng.uniform(-2, 2), rng.uniform(0, 3)
            k, r = rng.uniform(0, 1), rng.uniform(0, 1)
            h = parse(f"{a:.6g}*(x1-({p:.6g}))^2 + {c:.6g}", 1)
            theta = _map(f"sigma*({k:.6g}*x1^2 + {r:.6g})")
            insts.append(CertifiedInstance.certify(h, theta, dom, plan))
        pairs.append((insts[0], insts[1], plan))
    return pairs, rng


def test_criterion_3_closure(criterion):
    pairs, rng = _certified_pairs()
    worst, worst_homog, n_checked = math.inf, 0.0, 0
    for a, b, plan in pairs:
        alpha = float(rng.uniform(0, 4))
        weights = rng.uniform(0, 3, 2)
        built = [combine_sum(a, b), combine_scale(a, alpha), combine_weighted_sum([a, b], weights)]
        for h, theta in built:
            margin = general_margins(h, theta, a.domain, plan)[3]
            worst = min(worst, float(np.min(margin)))
            n_checked += margin.size
        base = general_margins(a.h, a.theta, a.domain, plan)[3]
        scaled = general_margins(*built[1], a.domain, plan)[3]
        rel = np.abs(scaled - alpha * base) / np.maximum(1.0, np.abs(alpha * base))
        worst_homog = max(worst_homog, float(rel.max()))
    ok = len(pairs) == 10 and worst >= -MARGIN_TOL and worst_homog <= 1e-9
    criterion(3, ok, f"{len(pairs)} pairs, {n_checked} samples, worst margin {worst:.3g}, "
                     f"max scale-homogeneity error {worst_homog:.3g}")
    assert ok


# ---------------------------------------------------------------------------
# 4. function vs epigraph verdicts
# ---------------------------------------------------------------------------

EPIGRAPH_FIXTURES = [
    ("x1^2", "0", 1.0, (-5.0, 5.0), Verdict.CERTIFIED_ON_SAMPLES),
    (WORKED_H, WORKED_T, 0.5, (1.0, 10.0), Verdict.CERTIFIED_ON_SAMPLES),
    ("abs(x1) + exp(x1)", "sigma*(1-sigma)", 0.5, (-2.0, 2.0), Verdict.CERTIFIED_ON_SAMPLES),
    ("-x1^2", "0", 1.0, (-5.0, 5.0), Verdict.REFUTED),
    ("x1^3", "0", 1.0, (-2.0, 2.0), Verdict.REFUTED),
    ("-1", "0", 0.5, (-1.0, 1.0), Verdict.REFUTED),
    ("sqrt(x1)", "0", 1.0, (0.0, 4.0), Verdict.REFUTED),
]


def test_criterion_4_epigraph_equivalence(criterion):
    agree_all, matches = 0, 0
    for text, theta, s, (lo, hi), expected in EPIGRAPH_FIXTURES:
        plan = SamplePlan(n_pairs=256, s=s)
        fn, st, agree = epigraph_equivalence(parse(text, 1, s=s), _map(theta), BoxDomain([lo], [hi]), plan)
        _collect(fn, st)
        agree_all += agree
        matches += fn.verdict is expected and st.verdict is expected
    n = len(EPIGRAPH_FIXTURES)
    n_cert = sum(f[-1] is Verdict.CERTIFIED_ON_SAMPLES for f in EPIGRAPH_FIXTURES)
    ok = agree_all == n and matches == n and n_cert >= 3 and n - n_cert >= 3
    criterion(4, ok, f"agreement {agree_all}/{n}, expected verdicts {matches}/{n} ({n_cert} certified, "
                     f"{n - n_cert} refuted)")
    assert ok


# ---------------------------------------------------------------------------
# 5. gradient inequalities
# ---------------------------------------------------------------------------

GRADIENT_FIXTURES = [
    ("worked example", WORKED_H, WORKED_T, 0.5, (1.1, 10.0)),
    ("b^2", "x1^2", "0", 1.0, (-3.0, 3.0)),
    ("exp", "exp(x1)", "0", 1.0, (-2.0, 2.0)),
    ("b^2 - 10", "x1^2-10", "0", 1.0, (-1.0, 1.0)),
    ("b^2 + 1 with sigma(b^2+1)", "x1^2+1", "sigma*(x1^2+1)", 0.5, (-3.0, 3.0)),
    ("b^2 + 1, s=0.5", "x1^2+1", "0", 0.5, (-3.0, 3.0)),
]


def test_criterion_5_gradient_inequalities(criterion):
    failures, n_applicable, worst_fd = [], 0, 0.0
    for label, text, theta, s, (lo, hi) in GRADIENT_FIXTURES:
        h, t = parse(text, 1, s=s), _map(theta)
        dom, plan = BoxDomain([lo], [hi]), SamplePlan(n_pairs=256, s=s)
        for runner in (verify_theorem4, verify_theorem5, verify_corollary2):
            rep = runner(h, t, dom, plan)
            worst_fd = max(worst_fd, rep.gradient["max_relative_symbolic_vs_fd"] or 0.0)
            for name, ineq in rep.inequalities.items():
                if ineq.refuted:
                    REFUTED.append(ineq)
                if not rep.applicable[name]:
                    continue
                n_applicable += 1
                if not (ineq.worst_margin >= -GRAD_MARGIN_TOL):
                    failures.append(f"{label}:{name} margin {ineq.worst_margin:.4g} at sigma={ineq.witness['sigma']}")
    ok = not failures and worst_fd <= GRAD_FD_RTOL
    detail = f"{n_applicable} applicable inequality checks, max symbolic-vs-FD {worst_fd:.2g}"
    if failures:
        detail += "; violated: " + "; ".join(failures)
    criterion(5, ok, detail)
    assert ok


# ---------------------------------------------------------------------------
# 6. KKT certificate
# ---------------------------------------------------------------------------


def test_criterion_6_kkt(criterion):
    p = ConstrainedProblem(parse("x1^2", 1), _map("sigma"), 1.0, ((parse("1-x1", 1), _map("sigma")),),
                           BoxDomain([1.0], [10.0]))
    rep = certify_kkt(p, KKTCertificate([1.0], [2.0]), SamplePlan(n_pairs=256))
    d = rep.details
    oracle_b = d["feasible_grid_oracle"]["b"][0]
    ok = (d["stationarity_residual"] <= KKT_RESIDUAL_TOL and max(d["complementarity_residuals"]) <= KKT_RESIDUAL_TOL
          and abs(oracle_b - 1.0) <= KKT_ORACLE_TOL)
    criterion(6, ok, f"stationarity {d['stationarity_residual']:.3g}, complementarity "
                     f"{max(d['complementarity_residuals']):.3g}, oracle argmin {oracle_b}, "
                     f"inequality part {d['part3_inequality']}")
    assert ok


# ---------------------------------------------------------------------------
# 7 and 8 use the CLI over every bundled fixture
# ---------------------------------------------------------------------------

CLI_SUITE = [
    ("check", "worked_example"), ("check", "square"), ("check", "neg_square"), ("check", "neg_log"),
    ("sets", "worked_example"), ("sets", "square"), ("sets", "sets_pair"), ("algebra", "algebra_sum"),
    ("gradineq", "worked_example_gradient"), ("gradineq", "negative_quadratic"),
    ("gradineq", "theorem5_counterexample"), ("certify-min", "worked_example"), ("certify-min", "square"),
    ("certify-min", "neg_square"), ("kkt", "kkt_square"), ("oracle-min", "worked_example"),
]


def _run_cli_suite():
    outputs = []
    for command, problem in CLI_SUITE:
        proc = subprocess.run([sys.executable, "-m", "gsconvex", command, problem, "--quiet"],
                              capture_output=True)
        outputs.append((command, problem, proc.returncode, proc.stdout))
    return outputs


@pytest.fixture(scope="module")
def cli_runs():
    return _run_cli_suite(), _run_cli_suite()


def _reports_in(obj):
    if isinstance(obj, dict):
        if "inequality" in obj and "witness" in obj and "verdict" in obj:
            yield CheckReport.from_dict(obj)
        for v in obj.values():
            yield from _reports_in(v)
    elif isinstance(obj, list):
        for v in obj:
            yield from _reports_in(v)


def _extra_refuted():
    pm5 = BoxDomain([-5.0], [5.0])
    plan = SamplePlan(n_pairs=128)
    zero2 = _map("0", kind=TWO_POINT)
    return [
        check_general_s_convex(parse("-x1^2", 1), None, pm5, plan),
        check_s_convex_second_sense(parse("-1", 1), pm5, plan.replace(s=0.5)),
        check_sub_b_convex(parse("-x1^2", 1), zero2, pm5, plan),
        check_sub_b_s_convex(parse("-x1^2", 1), zero2, pm5, plan.replace(s=0.5)),
        check_s_convex_second_sense(parse("2*x1+3", 1), pm5, plan, strict=True),
        check_convex(parse("max(x1, 0) - x1^2", 1), BoxDomain([-1.0, ], [1.0]), plan),
    ]


def _violation(rep):
    if rep.inequality.startswith("general_s_convex_set"):
        return set_witness_violation(rep)
    if rep.inequality in (
        "theorem4a", "theorem4b", "theorem5",
        "monotone_nonneg", "monotone_nonneg_alt", "monotone_negative",
    ):
        return grad_witness_violation(rep)
    return witness_violation(rep)


def test_criterion_7_witness_validity(criterion, cli_runs):
    corpus = list(REFUTED) + [r for r in _extra_refuted() if r.refuted]
    for _, _, _, out in cli_runs[0]:
        corpus += [r for r in _reports_in(json.loads(out)) if r.refuted]
    valid = 0
    for rep in corpus:
        v = _violation(rep)
        strict = bool(rep.witness.get("strict_sample"))
        valid += (v >= 0) if strict else (v > 0)
    ok = len(corpus) > 0 and valid == len(corpus)
    criterion(7, ok, f"{valid}/{len(corpus)} refuted witnesses re-violate under scalar re-evaluation")
    assert ok


def test_criterion_8_determinism(criterion, cli_runs):
    first, second = cli_runs
    identical = sum(a[3] == b[3] and a[2] == b[2] and len(a[3]) > 0 for a, b in zip(first, second))
    ok = identical == len(CLI_SUITE)
    criterion(8, ok, f"{identical}/{len(CLI_SUITE)} CLI reports byte-identical across two runs")
    assert ok
