import math

import numpy as np
import pytest

from gsconvex.defcheck import (
    TWO_POINT,
    ModifierMap,
    Verdict,
    check_convex,
    check_general_s_convex,
    check_s_convex_second_sense,
    check_sub_b_convex,
    check_sub_b_s_convex,
    general_margins,
    lift_with_s,
    reduce_margins,
    witness_violation,
)
from gsconvex.expr import parse
from gsconvex.sampling import BoxDomain, EmptyDomain, SamplePlan

WORKED_H = "((x1-1)^2+(x1-1))^0.5"
WORKED_T = "sigma*(2*x1+6)"
PM5 = BoxDomain([-5.0], [5.0])


def _m(text, kind="one-point", m=1):
    return ModifierMap(parse(text, m if kind == "one-point" else 2 * m), kind)


def test_worked_example_certified():
    rep = check_general_s_convex(parse(WORKED_H, 1), _m(WORKED_T), BoxDomain([1.0], [math.inf]), SamplePlan(s=0.5))
    assert rep.verdict is Verdict.CERTIFIED_ON_SAMPLES
    assert rep.worst_margin >= -1e-9
    assert rep.n_domain_errors == 0
    assert rep.n_evaluated == 512 * 23
    assert rep.config["truncation_applied"] is True
    assert rep.to_dict()["evidence"] == "sampled points only, not a proof"


def test_square_certified_and_negative_square_refuted():
    plan = SamplePlan(n_pairs=128)
    assert check_general_s_convex(parse("x1^2", 1), None, PM5, plan).certified
    rep = check_general_s_convex(parse("-x1^2", 1), None, PM5, plan)
    assert rep.refuted
    assert rep.worst_margin < -1e-9
    assert witness_violation(rep) > 0
    w = rep.witness
    assert (w["b1"], w["b2"], w["sigma"]) == ([-5.0], [5.0], 0.5)
    assert w["margin"] == -25.0


def test_negative_square_hand_witness():
    from gsconvex.defcheck import scalar_sides

    lhs, rhs = scalar_sides("general_s_convex", parse("-x1^2", 1), _m("0"), 1.0, [-1.0], [1.0], 0.5)
    assert lhs == 0.0 and rhs == -1.0


def test_second_sense_examples():
    plan = SamplePlan(n_pairs=64)
    assert check_s_convex_second_sense(parse("x1^2", 1), PM5, plan.replace(s=1.0)).certified
    rep = check_s_convex_second_sense(parse("-1", 1), PM5, plan.replace(s=0.5))
    assert rep.refuted and witness_violation(rep) > 0
    from gsconvex.defcheck import scalar_sides

    lhs, rhs = scalar_sides("s_convex_second_sense", parse("-1", 1), None, 0.5, [0.0], [1.0], 0.5)
    assert lhs == -1.0 and math.isclose(rhs, -math.sqrt(2), rel_tol=1e-15)


def test_sub_b_examples():
    plan = SamplePlan(n_pairs=128)
    assert check_sub_b_convex(parse("x1^2", 1), _m("0", TWO_POINT), PM5, plan).certified
    gap = _m("sigma*(1-sigma)*(x1-x2)^2", TWO_POINT)
    assert check_sub_b_convex(parse("-x1^2", 1), gap, PM5, plan).certified
    rep = check_sub_b_convex(parse("-x1^2", 1), _m("0", TWO_POINT), PM5, plan)
    assert rep.refuted and witness_violation(rep) > 0


def test_sub_b_s_examples():
    plan = SamplePlan(n_pairs=128, s=0.5)
    zero = _m("0", TWO_POINT)
    h = parse("x1^2 + 1", 1)
    assert check_s_convex_second_sense(h, PM5, plan).certified
    assert check_sub_b_s_convex(h, zero, PM5, plan).certified
    lifted = lift_with_s(_m(WORKED_T), 1, 0.5)
    dom = BoxDomain([1.0], [10.0])
    assert check_sub_b_s_convex(parse(WORKED_H, 1), lifted, dom, plan).certified
    rep = check_sub_b_s_convex(parse("-x1^2", 1), zero, PM5, plan)
    assert rep.refuted and witness_violation(rep) > 0


def test_lifted_map_reproduces_general_rhs():
    plan = SamplePlan(n_pairs=64, s=0.5)
    dom = BoxDomain([1.0], [10.0])
    h = parse(WORKED_H, 1)
    a = check_general_s_convex(h, _m(WORKED_T), dom, plan)
    b = check_sub_b_s_convex(h, lift_with_s(_m(WORKED_T), 1, 0.5), dom, plan)
    assert a.verdict == b.verdict
    assert math.isclose(a.worst_margin, b.worst_margin, abs_tol=1e-12)


def test_domain_errors_give_inconclusive():
    rep = check_general_s_convex(parse(WORKED_H, 1), _m(WORKED_T), BoxDomain([0.5], [10.0]), SamplePlan(n_pairs=64))
    assert rep.n_domain_errors > 0
    assert rep.verdict in (Verdict.INCONCLUSIVE, Verdict.REFUTED)
    rep = check_convex(parse("-log(x1)", 1), BoxDomain([0.0], [1.0]), SamplePlan(n_pairs=64))
    assert rep.verdict is Verdict.INCONCLUSIVE and rep.n_domain_errors > 0


def test_arity_mismatch():
    with pytest.raises(ValueError):
        check_convex(parse("x1 + x2", 2), PM5, SamplePlan(n_pairs=4))


def test_empty_domain_propagates():
    with pytest.raises(EmptyDomain):
        check_convex(parse("x1", 1), BoxDomain([1.0], [0.0]), SamplePlan(n_pairs=4))


def test_strict_mode():
    plan = SamplePlan(n_pairs=64, s=0.5)
    h = parse("x1^2 + 1", 1)
    assert check_s_convex_second_sense(h, PM5, plan, strict=True).certified
    # affine functions are only non-strictly convex
    rep = check_s_convex_second_sense(parse("2*x1 + 3", 1), PM5, SamplePlan(n_pairs=64), strict=True)
    assert rep.refuted and rep.witness["strict_sample"]
    assert witness_violation(rep) >= 0
    assert check_s_convex_second_sense(parse("2*x1 + 3", 1), PM5, SamplePlan(n_pairs=64)).certified


def test_monotone_slack():
    h = parse("-x1^2", 1)
    dom = BoxDomain([-0.01], [0.01])
    plan = SamplePlan(n_pairs=64)
    worst = check_convex(h, dom, plan).worst_margin
    verdicts = [check_convex(h, dom, plan, tol=t, rtol=0).verdict for t in (1e-9, 1e-6, 1e-4, 1e-3, 1.0)]
    passed = [v is Verdict.CERTIFIED_ON_SAMPLES for v in verdicts]
    assert passed == sorted(passed)
    assert passed[-1] and not passed[0]
    assert worst < 0


def test_reduction_is_order_independent():
    rng = np.random.default_rng(5)
    n = 500
    keys = rng.integers(0, 5, (n, 3)).astype(float)
    margin = rng.choice([-1.0, 0.0, 2.0, np.nan], n)
    thr = np.full(n, 1e-9)
    ref = reduce_margins(margin, thr, keys)
    for _ in range(10):
        perm = rng.permutation(n)
        out = reduce_margins(margin[perm], thr[perm], keys[perm])
        assert out[0] == ref[0] and out[1] == ref[1] and out[3:] == ref[3:]
        assert keys[perm][out[2]].tolist() == keys[ref[2]].tolist()


def test_general_margins_match_report():
    plan = SamplePlan(n_pairs=32, s=0.5)
    h = parse(WORKED_H, 1)
    dom = BoxDomain([1.0], [10.0])
    B1, B2, S, margin = general_margins(h, _m(WORKED_T), dom, plan)
    rep = check_general_s_convex(h, _m(WORKED_T), dom, plan)
    assert len(margin) == rep.n_evaluated
    assert margin.min() == rep.worst_margin


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_remark_reduction_chain(seed):
    rng = np.random.default_rng(seed)
    a, b, c = rng.normal(size=3)
    h = parse(f"({a:.6f})*x1^2 + ({b:.6f})*x1 + ({c:.6f})", 1)
    plan = SamplePlan(n_pairs=64, s=1.0)
    g = check_general_s_convex(h, None, PM5, plan)
    assert g.verdict == check_s_convex_second_sense(h, PM5, plan).verdict == check_convex(h, PM5, plan).verdict
