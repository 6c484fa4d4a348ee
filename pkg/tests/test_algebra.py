import numpy as np
import pytest

from gsconvex.algebra import (
    NOTES,
    CertifiedInstance,
    DecreasingComposition,
    EmptyList,
    MismatchedDomain,
    MismatchedS,
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
from gsconvex.defcheck import ModifierMap, Verdict, general_margins
from gsconvex.expr import evaluate_many, parse
from gsconvex.sampling import BoxDomain, SamplePlan
from gsconvex.sets import MixedModifierMaps

PM5 = BoxDomain([-5.0], [5.0])
W_DOM = BoxDomain([1.0], [10.0])
PLAN = SamplePlan(n_pairs=96)
W_PLAN = PLAN.replace(s=0.5)
WORKED = "((x1-1)^2+(x1-1))^0.5"


def inst(h, theta="0", dom=PM5, plan=PLAN):
    return CertifiedInstance.certify(parse(h, 1), ModifierMap(parse(theta, 1)), dom, plan)


@pytest.fixture(scope="module")
def worked():
    return inst(WORKED, "sigma*(2*x1+6)", W_DOM, W_PLAN)


def _same_values(e1, e2, dom=PM5):
    pts = np.linspace(dom.lo[0], dom.hi[0], 41)[:, None]
    np.testing.assert_allclose(evaluate_many(e1, pts), evaluate_many(e2, pts), rtol=1e-14, atol=1e-14)


def _same_map(t1, t2, dom=PM5):
    pts = np.linspace(dom.lo[0], dom.hi[0], 41)[:, None]
    for sig in (0.0, 0.3, 1.0):
        np.testing.assert_allclose(t1.at(pts, np.full(41, sig)), t2.at(pts, np.full(41, sig)), rtol=1e-14,
                                   atol=1e-14)


def test_certify_rejects_uncertified():
    with pytest.raises(NotCertified):
        inst("-x1^2")


def test_sum_examples(worked):
    a = inst("x1^2", "sigma")
    h, theta = combine_sum(a, a)
    _same_values(h, parse("2*x1^2", 1))
    _same_map(theta, ModifierMap(parse("2*sigma", 1)))
    assert recertify(h, theta, a, PLAN).certified
    z = inst("0")
    h, theta = combine_sum(a, z)
    _same_values(h, a.h)
    _same_map(theta, a.theta)
    h, theta = combine_sum(worked, worked)
    assert recertify(h, theta, worked, W_PLAN).certified
    assert "theta1 + theta2" in NOTES["sum"]


def test_sum_mismatches(worked):
    a = inst("x1^2")
    with pytest.raises(MismatchedS):
        combine_sum(a, inst("x1^2", plan=PLAN.replace(s=0.5)))
    with pytest.raises(MismatchedDomain):
        combine_sum(a, inst("x1^2", dom=BoxDomain([-1.0], [1.0])))


def test_scale_examples(worked):
    h, theta = combine_scale(worked, 0.0)
    _same_values(h, parse("0", 1), W_DOM)
    assert recertify(h, theta, worked, W_PLAN).certified
    h, theta = combine_scale(worked, 1.0)
    assert h == worked.h and theta == worked.theta
    h, theta = combine_scale(worked, 2.5)
    assert recertify(h, theta, worked, W_PLAN).certified
    with pytest.raises(NegativeAlpha):
        combine_scale(worked, -1.0)


def test_scale_margins_are_homogeneous(worked):
    _, _, _, base = general_margins(worked.h, worked.theta, W_DOM, W_PLAN)
    h, theta = combine_scale(worked, 2.5)
    _, _, _, scaled = general_margins(h, theta, W_DOM, W_PLAN)
    assert np.all(np.abs(scaled - 2.5 * base) <= 1e-9 * np.maximum(1.0, np.abs(2.5 * base)))


def test_weighted_sum_examples():
    a = inst("x1^2", "sigma")
    h, theta = combine_weighted_sum([a], [1.0])
    _same_values(h, a.h)
    hs, ts = combine_sum(a, a)
    hw, tw = combine_weighted_sum([a, a], [1.0, 1.0])
    _same_values(hs, hw)
    _same_map(ts, tw)
    qs = [inst("(x1-1)^2"), inst("2*x1^2+x1"), inst("0.5*(x1+2)^2")]
    h, theta = combine_weighted_sum(qs, [1, 2, 3])
    assert recertify(h, theta, qs[0], PLAN).certified
    with pytest.raises(ValueError):
        combine_weighted_sum(qs, [1, 2])
    with pytest.raises(NegativeAlpha):
        combine_weighted_sum(qs, [1, -2, 3])
    with pytest.raises(EmptyList):
        combine_weighted_sum([], [])


def test_max_examples(worked):
    a = inst("x1^2")
    h, theta = combine_max([a])
    _same_values(h, a.h)
    h, theta = combine_max([a, inst("(x1-1)^2")])
    assert recertify(h, theta, a, PLAN).certified
    lin = inst("x1-1", "sigma*(2*x1+6)", W_DOM, W_PLAN)
    h, theta = combine_max([worked, lin])
    rep = recertify(h, theta, worked, W_PLAN)
    assert rep.verdict is Verdict.CERTIFIED_ON_SAMPLES
    with pytest.raises(EmptyList):
        combine_max([])


def test_composition_examples(worked):
    a = inst("x1^2", "sigma")
    h, theta = combine_composition(a, 1.0)
    assert h == a.h and theta == a.theta
    h, theta = combine_composition(a, 3.0)
    assert recertify(h, theta, a, PLAN).certified
    h, theta = combine_composition(worked, 1.0, 5.0)
    rep = recertify(h, theta, worked, W_PLAN)
    assert rep.verdict in (Verdict.CERTIFIED_ON_SAMPLES, Verdict.REFUTED)
    with pytest.raises(DecreasingComposition):
        combine_composition(a, -1.0)


def test_sup_examples():
    a = inst("x1^2")
    h, theta = combine_sup([a])
    _same_values(h, a.h)
    h, theta = combine_sup([a, inst("2*x1^2")])
    _same_values(h, parse("2*x1^2", 1))
    assert recertify(h, theta, a, PLAN).certified
    fam = [inst(f, "sigma") for f in ("x1^2", "abs(x1)", "exp(x1/5)")]
    h, theta = combine_sup(fam)
    assert recertify(h, theta, fam[0], PLAN).verdict is Verdict.CERTIFIED_ON_SAMPLES
    with pytest.raises(MixedModifierMaps):
        combine_sup([a, inst("x1^2", "sigma")])


def test_recertify_rejects_other_s(worked):
    with pytest.raises(MismatchedS):
        recertify(worked.h, worked.theta, worked, PLAN)
