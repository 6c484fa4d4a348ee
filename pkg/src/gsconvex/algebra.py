"""Constructors that combine certified general s-convex instances.

Each constructor returns ``(h, theta)``. Sums, nonnegative scalings and
weighted sums preserve the inequality pointwise because its right-hand side is
linear in ``(h, theta)``; max, sup and affine composition are only re-checked
empirically (see :func:`recertify`).
"""

from __future__ import annotations

from dataclasses import dataclass

from .defcheck import DEFAULT_RTOL, DEFAULT_TOL, CheckReport, ModifierMap, as_map, check_general_s_convex
from .expr import ZERO, Expr, add, mul, nary
from .sampling import BoxDomain, SamplePlan
from .sets import MixedModifierMaps


class MismatchedS(ValueError):
    pass


class MismatchedDomain(ValueError):
    pass


class NegativeAlpha(ValueError):
    pass


class DecreasingComposition(ValueError):
    pass


class EmptyList(ValueError):
    pass


class NotCertified(ValueError):
    pass


NOTES = {
    "sum": "the summed function is paired with theta1 + theta2: adding the two inequalities "
           "pointwise yields this map, not the shared map theta",
    "weighted_sum": "weights are applied index-wise, sum_k alpha_k h_k with map sum_k alpha_k theta_k",
    "max": "max-closure of the midpoint term is not pointwise-algebraic; verdict comes from a re-check",
    "composition": "a nonzero intercept enters the sigma^s terms asymmetrically; verdict comes from a re-check",
    "sup": "finite family only; verdict comes from a re-check",
}


@dataclass(frozen=True)
class CertifiedInstance:
    h: Expr
    theta: ModifierMap
    s: float
    domain: BoxDomain
    report: CheckReport

    @classmethod
    def certify(cls, h, theta, domain: BoxDomain, plan: SamplePlan, tol=DEFAULT_TOL, rtol=DEFAULT_RTOL):
        """Run the general s-convexity check and wrap the instance if it passes."""
        theta = as_map(theta)
        report = check_general_s_convex(h, theta, domain, plan, tol, rtol)
        if not report.certified:
            raise NotCertified(f"{h} is {report.verdict.value} w.r.t. {theta}")
        return cls(h, theta, plan.s, domain, report)


def _shared(instances):
    if not instances:
        raise EmptyList("need at least one instance")
    first = instances[0]
    for inst in instances[1:]:
        if inst.s != first.s:
            raise MismatchedS(f"s differs: {inst.s} vs {first.s}")
        if inst.domain != first.domain:
            raise MismatchedDomain("instances live on different domains")
    return first


def _scaled(alpha: float, e: Expr) -> Expr:
    if alpha == 1:
        return e
    return mul(alpha, e)


def combine_sum(a: CertifiedInstance, b: CertifiedInstance):
    _shared([a, b])
    return add(a.h, b.h), ModifierMap(add(a.theta.expr, b.theta.expr))


def combine_scale(a: CertifiedInstance, alpha: float):
    if alpha < 0:
        raise NegativeAlpha(f"alpha must be >= 0, got {alpha}")
    return _scaled(alpha, a.h), ModifierMap(_scaled(alpha, a.theta.expr))


def combine_weighted_sum(instances, alphas):
    instances, alphas = list(instances), [float(a) for a in alphas]
    if len(instances) != len(alphas):
        raise ValueError("instances and alphas must have equal length")
    _shared(instances)
    if any(a < 0 for a in alphas):
        raise NegativeAlpha("weights must be >= 0")
    h, theta = ZERO, ZERO
    for inst, alpha in zip(instances, alphas):
        h = add(h, _scaled(alpha, inst.h))
        theta = add(theta, _scaled(alpha, inst.theta.expr))
    return h, ModifierMap(theta)


def combine_max(instances):
    instances = list(instances)
    _shared(instances)
    return nary("max", [i.h for i in instances]), ModifierMap(nary("max", [i.theta.expr for i in instances]))


def combine_composition(a: CertifiedInstance, g_slope: float, g_intercept: float = 0.0):
    """Compose with the nondecreasing affine map ``t -> g_slope * t + g_intercept``."""
    if g_slope < 0:
        raise DecreasingComposition(f"slope must be >= 0, got {g_slope}")
    return (add(_scaled(g_slope, a.h), g_intercept),
            ModifierMap(add(_scaled(g_slope, a.theta.expr), g_intercept)))


def combine_sup(instances):
    instances = list(instances)
    first = _shared(instances)
    for inst in instances[1:]:
        if inst.theta.expr != first.theta.expr:
            raise MixedModifierMaps(f"maps differ: {inst.theta} vs {first.theta}")
    return nary("max", [i.h for i in instances]), first.theta


def recertify(h: Expr, theta, like: CertifiedInstance, plan: SamplePlan, tol=DEFAULT_TOL, rtol=DEFAULT_RTOL):
    """Check a constructed pair on the domain of ``like`` with the given plan."""
    if plan.s != like.s:
        raise MismatchedS(f"plan s={plan.s} but instance s={like.s}")
    return check_general_s_convex(h, theta, like.domain, plan, tol, rtol)
