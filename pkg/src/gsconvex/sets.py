"""General s-convex sets represented as epigraphs and their finite intersections."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .defcheck import (
    DEFAULT_RTOL,
    DEFAULT_TOL,
    CheckReport,
    ModifierMap,
    as_map,
    check_general_s_convex,
    convex_point,
    midpoint,
    reduce_margins,
    _keys,
    _scalar_mid,
    _scalar_point,
    _vec,
)
from .expr import Expr, evaluate, evaluate_many, parse, to_string
from .sampling import BoxDomain, SamplePlan, expand, sample_pairs


class MixedModifierMaps(ValueError):
    pass


@dataclass(frozen=True)
class GeneralSConvexSetSpec:
    """Intersection of the epigraphs of ``functions`` tested against ``theta``.

    A single function gives its epigraph E(h) = {(b, beta): h(b) <= beta}.
    """

    functions: tuple
    theta: ModifierMap
    s: float

    def __post_init__(self):
        fs = (self.functions,) if isinstance(self.functions, Expr) else tuple(self.functions)
        if not fs:
            raise ValueError("a set needs at least one function")
        object.__setattr__(self, "functions", fs)
        object.__setattr__(self, "theta", as_map(self.theta))

    @classmethod
    def epigraph(cls, h: Expr, theta=None, s: float = 1.0):
        return cls((h,), as_map(theta), s)

    def level(self, b) -> np.ndarray:
        """Smallest beta with (b, beta) in the set."""
        return np.max(np.stack([evaluate_many(f, b) for f in self.functions]), axis=0)

    def contains(self, b, beta, tol=DEFAULT_TOL) -> np.ndarray:
        return self.level(b) <= np.asarray(beta) + tol


def _combined_level(spec, alpha, beta, b1, b2, sigma):
    theta = spec.theta
    ws, wt = np.power(sigma, spec.s), np.power(1.0 - sigma, spec.s)
    return (ws * (alpha + theta.at(b1, sigma)) + wt * (beta + theta.at(b2, sigma))
            + theta.at(midpoint(b1, b2), sigma))


def set_check(spec: GeneralSConvexSetSpec, d: BoxDomain, plan: SamplePlan, beta_offsets=(0.0, 1.0),
              tol=DEFAULT_TOL, rtol=DEFAULT_RTOL) -> CheckReport:
    """Sampled check that the set is closed under the general s-convex combination.

    Sample points of the set are ``(b, level(b) + offset)`` for every offset;
    each ordered pair of such points and every sigma in the grid is combined
    and tested for membership.
    """
    offsets = [float(o) for o in beta_offsets]
    if not offsets:
        raise ValueError("beta_offsets must be nonempty")
    if any(o < 0 for o in offsets):
        raise ValueError("beta_offsets must be >= 0")
    d.validate()
    b1, b2 = sample_pairs(d, plan)
    B1, B2, S = expand(b1, b2, plan.sigma_grid)
    lvl1, lvl2 = spec.level(B1), spec.level(B2)
    point = convex_point(B1, B2, S)
    lvl_point = spec.level(point)

    margins, thrs, keys, meta = [], [], [], []
    for o1 in offsets:
        for o2 in offsets:
            gamma = _combined_level(spec, lvl1 + o1, lvl2 + o2, B1, B2, S)
            margins.append(gamma - lvl_point)
            thrs.append(tol + rtol * np.abs(gamma))
            n = len(S)
            keys.append(_keys(B1, B2, S, np.full(n, o1), np.full(n, o2)))
            meta.append((o1, o2, gamma))
    margin = np.concatenate(margins)
    thr = np.concatenate(thrs)
    verdict, worst, idx, n_ok, n_err = reduce_margins(margin, thr, np.vstack(keys))
    witness = None
    if idx is not None:
        block, j = divmod(idx, len(S))
        o1, o2, gamma = meta[block]
        witness = {
            "b1": _vec(B1[j]),
            "b2": _vec(B2[j]),
            "sigma": float(S[j]),
            "alpha": float(lvl1[j] + o1),
            "beta": float(lvl2[j] + o2),
            "alpha_offset": o1,
            "beta_offset": o2,
            "combined_level": float(gamma[j]),
            "level_at_point": float(lvl_point[j]),
            "margin": float(margin[idx]),
        }
    config = {
        "functions": [to_string(f) for f in spec.functions],
        "map": to_string(spec.theta.expr),
        "s": spec.s,
        "beta_offsets": offsets,
        "tol": tol,
        "rtol": rtol,
        "domain": d.to_dict(),
        "truncation_applied": d.is_truncated,
        "plan": plan.to_dict(),
    }
    name = "general_s_convex_set" if len(spec.functions) == 1 else "general_s_convex_set_intersection"
    return CheckReport(name, verdict, worst, witness, n_ok, n_err, config)


def set_witness_violation(report: CheckReport) -> float:
    """Scalar re-evaluation of a set-check witness; positive means violated beyond tolerance."""
    cfg = report.config
    m = len(cfg["domain"]["lo"])
    fs = [parse(f, m) for f in cfg["functions"]]
    theta = parse(cfg["map"], m)
    s = cfg["s"]
    w = report.witness
    b1, b2, sig = np.array(w["b1"]), np.array(w["b2"]), float(w["sigma"])
    alpha = max(evaluate(f, b1) for f in fs) + w["alpha_offset"]
    beta = max(evaluate(f, b2) for f in fs) + w["beta_offset"]
    gamma = (sig**s * (alpha + evaluate(theta, b1, sig)) + (1 - sig) ** s * (beta + evaluate(theta, b2, sig))
             + evaluate(theta, _scalar_mid(b1, b2), sig))
    level = max(evaluate(f, _scalar_point(b1, b2, sig)) for f in fs)
    return (level - gamma) - (cfg["tol"] + cfg["rtol"] * abs(gamma))


def epigraph_equivalence(h: Expr, theta, d: BoxDomain, plan: SamplePlan, tol=DEFAULT_TOL, rtol=DEFAULT_RTOL,
                         beta_offsets=(0.0, 1.0)):
    """Run the function-level and the epigraph-level checks on the same plan.

    Returns ``(function_report, set_report, agree)``; disagreement is a finding,
    not an error.
    """
    theta = as_map(theta)
    fn = check_general_s_convex(h, theta, d, plan, tol, rtol)
    st = set_check(GeneralSConvexSetSpec((h,), theta, plan.s), d, plan, beta_offsets, tol, rtol)
    return fn, st, fn.verdict == st.verdict


def intersect(specs) -> GeneralSConvexSetSpec:
    specs = list(specs)
    if not specs:
        raise ValueError("need at least one set")
    first = specs[0]
    for sp in specs[1:]:
        if sp.theta != first.theta:
            raise MixedModifierMaps(f"maps differ: {sp.theta} vs {first.theta}")
        if sp.s != first.s:
            raise MixedModifierMaps(f"exponents differ: {sp.s} vs {first.s}")
    functions = tuple(f for sp in specs for f in sp.functions)
    return GeneralSConvexSetSpec(functions, first.theta, first.s)


def intersect_check(specs, d: BoxDomain, plan: SamplePlan, beta_offsets=(0.0, 1.0), tol=DEFAULT_TOL,
                    rtol=DEFAULT_RTOL) -> CheckReport:
    return set_check(intersect(specs), d, plan, beta_offsets, tol, rtol)
