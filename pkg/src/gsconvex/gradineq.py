"""Differentiable characterisations: the sigma -> 0+ limit of theta/sigma and
the gradient inequalities that follow from general s-convexity.

Every inequality is evaluated at sampled ``(b1, b2)`` and at sigma in the
plan's grid restricted to ``(0, 1]``. Hypotheses (``h >= 0``, ``theta <= 0``,
``h < 0``) are recorded as flags on the same samples before the margins are
interpreted; an inequality whose hypotheses fail is still evaluated but does
not count toward the verdict.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .defcheck import (
    CheckReport,
    Verdict,
    as_map,
    check_general_s_convex,
    ModifierMap,
    midpoint,
    reduce_margins,
    _keys,
    _vec,
)
from .expr import (
    NonDifferentiable,
    differentiate,
    evaluate,
    evaluate_many,
    fd_gradient,
    gradient_many,
    parse,
    to_string,
)
from .sampling import BoxDomain, SamplePlan, expand, sample_pairs

LIMIT_STEPS = 40
CAUCHY_RTOL = 1e-8
DIVERGENCE_BOUND = 1e12

GRAD_TOL = 1e-7
GRAD_RTOL = 1e-9


class HypothesisViolated(UserWarning):
    pass


@dataclass
class LimitEstimate:
    value: float | None
    sequence: list
    converged_at: int | None

    @property
    def divergent(self) -> bool:
        return self.value is None

    def to_dict(self):
        return {"value": "DIVERGENT" if self.value is None else self.value, "converged_at": self.converged_at}


def _sequences(theta, points: np.ndarray, k_max: int) -> np.ndarray:
    sig = 2.0 ** -np.arange(1, k_max + 1)
    n = len(points)
    P = np.repeat(points, k_max, axis=0)
    S = np.tile(sig, n)
    return (theta.at(P, S) / S).reshape(n, k_max)


def _classify(seq: np.ndarray):
    """Return ``(values, converged_at)``; divergent rows get ``nan`` and ``-1``."""
    n, k_max = seq.shape
    finite = np.all(np.isfinite(seq), axis=1) & np.all(np.abs(seq) <= DIVERGENCE_BOUND, axis=1)
    step_ok = np.abs(np.diff(seq, axis=1)) <= CAUCHY_RTOL * np.maximum(1.0, np.abs(seq[:, 1:]))
    ok = finite & step_ok[:, -1]
    values = np.where(ok, seq[:, -1], np.nan)
    # converged_at: first k from which every later step passes the Cauchy test
    tail_ok = np.flip(np.cumprod(np.flip(step_ok, axis=1), axis=1), axis=1).astype(bool)
    first = np.where(tail_ok.any(axis=1), np.argmax(tail_ok, axis=1) + 2, -1)
    return values, np.where(ok, first, -1)


def limit_many(theta, points, k_max=LIMIT_STEPS) -> np.ndarray:
    """lim theta(b, sigma)/sigma at each row of ``points``; ``nan`` where divergent."""
    theta = as_map(theta)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    values, _ = _classify(_sequences(theta, points, k_max))
    return values


def limit_theta_over_sigma(theta, b, k_max=LIMIT_STEPS) -> LimitEstimate:
    """Estimate lim_{sigma->0+} theta(b, sigma)/sigma along sigma_k = 2^-k.

    The estimate is the last term once consecutive terms agree to
    ``1e-8 * max(1, |term|)``; otherwise, or if a term exceeds ``1e12`` in
    magnitude, the limit is reported DIVERGENT (``value is None``).
    """
    theta = as_map(theta)
    seq = _sequences(theta, np.atleast_2d(np.asarray(b, dtype=float)), k_max)
    values, conv = _classify(seq)
    value = None if np.isnan(values[0]) else float(values[0])
    return LimitEstimate(value, [float(v) for v in seq[0]], None if conv[0] < 0 else int(conv[0]))


@dataclass
class GradIneqReport:
    theorem: str
    inequalities: dict
    hypotheses: dict
    applicable: dict
    instance: CheckReport | None = None
    gradient: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def verdict(self) -> Verdict:
        used = [self.inequalities[k] for k, on in self.applicable.items() if on]
        if not used:
            return Verdict.INCONCLUSIVE
        if any(r.refuted for r in used):
            return Verdict.REFUTED
        if any(r.verdict is Verdict.INCONCLUSIVE for r in used):
            return Verdict.INCONCLUSIVE
        return Verdict.CERTIFIED_ON_SAMPLES

    def margins_hold(self, names=None) -> bool:
        names = self.inequalities if names is None else names
        return all(not self.inequalities[n].refuted for n in names)

    def to_dict(self):
        return {
            "theorem": self.theorem,
            "verdict": self.verdict.value,
            "hypotheses": self.hypotheses,
            "applicable": self.applicable,
            "instance_check": None if self.instance is None else self.instance.to_dict(),
            "gradient": self.gradient,
            "inequalities": {k: v.to_dict() for k, v in sorted(self.inequalities.items())},
            "config": self.config,
            "notes": list(self.notes),
        }


class _Samples:
    """All per-sample quantities shared by the gradient inequalities."""

    def __init__(self, h, theta, d: BoxDomain, plan: SamplePlan):
        d.validate()
        self.h, self.theta, self.s = h, theta, plan.s
        b1, b2 = sample_pairs(d, plan)
        m = d.dim
        g1, fd1 = gradient_many(h, b1, m)
        g2, fd2 = gradient_many(h, b2, m)
        self.used_fd = fd1 or fd2
        limit = limit_many(theta, midpoint(b1, b2))
        sig = plan.interior_sigmas
        k = len(sig)
        self.B1, self.B2, self.S = expand(b1, b2, sig)
        self.G1, self.G2 = np.repeat(g1, k, axis=0), np.repeat(g2, k, axis=0)
        self.L = np.repeat(limit, k)
        self.h1, self.h2 = evaluate_many(h, self.B1), evaluate_many(h, self.B2)
        self.t1, self.t2 = theta.at(self.B1, self.S), theta.at(self.B2, self.S)
        self.tm = theta.at(midpoint(self.B1, self.B2), self.S)
        self.keys = _keys(self.B1, self.B2, self.S)
        self.n_divergent_limits = int(np.isnan(limit).sum())

        fd2_vals = fd_gradient(h, b2)
        fd1_vals = fd_gradient(h, b1)
        sym = np.vstack([g1, g2])
        fd = np.vstack([fd1_vals, fd2_vals])
        ok = np.isfinite(sym) & np.isfinite(fd)
        rel = np.abs(sym - fd) / np.maximum(1.0, np.abs(sym))
        self.gradient_info = {
            "finite_difference_fallback": bool(self.used_fd),
            "max_relative_symbolic_vs_fd": float(rel[ok].max()) if ok.any() else None,
            "n_singular": int((~np.isfinite(sym)).any(axis=1).sum()),
        }

    def hypotheses(self, tol):
        hv = np.concatenate([self.h1, self.h2])
        tv = np.concatenate([self.t1, self.t2, self.tm])
        hv, tv = hv[np.isfinite(hv)], tv[np.isfinite(tv)]
        return {
            "h_nonnegative": bool(np.all(hv >= -tol)),
            "h_negative": bool(np.all(hv < 0)),
            "theta_nonpositive": bool(np.all(tv <= tol)),
        }

    def report(self, name, lhs, rhs, tol, rtol, config):
        margin = rhs - lhs
        thr = tol + rtol * np.abs(rhs)
        verdict, worst, idx, n_ok, n_err = reduce_margins(margin, thr, self.keys)
        witness = None
        if idx is not None:
            witness = {
                "b1": _vec(self.B1[idx]),
                "b2": _vec(self.B2[idx]),
                "sigma": float(self.S[idx]),
                "lhs": float(lhs[idx]),
                "rhs": float(rhs[idx]),
                "margin": float(margin[idx]),
            }
        return CheckReport(name, verdict, worst, witness, n_ok, n_err, config)


def _config(h, theta, d, plan, tol, rtol):
    return {
        "h": to_string(h),
        "map": to_string(theta.expr),
        "s": plan.s,
        "tol": tol,
        "rtol": rtol,
        "domain": d.to_dict(),
        "truncation_applied": d.is_truncated,
        "plan": plan.to_dict(),
        "sigma_range": "(0, 1]",
    }


def _directional(G, B1, B2):
    return np.sum(G * (B1 - B2), axis=1)


def verify_theorem4(h, theta, d: BoxDomain, plan: SamplePlan, tol=GRAD_TOL, rtol=GRAD_RTOL) -> GradIneqReport:
    """Parts (a) and (b) of the gradient bounds for nonnegative general s-convex ``h``."""
    theta = as_map(theta)
    x = _Samples(h, theta, d, plan)
    cfg = _config(h, theta, d, plan, tol, rtol)
    w = np.power(x.S, plan.s - 1.0)
    lhs = _directional(x.G2, x.B1, x.B2)
    rhs_a = w * (x.h1 + x.h2 + x.t1 + x.t2) + x.L
    rhs_b = w * (x.h1 - x.h2 + x.t1 - x.t2) + x.h2 / x.S + x.t2 / x.S + x.L
    hyp = x.hypotheses(tol)
    instance = check_general_s_convex(h, theta, d, plan)
    hyp["instance_certified"] = instance.certified
    ok = hyp["h_nonnegative"] and instance.certified
    ineq = {
        "theorem4a": x.report("theorem4a", lhs, rhs_a, tol, rtol, cfg),
        "theorem4b": x.report("theorem4b", lhs, rhs_b, tol, rtol, cfg),
    }
    rep = GradIneqReport("theorem4", ineq, hyp, {"theorem4a": ok, "theorem4b": ok}, instance, x.gradient_info, cfg)
    if x.n_divergent_limits:
        rep.notes.append(f"{x.n_divergent_limits} pairs with a divergent limit; their samples are inconclusive")
    return rep


def verify_theorem5(h, theta, d: BoxDomain, plan: SamplePlan, tol=GRAD_TOL, rtol=GRAD_RTOL) -> GradIneqReport:
    """Gradient bound for nonnegative ``h`` with a nonpositive map."""
    theta = as_map(theta)
    x = _Samples(h, theta, d, plan)
    cfg = _config(h, theta, d, plan, tol, rtol)
    w = np.power(x.S, plan.s - 1.0)
    lhs = _directional(x.G2, x.B1, x.B2)
    rhs = w * (x.h1 - x.h2 + x.t1 - x.t2) + x.L
    hyp = x.hypotheses(tol)
    instance = check_general_s_convex(h, theta, d, plan)
    hyp["instance_certified"] = instance.certified
    ok = hyp["h_nonnegative"] and hyp["theta_nonpositive"] and instance.certified
    rep = GradIneqReport("theorem5", {"theorem5": x.report("theorem5", lhs, rhs, tol, rtol, cfg)}, hyp,
                         {"theorem5": ok}, instance, x.gradient_info, cfg)
    if not hyp["theta_nonpositive"]:
        rep.notes.append("hypothesis violated: theta > 0 at some sample")
    return rep


def verify_corollary2(h, theta, d: BoxDomain, plan: SamplePlan, tol=GRAD_TOL, rtol=GRAD_RTOL) -> GradIneqReport:
    """Gradient-monotonicity bounds for nonnegative ``h`` and for negative ``h``.

    The nonnegative bound as written repeats ``theta(b2, sigma)/sigma``;
    ``monotone_nonneg_alt`` reads the second copy as ``theta(b1, sigma)/sigma``.
    Both are reported.
    """
    theta = as_map(theta)
    x = _Samples(h, theta, d, plan)
    cfg = _config(h, theta, d, plan, tol, rtol)
    lhs = np.sum((x.G2 - x.G1) * (x.B1 - x.B2), axis=1)
    base = x.h1 / x.S + x.h2 / x.S + x.t2 / x.S
    rhs_nonneg = base + x.t2 / x.S + 2 * x.L
    rhs_nonneg_alt = base + x.t1 / x.S + 2 * x.L
    rhs_negative = 2 * x.L
    hyp = x.hypotheses(tol)
    instance = check_general_s_convex(h, theta, d, plan)
    hyp["instance_certified"] = instance.certified
    ok_nonneg = hyp["h_nonnegative"] and instance.certified
    ok_negative = hyp["h_negative"] and hyp["theta_nonpositive"] and instance.certified
    ineq = {
        "monotone_nonneg": x.report("monotone_nonneg", lhs, rhs_nonneg, tol, rtol, cfg),
        "monotone_nonneg_alt": x.report("monotone_nonneg_alt", lhs, rhs_nonneg_alt, tol, rtol, cfg),
        "monotone_negative": x.report("monotone_negative", lhs, rhs_negative, tol, rtol, cfg),
    }
    applicable = {"monotone_nonneg": ok_nonneg, "monotone_nonneg_alt": ok_nonneg, "monotone_negative": ok_negative}
    return GradIneqReport("corollary2", ineq, hyp, applicable, instance, x.gradient_info, cfg)


def _scalar_gradient(h, b, m):
    try:
        return np.array([evaluate(differentiate(h, i), b) for i in range(m)])
    except NonDifferentiable:
        return fd_gradient(h, b[None, :])[0]


def witness_violation(report: CheckReport) -> float:
    """Re-evaluate a gradient-inequality witness with the scalar evaluator.

    Gradients are recomputed from the echoed expression and the limit term
    from a fresh dyadic sequence. Positive return means violated beyond
    tolerance.
    """
    cfg, w = report.config, report.witness
    m = len(cfg["domain"]["lo"])
    h = parse(cfg["h"], m)
    theta = ModifierMap(parse(cfg["map"], m))
    s = cfg["s"]
    b1, b2 = np.asarray(w["b1"], dtype=float), np.asarray(w["b2"], dtype=float)
    sig = float(w["sigma"])
    g1, g2 = _scalar_gradient(h, b1, m), _scalar_gradient(h, b2, m)
    lim = limit_theta_over_sigma(theta, 0.5 * (b1 + b2)).value
    if lim is None:
        raise ArithmeticError("limit diverges at the witness midpoint")
    h1, h2 = evaluate(h, b1), evaluate(h, b2)
    t1, t2 = evaluate(theta.expr, b1, sig), evaluate(theta.expr, b2, sig)
    wt = sig ** (s - 1.0)
    name = report.inequality
    if name in ("monotone_nonneg", "monotone_nonneg_alt", "monotone_negative"):
        lhs = float(np.dot(g2 - g1, b1 - b2))
        if name == "monotone_negative":
            rhs = 2 * lim
        else:
            rhs = h1 / sig + h2 / sig + t2 / sig + (t2 if name == "monotone_nonneg" else t1) / sig + 2 * lim
    else:
        lhs = float(np.dot(g2, b1 - b2))
        if name == "theorem4a":
            rhs = wt * (h1 + h2 + t1 + t2) + lim
        elif name == "theorem4b":
            rhs = wt * (h1 - h2 + t1 - t2) + h2 / sig + t2 / sig + lim
        else:
            rhs = wt * (h1 - h2 + t1 - t2) + lim
    margin = rhs - lhs
    return -margin - (cfg["tol"] + cfg["rtol"] * abs(rhs))
