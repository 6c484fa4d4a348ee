"""Sufficient optimality conditions and the brute-force minimisation oracle."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .defcheck import (
    DEFAULT_RTOL,
    DEFAULT_TOL,
    ModifierMap,
    Verdict,
    as_map,
    check_general_s_convex,
    midpoint,
    reduce_margins,
    _keys,
    _vec,
)
from .expr import Expr, evaluate, evaluate_many, gradient_many, to_string
from .gradineq import limit_many
from .sampling import BoxDomain, SamplePlan, sample_points

CERTIFIED = "CERTIFIED"
NOT_CERTIFIED = "NOT_CERTIFIED"
SINGULAR_STEP = 1e-6


class SingularGradient(ArithmeticError):
    pass


class DivergentLimit(ArithmeticError):
    pass


class Infeasible(ValueError):
    pass


class NegativeMultiplier(ValueError):
    pass


@dataclass(frozen=True)
class UnconstrainedProblem:
    h: Expr
    theta: ModifierMap
    s: float
    domain: BoxDomain


@dataclass(frozen=True)
class ConstrainedProblem:
    h: Expr
    theta: ModifierMap
    s: float
    constraints: tuple  # of (f_i, theta_i)
    domain: BoxDomain


@dataclass(frozen=True)
class KKTCertificate:
    b_star: tuple
    multipliers: tuple

    def __post_init__(self):
        object.__setattr__(self, "b_star", tuple(float(v) for v in np.atleast_1d(self.b_star)))
        object.__setattr__(self, "multipliers", tuple(float(v) for v in self.multipliers))


@dataclass
class CertificationReport:
    kind: str
    verdict: str
    worst_margin: float | None
    witness: dict | None
    n_evaluated: int = 0
    n_domain_errors: int = 0
    flags: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def certified(self):
        return self.verdict == CERTIFIED

    def to_dict(self):
        return {
            "kind": self.kind,
            "verdict": self.verdict,
            "evidence": "sampled points only, not a proof",
            "worst_margin": self.worst_margin,
            "witness": self.witness,
            "n_evaluated": self.n_evaluated,
            "n_domain_errors": self.n_domain_errors,
            "flags": self.flags,
            "details": self.details,
            "config": self.config,
            "notes": list(self.notes),
        }


def _grid_axes(lo, hi, n):
    return [np.linspace(a, b, n) if b > a else np.array([a]) for a, b in zip(lo, hi)]


def _grid_argmin(h, axes):
    pts = np.array(list(itertools.product(*axes)), dtype=float)
    vals = evaluate_many(h, pts)
    ok = np.isfinite(vals)
    if not ok.any():
        return None, None, pts, vals
    idx = int(np.flatnonzero(ok & (vals == vals[ok].min()))[0])  # lowest index wins ties
    return pts[idx], float(vals[idx]), pts, vals


def brute_force_min(h: Expr, d: BoxDomain, grid_n: int = 10001):
    """Uniform-grid argmin with one 10x finer local pass around the incumbent.

    Returns ``(b_min, value)``; points where ``h`` is undefined are skipped.
    """
    if grid_n < 2:
        raise ValueError("grid_n must be >= 2")
    lo, hi = d.bounds()
    b, val, _, _ = _grid_argmin(h, _grid_axes(lo, hi, grid_n))
    if b is None:
        raise ArithmeticError("function undefined at every grid point")
    cell = (hi - lo) / (grid_n - 1)
    flo, fhi = np.maximum(lo, b - cell), np.minimum(hi, b + cell)
    fine = [np.linspace(a, c, 21) if c > a else np.array([a]) for a, c in zip(flo, fhi)]
    b2, val2, _, _ = _grid_argmin(h, fine)
    if b2 is not None and val2 < val:
        b, val = b2, val2
    return np.asarray(b, dtype=float), float(val)


def _directional_quotient(h, b_star, b1, step=SINGULAR_STEP):
    """One-sided quotient [h(b* + t u) - h(b*)] / t scaled by |b1 - b*|, u = (b1 - b*)/|b1 - b*|."""
    diff = b1 - b_star
    norm = np.linalg.norm(diff, axis=1)
    u = np.divide(diff, norm[:, None], out=np.zeros_like(diff), where=norm[:, None] > 0)
    h0 = evaluate_many(h, b_star[None, :])[0]
    ht = evaluate_many(h, b_star + step * u)
    return np.where(norm > 0, (ht - h0) / step * norm, 0.0)


def _gradient_term(h, b2, B1, flags):
    """grad h(b2)^T (b1 - b2) for each row of B1, with the singular fallback."""
    g, used_fd = gradient_many(h, b2[None, :])
    flags["finite_difference_fallback"] = bool(used_fd)
    if np.all(np.isfinite(g)):
        flags["singular_gradient_fallback"] = False
        return (B1 - b2) @ g[0]
    flags["singular_gradient_fallback"] = True
    q = _directional_quotient(h, b2, B1)
    if not np.all(np.isfinite(q)):
        raise SingularGradient(f"gradient of {h} is singular at {_vec(b2)} and no one-sided quotient exists")
    return q


def certify_unconstrained(p: UnconstrainedProblem, b2, plan: SamplePlan, tol=DEFAULT_TOL, rtol=DEFAULT_RTOL,
                          n_points=None) -> CertificationReport:
    """Sufficient condition for ``b2`` to minimise ``h`` over the domain.

    Requires, for every sampled ``b1`` and sigma in the grid restricted to
    ``(0, 1]``::

        grad h(b2)^T (b1-b2) - h(b2)/sigma - theta(b2,sigma)/sigma - L(b1, b2)
            >= sigma^(s-1) [theta(b1,sigma) - theta(b2,sigma)]

    with ``L = lim theta((b1+b2)/2, sigma)/sigma``. A failure is reported as
    NOT_CERTIFIED; it does not show that ``b2`` is not optimal.
    """
    theta = as_map(p.theta)
    plan = plan.replace(s=p.s)
    d = p.domain
    b2 = np.atleast_1d(np.asarray(b2, dtype=float))
    cfg = {
        "h": to_string(p.h), "map": to_string(theta.expr), "s": p.s, "b2": _vec(b2),
        "tol": tol, "rtol": rtol, "domain": d.to_dict(), "truncation_applied": d.is_truncated,
        "plan": plan.to_dict(), "sigma_range": "(0, 1]",
    }
    instance = check_general_s_convex(p.h, theta, d, plan, tol, rtol)
    flags = {"instance_certified": instance.certified}
    if not d.contains(b2)[0]:
        raise ValueError(f"b2={_vec(b2)} lies outside the domain")
    B1 = sample_points(d, n_points or plan.n_pairs, plan.seed)
    grad_term = _gradient_term(p.h, b2, B1, flags)
    L = limit_many(theta, midpoint(B1, np.broadcast_to(b2, B1.shape)))
    if np.isnan(L).any():
        raise DivergentLimit(f"theta/sigma has no limit at {int(np.isnan(L).sum())} midpoints")
    sig = plan.interior_sigmas
    k = len(sig)
    B1r = np.repeat(B1, k, axis=0)
    S = np.tile(sig, len(B1))
    Gr, Lr = np.repeat(grad_term, k), np.repeat(L, k)
    h2 = evaluate(p.h, b2)
    t1 = theta.at(B1r, S)
    t2 = theta.at(np.broadcast_to(b2, B1r.shape), S)
    left = Gr - h2 / S - t2 / S - Lr
    right = np.power(S, p.s - 1.0) * (t1 - t2)
    margin = left - right
    thr = tol + rtol * np.maximum(np.abs(left), np.abs(right))
    verdict, worst, idx, n_ok, n_err = reduce_margins(margin, thr, _keys(B1r, S))
    witness = None
    if idx is not None:
        witness = {"b1": _vec(B1r[idx]), "sigma": float(S[idx]), "left": float(left[idx]),
                   "right": float(right[idx]), "margin": float(margin[idx])}
    ok = verdict is Verdict.CERTIFIED_ON_SAMPLES and instance.certified
    rep = CertificationReport("unconstrained_sufficient_condition", CERTIFIED if ok else NOT_CERTIFIED, worst,
                              witness, n_ok, n_err, flags, {"instance_check": instance.to_dict(),
                                                            "inequality_verdict": verdict.value}, cfg)
    if flags["singular_gradient_fallback"]:
        rep.notes.append(f"gradient singular at b2; one-sided difference quotient with step {SINGULAR_STEP} used")
    if not instance.certified:
        rep.notes.append("instance is not certified general s-convex on this plan; the condition does not apply")
    return rep


def check_uniqueness_note(p: UnconstrainedProblem, b2, perturbations: int = 16, grid_n: int = 1001,
                          tol: float = 1e-9, seed: int = 0, prior: CertificationReport | None = None) -> dict:
    """Empirical support for uniqueness of the minimiser ``b2``.

    Scans a grid for points away from ``b2`` (more than 1.5 cells) whose value
    is within ``tol`` of ``h(b2)``, then probes ``perturbations`` quasi-random
    points in one cell around each such candidate.
    """
    d = p.domain
    lo, hi = d.bounds()
    m = d.dim
    grid_n = max(2, min(grid_n, int(round(2e6 ** (1.0 / m)))))
    b2 = np.atleast_1d(np.asarray(b2, dtype=float))
    target = evaluate(p.h, b2)
    _, _, pts, vals = _grid_argmin(p.h, _grid_axes(lo, hi, grid_n))
    cell = np.where(hi > lo, (hi - lo) / (grid_n - 1), 0.0)
    far = np.any(np.abs(pts - b2) > 1.5 * cell + 1e-15, axis=1)
    candidates = pts[far & np.isfinite(vals) & (vals <= target + tol)]
    others = [_vec(c) for c in candidates[: 32]]
    probes = []
    if len(candidates) == 0:
        near = pts[far & np.isfinite(vals)]
        near_vals = vals[far & np.isfinite(vals)]
        if len(near):
            best = near[np.argsort(near_vals, kind="stable")[:4]]
            for c in best:
                box = BoxDomain(np.maximum(lo, c - cell), np.minimum(hi, c + cell))
                probe = sample_points(box, perturbations, seed)
                pv = evaluate_many(p.h, probe)
                keep = np.any(np.abs(probe - b2) > 1.5 * cell + 1e-15, axis=1) & np.isfinite(pv)
                probes.append(float(pv[keep].min()) if keep.any() else None)
                if keep.any() and pv[keep].min() <= target + tol:
                    others.append(_vec(probe[keep][np.argmin(pv[keep])]))
    return {
        "kind": "uniqueness_note",
        "b2": _vec(b2),
        "value_at_b2": target,
        "unique_on_grid": not others,
        "other_minimizers": others,
        "n_other_minimizers_on_grid": int(len(candidates)),
        "probe_minima": probes,
        "grid_n": grid_n,
        "tol": tol,
        "precondition_certified": None if prior is None else prior.certified,
        "evidence": "grid scan only, not a proof",
    }


def _feasible_oracle(p: ConstrainedProblem, grid_n, tol):
    lo, hi = p.domain.bounds()
    pts = np.array(list(itertools.product(*_grid_axes(lo, hi, grid_n))), dtype=float)
    vals = evaluate_many(p.h, pts)
    feas = np.isfinite(vals)
    for f, _ in p.constraints:
        fv = evaluate_many(f, pts)
        feas &= np.isfinite(fv) & (fv <= tol)
    if not feas.any():
        return None, None
    idx = int(np.flatnonzero(feas & (vals == vals[feas].min()))[0])
    return _vec(pts[idx]), float(vals[idx])


def certify_kkt(p: ConstrainedProblem, cert: KKTCertificate, plan: SamplePlan, tol=DEFAULT_TOL,
                rtol=DEFAULT_RTOL, grid_n: int = 10001, n_points=None) -> CertificationReport:
    """Verify a KKT certificate and the accompanying sufficient inequality.

    Parts: (1) stationarity ``||grad h(b*) + sum v_i grad f_i(b*)|| <= tol``;
    (2) complementarity ``|v_i f_i(b*)| <= tol``; (3) for sampled ``b1`` and
    sigma in ``(0, 1]``::

        h(b*)/sigma + theta(b*,sigma)/sigma + L(b1)
            <= -sum_i v_i L(b1) - 2 sigma^(s-1) [theta(b1,sigma) - theta(b*,sigma)]

    with ``L(b1) = lim theta((b1+b*)/2, sigma)/sigma``. The objective stands in
    for the undefined ``phi`` and the sampled ``b1`` for the undefined ``t1``.
    CERTIFIED iff all three parts pass.
    """
    theta = as_map(p.theta)
    plan = plan.replace(s=p.s)
    d = p.domain
    b = np.asarray(cert.b_star, dtype=float)
    v = np.asarray(cert.multipliers, dtype=float)
    if len(v) != len(p.constraints):
        raise ValueError(f"{len(p.constraints)} constraints but {len(v)} multipliers")
    for i, vi in enumerate(v):
        if vi < 0:
            raise NegativeMultiplier(f"v[{i}]={vi} < 0")
    fvals = [evaluate(f, b) for f, _ in p.constraints]
    for i, fv in enumerate(fvals):
        if fv > tol:
            raise Infeasible(f"constraint {i + 1} violated at b*={_vec(b)}: f={fv}")

    grad = gradient_many(p.h, b[None, :])[0][0]
    for (f, _), vi in zip(p.constraints, v):
        grad = grad + vi * gradient_many(f, b[None, :])[0][0]
    stationarity = float(np.linalg.norm(grad))
    complementarity = [float(abs(vi * fv)) for vi, fv in zip(v, fvals)]
    part1 = bool(np.isfinite(stationarity) and stationarity <= tol)
    part2 = all(c <= tol for c in complementarity)

    B1 = sample_points(d, n_points or plan.n_pairs, plan.seed)
    L = limit_many(theta, midpoint(B1, np.broadcast_to(b, B1.shape)))
    sig = plan.interior_sigmas
    k = len(sig)
    B1r, S, Lr = np.repeat(B1, k, axis=0), np.tile(sig, len(B1)), np.repeat(L, k)
    bs = np.broadcast_to(b, B1r.shape)
    hb = evaluate(p.h, b)
    t1, tb = theta.at(B1r, S), theta.at(bs, S)
    left = hb / S + tb / S + Lr
    right = -v.sum() * Lr - 2.0 * np.power(S, p.s - 1.0) * (t1 - tb)
    margin = right - left
    thr = tol + rtol * np.maximum(np.abs(left), np.abs(right))
    verdict, worst, idx, n_ok, n_err = reduce_margins(margin, thr, _keys(B1r, S))
    witness = None
    if idx is not None:
        witness = {"b1": _vec(B1r[idx]), "sigma": float(S[idx]), "left": float(left[idx]),
                   "right": float(right[idx]), "margin": float(margin[idx])}

    # same inequality with each constraint's own map inside the sum
    right_alt = -2.0 * np.power(S, p.s - 1.0) * (t1 - tb)
    for (_, th_i), vi in zip(p.constraints, v):
        Li = limit_many(as_map(th_i), midpoint(B1, np.broadcast_to(b, B1.shape)))
        right_alt = right_alt - vi * np.repeat(Li, k)
    alt_margin = right_alt - left
    alt_ok = ~np.isnan(alt_margin)

    part3 = verdict is Verdict.CERTIFIED_ON_SAMPLES
    oracle_b, oracle_val = _feasible_oracle(p, grid_n if d.dim == 1 else max(2, int(2e6 ** (1 / d.dim))), tol)
    details = {
        "stationarity_residual": stationarity,
        "complementarity_residuals": complementarity,
        "constraint_values": [float(x) for x in fvals],
        "part1_stationarity": part1,
        "part2_complementarity": part2,
        "part3_inequality": verdict.value,
        "part3_alt_constraint_maps_worst_margin": float(alt_margin[alt_ok].min()) if alt_ok.any() else None,
        "feasible_grid_oracle": {"b": oracle_b, "value": oracle_val},
        "substitutions": {"phi": "objective h", "t1": "sampled b1"},
    }
    cfg = {
        "h": to_string(p.h), "map": to_string(theta.expr), "s": p.s,
        "constraints": [{"f": to_string(f), "map": to_string(as_map(t).expr)} for f, t in p.constraints],
        "b_star": _vec(b), "multipliers": _vec(v), "tol": tol, "rtol": rtol,
        "domain": d.to_dict(), "truncation_applied": d.is_truncated, "plan": plan.to_dict(),
        "sigma_range": "(0, 1]",
    }
    ok = part1 and part2 and part3
    return CertificationReport("kkt_sufficient_condition", CERTIFIED if ok else NOT_CERTIFIED, worst, witness,
                               n_ok, n_err, {"part1": part1, "part2": part2, "part3": part3}, details, cfg)
