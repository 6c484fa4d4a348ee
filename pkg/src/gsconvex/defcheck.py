"""Sampled membership checks for the four convexity definitions.

Every check evaluates ``margin = RHS - LHS`` over all sampled
``(b1, b2, sigma)`` and reduces to a :class:`CheckReport`. A sample counts as
a violation when ``margin < -(tol + rtol * |RHS|)``. Under ``strict=True`` the
samples with ``0 < sigma < 1`` and ``b1 != b2`` must in addition satisfy
``margin > 0`` (no slack: the strict gap of a strictly convex function can be
far below ``tol`` when sigma is tiny). The endpoints stay non-strict because
both sides coincide there for every function.

Two-point maps ``b(b1, b2, sigma)`` are expressions of arity ``2m``:
``x1..xm`` hold ``b1`` and ``x{m+1}..x{2m}`` hold ``b2``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .expr import ZERO, DomainError, Expr, evaluate, evaluate_many, parse, to_string
from .sampling import BoxDomain, SamplePlan, expand, sample_pairs

DEFAULT_TOL = 1e-9
DEFAULT_RTOL = 1e-9


class Verdict(str, enum.Enum):
    CERTIFIED_ON_SAMPLES = "CERTIFIED_ON_SAMPLES"
    REFUTED = "REFUTED"
    INCONCLUSIVE = "INCONCLUSIVE"


ONE_POINT = "one-point"
TWO_POINT = "two-point"


@dataclass(frozen=True)
class ModifierMap:
    """A map theta(b, sigma) (one-point) or b(b1, b2, sigma) (two-point)."""

    expr: Expr = ZERO
    kind: str = ONE_POINT

    def __post_init__(self):
        if self.kind not in (ONE_POINT, TWO_POINT):
            raise ValueError(f"unknown modifier map kind {self.kind!r}")

    @classmethod
    def zero(cls, kind=ONE_POINT):
        return cls(ZERO, kind)

    @classmethod
    def parse(cls, text, arity, s=None, kind=ONE_POINT):
        n = arity if kind == ONE_POINT else 2 * arity
        return cls(parse(text, n, s), kind)

    def __str__(self):
        return to_string(self.expr)

    def at(self, b, sigma) -> np.ndarray:
        return evaluate_many(self.expr, b, sigma)

    def at_pair(self, b1, b2, sigma) -> np.ndarray:
        return evaluate_many(self.expr, np.concatenate([b1, b2], axis=-1), sigma)


def as_map(theta, kind=ONE_POINT) -> ModifierMap:
    if theta is None:
        return ModifierMap.zero(kind)
    if isinstance(theta, ModifierMap):
        if theta.kind != kind:
            raise ValueError(f"expected a {kind} map, got {theta.kind}")
        return theta
    return ModifierMap(theta, kind)


@dataclass
class CheckReport:
    inequality: str
    verdict: Verdict
    worst_margin: float
    witness: dict | None
    n_evaluated: int
    n_domain_errors: int
    config: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def certified(self) -> bool:
        return self.verdict is Verdict.CERTIFIED_ON_SAMPLES

    @property
    def refuted(self) -> bool:
        return self.verdict is Verdict.REFUTED

    @classmethod
    def from_dict(cls, data: dict) -> "CheckReport":
        return cls(data["inequality"], Verdict(data["verdict"]), data["worst_margin"], data["witness"],
                   data["n_evaluated"], data["n_domain_errors"], data.get("config", {}), list(data.get("notes", [])))

    def to_dict(self) -> dict:
        return {
            "inequality": self.inequality,
            "verdict": self.verdict.value,
            "evidence": "sampled points only, not a proof",
            "worst_margin": self.worst_margin,
            "witness": self.witness,
            "n_evaluated": self.n_evaluated,
            "n_domain_errors": self.n_domain_errors,
            "config": self.config,
            "notes": list(self.notes),
        }


# ---------------------------------------------------------------------------
# Reduction
# ---------------------------------------------------------------------------


def _lexmin(candidates: np.ndarray, keys: np.ndarray) -> int:
    """Index of the lexicographically smallest row of ``keys`` among ``candidates``."""
    sub = keys[candidates]
    order = np.lexsort(sub.T[::-1])
    return int(candidates[order[0]])


def reduce_margins(margin, threshold, keys, strict_mask=None):
    """Order-independent reduction of per-sample margins.

    ``keys`` is an ``(n, k)`` array identifying each sample (used to break
    ties). Returns ``(verdict, worst_margin, witness_index, n_ok, n_err)``.
    """
    margin = np.asarray(margin, dtype=float)
    threshold = np.asarray(threshold, dtype=float)
    ok = ~np.isnan(margin) & ~np.isnan(threshold)
    n_err = int((~ok).sum())
    n_ok = int(ok.sum())
    violation = ok & (margin < -threshold)
    if strict_mask is not None:
        violation |= ok & strict_mask & (margin <= 0)
    if violation.any():
        verdict = Verdict.REFUTED
        pool = violation
    else:
        verdict = Verdict.INCONCLUSIVE if n_err else Verdict.CERTIFIED_ON_SAMPLES
        pool = ok
    if not ok.any():
        return verdict, float("nan"), None, n_ok, n_err
    worst = float(np.min(margin[ok]))
    target = float(np.min(margin[pool]))
    idx = _lexmin(np.flatnonzero(pool & (margin == target)), np.asarray(keys, dtype=float))
    return verdict, worst, idx, n_ok, n_err


def _keys(*arrays):
    cols = []
    for a in arrays:
        a = np.asarray(a, dtype=float)
        cols.append(a.reshape(len(a), -1))
    return np.hstack(cols)


def _vec(a) -> list:
    return [float(v) for v in np.atleast_1d(a)]


def _threshold(rhs, tol, rtol):
    return tol + rtol * np.abs(rhs)


def convex_point(b1, b2, sigma):
    """sigma*b1 + (1-sigma)*b2 clipped to the segment to absorb rounding."""
    sig = np.asarray(sigma, dtype=float)[..., None]
    x = sig * b1 + (1.0 - sig) * b2
    return np.clip(x, np.minimum(b1, b2), np.maximum(b1, b2))


def midpoint(b1, b2):
    return np.clip(0.5 * (b1 + b2), np.minimum(b1, b2), np.maximum(b1, b2))


def _scalar_point(b1, b2, sigma):
    b1, b2 = np.asarray(b1, dtype=float), np.asarray(b2, dtype=float)
    x = sigma * b1 + (1.0 - sigma) * b2
    return np.clip(x, np.minimum(b1, b2), np.maximum(b1, b2))


def _scalar_mid(b1, b2):
    b1, b2 = np.asarray(b1, dtype=float), np.asarray(b2, dtype=float)
    return np.clip(0.5 * (b1 + b2), np.minimum(b1, b2), np.maximum(b1, b2))


# ---------------------------------------------------------------------------
# Inequalities: vectorised (lhs, rhs) and scalar re-evaluation
# ---------------------------------------------------------------------------


def _rhs_general(h, theta, s, b1, b2, sigma):
    ws, wt = np.power(sigma, s), np.power(1.0 - sigma, s)
    return (
        ws * (evaluate_many(h, b1) + theta.at(b1, sigma))
        + wt * (evaluate_many(h, b2) + theta.at(b2, sigma))
        + theta.at(midpoint(b1, b2), sigma)
    )


def _sides(name, h, bmap, s, b1, b2, sigma):
    lhs = evaluate_many(h, convex_point(b1, b2, sigma))
    if name == "general_s_convex":
        rhs = _rhs_general(h, bmap, s, b1, b2, sigma)
    elif name == "convex":
        rhs = sigma * evaluate_many(h, b1) + (1.0 - sigma) * evaluate_many(h, b2)
    elif name == "sub_b_convex":
        rhs = sigma * evaluate_many(h, b1) + (1.0 - sigma) * evaluate_many(h, b2) + bmap.at_pair(b1, b2, sigma)
    else:
        ws, wt = np.power(sigma, s), np.power(1.0 - sigma, s)
        rhs = ws * evaluate_many(h, b1) + wt * evaluate_many(h, b2)
        if name == "sub_b_s_convex":
            rhs = rhs + bmap.at_pair(b1, b2, sigma)
    return lhs, rhs


def scalar_sides(name, h, bmap, s, b1, b2, sigma):
    """Re-evaluate one sample with the scalar evaluator (independent of the vector path).

    Raises :class:`DomainError` if the sample is outside the real domain.
    """
    b1 = np.atleast_1d(np.asarray(b1, dtype=float))
    b2 = np.atleast_1d(np.asarray(b2, dtype=float))
    sigma = float(sigma)
    lhs = evaluate(h, _scalar_point(b1, b2, sigma))
    h1, h2 = evaluate(h, b1), evaluate(h, b2)
    if name == "convex":
        return lhs, sigma * h1 + (1 - sigma) * h2
    if name == "sub_b_convex":
        return lhs, sigma * h1 + (1 - sigma) * h2 + evaluate(bmap.expr, np.concatenate([b1, b2]), sigma)
    ws, wt = sigma**s, (1 - sigma) ** s
    if name == "general_s_convex":
        t = bmap.expr
        rhs = (ws * (h1 + evaluate(t, b1, sigma)) + wt * (h2 + evaluate(t, b2, sigma))
               + evaluate(t, _scalar_mid(b1, b2), sigma))
        return lhs, rhs
    rhs = ws * h1 + wt * h2
    if name == "sub_b_s_convex":
        rhs += evaluate(bmap.expr, np.concatenate([b1, b2]), sigma)
    return lhs, rhs


def _run(name, h, bmap, d, plan, tol, rtol, strict, kind):
    d.validate()
    if h.arity > d.dim:
        raise ValueError(f"function has arity {h.arity} but the domain has dimension {d.dim}")
    b1, b2 = sample_pairs(d, plan)
    B1, B2, S = expand(b1, b2, plan.sigma_grid)
    lhs, rhs = _sides(name, h, bmap, plan.s, B1, B2, S)
    margin = rhs - lhs
    thr = _threshold(rhs, tol, rtol)
    strict_mask = None
    if strict:
        strict_mask = (S > 0) & (S < 1) & np.any(B1 != B2, axis=1)
    verdict, worst, idx, n_ok, n_err = reduce_margins(margin, thr, _keys(B1, B2, S), strict_mask)
    witness = None
    if idx is not None:
        witness = {
            "b1": _vec(B1[idx]),
            "b2": _vec(B2[idx]),
            "sigma": float(S[idx]),
            "lhs": float(lhs[idx]),
            "rhs": float(rhs[idx]),
            "margin": float(margin[idx]),
            "strict_sample": bool(strict_mask[idx]) if strict_mask is not None else False,
        }
    config = {
        "h": to_string(h),
        "map": to_string(bmap.expr) if bmap is not None else None,
        "map_kind": kind,
        "s": plan.s,
        "tol": tol,
        "rtol": rtol,
        "strict": bool(strict),
        "domain": d.to_dict(),
        "truncation_applied": d.is_truncated,
        "plan": plan.to_dict(),
    }
    return CheckReport(name, verdict, worst, witness, n_ok, n_err, config)


def general_margins(h, theta, d: BoxDomain, plan: SamplePlan):
    """Per-sample margins of the general inequality, flattened pair-major.

    Returns ``(b1, b2, sigma, margin)``; domain errors show up as NaN margins.
    """
    b1, b2 = sample_pairs(d, plan)
    B1, B2, S = expand(b1, b2, plan.sigma_grid)
    lhs, rhs = _sides("general_s_convex", h, as_map(theta), plan.s, B1, B2, S)
    return B1, B2, S, rhs - lhs


def check_general_s_convex(h, theta, d: BoxDomain, plan: SamplePlan, tol=DEFAULT_TOL, rtol=DEFAULT_RTOL):
    """Sampled check of general s-convexity of ``h`` w.r.t. the one-point map ``theta``."""
    return _run("general_s_convex", h, as_map(theta), d, plan, tol, rtol, False, ONE_POINT)


def check_s_convex_second_sense(h, d, plan, tol=DEFAULT_TOL, rtol=DEFAULT_RTOL, strict=False):
    return _run("s_convex_second_sense", h, None, d, plan, tol, rtol, strict, None)


def check_sub_b_convex(h, bmap, d, plan, tol=DEFAULT_TOL, rtol=DEFAULT_RTOL):
    return _run("sub_b_convex", h, as_map(bmap, TWO_POINT), d, plan, tol, rtol, False, TWO_POINT)


def check_sub_b_s_convex(h, bmap, d, plan, tol=DEFAULT_TOL, rtol=DEFAULT_RTOL, strict=False):
    return _run("sub_b_s_convex", h, as_map(bmap, TWO_POINT), d, plan, tol, rtol, strict, TWO_POINT)


def check_convex(h, d, plan, tol=DEFAULT_TOL, rtol=DEFAULT_RTOL):
    """Plain convexity (weights sigma and 1 - sigma); ``plan.s`` is ignored."""
    return _run("convex", h, None, d, plan, tol, rtol, False, None)


def lift_with_s(theta, m: int, s: float) -> ModifierMap:
    """Lift a one-point map into the equivalent two-point map for exponent ``s``."""
    from .expr import SIGMA, Var, add, mul, power, sub, substitute

    t = as_map(theta).expr
    first = substitute(t, {i: Var(i) for i in range(m)})
    second = substitute(t, {i: Var(m + i) for i in range(m)})
    mid = substitute(t, {i: mul(0.5, add(Var(i), Var(m + i))) for i in range(m)})
    expr = add(add(mul(power(SIGMA, s), first), mul(power(sub(1, SIGMA), s), second)), mid)
    return ModifierMap(expr, TWO_POINT)


_MAP_KIND = {
    "general_s_convex": ONE_POINT,
    "sub_b_convex": TWO_POINT,
    "sub_b_s_convex": TWO_POINT,
}


def witness_violation(report: CheckReport) -> float:
    """Re-evaluate a report's witness from its echoed config alone.

    Returns the amount by which the witness violates the inequality (positive
    means violated beyond tolerance; for strict samples the requirement is
    ``margin > 0``, so a strict witness returns ``-margin >= 0``).
    """
    cfg = report.config
    m = len(cfg["domain"]["lo"])
    h = parse(cfg["h"], m)
    kind = _MAP_KIND.get(report.inequality)
    bmap = None
    if kind is not None:
        bmap = ModifierMap(parse(cfg["map"], m if kind == ONE_POINT else 2 * m), kind)
    w = report.witness
    lhs, rhs = scalar_sides(report.inequality, h, bmap, cfg["s"], w["b1"], w["b2"], w["sigma"])
    margin = rhs - lhs
    thr = cfg["tol"] + cfg["rtol"] * abs(rhs)
    if w.get("strict_sample") and margin >= -thr:
        return -margin
    return -margin - thr
