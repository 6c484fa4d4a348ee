"""Box domains and deterministic sample plans over (b1, b2, sigma)."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc


class EmptyDomain(ValueError):
    pass


def default_sigma_grid() -> tuple:
    grid = {round(0.05 * k, 10) for k in range(21)} | {1e-3, 1e-6}
    return tuple(sorted(grid))


@dataclass(frozen=True)
class BoxDomain:
    """Axis-aligned box; ``hi`` entries may be ``inf`` and are truncated for sampling."""

    lo: tuple
    hi: tuple
    truncation_bound: float = 10.0

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) != len(hi):
            raise ValueError("lo and hi must have the same length")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "truncation_bound", float(self.truncation_bound))
        if any(math.isnan(v) for v in lo + hi):
            raise ValueError("domain bounds must not be nan")
        if any(math.isinf(v) for v in lo):
            raise ValueError("lower bounds must be finite")

    @property
    def dim(self) -> int:
        return len(self.lo)

    def validate(self):
        for i, (a, b) in enumerate(zip(self.lo, self.hi)):
            if a > b:
                raise EmptyDomain(f"lo[{i}]={a} > hi[{i}]={b}")
            if math.isinf(b) and not self.truncation_bound > a:
                raise EmptyDomain(f"truncation bound {self.truncation_bound} does not exceed lo[{i}]={a}")

    @property
    def truncated_hi(self) -> np.ndarray:
        return np.array([self.truncation_bound if math.isinf(h) else h for h in self.hi])

    @property
    def is_truncated(self) -> bool:
        return any(math.isinf(h) for h in self.hi)

    def bounds(self):
        """``(lo, hi)`` arrays of the compact box actually sampled."""
        self.validate()
        return np.array(self.lo), self.truncated_hi

    @property
    def center(self) -> np.ndarray:
        lo, hi = self.bounds()
        return 0.5 * (lo + hi)

    def corners(self) -> np.ndarray:
        lo, hi = self.bounds()
        return np.array([[hi[i] if bit else lo[i] for i, bit in enumerate(bits)]
                         for bits in itertools.product((0, 1), repeat=self.dim)])

    def contains(self, b, atol=0.0) -> np.ndarray:
        lo, hi = self.bounds()
        b = np.atleast_2d(b)
        return np.all((b >= lo - atol) & (b <= hi + atol), axis=-1)

    def to_dict(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi), "truncation_bound": self.truncation_bound}


@dataclass(frozen=True)
class SamplePlan:
    n_pairs: int = 512
    sigma_grid: tuple = field(default_factory=default_sigma_grid)
    seed: int = 0
    s: float = 1.0

    def __post_init__(self):
        grid = tuple(sorted({float(x) for x in self.sigma_grid}))
        object.__setattr__(self, "sigma_grid", grid)
        if self.n_pairs < 1:
            raise ValueError("n_pairs must be >= 1")
        if not (0.0 < self.s <= 1.0):
            raise ValueError(f"s must lie in (0, 1], got {self.s}")
        if not grid or grid[0] != 0.0 or grid[-1] != 1.0:
            raise ValueError("sigma_grid must contain both 0 and 1")
        if any(x < 0 or x > 1 for x in grid):
            raise ValueError("sigma_grid must lie in [0, 1]")
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def interior_sigmas(self) -> np.ndarray:
        """Grid restricted to (0, 1]."""
        return np.array([x for x in self.sigma_grid if x > 0.0])

    def replace(self, **changes) -> "SamplePlan":
        values = {"n_pairs": self.n_pairs, "sigma_grid": self.sigma_grid, "seed": self.seed, "s": self.s}
        values.update(changes)
        return SamplePlan(**values)

    def to_dict(self) -> dict:
        return {"n_pairs": self.n_pairs, "sigma_grid": list(self.sigma_grid), "seed": int(self.seed), "s": self.s}


def _structural_pairs(d: BoxDomain) -> list:
    center = d.center
    corners = d.corners()
    pairs = [(center, center)]
    if d.dim <= 3:
        pairs += [(a, b) for a in corners for b in corners]
    else:
        pairs += [(c, corners[-1 - i]) for i, c in enumerate(corners)]
    return pairs


def sample_pairs(d: BoxDomain, plan: SamplePlan) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic sample of ``plan.n_pairs`` pairs inside the truncated box.

    The center pair and corner pairs come first, the remainder is a scrambled
    Sobol sequence in 2m dimensions seeded by ``plan.seed``. Returns arrays
    ``b1, b2`` of shape ``(n_pairs, m)``.
    """
    lo, hi = d.bounds()
    m = d.dim
    pairs = _structural_pairs(d)[: plan.n_pairs]
    n_rest = plan.n_pairs - len(pairs)
    b1 = [p[0] for p in pairs]
    b2 = [p[1] for p in pairs]
    if n_rest > 0:
        sobol = qmc.Sobol(d=2 * m, scramble=True, seed=np.random.default_rng(int(plan.seed)))
        u = sobol.random_base2(max(0, math.ceil(math.log2(n_rest))))[:n_rest]
        pts = lo + u.reshape(n_rest, 2, m) * (hi - lo)
        pts = np.clip(pts, lo, hi)
        b1.extend(pts[:, 0, :])
        b2.extend(pts[:, 1, :])
    return np.array(b1, dtype=float).reshape(-1, m), np.array(b2, dtype=float).reshape(-1, m)


def sample_points(d: BoxDomain, n: int, seed: int) -> np.ndarray:
    """``n`` single points: center, corners, then Sobol fill."""
    lo, hi = d.bounds()
    pts = [d.center, *d.corners()][:n]
    rest = n - len(pts)
    if rest > 0:
        sobol = qmc.Sobol(d=d.dim, scramble=True, seed=np.random.default_rng(int(seed)))
        u = sobol.random_base2(max(0, math.ceil(math.log2(rest))))[:rest]
        pts.extend(np.clip(lo + u * (hi - lo), lo, hi))
    return np.array(pts, dtype=float).reshape(-1, d.dim)


def expand(b1: np.ndarray, b2: np.ndarray, sigmas) -> tuple:
    """Cartesian product of pairs and sigma values, flattened pair-major."""
    sigmas = np.asarray(sigmas, dtype=float)
    n, k = len(b1), len(sigmas)
    return (np.repeat(b1, k, axis=0), np.repeat(b2, k, axis=0), np.tile(sigmas, n))
