"""Fixed-point analysis of the percolation-game recursion map.

For trap probability p and target probability q with 0 < p+q < 1, one
round of optimal play transforms the (shifted) win probability through

    g(x) = (1 - q) - (1 - p - q) * G(x),

where G is the offspring PGF.  g is strictly decreasing, so it has a
unique fixed point alpha in [0, 1]; the two-round composition g2 = g o g
is strictly increasing and has at least one fixed point.  The smallest
positive fixed point w' of g2 carries the game's outcome probabilities:

    bond game:  win  = (w' - p) / (1 - p - q)
                lose = ((1 - q) - g(w')) / (1 - p - q)
    site game:  win  = w',  lose = q + (1 - p - q) * G(w')

and the draw probability is zero exactly when g2's fixed point is unique
(equivalently w' = alpha).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .offspring import OffspringDistribution

DEFAULT_TOL = 1e-12
DEFAULT_GRID = 10_000
#: |h2| below this at a grid point with no sign change triggers a tangency polish
NEAR_TANGENT_BAND = 1e-6
#: a polished |h2| minimum below this counts as a (double) root
NEAR_TANGENT_ROOT = 1e-10
MAX_ITERATIONS = 10**6


@dataclass(frozen=True)
class ParamPair:
    """Trap/target probabilities (p, q) with 0 < p + q < 1."""

    p: float
    q: float

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0 and 0.0 <= self.q <= 1.0):
            raise ValueError("p and q must lie in [0, 1]")
        if not (0.0 < self.p + self.q < 1.0):
            raise ValueError(
                f"(p, q) = ({self.p}, {self.q}) is outside the parameter set "
                "I = {(p, q): 0 < p + q < 1}"
            )

    @property
    def safe(self) -> float:
        """Probability of a safe label, 1 - p - q."""
        return 1.0 - self.p - self.q


@dataclass(frozen=True)
class OutcomeTriple:
    """First-mover (win, lose, draw) probabilities; they sum to 1."""

    win: float
    lose: float
    draw: float

    def as_tuple(self):
        return (self.win, self.lose, self.draw)


@dataclass(frozen=True)
class FixedPointReport:
    alpha: float
    w_prime: float
    all_g2_fixed_points: tuple
    unique: bool
    residual_alpha: float
    residual_w_prime: float
    iterations_used: int


def g(dist: OffspringDistribution, params: ParamPair, x):
    """One-round map (1-q) - (1-p-q)*G(x); strictly decreasing on [0, 1]."""
    return (1.0 - params.q) - params.safe * dist.pgf(x)


def g2(dist: OffspringDistribution, params: ParamPair, x):
    """Two-round composition g(g(x)); strictly increasing on [0, 1]."""
    return g(dist, params, g(dist, params, x))


def _bisect(fn, lo, hi, tol):
    """Bisection on a bracketing interval; fn(lo) and fn(hi) have opposite signs."""
    flo = fn(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fmid = fn(mid)
        if fmid == 0.0:
            return mid
        if (flo > 0) == (fmid > 0):
            lo, flo = mid, fmid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def find_alpha(dist, params, tol: float = DEFAULT_TOL) -> float:
    """Unique fixed point of g in [0, 1].

    h(x) = g(x) - x is strictly decreasing with h(0) > 0 and h(1) = p - 1 < 0,
    so bisection is guaranteed to converge.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    return _bisect(lambda x: g(dist, params, x) - x, 0.0, 1.0, tol)


def find_all_g2_fixed_points(
    dist, params, grid_size: int = DEFAULT_GRID, tol: float = DEFAULT_TOL
):
    """All fixed points of g2 on [0, 1], sorted ascending.

    Scans h2(x) = g2(x) - x on a uniform grid, refines every sign change by
    bisection, and polishes near-tangential touches (|h2| < 1e-6 with no
    local sign change) first with a 10x finer rescan and then by minimizing
    |h2|.  Roots closer than 10*tol are merged.  h2(0) > 0 > h2(1), so the
    result is never empty.
    """
    if grid_size < 10**3:
        raise ValueError("grid_size must be at least 1000")
    if not tol > 0:
        raise ValueError("tol must be positive")

    xs = np.linspace(0.0, 1.0, grid_size + 1)
    h = g2(dist, params, xs) - xs
    fn = lambda x: g2(dist, params, x) - x

    roots = []
    covered = np.zeros(xs.size, dtype=bool)

    sign = np.sign(h)
    change = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
    for i in change:
        roots.append(float(_bisect(fn, xs[i], xs[i + 1], tol)))
        covered[i : i + 2] = True
    exact = np.nonzero(h == 0.0)[0]
    for i in exact:
        roots.append(float(xs[i]))
        covered[max(i - 1, 0) : i + 2] = True

    # tangency polish on uncovered near-zero stretches
    near = np.nonzero((np.abs(h) < NEAR_TANGENT_BAND) & ~covered)[0]
    for lo_i, hi_i in _group_runs(near):
        a = xs[max(lo_i - 1, 0)]
        b = xs[min(hi_i + 1, xs.size - 1)]
        fine = np.linspace(a, b, 10 * (hi_i - lo_i + 3))
        hf = g2(dist, params, fine) - fine
        sf = np.sign(hf)
        fchange = np.nonzero(sf[:-1] * sf[1:] < 0)[0]
        if fchange.size:
            for j in fchange:
                roots.append(float(_bisect(fn, fine[j], fine[j + 1], tol)))
            continue
        res = minimize_scalar(
            lambda x: abs(fn(x)), bounds=(a, b), method="bounded",
            options={"xatol": tol},
        )
        if abs(res.fun) <= NEAR_TANGENT_ROOT:
            roots.append(float(res.x))

    roots.sort()
    merged = []
    for r in roots:
        if merged and r - merged[-1] < 10 * tol:
            continue
        merged.append(r)
    return merged


def _group_runs(indices):
    """Yield (start, end) for maximal runs of consecutive integers."""
    if len(indices) == 0:
        return
    start = prev = int(indices[0])
    for i in indices[1:]:
        i = int(i)
        if i == prev + 1:
            prev = i
            continue
        yield start, prev
        start = prev = i
    yield start, prev


def min_positive_g2_fixed_point(
    dist, params, tol: float = DEFAULT_TOL, grid_size: int = DEFAULT_GRID
) -> float:
    """Smallest positive fixed point of g2 (all fixed points are positive)."""
    return find_all_g2_fixed_points(dist, params, grid_size, tol)[0]


def iterate_w_prime(dist, params, tol: float = DEFAULT_TOL, max_iter: int = MAX_ITERATIONS):
    """Iterate w'_{n+1} = g2(w'_n) from w'_0 = p.

    The iterates are nondecreasing and converge to the minimum positive
    fixed point; convergence is geometric away from the phase boundary, so
    the cap only bites at near-tangential parameters.  Returns
    (value, iterations).
    """
    w = params.p
    for n in range(1, max_iter + 1):
        w_next = g2(dist, params, w)
        if abs(w_next - w) < tol:
            return w_next, n
        w = w_next
    return w, max_iter


def solve_fixed_points(
    dist, params, tol: float = DEFAULT_TOL, grid_size: int = DEFAULT_GRID
) -> FixedPointReport:
    """Full fixed-point summary: alpha, w', all g2 fixed points, uniqueness."""
    alpha = find_alpha(dist, params, tol)
    points = find_all_g2_fixed_points(dist, params, grid_size, tol)
    w_prime = points[0]
    _, iters = iterate_w_prime(dist, params, tol)
    return FixedPointReport(
        alpha=alpha,
        w_prime=w_prime,
        all_g2_fixed_points=tuple(points),
        unique=(len(points) == 1),
        residual_alpha=abs(g(dist, params, alpha) - alpha),
        residual_w_prime=abs(g2(dist, params, w_prime) - w_prime),
        iterations_used=iters,
    )


def _clamp01(v: float, slack: float = 1e-9) -> float:
    if v < -slack or v > 1.0 + slack:
        raise ArithmeticError(f"probability {v} outside [0, 1] beyond tolerance")
    return min(max(v, 0.0), 1.0)


def outcome_probabilities(dist, params, tol: float = DEFAULT_TOL) -> OutcomeTriple:
    """Bond-game first-mover outcome probabilities.

    win = (w' - p)/(1-p-q), lose = ((1-q) - g(w'))/(1-p-q), draw the rest.
    """
    w_prime = min_positive_g2_fixed_point(dist, params, tol)
    s = params.safe
    win = (w_prime - params.p) / s
    lose = ((1.0 - params.q) - g(dist, params, w_prime)) / s
    draw = 1.0 - win - lose
    return OutcomeTriple(win=_clamp01(win), lose=_clamp01(lose), draw=_clamp01(draw))


def site_outcome_probabilities(dist, params, tol: float = DEFAULT_TOL) -> OutcomeTriple:
    """Site-game first-mover outcome probabilities.

    The site win probability equals w' itself, lose = q + (1-p-q)G(w'),
    and the site draw probability is (1-p-q) times the bond one.
    """
    w_tilde = min_positive_g2_fixed_point(dist, params, tol)
    lose = params.q + params.safe * dist.pgf(w_tilde)
    draw = 1.0 - w_tilde - lose
    return OutcomeTriple(win=_clamp01(w_tilde), lose=_clamp01(lose), draw=_clamp01(draw))
