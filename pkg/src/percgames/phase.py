"""Closed-form draw-free predicates and the max-derivative technique.

For each named offspring family the draw probability vanishes exactly when
a family-specific inequality LHS <= RHS holds; the margin RHS - LHS is
positive on the draw-free side.  The same boundary is characterised
analytically: the derivative of the two-round map g2 has a unique interior
maximiser x_c, and draw-free <=> (d/dx) g2(x_c) <= 1.  Both routes are
implemented and cross-validated against the generic numeric uniqueness
test from the fixedpoint module.

Family inequalities (draw-free iff LHS <= RHS):

    Binomial(d, pi):   (1-p-q) pi (1-pi*q)^(d-1)            <= (d+1)^(d-1) / d^d
    Poisson(lam):      (1-p-q) lam exp(-lam*q)               <= e
    NegBin(r, pi):     (r-1)^(r+1) (1-pi)(1-p-q) pi^r        <= (q+pi-q*pi)^(r+1) r^r
    ZeroOrD(d, pi):    (1-p-q) pi (pi(1-q)+p(1-pi))^(d-1)    <= (d+1)^(d-1) / d^d
    Dirac(d):          (1-p-q) (1-q)^(d-1)                   <= (d+1)^(d-1) / d^d
    Geometric(pi):     always draw-free (NegBin inequality at r = 1, LHS = 0)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import fixedpoint
from .fixedpoint import ParamPair
from .offspring import (
    Binomial,
    Dirac,
    Geometric,
    NegativeBinomial,
    OffspringDistribution,
    Poisson,
    ZeroOrD,
)

#: closed-form |margin| below which uniqueness verdicts are unreliable
BOUNDARY_BAND = 1e-4


class NoClosedFormError(ValueError):
    """The family has no closed-form draw-free inequality; use the numeric path."""


class NoCriticalPointError(ValueError):
    """The derivative of g2 has no interior maximiser for this family."""


@dataclass(frozen=True)
class PhaseVerdict:
    draw_free: bool
    margin: float
    boundary_indeterminate: bool
    source: str  # "closed_form" or "numeric_uniqueness"


@dataclass(frozen=True)
class CrossValidation:
    margin: float
    closed_form_draw_free: bool
    numeric_draw_free: bool
    boundary_skipped: bool
    agree: bool | None


def _regular_rhs_log(d: int) -> float:
    # log of (d+1)^(d-1) / d^d
    return (d - 1) * math.log(d + 1) - d * math.log(d)


def _margin(dist, params: ParamPair) -> float:
    """RHS - LHS of the family inequality, evaluated through logs."""
    p, q, s = params.p, params.q, params.safe
    if isinstance(dist, Binomial):
        lhs = math.exp(math.log(s) + math.log(dist.pi) + (dist.d - 1) * math.log1p(-dist.pi * q))
        return math.exp(_regular_rhs_log(dist.d)) - lhs
    if isinstance(dist, Dirac):
        lhs = math.exp(math.log(s) + (dist.d - 1) * math.log1p(-q))
        return math.exp(_regular_rhs_log(dist.d)) - lhs
    if isinstance(dist, Poisson):
        lhs = math.exp(math.log(s) + math.log(dist.lam) - dist.lam * q)
        return math.e - lhs
    if isinstance(dist, (NegativeBinomial, Geometric)):
        r = dist.r if isinstance(dist, NegativeBinomial) else 1
        pi = dist.pi
        rhs = math.exp((r + 1) * math.log(q + pi - q * pi) + r * math.log(r))
        if r == 1:
            return rhs
        lhs = math.exp(
            (r + 1) * math.log(r - 1)
            + math.log1p(-pi)
            + math.log(s)
            + r * math.log(pi)
        )
        return rhs - lhs
    if isinstance(dist, ZeroOrD):
        pi = dist.pi
        lhs = math.exp(
            math.log(s)
            + math.log(pi)
            + (dist.d - 1) * math.log(pi * (1.0 - q) + p * (1.0 - pi))
        )
        return math.exp(_regular_rhs_log(dist.d)) - lhs
    raise NoClosedFormError(
        f"{type(dist).__name__} has no closed-form draw-free condition; "
        "use the numeric uniqueness path (find_all_g2_fixed_points)"
    )


def closed_form_draw_free(dist, params: ParamPair) -> PhaseVerdict:
    """Closed-form draw-free verdict for the six named families."""
    margin = _margin(dist, params)
    return PhaseVerdict(
        draw_free=(margin >= 0.0),
        margin=margin,
        boundary_indeterminate=(abs(margin) < BOUNDARY_BAND),
        source="closed_form",
    )


def numeric_draw_free(
    dist, params: ParamPair, tol: float = fixedpoint.DEFAULT_TOL,
    grid_size: int = fixedpoint.DEFAULT_GRID,
) -> PhaseVerdict:
    """Draw-free verdict from uniqueness of g2's fixed point (any family)."""
    points = fixedpoint.find_all_g2_fixed_points(dist, params, grid_size, tol)
    unique = len(points) == 1
    return PhaseVerdict(
        draw_free=unique, margin=math.nan, boundary_indeterminate=False,
        source="numeric_uniqueness",
    )


def x_critical(dist, params: ParamPair) -> float:
    """Unique maximiser of d/dx g2(x) over the PGF domain.

    Defined for Binomial/Dirac (d >= 2), Poisson, NegativeBinomial (r >= 2)
    and ZeroOrD; the geometric-like and linear cases have no interior
    critical point.
    """
    p, q, s = params.p, params.q, params.safe
    if isinstance(dist, (Binomial, Dirac)):
        d = dist.d
        pi = dist.pi if isinstance(dist, Binomial) else 1.0
        if d < 2:
            raise NoCriticalPointError("Dirac(1) gives a linear g2; no critical point")
        t = (1.0 - pi * q) / ((d + 1) * pi * s)
        return (1.0 / pi) * t ** (1.0 / d) + 1.0 - 1.0 / pi
    if isinstance(dist, Poisson):
        lam = dist.lam
        return 1.0 - math.log(lam) / lam - math.log(s) / lam
    if isinstance(dist, NegativeBinomial):
        if dist.r == 1:
            raise NoCriticalPointError(
                "NegativeBinomial(1, pi) has monotone g2 derivative; no critical point"
            )
        r, pi = dist.r, dist.pi
        ratio = ((r - 1) * (1.0 - pi) * s) ** (1.0 / r) * pi / (q + pi - q * pi) ** (1.0 / r)
        x = (1.0 - ratio) / (1.0 - pi)
        # formula is derived inside [0, 1/(1-pi)); clamp roundoff excursions
        return min(max(x, 0.0), math.nextafter(dist.domain_sup, 0.0))
    if isinstance(dist, Geometric):
        raise NoCriticalPointError(
            "Geometric has monotone g2 derivative; no critical point"
        )
    if isinstance(dist, ZeroOrD):
        d, pi = dist.d, dist.pi
        return ((pi * (1.0 - q) + p * (1.0 - pi)) / (s * pi * (d + 1))) ** (1.0 / d)
    raise NoClosedFormError(f"{type(dist).__name__} has no closed-form critical point")


def g_extended(dist, params: ParamPair, x: float) -> float:
    """g(x) past [0, 1], via the PGF's analytic continuation."""
    return (1.0 - params.q) - params.safe * dist.pgf_unchecked(x)


def g2_extended(dist, params: ParamPair, x: float) -> float:
    return g_extended(dist, params, g_extended(dist, params, x))


def g2_derivative(dist, params: ParamPair, x: float) -> float:
    """d/dx g2(x) = (1-p-q)^2 G'(g(x)) G'(x) on the extended domain."""
    s = params.safe
    gx = g_extended(dist, params, x)
    return s * s * dist.pgf_derivative_unchecked(gx) * dist.pgf_derivative_unchecked(x)


def max_derivative_criterion(dist, params: ParamPair) -> float:
    """d/dx g2 at its maximiser; <= 1 exactly on the draw-free side."""
    return g2_derivative(dist, params, x_critical(dist, params))


def technique_inequalities(dist, params: ParamPair):
    """(g2(x_c) <= x_c, g(x_c) > x_c) at the critical point x_c.

    The first holds for every (p, q) in the parameter set; the second holds
    exactly when the max-derivative criterion exceeds 1.  A 1e-9 slack
    absorbs roundoff at equality cases.
    """
    xc = x_critical(dist, params)
    first = g2_extended(dist, params, xc) <= xc + 1e-9
    second = g_extended(dist, params, xc) > xc
    return first, second


def cross_validate(
    dist, params: ParamPair, tol: float = fixedpoint.DEFAULT_TOL
) -> CrossValidation:
    """Compare the closed-form verdict with numeric fixed-point uniqueness.

    Cells with |margin| < 1e-4 are skipped: a tangential fixed point makes
    both verdicts fragile there.
    """
    closed = closed_form_draw_free(dist, params)
    if closed.boundary_indeterminate:
        return CrossValidation(
            margin=closed.margin,
            closed_form_draw_free=closed.draw_free,
            numeric_draw_free=False,
            boundary_skipped=True,
            agree=None,
        )
    numeric = numeric_draw_free(dist, params, tol)
    return CrossValidation(
        margin=closed.margin,
        closed_form_draw_free=closed.draw_free,
        numeric_draw_free=numeric.draw_free,
        boundary_skipped=False,
        agree=(closed.draw_free == numeric.draw_free),
    )


@dataclass(frozen=True)
class GridCell:
    p: float
    q: float
    result: CrossValidation | None  # None when (p, q) falls outside I


@dataclass(frozen=True)
class GridSummary:
    cells_total: int
    cells_outside: int
    cells_skipped: int
    cells_checked: int
    cells_agreeing: int

    @property
    def agreement(self) -> float:
        return 1.0 if self.cells_checked == 0 else self.cells_agreeing / self.cells_checked


def phase_grid(dist, p_values, q_values, tol: float = fixedpoint.DEFAULT_TOL):
    """Cross-validate over a (p, q) grid; out-of-I points are skipped, not errors.

    Returns (cells, summary) with one cell per grid point in row-major
    (p outer, q inner) order.
    """
    cells = []
    outside = skipped = checked = agreeing = 0
    for p in p_values:
        for q in q_values:
            p, q = float(p), float(q)
            if not (0.0 < p + q < 1.0 and 0.0 <= p <= 1.0 and 0.0 <= q <= 1.0):
                outside += 1
                cells.append(GridCell(p=p, q=q, result=None))
                continue
            res = cross_validate(dist, ParamPair(p, q), tol)
            cells.append(GridCell(p=p, q=q, result=res))
            if res.boundary_skipped:
                skipped += 1
            else:
                checked += 1
                agreeing += int(res.agree)
    summary = GridSummary(
        cells_total=len(cells),
        cells_outside=outside,
        cells_skipped=skipped,
        cells_checked=checked,
        cells_agreeing=agreeing,
    )
    return cells, summary


def draw_free_verdict(dist, params: ParamPair, tol: float = fixedpoint.DEFAULT_TOL) -> str:
    """"draw-free", "positive-draw", or "boundary-indeterminate".

    Named families use the closed form and report the indeterminate band;
    anything else falls back to numeric uniqueness.
    """
    try:
        closed = closed_form_draw_free(dist, params)
    except NoClosedFormError:
        return "draw-free" if numeric_draw_free(dist, params, tol).draw_free else "positive-draw"
    if closed.boundary_indeterminate:
        return "boundary-indeterminate"
    return "draw-free" if closed.draw_free else "positive-draw"
