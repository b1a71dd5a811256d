"""Expected game duration: exact series and Monte-Carlo cross-check.

In a draw-free regime the game length T (the index of the round in which
the outcome is realised; a mover stuck at a childless vertex still burns
that round) satisfies P(T >= n+1) = 1 - w_n - l_n, so

    E[T] = 1 + (1 - p - q)^-1 * sum_{n>=1} [(w' - w'_n) + (l' - l'_n)],

with w'_n = p + (1-p-q) w_n and l'_n = (1-p-q) l_n from the exact bond
recursion.  The terms decay geometrically at rate
rho = max(g2'(w'), |g'(w')|) whenever rho < 1, which bounds the
truncation error; rho < 1 is also the sufficient condition for E[T] to be
finite in the first place.

Monte-Carlo durations come from backward induction under optimal play:
the winner picks the fastest winning continuation, the loser the slowest
losing one, crossing a trap ends the game on the spot, and horizon
vertices stay unresolved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import engine, fixedpoint
from .engine import Label, LabeledTree, State
from .fixedpoint import ParamPair

#: draw probabilities at or below this count as zero
DRAW_ZERO_TOL = 1e-8
TAIL_SAFETY = 1.05
MAX_TERMS = 10**6


class PositiveDrawError(ValueError):
    """Raised when the draw probability is positive: E[T] is infinite."""


@dataclass(frozen=True)
class DurationReport:
    series_value: float | None
    status: str  # "converged" or "indeterminate"
    terms_used: int
    tail_bound: float
    derivative_g2_at_wprime: float
    derivative_g_at_wprime_abs: float
    criterion_met: bool


@dataclass(frozen=True)
class DurationMC:
    mean: float | None
    se: float | None
    unresolved_fraction: float
    resolved: int
    replicates: int
    depth: int
    seed: int


def expected_duration_series(
    dist, params: ParamPair, tol: float = 1e-10, max_terms: int = MAX_TERMS
) -> DurationReport:
    """Sum the duration series with a geometric tail bound.

    Truncates once the running term drops below tol*(1-rho)/rho, so the
    discarded tail is below tol; the reported tail_bound carries a 1.05
    safety factor.  If rho >= 1 the sum may not converge and the report
    comes back "indeterminate" after max_terms.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    outcome = fixedpoint.outcome_probabilities(dist, params)
    if outcome.draw > DRAW_ZERO_TOL:
        raise PositiveDrawError(
            f"draw probability {outcome.draw} is positive: "
            "duration undefined under optimal-draw play"
        )
    s = params.safe
    w_prime = fixedpoint.min_positive_g2_fixed_point(dist, params)
    l_prime = (1.0 - params.q) - fixedpoint.g(dist, params, w_prime)

    deriv_g_abs = s * dist.pgf_derivative(w_prime)
    deriv_g2 = deriv_g_abs * deriv_g_abs  # g(w') = w' in a draw-free regime
    rho = max(deriv_g2, deriv_g_abs)
    criterion_met = deriv_g2 < 1.0 and deriv_g_abs < 1.0

    cutoff = tol * (1.0 - rho) / rho if rho < 1.0 else 0.0
    total = 1.0
    term = math.inf
    w = l = 0.0
    n = 0
    converged = False
    while n < max_terms:
        n += 1
        w, l = (
            1.0 - dist.pgf((1.0 - params.q) - s * l),
            dist.pgf(params.p + s * w),
        )
        w_n_prime = params.p + s * w
        l_n_prime = s * l
        term = max(((w_prime - w_n_prime) + (l_prime - l_n_prime)) / s, 0.0)
        total += term
        if rho < 1.0 and (term < cutoff or term == 0.0):
            converged = True
            break

    if converged:
        tail = TAIL_SAFETY * term * rho / (1.0 - rho)
        return DurationReport(
            series_value=total,
            status="converged",
            terms_used=n,
            tail_bound=tail,
            derivative_g2_at_wprime=deriv_g2,
            derivative_g_at_wprime_abs=deriv_g_abs,
            criterion_met=criterion_met,
        )
    # rho >= 1 (or the cap was too tight): no geometric tail certificate
    return DurationReport(
        series_value=None,
        status="indeterminate",
        terms_used=n,
        tail_bound=math.inf,
        derivative_g2_at_wprime=deriv_g2,
        derivative_g_at_wprime_abs=deriv_g_abs,
        criterion_met=criterion_met,
    )


def _segment_reduce(vals, rel_starts, counts, ufunc, identity):
    """Per-segment reduce over contiguous child blocks (empty -> identity).

    Empty segments contribute zero width, so the starts of the non-empty
    ones alone delimit each other exactly; reduceat runs over those.
    """
    out = np.full(rel_starts.size, identity, dtype=vals.dtype)
    nonempty = counts > 0
    if vals.size == 0 or not nonempty.any():
        return out
    out[nonempty] = ufunc.reduceat(vals, rel_starts[nonempty])
    return out


def optimal_durations(tree: LabeledTree, classification) -> np.ndarray:
    """Optimal-play game length from every resolved vertex (bond game).

    Entry v is the number of rounds the game lasts when started at v with
    both sides playing optimally; unresolved (D) vertices get -1.  The
    winner minimises over winning moves (a target edge wins in the same
    round); the loser maximises over the forced continuations, where a
    trap edge adds nothing beyond the round it is crossed in and a stuck
    mover burns one round.
    """
    if tree.mode != "bond":
        raise ValueError("optimal_durations needs a bond-labeled tree")
    states = classification.states
    dur = np.full(tree.n_vertices, -1, dtype=np.int64)
    big = np.iinfo(np.int64).max // 4

    for k in range(tree.depth - 1, -1, -1):
        vs = tree.level(k)
        kid_lo = int(tree.level_starts[k + 1])
        kid_hi = int(tree.level_starts[k + 2])
        labs = tree.labels[kid_lo:kid_hi]
        kids = states[kid_lo:kid_hi]
        kid_dur = dur[kid_lo:kid_hi]
        counts = tree.child_count[vs]
        rel = tree.child_start[vs] - kid_lo
        safe = labs == Label.SAFE

        has_target = engine._segment_any(labs == Label.TARGET, rel, counts)
        win_candidates = np.where(safe & (kids == State.L), kid_dur, big)
        fastest_win = _segment_reduce(win_candidates, rel, counts, np.minimum, big)
        lose_candidates = np.where(
            labs == Label.TRAP, 0, np.where(safe & (kids == State.W), kid_dur, -big)
        )
        slowest_loss = _segment_reduce(lose_candidates, rel, counts, np.maximum, 0)

        lvl_states = states[vs]
        lvl_dur = np.full(lvl_states.size, -1, dtype=np.int64)
        w_mask = lvl_states == State.W
        l_mask = lvl_states == State.L
        lvl_dur[w_mask] = np.where(has_target[w_mask], 1, 1 + fastest_win[w_mask])
        lvl_dur[l_mask] = 1 + slowest_loss[l_mask]
        dur[vs] = lvl_dur
    return dur


def _duration_chunk(args):
    dist, params, depth, max_vertices, seed, chunk_index, start, stop = args
    rng = engine._chunk_rng(seed, chunk_index)
    forest = engine._sample_forest(dist, depth, stop - start, max_vertices, rng)
    labeled = engine.label_edges(forest, params, rng)
    classification = engine.classify_bond(labeled)
    durs = optimal_durations(labeled, classification)[: forest.n_roots]
    resolved = classification.states[: forest.n_roots] != State.D
    picked = durs[resolved]
    return int(resolved.sum()), int(picked.sum()), int((picked * picked).sum())


def monte_carlo_duration(
    dist,
    params: ParamPair,
    depth: int,
    replicates: int,
    rng_seed: int,
    max_vertices: int = engine.DEFAULT_MAX_VERTICES,
    workers: int = 1,
) -> DurationMC:
    """Mean optimal-play duration among games resolved within the horizon.

    Roots still undecided at the truncation depth are excluded and
    reported through unresolved_fraction; in a draw-free regime that
    fraction vanishes as the depth grows and the mean approaches the
    series value.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    partials = engine._run_chunked(
        _duration_chunk, (dist, params, depth, max_vertices, rng_seed),
        replicates, engine._chunk_size(dist, depth), workers,
    )
    n_resolved = sum(p[0] for p in partials)
    total = sum(p[1] for p in partials)
    total_sq = sum(p[2] for p in partials)
    if n_resolved == 0:
        return DurationMC(
            mean=None, se=None, unresolved_fraction=1.0, resolved=0,
            replicates=replicates, depth=depth, seed=rng_seed,
        )
    mean = total / n_resolved
    var = max(total_sq / n_resolved - mean * mean, 0.0)
    se = math.sqrt(var / n_resolved)
    return DurationMC(
        mean=mean,
        se=se,
        unresolved_fraction=1.0 - n_resolved / replicates,
        resolved=n_resolved,
        replicates=replicates,
        depth=depth,
        seed=rng_seed,
    )
