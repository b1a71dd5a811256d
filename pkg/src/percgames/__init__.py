"""Percolation games on Galton-Watson trees.

Exact win/loss/draw probabilities through fixed points of the PGF-based
game map, closed-form draw-free phase boundaries for the named offspring
families, Monte-Carlo game solving on sampled labeled trees, a
probabilistic tree automaton with an ergodicity probe, and expected game
durations.
"""

__version__ = "0.1.0"

from .duration import (
    DurationMC,
    DurationReport,
    PositiveDrawError,
    expected_duration_series,
    monte_carlo_duration,
)
from .engine import (
    CappedTreeError,
    Classification,
    Label,
    LabeledTree,
    MonteCarloOutcomes,
    State,
    classify_bond,
    classify_site,
    couple_bond_to_site,
    label_edges,
    label_vertices,
    monte_carlo_outcomes,
    recurrence_wn_ln,
    sample_tree,
    site_truncated_root_law,
)
from .fixedpoint import (
    FixedPointReport,
    OutcomeTriple,
    ParamPair,
    find_all_g2_fixed_points,
    find_alpha,
    g,
    g2,
    min_positive_g2_fixed_point,
    outcome_probabilities,
    site_outcome_probabilities,
    solve_fixed_points,
)
from .offspring import (
    Binomial,
    Dirac,
    DomainError,
    FiniteSupport,
    Geometric,
    NegativeBinomial,
    OffspringDistribution,
    Poisson,
    ZeroOrD,
    parse_distribution,
)
from .phase import (
    NoClosedFormError,
    NoCriticalPointError,
    PhaseVerdict,
    closed_form_draw_free,
    cross_validate,
    max_derivative_criterion,
    phase_grid,
    technique_inequalities,
    x_critical,
)
from .pta import (
    BoundaryConfig,
    LevelCapError,
    UpdateMatrix,
    ergodicity_probe,
    propagate,
    root_law,
    tv_distance_estimate,
)

__all__ = [name for name in dir() if not name.startswith("_")]
