import numpy as np
import pytest

import percgames as pg
from percgames import duration, engine
from percgames.engine import Label, State

from conftest import named_families, random_params

GEO = pg.Geometric(0.5)
GEO_PP = pg.ParamPair(0.1, 0.1)


class TestSeries:
    def test_linear_chain_closed_form(self):
        # Dirac(1), p = q = 0.3: the token walks a path and stops at the
        # first non-safe edge, so T is geometric and E[T] = 1/0.6 = 5/3.
        rep = duration.expected_duration_series(pg.Dirac(1), pg.ParamPair(0.3, 0.3))
        assert rep.status == "converged"
        assert rep.series_value == pytest.approx(5.0 / 3.0, abs=1e-8)
        assert rep.derivative_g_at_wprime_abs == pytest.approx(0.4, abs=1e-10)
        assert rep.derivative_g2_at_wprime == pytest.approx(0.16, abs=1e-10)
        assert rep.criterion_met

    def test_geometric_anchor(self):
        rep = duration.expected_duration_series(GEO, GEO_PP)
        assert rep.status == "converged"
        # |g'(0.4)| = 0.8 * G'(0.4) = 0.8 * 0.25/0.64
        assert rep.derivative_g_at_wprime_abs == pytest.approx(0.3125, abs=1e-9)
        assert rep.derivative_g2_at_wprime == pytest.approx(0.3125**2, abs=1e-9)
        assert rep.criterion_met
        assert rep.series_value > 1.0

    def test_positive_draw_raises(self):
        with pytest.raises(duration.PositiveDrawError):
            duration.expected_duration_series(pg.Dirac(2), pg.ParamPair(0.01, 0.01))

    def test_tolerance_halving_within_tail_bound(self):
        for dist, params in [(GEO, GEO_PP), (pg.Dirac(2), pg.ParamPair(0.4, 0.2))]:
            coarse = duration.expected_duration_series(dist, params, tol=1e-6)
            fine = duration.expected_duration_series(dist, params, tol=5e-7)
            assert abs(fine.series_value - coarse.series_value) < coarse.tail_bound

    def test_tail_bound_overestimates_remainder(self):
        coarse = duration.expected_duration_series(GEO, GEO_PP, tol=1e-5)
        precise = duration.expected_duration_series(GEO, GEO_PP, tol=1e-12)
        assert abs(precise.series_value - coarse.series_value) <= coarse.tail_bound

    def test_partial_sums_monotone_in_tol(self):
        vals = [
            duration.expected_duration_series(GEO, GEO_PP, tol=t).series_value
            for t in (1e-4, 1e-6, 1e-8, 1e-10)
        ]
        assert all(b >= a - 1e-15 for a, b in zip(vals, vals[1:]))

    def test_indeterminate_without_tail_certificate(self):
        import math

        rep = duration.expected_duration_series(GEO, GEO_PP, max_terms=3)
        assert rep.status == "indeterminate"
        assert rep.series_value is None
        assert math.isinf(rep.tail_bound)
        assert rep.terms_used == 3


def _hand(labels):
    tree = engine.sample_tree(pg.Dirac(2), 1, rng=np.random.default_rng(0))
    lab = engine.label_edges(tree, pg.ParamPair(0.2, 0.2), np.random.default_rng(0))
    lab.labels[1:] = labels
    return lab


class TestOptimalDurations:
    def test_depth1_hand_cases(self):
        for labels, want in [
            ([Label.TRAP, Label.TRAP], 1),  # forced onto a trap in round 1
            ([Label.TARGET, Label.TRAP], 1),  # winner wraps up immediately
        ]:
            tree = _hand(labels)
            cls = engine.classify_bond(tree)
            assert duration.optimal_durations(tree, cls)[0] == want

    def test_loser_delays(self):
        # root: safe edge to a child that loses in 1, trap edge.
        # The loser at the child prefers its stuck round over nothing; the
        # winner at the root must still go through the safe edge.
        tree = engine.sample_tree(pg.Dirac(2), 2, rng=np.random.default_rng(3))
        lab = engine.label_edges(tree, pg.ParamPair(0.2, 0.2), np.random.default_rng(3))
        lab.labels[1:] = [Label.SAFE, Label.TRAP, Label.TRAP, Label.TRAP,
                          Label.SAFE, Label.SAFE]
        cls = engine.classify_bond(lab)
        assert cls.root_state == State.W
        assert duration.optimal_durations(lab, cls)[0] == 2

    def test_resolved_durations_at_least_one(self, rng):
        fams = named_families()
        for i in range(150):
            dist = fams[i % len(fams)]
            params = random_params(rng, 0.1, 0.9)
            tree = engine.label_edges(
                engine.sample_tree(dist, int(rng.integers(0, 5)), rng=rng), params, rng
            )
            cls = engine.classify_bond(tree)
            durs = duration.optimal_durations(tree, cls)
            resolved = cls.states != State.D
            assert np.all(durs[resolved] >= 1)
            assert np.all(durs[~resolved] == -1)


class TestMonteCarlo:
    def test_matches_series_geometric(self):
        series = duration.expected_duration_series(GEO, GEO_PP)
        mc = duration.monte_carlo_duration(GEO, GEO_PP, 30, 20_000, 9)
        assert mc.unresolved_fraction < 1e-3
        assert abs(mc.mean - series.series_value) < 4 * mc.se

    def test_matches_closed_form_linear_chain(self):
        mc = duration.monte_carlo_duration(pg.Dirac(1), pg.ParamPair(0.3, 0.3), 40, 20_000, 4)
        assert mc.unresolved_fraction < 1e-3
        assert abs(mc.mean - 5.0 / 3.0) < 4 * mc.se

    def test_reproducible_and_worker_invariant(self):
        kw = dict(depth=15, replicates=5000, rng_seed=21)
        a = duration.monte_carlo_duration(GEO, GEO_PP, **kw)
        b = duration.monte_carlo_duration(GEO, GEO_PP, **kw)
        c = duration.monte_carlo_duration(GEO, GEO_PP, workers=2, **kw)
        assert a == b == c

    def test_unresolved_fraction_reported(self):
        # shallow horizon in a draw-heavy regime leaves most games unresolved
        mc = duration.monte_carlo_duration(
            pg.Dirac(2), pg.ParamPair(0.01, 0.01), 4, 2000, 2
        )
        assert mc.unresolved_fraction > 0.5
        assert mc.resolved == round((1 - mc.unresolved_fraction) * mc.replicates)
