import itertools
import math

import numpy as np
import pytest
from scipy import stats

import percgames as pg
from percgames import engine
from percgames.engine import Label, State

from conftest import named_families, random_params


def _hand_tree(dist, depth, labels, params=pg.ParamPair(0.2, 0.2)):
    """Deterministic skeleton for Dirac offspring with labels forced."""
    tree = engine.sample_tree(dist, depth, rng=np.random.default_rng(0))
    lab = engine.label_edges(tree, params, np.random.default_rng(0))
    lab.labels[1:] = labels
    return lab


class TestSampleTree:
    def test_dirac_shape(self, rng):
        tree = engine.sample_tree(pg.Dirac(2), 3, rng=rng)
        assert tree.n_vertices == 15
        assert list(tree.level_starts) == [0, 1, 3, 7, 15]
        assert list(tree.child_count[:7]) == [2] * 7
        assert list(tree.child_count[7:]) == [0] * 8

    def test_depth_zero(self, rng):
        tree = engine.sample_tree(pg.Poisson(2.5), 0, rng=rng)
        assert tree.n_vertices == 1
        assert tree.child_count[0] == 0

    def test_child_indices_consistent(self, rng):
        tree = engine.sample_tree(pg.Poisson(2.5), 5, rng=rng)
        for v in range(tree.n_vertices - 1):
            assert tree.child_start[v + 1] == tree.child_start[v] + tree.child_count[v]

    def test_vertex_cap(self, rng):
        with pytest.raises(engine.CappedTreeError):
            engine.sample_tree(pg.Dirac(3), 12, max_vertices=1000, rng=rng)

    def test_zerod_root_children_frequency(self, rng):
        hits = 0
        n = 10**4
        dist = pg.ZeroOrD(2, 0.7)
        for _ in range(n):
            hits += engine.sample_tree(dist, 1, rng=rng).child_count[0] == 2
        se = math.sqrt(0.7 * 0.3 / n)
        assert abs(hits / n - 0.7) < 3 * se


class TestLabels:
    def test_no_traps_when_p_zero(self, rng):
        tree = engine.sample_tree(pg.Dirac(2), 12, rng=rng)
        lab = engine.label_edges(tree, pg.ParamPair(0.0, 0.4), rng)
        assert not np.any(lab.labels[1:] == Label.TRAP)

    def test_safe_fraction(self, rng):
        # p = q = 0.25 on ~1e4 edges of depth-1 binary trees
        safe = total = 0
        for _ in range(5000):
            lab = engine.label_edges(
                engine.sample_tree(pg.Dirac(2), 1, rng=rng), pg.ParamPair(0.25, 0.25), rng
            )
            safe += int(np.sum(lab.labels[1:] == Label.SAFE))
            total += 2
        se = math.sqrt(0.5 * 0.5 / total)
        assert abs(safe / total - 0.5) < 3 * se

    def test_multinomial_chi_square(self, rng):
        params = pg.ParamPair(0.3, 0.15)
        tree = engine.sample_tree(pg.Dirac(2), 16, max_vertices=10**6, rng=rng)
        lab = engine.label_edges(tree, params, rng)
        edges = lab.labels[1:]
        assert edges.size >= 10**5
        counts = np.bincount(edges, minlength=3)
        expected = edges.size * np.array([params.p, params.q, params.safe])
        assert stats.chisquare(counts, expected).pvalue > 0.001


class TestClassifyBond:
    def test_depth1_hand_cases(self):
        t = _hand_tree(pg.Dirac(2), 1, [Label.TRAP, Label.TRAP])
        assert engine.classify_bond(t).root_state == State.L
        t = _hand_tree(pg.Dirac(2), 1, [Label.TRAP, Label.TARGET])
        assert engine.classify_bond(t).root_state == State.W
        t = _hand_tree(pg.Dirac(2), 1, [Label.TRAP, Label.SAFE])
        assert engine.classify_bond(t).root_state == State.D

    def test_all_safe_depth2_is_draw(self):
        t = _hand_tree(pg.Dirac(2), 2, [Label.SAFE] * 6)
        assert engine.classify_bond(t).root_state == State.D

    def test_depth0_root_is_D(self, rng):
        tree = engine.sample_tree(pg.Geometric(0.5), 0, rng=rng)
        lab = engine.label_edges(tree, pg.ParamPair(0.2, 0.2), rng)
        assert engine.classify_bond(lab).root_state == State.D

    def test_childless_interior_is_L(self, rng):
        # ZeroOrD root drawing 0 children: known leaf, mover stuck
        dist = pg.ZeroOrD(2, 0.7)
        for _ in range(200):
            tree = engine.sample_tree(dist, 2, rng=rng)
            if tree.child_count[0] == 0:
                lab = engine.label_edges(tree, pg.ParamPair(0.2, 0.2), rng)
                assert engine.classify_bond(lab).root_state == State.L
                return
        pytest.fail("never sampled a childless root")

    def test_deterministic(self, rng):
        tree = engine.sample_tree(pg.Poisson(2.5), 5, rng=rng)
        lab = engine.label_edges(tree, pg.ParamPair(0.2, 0.3), rng)
        a = engine.classify_bond(lab).states
        b = engine.classify_bond(lab).states
        assert np.array_equal(a, b)


class TestClassifySite:
    def test_single_vertex_labels(self, rng):
        # depth-1 tree whose root drew no children: own label decides
        dist = pg.ZeroOrD(2, 0.5)
        got = set()
        for _ in range(400):
            tree = engine.sample_tree(dist, 1, rng=rng)
            if tree.child_count[0] != 0:
                continue
            for label, want in [
                (Label.TRAP, State.W),
                (Label.TARGET, State.L),
                (Label.SAFE, State.L),  # childless safe loses for the mover
            ]:
                lab = engine.label_vertices(tree, pg.ParamPair(0.2, 0.2), rng)
                lab.labels[0] = label
                assert engine.classify_site(lab).root_state == want
                got.add(label)
            break
        assert got == {Label.TRAP, Label.TARGET, Label.SAFE}

    def test_horizon_safe_is_D(self, rng):
        tree = engine.sample_tree(pg.Dirac(2), 0, rng=rng)
        lab = engine.label_vertices(tree, pg.ParamPair(0.2, 0.2), rng)
        lab.labels[0] = Label.SAFE
        assert engine.classify_site(lab).root_state == State.D

    def test_safe_root_with_target_child(self, rng):
        tree = engine.sample_tree(pg.Dirac(1), 1, rng=rng)
        lab = engine.label_vertices(tree, pg.ParamPair(0.2, 0.2), rng)
        lab.labels[0] = Label.SAFE
        lab.labels[1] = Label.TARGET
        # target child is L for its mover, so moving onto it wins
        assert engine.classify_site(lab).root_state == State.W


class TestCoupling:
    def test_hand_traces(self):
        bond = _hand_tree(pg.Dirac(2), 1, [Label.TRAP, Label.TRAP])
        site = engine.couple_bond_to_site(bond)
        assert site.labels[0] == Label.SAFE
        assert list(site.labels[1:]) == [Label.TRAP, Label.TRAP]
        assert engine.classify_site(site).root_state == State.L

        bond = _hand_tree(pg.Dirac(2), 1, [Label.TRAP, Label.SAFE])
        assert engine.classify_bond(bond).root_state == State.D
        assert engine.classify_site(engine.couple_bond_to_site(bond)).root_state == State.D

    def test_exact_agreement_random(self, rng):
        fams = named_families()
        for i in range(600):
            dist = fams[i % len(fams)]
            depth = int(rng.integers(0, 7))
            params = random_params(rng, 0.05, 0.95)
            bond = engine.label_edges(engine.sample_tree(dist, depth, rng=rng), params, rng)
            site = engine.couple_bond_to_site(bond)
            assert (
                engine.classify_bond(bond).root_state
                == engine.classify_site(site).root_state
            )

    def test_requires_bond_tree(self, rng):
        tree = engine.sample_tree(pg.Dirac(2), 1, rng=rng)
        with pytest.raises(ValueError):
            engine.couple_bond_to_site(tree)


class TestRecurrence:
    def test_first_step_formulas(self):
        for dist in named_families():
            params = pg.ParamPair(0.15, 0.25)
            w1, l1 = engine.recurrence_wn_ln(dist, params, 1)
            assert w1 == pytest.approx(1.0 - dist.pgf(1.0 - params.q), abs=1e-14)
            assert l1 == pytest.approx(dist.pgf(params.p), abs=1e-14)

    def test_dirac2_hand_values(self):
        params = pg.ParamPair(0.2, 0.2)
        assert engine.recurrence_wn_ln(pg.Dirac(2), params, 1) == pytest.approx(
            (0.36, 0.04), abs=1e-12
        )
        assert engine.recurrence_wn_ln(pg.Dirac(2), params, 2) == pytest.approx(
            (0.397824, 0.173056), abs=1e-12
        )

    def test_monotone_and_convergent(self, rng):
        for dist in named_families():
            params = random_params(rng)
            prev_w = prev_l = 0.0
            for n in range(1, 101):
                w, l = engine.recurrence_wn_ln(dist, params, n)
                assert w >= prev_w - 1e-14
                assert l >= prev_l - 1e-14
                prev_w, prev_l = w, l
            out = pg.outcome_probabilities(dist, params)
            w100, l100 = engine.recurrence_wn_ln(dist, params, 100)
            assert w100 <= out.win + 1e-8
            assert l100 <= out.lose + 1e-8


def _enumerated_bond_outcome(support, depth, p, q):
    """Brute-force oracle: enumerate every (label, child state) combination
    of every generation and apply the game rule literally."""
    def rule(pairs):
        if not pairs:
            return "L"
        if any(lab == "target" for lab, _ in pairs):
            return "W"
        if any(lab == "safe" and st == "L" for lab, st in pairs):
            return "W"
        if any(lab == "safe" and st == "D" for lab, st in pairs):
            return "D"
        return "L"

    def level_dist(k):
        if k == 0:
            return {"W": 0.0, "L": 0.0, "D": 1.0}
        child = level_dist(k - 1)
        label_probs = [("trap", p), ("target", q), ("safe", 1.0 - p - q)]
        options = [
            ((lab, st), lp * child[st])
            for lab, lp in label_probs
            for st in ("W", "L", "D")
        ]
        out = {"W": 0.0, "L": 0.0, "D": 0.0}
        for m, chi_m in support.items():
            if chi_m == 0.0:
                continue
            for combo in itertools.product(options, repeat=m):
                weight = chi_m
                for _, w in combo:
                    weight *= w
                out[rule([c for c, _ in combo])] += weight
        return out

    dist = level_dist(depth)
    return dist["W"], dist["L"]


@pytest.mark.parametrize(
    "dist,support",
    [
        (pg.Dirac(2), {2: 1.0}),
        (pg.ZeroOrD(2, 0.7), {0: 0.3, 2: 0.7}),
    ],
    ids=["dirac2", "zerod"],
)
@pytest.mark.parametrize("depth", [0, 1, 2])
def test_enumeration_matches_recurrence(dist, support, depth, rng):
    for _ in range(4):
        params = random_params(rng)
        expected = _enumerated_bond_outcome(support, depth, params.p, params.q)
        got = engine.recurrence_wn_ln(dist, params, depth)
        assert got == pytest.approx(expected, abs=1e-12)


class TestMonteCarlo:
    def test_depth0_always_draw(self, rng):
        mc = engine.monte_carlo_outcomes(
            pg.Geometric(0.5), pg.ParamPair(0.2, 0.2), "bond", 0, 500, 1
        )
        assert mc.d_hat == 1.0

    def test_bond_depth1_dirac(self):
        mc = engine.monte_carlo_outcomes(
            pg.Dirac(2), pg.ParamPair(0.2, 0.2), "bond", 1, 20_000, 7
        )
        assert abs(mc.w_hat - 0.36) < 4 * mc.se_w
        assert abs(mc.l_hat - 0.04) < 4 * mc.se_l
        assert mc.w_n_exact == pytest.approx(0.36)

    def test_bond_matches_recurrence_cells(self, rng):
        for dist, depth in [(pg.Geometric(0.5), 6), (pg.Poisson(2.5), 4), (pg.ZeroOrD(2, 0.7), 5)]:
            params = random_params(rng, 0.1, 0.8)
            mc = engine.monte_carlo_outcomes(dist, params, "bond", depth, 8000, 3)
            assert abs(mc.w_hat - mc.w_n_exact) < 4 * max(mc.se_w, 1e-4)
            assert abs(mc.l_hat - mc.l_n_exact) < 4 * max(mc.se_l, 1e-4)

    def test_site_matches_truncated_law(self, rng):
        params = pg.ParamPair(0.15, 0.1)
        mc = engine.monte_carlo_outcomes(pg.Geometric(0.5), params, "site", 6, 10_000, 5)
        w, l, d = engine.site_truncated_root_law(pg.Geometric(0.5), params, 6)
        assert mc.w_n_exact == pytest.approx(w)
        assert abs(mc.w_hat - w) < 4 * max(mc.se_w, 1e-4)
        assert abs(mc.l_hat - l) < 4 * max(mc.se_l, 1e-4)
        assert abs(mc.d_hat - d) < 4 * max(mc.se_d, 1e-4)

    def test_reproducible_and_worker_invariant(self):
        kw = dict(mode="bond", depth=5, replicates=4000, rng_seed=11)
        a = engine.monte_carlo_outcomes(pg.Geometric(0.5), pg.ParamPair(0.1, 0.1), **kw)
        b = engine.monte_carlo_outcomes(pg.Geometric(0.5), pg.ParamPair(0.1, 0.1), **kw)
        c = engine.monte_carlo_outcomes(
            pg.Geometric(0.5), pg.ParamPair(0.1, 0.1), workers=2, **kw
        )
        assert a == b == c

    def test_cap_propagates(self):
        with pytest.raises(engine.CappedTreeError):
            engine.monte_carlo_outcomes(
                pg.Dirac(3), pg.ParamPair(0.1, 0.1), "bond", 15, 5, 1, max_vertices=500
            )


class TestSiteTruncatedLaw:
    def test_depth0(self):
        params = pg.ParamPair(0.3, 0.25)
        assert engine.site_truncated_root_law(pg.Dirac(2), params, 0) == pytest.approx(
            (0.3, 0.25, 0.45)
        )

    def test_converges_to_site_outcomes(self):
        params = pg.ParamPair(0.1, 0.1)
        w, l, d = engine.site_truncated_root_law(pg.Geometric(0.5), params, 60)
        site = pg.site_outcome_probabilities(pg.Geometric(0.5), params)
        assert w == pytest.approx(site.win, abs=1e-8)
        assert l == pytest.approx(site.lose, abs=1e-8)
        assert d == pytest.approx(site.draw, abs=1e-8)


class TestStabilization:
    def test_resolved_roots_never_flip(self, rng):
        fams = named_families()
        flips = 0
        for i in range(300):
            dist = fams[i % len(fams)]
            params = random_params(rng, 0.1, 0.9)
            n = int(rng.integers(1, 4))
            k = int(rng.integers(1, 3))
            full = engine.label_edges(engine.sample_tree(dist, n + k, rng=rng), params, rng)
            prefix = engine.truncated(full, n)
            root_prefix = engine.classify_bond(prefix).root_state
            root_full = engine.classify_bond(full).root_state
            if root_prefix in (State.W, State.L) and root_full != root_prefix:
                flips += 1
        assert flips == 0
