"""Sampled labeled trees and exact game solving by backward induction.

Trees are depth-truncated and stored as breadth-first arenas: children of
a vertex occupy a contiguous index range and each generation is a
contiguous block, so classification runs generation by generation from
the horizon up using vectorised segment reductions.  The same arena can
hold a whole forest (several independent trees side by side, one root
each at the front); Monte-Carlo runs exploit this to classify thousands
of replicate trees per numpy pass.

Bond rules (states are for the player about to move from the vertex):
  * horizon vertices are D: the game is not yet decided within the horizon;
  * a childless vertex is L: the mover is stuck and loses;
  * otherwise W if some outgoing edge is a target or some safe edge leads
    to an L child, else D if some safe edge leads to a D child, else L.

Site rules: a trap vertex is W and a target vertex is L outright (the
mover who entered it lost/won already); a safe vertex follows the same
child scan with vertex labels, a safe childless vertex is L, and a safe
horizon vertex is D.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from enum import IntEnum

import numpy as np

from .fixedpoint import ParamPair
from .offspring import OffspringDistribution

DEFAULT_MAX_VERTICES = 10**7
#: target number of arena vertices per Monte-Carlo chunk
_CHUNK_VERTEX_BUDGET = 2 * 10**6
_MAX_CHUNK = 4096
_MIN_CHUNK = 16


class CappedTreeError(RuntimeError):
    """A sampled tree exceeded max_vertices (supercritical blowup guard)."""


class Label(IntEnum):
    TRAP = 0
    TARGET = 1
    SAFE = 2


class State(IntEnum):
    W = 0
    L = 1
    D = 2


@dataclass
class LabeledTree:
    """Depth-truncated tree (or forest) with optional trap/target/safe labels.

    ``labels[v]`` is the label of the edge into v (bond mode, root slots
    unused) or of v itself (site mode).  ``level_starts[k]`` indexes the
    first vertex of generation k; generation 0 holds the ``n_roots`` roots.
    """

    depth: int
    child_start: np.ndarray
    child_count: np.ndarray
    level_starts: np.ndarray
    n_roots: int = 1
    mode: str | None = None  # None (skeleton), "bond", or "site"
    labels: np.ndarray | None = None

    @property
    def n_vertices(self) -> int:
        return self.child_count.size

    def level(self, k: int) -> slice:
        return slice(int(self.level_starts[k]), int(self.level_starts[k + 1]))


@dataclass(frozen=True)
class Classification:
    """Per-vertex W/L/D states from backward induction."""

    states: np.ndarray

    @property
    def root_state(self) -> State:
        return State(int(self.states[0]))


def _sample_forest(
    dist: OffspringDistribution,
    depth: int,
    n_trees: int,
    max_vertices: int,
    rng: np.random.Generator,
) -> LabeledTree:
    """Breadth-first skeletons for n_trees independent trees in one arena.

    Every vertex above the horizon draws an independent offspring count;
    horizon vertices draw none.  max_vertices bounds each tree separately.
    """
    counts_per_level = []
    level_sizes = [n_trees]
    per_tree = np.ones(n_trees, dtype=np.int64)
    tree_ids = np.arange(n_trees, dtype=np.int64)
    if max_vertices < 1:
        raise ValueError("max_vertices must be >= 1")
    for k in range(depth):
        n_level = level_sizes[k]
        if n_level == 0:
            counts_per_level.append(np.zeros(0, dtype=np.int64))
            level_sizes.append(0)
            continue
        m = np.asarray(dist.sample(rng, size=n_level), dtype=np.int64)
        per_tree += np.bincount(tree_ids, weights=m, minlength=n_trees).astype(np.int64)
        if np.any(per_tree > max_vertices):
            raise CappedTreeError(
                f"tree exceeded max_vertices = {max_vertices} at depth {k + 1}"
            )
        counts_per_level.append(m)
        tree_ids = np.repeat(tree_ids, m)
        level_sizes.append(int(m.sum()))

    counts_per_level.append(np.zeros(level_sizes[depth], dtype=np.int64))
    child_count = np.concatenate(counts_per_level)
    child_start = np.empty(child_count.size, dtype=np.int64)
    child_start[0] = n_trees
    np.cumsum(child_count[:-1], out=child_start[1:])
    child_start[1:] += n_trees
    level_starts = np.concatenate(([0], np.cumsum(level_sizes, dtype=np.int64)))
    return LabeledTree(
        depth=depth,
        child_start=child_start,
        child_count=child_count,
        level_starts=level_starts,
        n_roots=n_trees,
    )


def sample_tree(
    dist: OffspringDistribution,
    depth: int,
    max_vertices: int = DEFAULT_MAX_VERTICES,
    rng: np.random.Generator | None = None,
) -> LabeledTree:
    """Sample one unlabeled skeleton, truncated at ``depth``.

    Raises CappedTreeError once the running vertex total would exceed
    ``max_vertices``; the caller's remedy is a smaller depth.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    rng = np.random.default_rng() if rng is None else rng
    return _sample_forest(dist, depth, 1, max_vertices, rng)


def _draw_labels(n: int, params: ParamPair, rng) -> np.ndarray:
    u = rng.random(n)
    labels = np.full(n, Label.SAFE, dtype=np.int8)
    labels[u < params.p] = Label.TRAP
    labels[(u >= params.p) & (u < params.p + params.q)] = Label.TARGET
    return labels


def label_edges(tree: LabeledTree, params: ParamPair, rng) -> LabeledTree:
    """Independently label each edge trap (p) / target (q) / safe (rest)."""
    labels = _draw_labels(tree.n_vertices, params, rng)
    labels[: tree.n_roots] = Label.SAFE  # roots have no incoming edge
    return replace(tree, mode="bond", labels=labels)


def label_vertices(tree: LabeledTree, params: ParamPair, rng) -> LabeledTree:
    """Independently label each vertex trap / target / safe (site game)."""
    labels = _draw_labels(tree.n_vertices, params, rng)
    return replace(tree, mode="site", labels=labels)


def couple_bond_to_site(tree: LabeledTree) -> LabeledTree:
    """Site labeling coupled to a bond one: safe root, every other vertex
    inherits the label of the edge into it.  Root game states then agree
    realization by realization."""
    if tree.mode != "bond":
        raise ValueError("couple_bond_to_site needs a bond-labeled tree")
    labels = tree.labels.copy()
    labels[: tree.n_roots] = Label.SAFE
    return replace(tree, mode="site", labels=labels)


def _segment_any(flags: np.ndarray, rel_starts: np.ndarray, counts: np.ndarray):
    """Per-segment 'any' over contiguous child blocks (empty -> False)."""
    cs = np.concatenate(([0], np.cumsum(flags, dtype=np.int64)))
    return (cs[rel_starts + counts] - cs[rel_starts]) > 0


def classify_bond(tree: LabeledTree) -> Classification:
    if tree.mode != "bond":
        raise ValueError("classify_bond needs a bond-labeled tree")
    states = np.empty(tree.n_vertices, dtype=np.int8)
    states[tree.level(tree.depth)] = State.D
    for k in range(tree.depth - 1, -1, -1):
        vs = tree.level(k)
        kid_lo = int(tree.level_starts[k + 1])
        kid_hi = int(tree.level_starts[k + 2])
        labs = tree.labels[kid_lo:kid_hi]
        kids = states[kid_lo:kid_hi]
        counts = tree.child_count[vs]
        rel = tree.child_start[vs] - kid_lo
        safe = labs == Label.SAFE
        win = _segment_any((labs == Label.TARGET) | (safe & (kids == State.L)), rel, counts)
        draw = _segment_any(safe & (kids == State.D), rel, counts)
        states[vs] = np.where(
            counts == 0,
            State.L,
            np.where(win, State.W, np.where(draw, State.D, State.L)),
        )
    return Classification(states=states)


def classify_site(tree: LabeledTree) -> Classification:
    if tree.mode != "site":
        raise ValueError("classify_site needs a site-labeled tree")
    states = np.empty(tree.n_vertices, dtype=np.int8)

    hz = tree.level(tree.depth)
    hz_labels = tree.labels[hz]
    states[hz] = np.where(
        hz_labels == Label.TRAP,
        State.W,
        np.where(hz_labels == Label.TARGET, State.L, State.D),
    )
    for k in range(tree.depth - 1, -1, -1):
        vs = tree.level(k)
        kid_lo = int(tree.level_starts[k + 1])
        kid_hi = int(tree.level_starts[k + 2])
        kids = states[kid_lo:kid_hi]
        counts = tree.child_count[vs]
        rel = tree.child_start[vs] - kid_lo
        any_l = _segment_any(kids == State.L, rel, counts)
        any_d = _segment_any(kids == State.D, rel, counts)
        own = tree.labels[vs]
        safe_state = np.where(
            counts == 0,
            State.L,
            np.where(any_l, State.W, np.where(any_d, State.D, State.L)),
        )
        states[vs] = np.where(
            own == Label.TRAP,
            State.W,
            np.where(own == Label.TARGET, State.L, safe_state),
        )
    return Classification(states=states)


def truncated(tree: LabeledTree, depth: int) -> LabeledTree:
    """Prefix of a labeled tree down to a smaller depth (labels retained)."""
    if depth > tree.depth:
        raise ValueError("can only truncate to a smaller depth")
    n = int(tree.level_starts[depth + 1])
    child_count = tree.child_count[:n].copy()
    child_count[tree.level_starts[depth]: n] = 0
    return LabeledTree(
        depth=depth,
        child_start=tree.child_start[:n].copy(),
        child_count=child_count,
        level_starts=tree.level_starts[: depth + 2].copy(),
        n_roots=tree.n_roots,
        mode=tree.mode,
        labels=None if tree.labels is None else tree.labels[:n].copy(),
    )


def recurrence_wn_ln(dist, params: ParamPair, n: int):
    """Exact bond recursion after n levels.

    w_k = 1 - G((1-q) - (1-p-q) l_{k-1}) and l_k = G(p + (1-p-q) w_{k-1})
    from w_0 = l_0 = 0; both sequences are nondecreasing.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    w, l = 0.0, 0.0
    s = params.safe
    for _ in range(n):
        w, l = (
            1.0 - dist.pgf((1.0 - params.q) - s * l),
            dist.pgf(params.p + s * w),
        )
    return w, l


def site_truncated_root_law(dist, params: ParamPair, depth: int):
    """Exact (win, lose, draw) law of the root in the depth-truncated site game.

    The horizon marginal is (p, q, 1-p-q): traps and targets there resolve
    by their own label while safe horizon vertices stay undecided.  One
    generation down, a safe vertex wins if some child lost, draws if no
    child lost but some is undecided, and loses otherwise (including when
    childless).
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    s = params.safe
    w, l, d = params.p, params.q, s
    for _ in range(depth):
        safe_win = 1.0 - dist.pgf(1.0 - l)
        safe_draw = dist.pgf(w + d) - dist.pgf(w)
        w = params.p + s * safe_win
        d = s * safe_draw
        l = 1.0 - w - d
    return w, l, d


@dataclass(frozen=True)
class MonteCarloOutcomes:
    mode: str
    depth: int
    replicates: int
    seed: int
    counts: tuple  # (# roots W, # roots L, # roots D)
    w_hat: float
    l_hat: float
    d_hat: float
    se_w: float
    se_l: float
    se_d: float
    w_n_exact: float
    l_n_exact: float


def _expected_tree_size(dist, depth: int) -> float:
    m = dist.mean()
    total, level = 1.0, 1.0
    for _ in range(depth):
        level *= m
        total += level
        if total > 10 * _CHUNK_VERTEX_BUDGET:
            break
    return total


def _chunk_size(dist, depth: int) -> int:
    """Replicates per batched chunk; a function of (dist, depth) only, so
    chunking (and hence every drawn sample) never depends on worker count."""
    per_tree = max(_expected_tree_size(dist, depth), 1.0)
    return int(min(_MAX_CHUNK, max(_MIN_CHUNK, _CHUNK_VERTEX_BUDGET / per_tree)))


def _chunk_rng(seed: int, chunk_index: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(chunk_index,))
    )


def _run_chunked(worker, args_common, replicates: int, chunk: int, workers: int):
    spans = [
        (i, start, min(start + chunk, replicates))
        for i, start in enumerate(range(0, replicates, chunk))
    ]
    jobs = [args_common + span for span in spans]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(worker, jobs, chunksize=4))
    else:
        partials = [worker(j) for j in jobs]
    return partials


def _outcome_chunk(args):
    dist, params, mode, depth, max_vertices, seed, chunk_index, start, stop = args
    rng = _chunk_rng(seed, chunk_index)
    forest = _sample_forest(dist, depth, stop - start, max_vertices, rng)
    if mode == "bond":
        states = classify_bond(label_edges(forest, params, rng)).states
    else:
        states = classify_site(label_vertices(forest, params, rng)).states
    return np.bincount(states[: forest.n_roots], minlength=3)


def monte_carlo_outcomes(
    dist,
    params: ParamPair,
    mode: str,
    depth: int,
    replicates: int,
    rng_seed: int,
    max_vertices: int = DEFAULT_MAX_VERTICES,
    workers: int = 1,
) -> MonteCarloOutcomes:
    """Empirical root-state frequencies over independent labeled trees.

    Replicates are drawn in fixed-size batches, each from the stream
    derived from (rng_seed, batch index), so results do not depend on the
    worker count.
    """
    if mode not in ("bond", "site"):
        raise ValueError("mode must be 'bond' or 'site'")
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    if depth < 0:
        raise ValueError("depth must be >= 0")
    partials = _run_chunked(
        _outcome_chunk, (dist, params, mode, depth, max_vertices, rng_seed),
        replicates, _chunk_size(dist, depth), workers,
    )
    counts = np.sum(partials, axis=0)
    freqs = counts / replicates
    ses = np.sqrt(freqs * (1.0 - freqs) / replicates)
    if mode == "bond":
        w_exact, l_exact = recurrence_wn_ln(dist, params, depth)
    else:
        w_exact, l_exact, _ = site_truncated_root_law(dist, params, depth)
    return MonteCarloOutcomes(
        mode=mode,
        depth=depth,
        replicates=replicates,
        seed=rng_seed,
        counts=tuple(int(c) for c in counts),
        w_hat=float(freqs[State.W]),
        l_hat=float(freqs[State.L]),
        d_hat=float(freqs[State.D]),
        se_w=float(ses[State.W]),
        se_l=float(ses[State.L]),
        se_d=float(ses[State.D]),
        w_n_exact=w_exact,
        l_n_exact=l_exact,
    )
