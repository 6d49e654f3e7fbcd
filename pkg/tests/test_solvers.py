import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fragmenta.compatibility import MatchTable, Relation, build_match_table
from fragmenta.evaluation import direct_comparison
from fragmenta.puzzle import Piece, PuzzleSpec, shuffle_pieces, slice_image
from fragmenta.solvers import SOLVERS, ClusterForest, get_solver
from fragmenta.solvers.lp import (
    WEIGHT_CAP, DegenerateInstance, MatchConstraint, build_lp_constraints, frame_conflict,
    match_weight, prune_frame_conflicts, snap_to_grid, solve_lp_axis, solve_positions,
)
from fragmenta.solvers.placer import confidence_stack

import oracles

LR, TB = (0, 1), (1, 0)


def _grid_table(rows, cols, seed=0, true_d=1.0, noise=(50.0, 100.0)):
    """Table over a rows x cols grid where every true adjacency is a unique minimum."""
    rng = np.random.default_rng(seed)
    n = rows * cols
    D = rng.uniform(*noise, size=(2, n, n))
    for k in range(n):
        r, c = divmod(k, cols)
        if c + 1 < cols:
            D[0, k, k + 1] = true_d
        if r + 1 < rows:
            D[1, k, k + cols] = true_d
    return MatchTable.from_dissimilarities(D)


def _pieces(n, s=4):
    return [Piece(k, np.zeros((s, s, 3), dtype=np.uint8)) for k in range(n)]


# ---------------------------------------------------------------- forest

def test_forest_union_and_collision():
    f = ClusterForest(4)
    assert f.try_union(0, 1, LR)
    assert f.try_union(1, 2, TB)
    assert f.position(2)[0] - f.position(0)[0] == 1
    assert not f.try_union(0, 2, LR)  # already one cluster
    # 3 to the left of 2 lands on the free cell below 0
    assert f.try_union(3, 2, LR)
    g = ClusterForest(3)
    g.try_union(0, 1, LR)
    # 0 to the right of 2 puts 2 on the cell 1 already holds
    assert not g.try_union(2, 0, (0, -1))
    assert g.size(g.find(2)[0]) == 1


def test_forest_bbox_limit():
    f = ClusterForest(3)
    assert f.try_union(0, 1, LR, max_rows=2, max_cols=2)
    assert not f.try_union(1, 2, LR, max_rows=2, max_cols=2)
    assert f.try_union(1, 2, TB, max_rows=2, max_cols=2)


@settings(max_examples=60, deadline=None)
@given(ops=st.lists(st.tuples(st.integers(0, 7), st.integers(0, 7), st.sampled_from([LR, TB])),
                    max_size=30))
def test_forest_preserves_offsets(ops):
    f = ClusterForest(8)
    for i, j, delta in ops:
        before = {}
        for a in range(8):
            for b in range(8):
                ra, pa = f.find(a)
                rb, pb = f.find(b)
                if ra == rb:
                    before[(a, b)] = (pb[0] - pa[0], pb[1] - pa[1])
        merged = f.try_union(i, j, delta, 4, 4)
        if merged:
            pi, pj = f.position(i), f.position(j)
            assert (pj[0] - pi[0], pj[1] - pi[1]) == delta
        for (a, b), rel in before.items():
            pa, pb = f.position(a), f.position(b)
            assert (pb[0] - pa[0], pb[1] - pa[1]) == rel
    for root in f.roots():
        cells = f.members(root)
        assert len(set(cells)) == len(cells) == f.size(root)
        for cell, k in cells.items():
            assert f.position(k) == cell
        rs = [r for r, _ in cells]
        cs = [c for _, c in cells]
        assert max(rs) - min(rs) < 4 and max(cs) - min(cs) < 4


# ---------------------------------------------------------------- LP

def test_lp_two_pieces():
    sol = solve_lp_axis([MatchConstraint(0, 1, LR, 1.0)], 2, axis=1)
    assert list(sol.coords) == [0.0, 1.0] and sol.objective == 0.0


def test_lp_chain():
    cons = [MatchConstraint(0, 1, LR, 2.0), MatchConstraint(1, 2, LR, 1.0)]
    sol = solve_lp_axis(cons, 3, axis=1)
    assert list(sol.coords) == [0.0, 1.0, 2.0] and sol.objective == 0.0


def test_lp_weighted_median():
    cons = [MatchConstraint(0, 1, LR, 3.0), MatchConstraint(0, 1, (0, 2), 1.0)]
    sol = solve_lp_axis(cons, 2, axis=1)
    assert sol.coords[1] == pytest.approx(1.0)
    assert sol.objective == pytest.approx(1.0)


def test_lp_degenerate_warns():
    with pytest.warns(DegenerateInstance):
        sol = solve_lp_axis([], 3)
    assert np.array_equal(sol.coords, np.zeros(3))


def test_lp_disconnected_anchors_each_component():
    cons = [MatchConstraint(1, 0, LR, 1.0), MatchConstraint(3, 2, TB, 1.0)]
    rows = solve_lp_axis(cons, 4, axis=0).coords
    cols = solve_lp_axis(cons, 4, axis=1).coords
    assert cols[0] == 0 and cols[1] == -1 and rows[2] == 0 and rows[3] == -1


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 4), data=st.data())
def test_lp_axis_exhaustive_property(n, data):
    m = data.draw(st.integers(1, 6))
    cons = []
    for _ in range(m):
        i = data.draw(st.integers(0, n - 1))
        j = data.draw(st.integers(0, n - 1).filter(lambda v: v != i))
        delta = data.draw(st.sampled_from([LR, TB]))
        w = data.draw(st.sampled_from([0.0, 0.5, 1.0, 2.0, 3.7]))
        cons.append(MatchConstraint(i, j, delta, w))
    for axis in (0, 1):
        sol = solve_lp_axis(cons, n, axis)
        assert sol.objective == pytest.approx(oracles.lp_exhaustive(n, cons, axis), abs=1e-9)


def _oracle_constraints(table, top_k):
    n = table.piece_count
    found = set()
    for rel in range(2):
        for i in range(n):
            fwd = sorted((table.D[rel, i, j], j) for j in range(n) if j != i)[:top_k]
            found |= {(rel, i, j) for _, j in fwd}
            bwd = sorted((table.D[rel, a, i], a) for a in range(n) if a != i)[:top_k]
            found |= {(rel, a, i) for _, a in bwd}
    kept = set()
    for rel, i, j in found:
        if (rel, j, i) in found:
            here, rev = table.D[rel, i, j], table.D[rel, j, i]
            if rev < here or (rev == here and j < i):
                continue
        kept.add((rel, i, j))
    return kept


@pytest.mark.parametrize("top_k", [1, 2, 3])
def test_constraints_match_enumeration(top_k, rng):
    table = MatchTable.from_dissimilarities(rng.uniform(0, 10, (2, 7, 7)))
    cons = build_lp_constraints(table, top_k)
    got = {(int(c.relation), c.i, c.j) for c in cons}
    assert got == _oracle_constraints(table, top_k)
    assert len(got) == len(cons)
    for c in cons:
        assert c.active and 0 <= c.weight <= WEIGHT_CAP
        assert c.weight == match_weight(table, int(c.relation), c.i, c.j)


def test_constraints_two_pieces():
    table = MatchTable.from_dissimilarities(np.array([[[0, 3.0], [5.0, 0]], [[0, 2.0], [1.0, 0]]]))
    cons = build_lp_constraints(table, 1)
    assert [(int(c.relation), c.i, c.j) for c in cons] == [(0, 0, 1), (1, 1, 0)]
    assert all(c.weight >= 1 for c in cons)


def test_perfect_match_weight_is_capped():
    D = np.full((2, 3, 3), 5.0)
    D[0, 0, 1] = 0.0
    table = MatchTable.from_dissimilarities(D)
    assert match_weight(table, 0, 0, 1) == WEIGHT_CAP
    # equally good alternatives carry no weight
    assert match_weight(table, 0, 1, 2) == 0.0


def test_consistent_instance_one_round():
    spec = PuzzleSpec(3, 3)
    table = _grid_table(3, 3)
    cons = build_lp_constraints(table, 1)
    cons = [c for c in cons if c.weight > 0]
    coords, rounds = solve_positions(cons, 9)
    assert rounds == 1
    grid = snap_to_grid(coords, spec)
    assert grid.ravel().tolist() == list(range(9))


def test_false_match_rejected_by_round_two():
    truth = {k: divmod(k, 3) for k in range(9)}
    cons = []
    for k, (r, c) in truth.items():
        if c < 2:
            cons.append(MatchConstraint(k, k + 1, LR, 10.0))
        if r < 2:
            cons.append(MatchConstraint(k, k + 3, TB, 10.0))
    bad = MatchConstraint(0, 8, LR, 1.0)
    cons.append(bad)
    coords, rounds = solve_positions(cons, 9)
    assert not bad.active and rounds == 2
    assert np.allclose(coords - coords[0], [truth[k] for k in range(9)])


def test_frame_conflict_and_pruning():
    spec = PuzzleSpec(2, 2)
    assert frame_conflict(np.array([[0, 0], [0, 1], [1, 0], [1, 1]]), spec) == 0
    assert frame_conflict(np.array([[0, 0], [0, 1], [0, 2]]), spec) == 1
    assert frame_conflict(np.array([[0, 0], [0, 0]]), spec) == 1
    # a 1x4 chain in a 2x2 frame: the weakest middle link is cut
    cons = [MatchConstraint(0, 1, LR, 5.0), MatchConstraint(1, 2, LR, 0.5),
            MatchConstraint(2, 3, LR, 5.0)]
    coords, _ = solve_positions(cons, 4)
    assert prune_frame_conflicts(cons, coords, spec) == 1
    assert [c.active for c in cons] == [True, False, True]


# ---------------------------------------------------------------- solvers

@pytest.mark.parametrize("name", sorted(SOLVERS))
def test_single_piece(name):
    piece = Piece(5, np.zeros((4, 4, 3), dtype=np.uint8))
    assembly = get_solver(name)([piece], None, PuzzleSpec(2, 2, 4))
    assert assembly.placements == {5: (0, 0)}


def test_unknown_solver():
    with pytest.raises(ValueError):
        get_solver("nope")


@pytest.mark.parametrize("name", sorted(SOLVERS))
def test_unique_minima_2x2(name):
    spec = PuzzleSpec(2, 2, 4)
    table = _grid_table(2, 2, seed=4)
    assembly = get_solver(name)(_pieces(4), table, spec)
    assert assembly.placements == {k: divmod(k, 2) for k in range(4)}


@pytest.mark.parametrize("name", sorted(SOLVERS))
def test_unique_minima_grid_shuffled(name):
    spec = PuzzleSpec(4, 5, 4)
    base = _grid_table(4, 5, seed=8)
    perm = np.random.default_rng(2).permutation(20)
    table = MatchTable.from_dissimilarities(base.D[:, perm][:, :, perm], ids=perm)
    pieces = [Piece(int(pid), np.zeros((4, 4, 3), dtype=np.uint8)) for pid in perm]
    assembly = get_solver(name)(pieces, table, spec)
    assert assembly.placements == {k: divmod(k, 5) for k in range(20)}


def test_placer_confidence_ties_are_not_confident():
    D = np.zeros((2, 3, 3))
    table = MatchTable.from_dissimilarities(D)
    conf = confidence_stack(table)
    off = ~np.eye(3, dtype=bool)
    assert np.allclose(conf[:, off], 0.0)


def test_solvers_recover_real_image():
    rng = np.random.default_rng(1)
    yy, xx = np.mgrid[0:128, 0:128]
    img = np.stack([xx * 1.5, yy * 1.7, 128 + 60 * np.sin(xx / 9.0) * np.cos(yy / 11.0)], axis=2)
    img = np.clip(img + rng.normal(0, 2, img.shape), 0, 255).astype(np.uint8)
    spec = PuzzleSpec(4, 4, 32)
    puzzle = shuffle_pieces(slice_image(img, spec), 3)
    for name, fn in SOLVERS.items():
        pieces = puzzle.visible_pieces
        table = build_match_table(pieces, "l1pred" if name == "paikin-tal" else "mgc")
        assert direct_comparison(fn(pieces, table, spec), puzzle) == 100.0, name


@settings(max_examples=25, deadline=None)
@given(rows=st.integers(2, 5), cols=st.integers(2, 5), missing=st.integers(0, 4),
       zeros=st.booleans(), seed=st.integers(0, 2**32 - 1))
def test_solvers_total_injective_deterministic(rows, cols, missing, zeros, seed):
    spec = PuzzleSpec(rows, cols, 4)
    n = max(2, rows * cols - missing)
    rng = np.random.default_rng(seed)
    D = rng.uniform(0, 10, (2, n, n))
    if zeros:
        D[rng.random(D.shape) < 0.3] = 0.0
    ids = rng.permutation(rows * cols)[:n]
    table = MatchTable.from_dissimilarities(D, ids=ids)
    pieces = [Piece(int(pid), np.zeros((4, 4, 3), dtype=np.uint8)) for pid in ids]
    for name, fn in SOLVERS.items():
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateInstance)
            a = fn(pieces, table, spec)
            b = fn(pieces, table, spec)
        assert a.placements == b.placements, name
        assert set(a.placements) == {int(p) for p in ids}, name
        assert len(set(a.placements.values())) == n
        assert all(spec.contains(cell) for cell in a.placements.values())
