"""Global placement by weighted L1 linear programs with iterative match rejection."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from fragmenta.compatibility import EPS, MatchTable, Relation
from fragmenta.puzzle import Assembly, PuzzleSpec
from fragmenta.solvers.common import (
    EMPTY, check_inputs, empty_grid, fill_empty_cells, grid_to_assembly, trivial_assembly,
)
from fragmenta.solvers.greedy_tree import place_clusters

WEIGHT_CAP = 1e6
DEFAULT_TOP_K = 2
REJECT_THRESHOLD = 0.5
MAX_ROUNDS = 10


class DegenerateInstance(UserWarning):
    """An axis program had no constraints; every coordinate is left at zero."""


@dataclass
class MatchConstraint:
    i: int
    j: int
    delta: tuple[int, int]
    weight: float
    active: bool = True

    @property
    def relation(self) -> Relation:
        return Relation.LEFT_RIGHT if self.delta == (0, 1) else Relation.TOP_BOTTOM


@dataclass
class LpSolution:
    coords: np.ndarray
    objective: float
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))


def match_weight(table: MatchTable, rel: int, i: int, j: int) -> float:
    """Confidence of ``i`` then ``j`` under ``rel``, zero for ambiguous matches.

    The ratio of the tighter of the two second-best dissimilarities (i's
    forward, j's backward) to the match's own D, minus one, capped at
    ``WEIGHT_CAP``.
    """
    second = min(table.second_fwd[rel, i], table.second_bwd[rel, j])
    ratio = second / (table.D[rel, i, j] + EPS)
    if not np.isfinite(ratio):
        return WEIGHT_CAP
    return float(min(max(ratio - 1.0, 0.0), WEIGHT_CAP))


def build_lp_constraints(table: MatchTable, top_k: int = DEFAULT_TOP_K) -> list[MatchConstraint]:
    """Top-k lowest-D partners for every (piece, relation, direction), all active.

    A pair proposed in both orientations of one relation keeps only the
    lower-D orientation. Weights come from :func:`match_weight`.
    """
    if top_k < 1:
        raise ValueError("top_k must be at least 1")
    n = table.piece_count
    k = min(top_k, n - 1)
    found: set[tuple[int, int, int]] = set()
    for rel in Relation:
        D = table.D[rel]
        fwd = np.argsort(D, axis=1, kind="stable")[:, :k]
        bwd = np.argsort(D, axis=0, kind="stable")[:k, :]
        for i in range(n):
            found.update((int(rel), i, int(j)) for j in fwd[i])
            found.update((int(rel), int(a), i) for a in bwd[:, i])

    out = []
    for rel, i, j in sorted(found):
        if (rel, j, i) in found:
            d_here, d_rev = table.D[rel, i, j], table.D[rel, j, i]
            if d_rev < d_here or (d_rev == d_here and j < i):
                continue
        out.append(MatchConstraint(i, j, Relation(rel).delta, match_weight(table, rel, i, j)))
    return out


def _components(pairs: np.ndarray, n: int) -> np.ndarray:
    if len(pairs) == 0:
        return np.arange(n)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    return connected_components(graph, directed=False)[1]


def solve_lp_axis(constraints, n_pieces: int, axis: int = 1) -> LpSolution:
    """Minimise sum w * |x_j - x_i - delta| along one axis (0 = rows, 1 = cols).

    The lowest index of every connected component is pinned at 0. Solved
    exactly with a simplex method, so returned coordinates are a vertex of
    the feasible region.
    """
    active = [m for m in constraints if m.active]
    if not active:
        warnings.warn("no active constraints; coordinates left at zero", DegenerateInstance)
        return LpSolution(np.zeros(n_pieces), 0.0)
    m = len(active)
    pairs = np.array([(c.i, c.j) for c in active], dtype=np.int64)
    delta = np.array([c.delta[axis] for c in active], dtype=np.float64)
    weight = np.array([c.weight for c in active], dtype=np.float64)

    labels = _components(pairs, n_pieces)
    anchors = {}
    for idx in range(n_pieces):
        anchors.setdefault(labels[idx], idx)

    # variables: x (n), s_plus (m), s_minus (m)
    rows = np.repeat(np.arange(m), 4)
    cols = np.stack([pairs[:, 1], pairs[:, 0], n_pieces + np.arange(m),
                     n_pieces + m + np.arange(m)], axis=1).ravel()
    vals = np.tile([1.0, -1.0, -1.0, 1.0], m)
    a_eq = coo_matrix((vals, (rows, cols)), shape=(m, n_pieces + 2 * m)).tocsr()
    cost = np.concatenate([np.zeros(n_pieces), weight, weight])
    bounds = [(None, None)] * n_pieces + [(0, None)] * (2 * m)
    for idx in anchors.values():
        bounds[idx] = (0, 0)
    res = linprog(cost, A_eq=a_eq, b_eq=delta, bounds=bounds, method="highs-ds")
    if res.status != 0:
        raise RuntimeError(f"axis program failed: {res.message}")
    x = res.x[:n_pieces].copy()
    x[list(anchors.values())] = 0.0
    resid = x[pairs[:, 1]] - x[pairs[:, 0]] - delta
    return LpSolution(x, float(np.sum(weight * np.abs(resid))), resid)


def solve_positions(constraints, n_pieces: int, max_rounds: int = MAX_ROUNDS,
                    threshold: float = REJECT_THRESHOLD):
    """Alternate solving both axes and dropping matches that end up displaced.

    Returns ``(coords, rounds)`` with coords ``(n, 2)`` as (row, col).
    """
    rounds = 0
    coords = np.zeros((n_pieces, 2))
    while rounds < max_rounds:
        rounds += 1
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateInstance)
            rows = solve_lp_axis(constraints, n_pieces, axis=0)
            cols = solve_lp_axis(constraints, n_pieces, axis=1)
        coords = np.stack([rows.coords, cols.coords], axis=1)
        dropped = False
        for c in constraints:
            if not c.active:
                continue
            dr = coords[c.j, 0] - coords[c.i, 0] - c.delta[0]
            dc = coords[c.j, 1] - coords[c.i, 1] - c.delta[1]
            if abs(dr) + abs(dc) > threshold:
                c.active = False
                dropped = True
        if not dropped:
            break
    return coords, rounds


def candidate_translations(coords: np.ndarray, spec: PuzzleSpec) -> list[tuple[int, int]]:
    """Integer shifts putting the most rounded coordinates inside the frame, in (dr, dc) order."""
    cells = np.rint(coords).astype(np.int64)
    lo = cells.min(axis=0)
    hi = cells.max(axis=0)
    best, found = -1, []
    for dr in range(-hi[0], spec.rows - lo[0]):
        in_r = (cells[:, 0] + dr >= 0) & (cells[:, 0] + dr < spec.rows)
        for dc in range(-hi[1], spec.cols - lo[1]):
            inside = int((in_r & (cells[:, 1] + dc >= 0) & (cells[:, 1] + dc < spec.cols)).sum())
            if inside > best:
                best, found = inside, []
            if inside == best:
                found.append((int(dr), int(dc)))
    return found


def snap_to_grid(coords: np.ndarray, spec: PuzzleSpec,
                 shift: tuple[int, int] | None = None) -> np.ndarray:
    """Optimal injective assignment of shifted continuous positions to frame cells.

    Grid entries index into ``coords``. Cells nobody is assigned to stay
    empty. Without a ``shift``, the first of :func:`candidate_translations`.
    """
    if shift is None:
        shift = candidate_translations(coords, spec)[0]
    shifted = coords + np.array(shift)
    cell_r, cell_c = np.divmod(np.arange(spec.n_pieces), spec.cols)
    cost = (np.abs(shifted[:, 0:1] - cell_r[None, :])
            + np.abs(shifted[:, 1:2] - cell_c[None, :]))
    rows, cells = linear_sum_assignment(cost)
    grid = empty_grid(spec)
    grid[cell_r[cells], cell_c[cells]] = rows
    return grid


def frame_conflict(cells: np.ndarray, spec: PuzzleSpec) -> int:
    """How far a rigid group of rounded cells is from fitting the frame.

    Extent beyond R or C, plus the number of pieces sharing a cell.
    """
    span = cells.max(axis=0) - cells.min(axis=0) + 1
    over = max(int(span[0]) - spec.rows, 0) + max(int(span[1]) - spec.cols, 0)
    return over + len(cells) - len(np.unique(cells, axis=0))


def _bridges(n: int, edges: list[tuple[int, int]]) -> set[int]:
    """Indices of bridge edges in an undirected multigraph (parallel edges never are)."""
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for e, (a, b) in enumerate(edges):
        adj[a].append((b, e))
        adj[b].append((a, e))
    disc = [-1] * n
    low = [0] * n
    out = set()
    clock = 0
    for root in range(n):
        if disc[root] >= 0:
            continue
        disc[root] = low[root] = clock
        clock += 1
        stack = [(root, -1, iter(adj[root]))]
        while stack:
            node, via, it = stack[-1]
            for nxt, e in it:
                if e == via:
                    continue
                if disc[nxt] < 0:
                    disc[nxt] = low[nxt] = clock
                    clock += 1
                    stack.append((nxt, e, iter(adj[nxt])))
                    break
                low[node] = min(low[node], disc[nxt])
            else:
                stack.pop()
                if stack:
                    parent = stack[-1][0]
                    low[parent] = min(low[parent], low[node])
                    if low[node] > disc[parent]:
                        out.add(via)
    return out


def _side(start: int, adj: dict, skip: int) -> set[int]:
    seen = {start}
    todo = [start]
    while todo:
        node = todo.pop()
        for nxt, e in adj[node]:
            if e != skip and nxt not in seen:
                seen.add(nxt)
                todo.append(nxt)
    return seen


def prune_frame_conflicts(constraints, coords: np.ndarray, spec: PuzzleSpec) -> int:
    """Cut bridge matches that hold together groups too large for the frame.

    Within a rigid component that overflows R x C or stacks pieces on one
    cell, the bridge whose removal leaves the least total conflict is
    deactivated (ties to the lowest weight); repeated while it helps.
    Cutting a bridge never moves pieces relative to their own side, so
    coordinates need no re-solve. Returns the number of cuts.
    """
    cells = np.rint(coords).astype(np.int64)
    cuts = 0
    while True:
        active = [c for c in constraints if c.active]
        edges = [(c.i, c.j) for c in active]
        labels = _components(np.array(edges, dtype=np.int64).reshape(-1, 2), len(cells))
        bridges = _bridges(len(cells), edges)
        cut = None
        for label in np.unique(labels):
            members = np.flatnonzero(labels == label)
            current = frame_conflict(cells[members], spec)
            if current == 0:
                continue
            adj = {int(k): [] for k in members}
            for e, (a, b) in enumerate(edges):
                if labels[a] == label:
                    adj[a].append((b, e))
                    adj[b].append((a, e))
            best = None
            for e in sorted(bridges):
                a, b = edges[e]
                if labels[a] != label:
                    continue
                part = _side(a, adj, e)
                inside = np.isin(members, list(part))
                total = (frame_conflict(cells[members[inside]], spec)
                         + frame_conflict(cells[members[~inside]], spec))
                key = (total, active[e].weight, e)
                if best is None or key < best:
                    best = key
            if best is not None and best[0] < current:
                cut = active[best[2]]
                break
        if cut is None:
            return cuts
        cut.active = False
        cuts += 1


def layout_components(coords: np.ndarray, constraints, table: MatchTable,
                      spec: PuzzleSpec) -> np.ndarray:
    """Turn rigid components into a filled grid.

    The largest component is snapped by assignment under every translation
    that keeps the most of it inside the frame. For each, the other
    multi-piece components go where their boundary fits best and single
    pieces fill the rest greedily; the layout with the lowest seam cost wins.
    """
    n = len(coords)
    pairs = np.array([(c.i, c.j) for c in constraints if c.active], dtype=np.int64)
    labels = _components(pairs.reshape(-1, 2), n)
    groups = sorted((np.flatnonzero(labels == lab) for lab in np.unique(labels)),
                    key=lambda g: (-len(g), g[0]))
    cells = np.rint(coords).astype(np.int64)

    clusters = []
    leftovers = []
    for group in groups[1:]:
        if len(group) == 1:
            leftovers.append(int(group[0]))
            continue
        members = {}
        for k in group:
            cell = (int(cells[k, 0]), int(cells[k, 1]))
            if cell in members:
                leftovers.append(int(k))
            else:
                members[cell] = int(k)
        clusters.append(members)

    first = groups[0]
    starts = []
    for shift in candidate_translations(coords[first], spec):
        sub = snap_to_grid(coords[first], spec, shift)
        grid = np.where(sub == EMPTY, EMPTY, first[np.maximum(sub, 0)])
        placed = set(grid.ravel().tolist())
        starts.append((grid, [int(k) for k in first if k not in placed]))

    best = None
    for start, first_left in starts:
        grid, dropped = place_clusters(start, clusters, table)
        grid = fill_empty_cells(grid, sorted(leftovers + first_left + dropped), table)
        cost = seam_cost(grid, table)
        if best is None or cost < best[0]:
            best = (cost, grid)
    return best[1]


def seam_cost(grid: np.ndarray, table: MatchTable) -> float:
    """Summed dissimilarity over every adjacent pair of filled cells."""
    D = table.D
    total = 0.0
    left, right = grid[:, :-1], grid[:, 1:]
    ok = (left != EMPTY) & (right != EMPTY)
    total += float(D[Relation.LEFT_RIGHT, left[ok], right[ok]].sum())
    top, bottom = grid[:-1, :], grid[1:, :]
    ok = (top != EMPTY) & (bottom != EMPTY)
    total += float(D[Relation.TOP_BOTTOM, top[ok], bottom[ok]].sum())
    return total


def solve_lp(pieces, table: MatchTable | None, spec: PuzzleSpec,
             top_k: int = DEFAULT_TOP_K) -> Assembly:
    """Estimate all positions jointly, reject inconsistent matches, then place.

    After the rejection rounds, groups that cannot fit the frame lose their
    weakest bridging match, and the resulting rigid components are laid out.
    """
    if len(pieces) < 2:
        return trivial_assembly(pieces, spec)
    check_inputs(pieces, table, spec)
    constraints = build_lp_constraints(table, top_k)
    coords, _ = solve_positions(constraints, table.piece_count)
    prune_frame_conflicts(constraints, coords, spec)
    grid = layout_components(coords, constraints, table, spec)
    return grid_to_assembly(grid, table, spec)
