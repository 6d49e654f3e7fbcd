"""Kruskal-style greedy tree assembly over ratio-ordered matches."""
from __future__ import annotations

import numpy as np

from fragmenta.compatibility import MatchTable, Relation, ratio_matrix
from fragmenta.puzzle import Assembly, PuzzleSpec
from fragmenta.solvers.common import (
    EMPTY, LR, TB, check_inputs, empty_grid, fill_empty_cells, grid_to_assembly,
    trivial_assembly,
)
from fragmenta.solvers.forest import ClusterForest


def sorted_matches(table: MatchTable) -> np.ndarray:
    """All oriented matches as ``(rel, i, j)`` rows, most confident first.

    Ordered by ratio score, then raw D, then relation and indices.
    """
    ratios = ratio_matrix(table)
    rel, i, j = np.nonzero(np.isfinite(ratios))
    order = np.lexsort((j, i, rel, table.D[rel, i, j], ratios[rel, i, j]))
    return np.stack([rel[order], i[order], j[order]], axis=1)


def grow_clusters(table: MatchTable, spec: PuzzleSpec) -> ClusterForest:
    n = table.piece_count
    forest = ClusterForest(n)
    clusters = n
    for rel, i, j in sorted_matches(table):
        if forest.try_union(int(i), int(j), Relation(int(rel)).delta, spec.rows, spec.cols):
            clusters -= 1
            if clusters == 1:
                break
    return forest


def _boundary_cost(grid: np.ndarray, cells: dict, shift: tuple[int, int], D: np.ndarray):
    """Summed D and count of adjacencies between a shifted cluster and the grid."""
    rows, cols = grid.shape
    total = 0.0
    count = 0
    for (r, c), k in cells.items():
        r, c = r + shift[0], c + shift[1]
        if c > 0 and grid[r, c - 1] != EMPTY:
            total += D[LR, grid[r, c - 1], k]
            count += 1
        if c + 1 < cols and grid[r, c + 1] != EMPTY:
            total += D[LR, k, grid[r, c + 1]]
            count += 1
        if r > 0 and grid[r - 1, c] != EMPTY:
            total += D[TB, grid[r - 1, c], k]
            count += 1
        if r + 1 < rows and grid[r + 1, c] != EMPTY:
            total += D[TB, k, grid[r + 1, c]]
            count += 1
    return total, count


def _feasible_shifts(grid: np.ndarray, cells: dict):
    rows, cols = grid.shape
    rs = [r for r, _ in cells]
    cs = [c for _, c in cells]
    for dr in range(-min(rs), rows - max(rs)):
        for dc in range(-min(cs), cols - max(cs)):
            if all(grid[r + dr, c + dc] == EMPTY for r, c in cells):
                yield dr, dc


def place_clusters(grid: np.ndarray, clusters: list[dict], table: MatchTable):
    """Repeatedly place the (cluster, shift) with the lowest mean boundary D.

    Clusters that no longer fit anywhere are broken up; their pieces are
    returned for the final fill.
    """
    grid = grid.copy()
    leftovers = []
    pending = list(clusters)
    while pending:
        best = None
        still_fit = []
        for order, cells in enumerate(pending):
            fits = False
            for shift in _feasible_shifts(grid, cells):
                fits = True
                total, count = _boundary_cost(grid, cells, shift, table.D)
                mean = total / count if count else np.inf
                key = (mean, -len(cells), order, shift)
                if best is None or key < best[0]:
                    best = (key, cells, shift)
            if fits:
                still_fit.append(cells)
            else:
                leftovers.extend(cells.values())
        if best is None:
            break
        _, cells, (dr, dc) = best
        for (r, c), k in cells.items():
            grid[r + dr, c + dc] = k
        pending = [cells_ for cells_ in still_fit if cells_ is not cells]
    return grid, leftovers


def solve_greedy_tree(pieces, table: MatchTable | None, spec: PuzzleSpec) -> Assembly:
    """Merge clusters in ascending ratio-score order under the frame-size limit.

    The largest cluster is anchored top-left-most, the other multi-piece
    clusters are placed where their boundary fits best, and singletons fill
    the remaining cells.
    """
    if len(pieces) < 2:
        return trivial_assembly(pieces, spec)
    check_inputs(pieces, table, spec)
    forest = grow_clusters(table, spec)

    def sort_key(root):
        cells = forest.members(root)
        return (-len(cells), min(cells.values()))

    roots = sorted(forest.roots(), key=sort_key)
    grid = empty_grid(spec)
    largest = forest.members(roots[0])
    min_r = min(r for r, _ in largest)
    min_c = min(c for _, c in largest)
    for (r, c), k in largest.items():
        grid[r - min_r, c - min_c] = k

    multi = [forest.members(root) for root in roots[1:] if forest.size(root) > 1]
    singles = [k for root in roots[1:] if forest.size(root) == 1
               for k in forest.members(root).values()]
    grid, leftovers = place_clusters(grid, multi, table)
    grid = fill_empty_cells(grid, singles + leftovers, table)
    return grid_to_assembly(grid, table, spec)
