"""Grid helpers shared by the solvers.

A working grid is an ``(R, C)`` int array of table indices, ``-1`` for empty.
"""
from __future__ import annotations

import numpy as np

from fragmenta.compatibility import MatchTable, Relation
from fragmenta.puzzle import Assembly, PuzzleSpec

EMPTY = -1

LR = int(Relation.LEFT_RIGHT)
TB = int(Relation.TOP_BOTTOM)


def empty_grid(spec: PuzzleSpec) -> np.ndarray:
    return np.full((spec.rows, spec.cols), EMPTY, dtype=np.int64)


def neighbour_costs(grid: np.ndarray, cell: tuple[int, int], table: MatchTable,
                    candidates: np.ndarray) -> tuple[np.ndarray, int]:
    """Summed D between each candidate placed at ``cell`` and the placed neighbours.

    Returns the cost vector and the number of placed neighbours.
    """
    r, c = cell
    rows, cols = grid.shape
    D = table.D
    total = np.zeros(len(candidates))
    count = 0
    if c > 0 and grid[r, c - 1] != EMPTY:
        total += D[LR, grid[r, c - 1], candidates]
        count += 1
    if c + 1 < cols and grid[r, c + 1] != EMPTY:
        total += D[LR, candidates, grid[r, c + 1]]
        count += 1
    if r > 0 and grid[r - 1, c] != EMPTY:
        total += D[TB, grid[r - 1, c], candidates]
        count += 1
    if r + 1 < rows and grid[r + 1, c] != EMPTY:
        total += D[TB, candidates, grid[r + 1, c]]
        count += 1
    return total, count


def placed_neighbour_count(grid: np.ndarray) -> np.ndarray:
    filled = (grid != EMPTY).astype(np.int64)
    counts = np.zeros_like(filled)
    counts[1:, :] += filled[:-1, :]
    counts[:-1, :] += filled[1:, :]
    counts[:, 1:] += filled[:, :-1]
    counts[:, :-1] += filled[:, 1:]
    return counts


def fill_empty_cells(grid: np.ndarray, unplaced, table: MatchTable) -> np.ndarray:
    """Greedily drop leftover pieces into empty cells.

    The empty cell with the most placed neighbours (row-major on ties) takes
    the piece with the smallest summed D to those neighbours (lowest index on
    ties). Stops when either pieces or cells run out.
    """
    grid = grid.copy()
    remaining = sorted(int(u) for u in unplaced)
    while remaining:
        empty = grid == EMPTY
        if not empty.any():
            break
        counts = np.where(empty, placed_neighbour_count(grid), -1)
        flat = int(np.argmax(counts))
        cell = divmod(flat, grid.shape[1])
        cand = np.array(remaining)
        cost, _ = neighbour_costs(grid, cell, table, cand)
        pick = int(np.argmin(cost))
        grid[cell] = cand[pick]
        remaining.pop(pick)
    return grid


def grid_to_assembly(grid: np.ndarray, table: MatchTable | None, spec: PuzzleSpec,
                     ids=None) -> Assembly:
    ids = table.ids if table is not None else ids
    placements = {}
    for (r, c), k in np.ndenumerate(grid):
        if k != EMPTY:
            placements[int(ids[k])] = (int(r), int(c))
    return Assembly(placements, spec)


def trivial_assembly(pieces, spec: PuzzleSpec) -> Assembly:
    """Row-major placement used when there are fewer than two pieces."""
    return Assembly({p.id: spec.cell_of(k) for k, p in enumerate(pieces)}, spec)


def check_inputs(pieces, table: MatchTable, spec: PuzzleSpec) -> None:
    if len(pieces) > spec.n_pieces:
        raise ValueError(f"{len(pieces)} pieces do not fit a {spec.rows}x{spec.cols} frame")
    if tuple(p.id for p in pieces) != table.ids:
        raise ValueError("piece order does not match the match table")
