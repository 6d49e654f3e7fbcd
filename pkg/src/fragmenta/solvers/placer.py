"""Best-buddy seeded greedy placement with a frontier of open slots."""
from __future__ import annotations

import numpy as np

from fragmenta.compatibility import EPS, MatchTable, best_buddies
from fragmenta.puzzle import Assembly, PuzzleSpec
from fragmenta.solvers.common import (
    EMPTY, LR, TB, check_inputs, empty_grid, fill_empty_cells, grid_to_assembly,
    trivial_assembly,
)

# neighbour directions as (drow, dcol); index into the confidence stack
RIGHT, LEFT, BELOW, ABOVE = range(4)
STEPS = {RIGHT: (0, 1), LEFT: (0, -1), BELOW: (1, 0), ABOVE: (-1, 0)}


def confidence_stack(table: MatchTable) -> np.ndarray:
    """``conf[d, p, c]``: confidence that candidate c sits in direction d of placed p.

    ``1 - D / (second best of p in that direction + eps)``.
    """
    D = table.D
    conf = np.empty((4,) + D.shape[1:])
    with np.errstate(invalid="ignore"):
        conf[RIGHT] = 1.0 - (D[LR] + EPS) / (table.second_fwd[LR][:, None] + EPS)
        conf[LEFT] = 1.0 - (D[LR].T + EPS) / (table.second_bwd[LR][:, None] + EPS)
        conf[BELOW] = 1.0 - (D[TB] + EPS) / (table.second_fwd[TB][:, None] + EPS)
        conf[ABOVE] = 1.0 - (D[TB].T + EPS) / (table.second_bwd[TB][:, None] + EPS)
    return np.nan_to_num(conf, nan=-np.inf)


def choose_seed(table: MatchTable, conf: np.ndarray) -> int:
    """Piece with the most mutual best buddies, then highest summed buddy confidence."""
    n = table.piece_count
    counts = np.zeros(n, dtype=np.int64)
    strength = np.zeros(n)
    for i, j, rel in best_buddies(table):
        first_dir, second_dir = (RIGHT, LEFT) if rel == LR else (BELOW, ABOVE)
        counts[i] += 1
        counts[j] += 1
        strength[i] += conf[first_dir, i, j]
        strength[j] += conf[second_dir, j, i]
    return int(np.lexsort((np.arange(n), -strength, -counts))[0])


class _Frame:
    """Placed pieces on an unbounded canvas, limited to an R x C window."""

    def __init__(self, rows: int, cols: int):
        self.rows, self.cols = rows, cols
        self.cells: dict[tuple[int, int], int] = {}
        self.box = None

    def place(self, cell, k):
        self.cells[cell] = k
        r, c = cell
        if self.box is None:
            self.box = (r, c, r, c)
        else:
            b = self.box
            self.box = (min(b[0], r), min(b[1], c), max(b[2], r), max(b[3], c))

    def allowed(self, cell) -> bool:
        r, c = cell
        b = self.box
        return (max(b[2], r) - min(b[0], r) < self.rows
                and max(b[3], c) - min(b[1], c) < self.cols)

    def open_slots(self):
        """Empty, window-legal cells next to a placed piece, in (row, col) order."""
        slots = set()
        for (r, c) in self.cells:
            for dr, dc in STEPS.values():
                cell = (r + dr, c + dc)
                if cell not in self.cells and self.allowed(cell):
                    slots.add(cell)
        return sorted(slots)

    def neighbours(self, cell):
        """(placed index, direction of the slot as seen from that piece)."""
        r, c = cell
        out = []
        for d, (dr, dc) in STEPS.items():
            k = self.cells.get((r - dr, c - dc))
            if k is not None:
                out.append((k, d))
        return out


def solve_placer(pieces, table: MatchTable | None, spec: PuzzleSpec) -> Assembly:
    """Grow the puzzle from a best-buddy-rich seed, most confident placement first.

    Each (candidate, open slot) pair is scored by summing the confidences
    over all placed neighbours of the slot; ties go to the lower piece index,
    then the earlier slot in row-major order.
    """
    if len(pieces) < 2:
        return trivial_assembly(pieces, spec)
    check_inputs(pieces, table, spec)
    n = table.piece_count
    conf = confidence_stack(table)
    frame = _Frame(spec.rows, spec.cols)
    frame.place((0, 0), choose_seed(table, conf))
    unplaced = np.ones(n, dtype=bool)
    unplaced[frame.cells[(0, 0)]] = False

    while unplaced.any():
        slots = frame.open_slots()
        if not slots:
            break
        cand = np.flatnonzero(unplaced)
        scores = np.zeros((len(slots), len(cand)))
        for s, cell in enumerate(slots):
            for k, d in frame.neighbours(cell):
                scores[s] += conf[d, k, cand]
        # argmax over (score desc, candidate index asc, slot order asc)
        flat_order = np.lexsort((
            np.repeat(np.arange(len(slots)), len(cand)),
            np.tile(cand, len(slots)),
            -scores.ravel(),
        ))
        s, c = divmod(int(flat_order[0]), len(cand))
        frame.place(slots[s], int(cand[c]))
        unplaced[cand[c]] = False

    grid = empty_grid(spec)
    r0, c0 = frame.box[0], frame.box[1]
    for (r, c), k in frame.cells.items():
        grid[r - r0, c - c0] = k
    grid = fill_empty_cells(grid, np.flatnonzero(unplaced), table)
    return grid_to_assembly(grid, table, spec)
