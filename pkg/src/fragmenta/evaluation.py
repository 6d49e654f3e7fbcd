"""Direct Comparison and Perfect Reconstruction, plus per-group aggregation.

Only pieces with status Present are scored: Missing pieces and their black
stand-ins are ignored wherever they end up.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from fragmenta.puzzle import Assembly, Puzzle, PuzzleSpec


class EmptyCountSet(ValueError):
    """Every piece is missing, so the metrics are undefined."""


def _correct_count(assembly: Assembly, puzzle: Puzzle) -> tuple[int, int]:
    assembly.validate_against(puzzle)
    counted = puzzle.counted_ids
    if not counted:
        raise EmptyCountSet("no Present pieces to score")
    hits = sum(
        1 for pid in counted
        if pid in assembly.placements
        and tuple(assembly.placements[pid]) == tuple(puzzle.ground_truth[pid])
    )
    return hits, len(counted)


def direct_comparison(assembly: Assembly, puzzle: Puzzle) -> float:
    """Percent of counted pieces at their ground-truth cell; unplaced ones are wrong."""
    hits, total = _correct_count(assembly, puzzle)
    return 100.0 * hits / total


def perfect_reconstruction(assembly: Assembly, puzzle: Puzzle) -> bool:
    hits, total = _correct_count(assembly, puzzle)
    return hits == total


@dataclass(frozen=True)
class PuzzleResult:
    source_id: str
    solver: str
    spec: PuzzleSpec
    corruption_type: str
    level: float
    seed: int
    direct_comparison: float | None
    perfect: bool | None
    wall_time: float = 0.0

    def __post_init__(self):
        dc = self.direct_comparison
        if dc is not None and not 0.0 <= dc <= 100.0:
            raise ValueError(f"direct comparison {dc} outside [0, 100]")

    @property
    def group_key(self) -> tuple:
        return (self.solver, self.spec.rows, self.spec.cols, self.corruption_type, self.level)

    @property
    def sort_key(self) -> tuple:
        return self.group_key[:3] + (self.corruption_type, self.level, self.source_id)


@dataclass(frozen=True)
class ExperimentReport:
    solver: str
    rows: int
    cols: int
    corruption_type: str
    level: float
    n_puzzles: int
    mean_direct_comparison: float
    perfect_rate: float
    seed: int | None = None

    @property
    def key(self) -> tuple:
        return (self.solver, self.rows, self.cols, self.corruption_type, self.level)


def evaluate(assembly: Assembly, puzzle: Puzzle) -> tuple[float | None, bool | None]:
    """Both metrics, or ``(None, None)`` when they are undefined."""
    try:
        return direct_comparison(assembly, puzzle), perfect_reconstruction(assembly, puzzle)
    except EmptyCountSet:
        return None, None


def aggregate(results: Iterable[PuzzleResult], seed: int | None = None) -> list[ExperimentReport]:
    """Group by (solver, size, corruption type, level); undefined results are skipped.

    Groups whose every result is undefined are dropped. Members are summed in
    ``source_id`` order so the output does not depend on input order.
    """
    groups: dict[tuple, list[PuzzleResult]] = {}
    for res in results:
        groups.setdefault(res.group_key, []).append(res)
    if not groups:
        raise ValueError("nothing to aggregate")
    reports = []
    for key in sorted(groups):
        members = sorted((r for r in groups[key] if r.direct_comparison is not None),
                         key=lambda r: (r.source_id, r.seed))
        if not members:
            continue
        n = len(members)
        mean = sum(r.direct_comparison for r in members) / n
        rate = 100.0 * sum(1 for r in members if r.perfect) / n
        solver, rows, cols, ctype, level = key
        reports.append(ExperimentReport(solver, rows, cols, ctype, level, n, mean, rate, seed))
    return reports
