"""Seeded puzzle corruptions: missing pieces, eroded edges, eroded contents."""
from __future__ import annotations

from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from types import MappingProxyType
from typing import Mapping

import numpy as np

from fragmenta.puzzle import Piece, PieceStatus, Puzzle

MISSING_PIECES = "missing_pieces"
ERODED_EDGES = "eroded_edges"
ERODED_CONTENTS = "eroded_contents"
KINDS = (MISSING_PIECES, ERODED_EDGES, ERODED_CONTENTS)

# experimental caps on the sweep parameters
MAX_MISSING_FRACTION = 0.5
MAX_EDGE_PROBABILITY = 0.5

SIDES = ("N", "E", "S", "W")
EDGE_DEPTH = 2

EFFECTS = ("saturation", "contrast", "brightness", "flaking")
SEVERITY_LEVELS = np.arange(10, 101, 10)
SEVERITY_SIGMA = 15.0
BRIGHTNESS_FLOOR = 0.4
FLAKE_RGB = np.array([220, 214, 200], dtype=np.float64)
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class CorruptionSpec:
    """One corruption in native units.

    ``level`` is the missing fraction rho, the per-edge probability p, or the
    erosion factor E in percent, depending on ``kind``.
    """

    kind: str
    level: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown corruption kind {self.kind!r}")
        limit = {MISSING_PIECES: MAX_MISSING_FRACTION,
                 ERODED_EDGES: MAX_EDGE_PROBABILITY,
                 ERODED_CONTENTS: 100.0}[self.kind]
        if not 0.0 <= self.level <= limit:
            raise ValueError(f"{self.kind} level {self.level} outside [0, {limit}]")

    @classmethod
    def from_percent(cls, kind: str, percent: float, seed: int = 0) -> CorruptionSpec:
        """Build a spec from the percent scale used by sweeps and the CLI."""
        level = percent if kind == ERODED_CONTENTS else percent / 100.0
        return cls(kind, level, seed)

    @property
    def percent(self) -> float:
        return self.level if self.kind == ERODED_CONTENTS else self.level * 100.0

    def to_dict(self) -> dict:
        return {"type": self.kind, "level": self.level, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: Mapping) -> CorruptionSpec:
        return cls(d["type"], float(d["level"]), int(d.get("seed", 0)))


def _frozen(mapping) -> Mapping:
    return MappingProxyType(dict(sorted(mapping.items())))


@dataclass(frozen=True)
class CorruptionRecord:
    applied: tuple[CorruptionSpec, ...] = ()
    removed_ids: frozenset = frozenset()
    eroded_edges: Mapping[int, frozenset] = field(default_factory=dict)
    content_effects: Mapping[int, tuple] = field(default_factory=dict)

    def merge(self, other: CorruptionRecord) -> CorruptionRecord:
        edges = {k: frozenset(v) for k, v in self.eroded_edges.items()}
        for k, v in other.eroded_edges.items():
            edges[k] = edges.get(k, frozenset()) | v
        effects = dict(self.content_effects)
        for k, v in other.content_effects.items():
            effects[k] = tuple(effects.get(k, ())) + tuple(v)
        return CorruptionRecord(
            self.applied + other.applied,
            self.removed_ids | other.removed_ids,
            _frozen(edges),
            _frozen(effects),
        )

    def to_dict(self) -> dict:
        return {
            "applied": [c.to_dict() for c in self.applied],
            "removed_ids": sorted(self.removed_ids),
            "eroded_edges": {str(k): [s for s in SIDES if s in v]
                             for k, v in sorted(self.eroded_edges.items())},
            "content_effects": {str(k): [[e, int(s)] for e, s in v]
                                for k, v in sorted(self.content_effects.items())},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> CorruptionRecord:
        return cls(
            tuple(CorruptionSpec.from_dict(c) for c in d.get("applied", [])),
            frozenset(int(i) for i in d.get("removed_ids", [])),
            _frozen({int(k): frozenset(v) for k, v in d.get("eroded_edges", {}).items()}),
            _frozen({int(k): tuple((e, int(s)) for e, s in v)
                     for k, v in d.get("content_effects", {}).items()}),
        )


def _record(puzzle: Puzzle, new: CorruptionRecord) -> CorruptionRecord:
    return new if puzzle.corruption is None else puzzle.corruption.merge(new)


def _frozen_pixels(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def missing_count(rho: float, n: int) -> int:
    """round-half-up(rho * n), computed on the decimal value of rho."""
    exact = Decimal(repr(float(rho))) * n
    return int(exact.quantize(Decimal(1), rounding=ROUND_HALF_UP))


def apply_missing_pieces(puzzle: Puzzle, rho: float, seed: int) -> Puzzle:
    spec = CorruptionSpec(MISSING_PIECES, rho, seed)
    candidates = sorted(p.id for p in puzzle.visible_pieces)
    n = puzzle.spec.n_pieces
    k = min(missing_count(rho, n), len(candidates))
    rng = np.random.default_rng(seed)
    chosen = frozenset(int(candidates[i]) for i in rng.choice(len(candidates), size=k, replace=False))
    pieces = [
        Piece(p.id, p.pixels, PieceStatus.MISSING, p.flags) if p.id in chosen else p
        for p in puzzle.pieces
    ]
    record = _record(puzzle, CorruptionRecord((spec,), chosen, {}, {}))
    return puzzle.with_pieces(pieces, corruption=record)


def substitute_black_patches(puzzle: Puzzle) -> Puzzle:
    """Turn Missing pieces into all-zero pieces the solvers receive as input."""
    s = puzzle.spec.piece_size
    pieces = []
    for p in puzzle.pieces:
        if p.status is PieceStatus.MISSING:
            black = _frozen_pixels(np.zeros((s, s, 3), dtype=np.uint8))
            p = Piece(p.id, black, PieceStatus.BLACK_SUBSTITUTE, p.flags)
        pieces.append(p)
    return puzzle.with_pieces(pieces)


def _edge_slices(side: str, s: int):
    depth = EDGE_DEPTH
    return {
        "N": (slice(0, depth), slice(0, s)),
        "S": (slice(s - depth, s), slice(0, s)),
        "W": (slice(0, s), slice(0, depth)),
        "E": (slice(0, s), slice(s - depth, s)),
    }[side]


def apply_eroded_edges(puzzle: Puzzle, p: float, seed: int) -> Puzzle:
    """Overwrite the two outermost rows/columns of randomly chosen sides.

    Every overwritten pixel copies an independently, uniformly drawn pixel of
    the original cropped source image.
    """
    spec = CorruptionSpec(ERODED_EDGES, p, seed)
    if puzzle.source is None:
        raise ValueError("eroded edges need the puzzle's source image")
    source = puzzle.source.reshape(-1, 3)
    s = puzzle.spec.piece_size
    rng = np.random.default_rng(seed)
    targets = sorted(q.id for q in puzzle.visible_pieces)
    hits = rng.random((len(targets), len(SIDES))) < p
    eroded = {}
    new_pixels = {}
    for row, pid in enumerate(targets):
        sides = [side for side, hit in zip(SIDES, hits[row]) if hit]
        if not sides:
            continue
        pixels = puzzle.piece(pid).pixels.copy()
        for side in sides:
            rs, cs = _edge_slices(side, s)
            region = pixels[rs, cs]
            draws = rng.integers(0, len(source), size=region.shape[0] * region.shape[1])
            pixels[rs, cs] = source[draws].reshape(region.shape)
        eroded[pid] = frozenset(sides)
        new_pixels[pid] = _frozen_pixels(pixels)

    pieces = []
    for q in puzzle.pieces:
        if q.id in new_pixels:
            flags = q.flags + tuple(("edge", side) for side in SIDES if side in eroded[q.id])
            q = Piece(q.id, new_pixels[q.id], q.status, flags)
        pieces.append(q)
    record = _record(puzzle, CorruptionRecord((spec,), frozenset(), _frozen(eroded), {}))
    return puzzle.with_pieces(pieces, corruption=record)


def snap_severity(value) -> np.ndarray:
    """Clamp to [0, 100] and snap to the nearest of 10, 20, ..., 100."""
    v = np.clip(np.asarray(value, dtype=np.float64), 0.0, 100.0)
    idx = np.floor(v / 10.0 + 0.5).astype(int)
    return np.clip(idx, 1, 10) * 10


def desaturate(pixels: np.ndarray, s: float) -> np.ndarray:
    luma = pixels @ LUMA_WEIGHTS
    return pixels + s * (luma[..., None] - pixels)


def reduce_contrast(pixels: np.ndarray, s: float) -> np.ndarray:
    mean = pixels.reshape(-1, 3).mean(axis=0)
    return mean + (pixels - mean) * (1.0 - s)


def darken(pixels: np.ndarray, s: float) -> np.ndarray:
    return pixels * (1.0 - (1.0 - BRIGHTNESS_FLOOR) * s)


def flake(pixels: np.ndarray, s: float, rng: np.random.Generator) -> np.ndarray:
    """Paint flake-colored rectangles until half the severity is covered."""
    size = pixels.shape[0]
    lo = max(1, size // 8)
    hi = max(lo, size // 2)
    target = 0.5 * s
    covered = np.zeros(pixels.shape[:2], dtype=bool)
    out = pixels.copy()
    while covered.mean() < target:
        h, w = rng.integers(lo, hi + 1, size=2)
        top = rng.integers(0, size - h + 1)
        left = rng.integers(0, size - w + 1)
        covered[top:top + h, left:left + w] = True
    out[covered] = FLAKE_RGB
    return out


def apply_eroded_contents(puzzle: Puzzle, erosion: float, seed: int) -> Puzzle:
    """Apply saturation, contrast, brightness loss and flaking to random pieces.

    Each effect independently selects a piece with probability E/100 and
    draws its severity from Normal(E, 15), snapped to the 10..100 list.
    """
    spec = CorruptionSpec(ERODED_CONTENTS, erosion, seed)
    rng = np.random.default_rng(seed)
    targets = sorted(q.id for q in puzzle.visible_pieces)
    n = len(targets)
    selected = rng.random((len(EFFECTS), n)) < erosion / 100.0
    severity = snap_severity(rng.normal(erosion, SEVERITY_SIGMA, size=(len(EFFECTS), n)))

    effects = {}
    new_pixels = {}
    for col, pid in enumerate(targets):
        chosen = [(EFFECTS[e], int(severity[e, col])) for e in range(len(EFFECTS)) if selected[e, col]]
        if not chosen:
            continue
        pixels = puzzle.piece(pid).pixels.astype(np.float64)
        for name, sev in chosen:
            frac = sev / 100.0
            if name == "saturation":
                pixels = desaturate(pixels, frac)
            elif name == "contrast":
                pixels = reduce_contrast(pixels, frac)
            elif name == "brightness":
                pixels = darken(pixels, frac)
            else:
                pixels = flake(pixels, frac, rng)
        new_pixels[pid] = _frozen_pixels(np.clip(np.rint(pixels), 0, 255).astype(np.uint8))
        effects[pid] = tuple(chosen)

    pieces = []
    for q in puzzle.pieces:
        if q.id in new_pixels:
            q = Piece(q.id, new_pixels[q.id], q.status, q.flags + effects[q.id])
        pieces.append(q)
    record = _record(puzzle, CorruptionRecord((spec,), frozenset(), {}, _frozen(effects)))
    return puzzle.with_pieces(pieces, corruption=record)


def apply_corruption(puzzle: Puzzle, spec: CorruptionSpec) -> Puzzle:
    fn = {
        MISSING_PIECES: apply_missing_pieces,
        ERODED_EDGES: apply_eroded_edges,
        ERODED_CONTENTS: apply_eroded_contents,
    }[spec.kind]
    return fn(puzzle, spec.level, spec.seed)


def corruption_stats(puzzle: Puzzle) -> dict:
    """Counts and rates per corruption kind, relative to the full R*C grid."""
    n = puzzle.spec.n_pieces
    rec = puzzle.corruption or CorruptionRecord()
    edge_count = sum(len(v) for v in rec.eroded_edges.values())
    stats = {
        "n_pieces": n,
        "missing_count": len(rec.removed_ids),
        "missing_rate": len(rec.removed_ids) / n,
        "eroded_edge_count": edge_count,
        "eroded_edge_rate": edge_count / (len(SIDES) * n),
        "edges_per_piece": edge_count / n,
    }
    for name in EFFECTS:
        count = sum(1 for v in rec.content_effects.values() if any(e == name for e, _ in v))
        stats[f"{name}_count"] = count
        stats[f"{name}_rate"] = count / n
    return stats
