"""Core puzzle types: slicing images into Type-1 puzzles, shuffling, rendering.

Images are ``(height, width, 3)`` uint8 numpy arrays throughout. Piece ids are
assigned in row-major ground-truth order before any shuffling happens.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Iterable, Mapping

import numpy as np
from PIL import Image

if TYPE_CHECKING:
    from fragmenta.corruption import CorruptionRecord

MIN_GRID = 2
MAX_GRID = 64
MIN_PIECE_SIZE = 4

EMPTY_CELL_RGB = (128, 128, 128)
MARK_RGB = (255, 0, 0)


class ImageTooSmall(ValueError):
    """Raised when an image cannot cover the requested puzzle grid."""


class PieceStatus(str, enum.Enum):
    PRESENT = "present"
    MISSING = "missing"
    BLACK_SUBSTITUTE = "black_substitute"


@dataclass(frozen=True)
class PuzzleSpec:
    rows: int
    cols: int
    piece_size: int = 32

    def __post_init__(self):
        for name in ("rows", "cols"):
            value = getattr(self, name)
            if not MIN_GRID <= value <= MAX_GRID:
                raise ValueError(f"{name}={value} outside [{MIN_GRID}, {MAX_GRID}]")
        if self.piece_size < MIN_PIECE_SIZE:
            raise ValueError(f"piece_size={self.piece_size} < {MIN_PIECE_SIZE}")

    @property
    def n_pieces(self) -> int:
        return self.rows * self.cols

    @property
    def height(self) -> int:
        return self.rows * self.piece_size

    @property
    def width(self) -> int:
        return self.cols * self.piece_size

    def cell_of(self, index: int) -> tuple[int, int]:
        return divmod(index, self.cols)

    def contains(self, cell: tuple[int, int]) -> bool:
        r, c = cell
        return 0 <= r < self.rows and 0 <= c < self.cols


@dataclass(frozen=True, eq=False)
class Piece:
    """One square tile.

    ``flags`` holds corruption markers as ``(kind, value)`` tuples, e.g.
    ``("edge", "N")`` or ``("saturation", 30)``.
    """

    id: int
    pixels: np.ndarray
    status: PieceStatus = PieceStatus.PRESENT
    flags: tuple = ()

    @property
    def size(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True, eq=False)
class Puzzle:
    """A (possibly shuffled, possibly corrupted) puzzle.

    ``pieces`` keeps every piece, including Missing ones, in solver input
    order; ``visible_pieces`` is what a solver gets to see. ``source`` is the
    cropped ``R*S x C*S`` image the puzzle was cut from.
    """

    spec: PuzzleSpec
    pieces: tuple[Piece, ...]
    ground_truth: Mapping[int, tuple[int, int]]
    source: np.ndarray | None = None
    corruption: CorruptionRecord | None = None
    source_id: str = ""
    seed: int | None = None
    _by_id: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_by_id", {p.id: p for p in self.pieces})

    @property
    def visible_pieces(self) -> list[Piece]:
        return [p for p in self.pieces if p.status is not PieceStatus.MISSING]

    @property
    def counted_ids(self) -> list[int]:
        """Ids that the evaluation metrics score (status Present)."""
        return [p.id for p in self.pieces if p.status is PieceStatus.PRESENT]

    def piece(self, piece_id: int) -> Piece:
        return self._by_id[piece_id]

    def ground_truth_assembly(self) -> Assembly:
        return Assembly(
            {p.id: tuple(self.ground_truth[p.id]) for p in self.visible_pieces}, self.spec
        )

    def with_pieces(self, pieces: Iterable[Piece], **changes) -> Puzzle:
        return replace(self, pieces=tuple(pieces), **changes)


@dataclass(frozen=True)
class Assembly:
    """Injective, possibly partial, mapping piece id -> (row, col)."""

    placements: Mapping[int, tuple[int, int]]
    spec: PuzzleSpec

    def __post_init__(self):
        cells = list(self.placements.values())
        if len(set(cells)) != len(cells):
            raise ValueError("assembly places two pieces in the same cell")
        for pid, cell in self.placements.items():
            if not self.spec.contains(cell):
                raise ValueError(f"piece {pid} placed outside the frame at {cell}")

    def validate_against(self, puzzle: Puzzle) -> None:
        unknown = set(self.placements) - set(puzzle.ground_truth)
        if unknown:
            raise ValueError(f"assembly places unknown piece ids {sorted(unknown)}")
        if self.spec != puzzle.spec:
            raise ValueError("assembly spec does not match puzzle spec")


def to_rgb(image: np.ndarray) -> np.ndarray:
    """Coerce gray / RGBA / float images to an ``(H, W, 3)`` uint8 array."""
    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        if np.issubdtype(arr.dtype, np.floating) and arr.max(initial=0) <= 1.0:
            arr = arr * 255.0
        arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    elif arr.ndim == 3 and arr.shape[2] == 4:
        arr = arr[:, :, :3]
    if arr.ndim != 3 or arr.shape[2] != 3 or min(arr.shape[:2]) < 1:
        raise ValueError(f"cannot interpret array of shape {arr.shape} as an RGB image")
    return np.ascontiguousarray(arr)


def load_image(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def save_image(image: np.ndarray, path) -> None:
    Image.fromarray(to_rgb(image)).save(path, format="PNG")


def center_crop(image: np.ndarray, height: int, width: int) -> np.ndarray:
    h, w = image.shape[:2]
    if h < height or w < width:
        raise ImageTooSmall(f"image {w}x{h} cannot cover {width}x{height}")
    top = (h - height) // 2
    left = (w - width) // 2
    return image[top:top + height, left:left + width]


def fit_image(image: np.ndarray, spec: PuzzleSpec) -> np.ndarray:
    """Downscale an oversized image so its short side just covers the grid.

    Bilinear resampling; images already too small on either side are passed
    through unchanged so that :func:`slice_image` reports them.
    """
    image = to_rgb(image)
    h, w = image.shape[:2]
    if h < spec.height or w < spec.width:
        return image
    scale = max(spec.height / h, spec.width / w)
    if scale >= 1.0:
        return image
    new_h = max(spec.height, int(round(h * scale)))
    new_w = max(spec.width, int(round(w * scale)))
    resized = Image.fromarray(image).resize((new_w, new_h), Image.BILINEAR)
    return np.asarray(resized, dtype=np.uint8).copy()


def slice_image(image: np.ndarray, spec: PuzzleSpec, source_id: str = "") -> Puzzle:
    """Center-crop ``image`` to the grid and cut it into pieces in natural order."""
    source = center_crop(to_rgb(image), spec.height, spec.width).copy()
    source.setflags(write=False)
    s = spec.piece_size
    pieces = []
    ground_truth = {}
    for pid in range(spec.n_pieces):
        r, c = spec.cell_of(pid)
        block = source[r * s:(r + 1) * s, c * s:(c + 1) * s].copy()
        block.setflags(write=False)
        pieces.append(Piece(pid, block))
        ground_truth[pid] = (r, c)
    return Puzzle(spec, tuple(pieces), ground_truth, source=source, source_id=source_id)


def shuffle_pieces(puzzle: Puzzle, seed: int) -> Puzzle:
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(puzzle.pieces))
    return puzzle.with_pieces([puzzle.pieces[k] for k in order], seed=seed)


def _disk_mask(size: int) -> np.ndarray:
    radius = size / 8.0
    centre = (size - 1) / 2.0
    yy, xx = np.mgrid[0:size, 0:size]
    return (yy - centre) ** 2 + (xx - centre) ** 2 <= radius ** 2


def misplaced_ids(assembly: Assembly, puzzle: Puzzle) -> list[int]:
    """Counted (Present) pieces that sit at a wrong absolute cell."""
    return sorted(
        pid for pid, cell in assembly.placements.items()
        if puzzle.piece(pid).status is PieceStatus.PRESENT
        and tuple(cell) != tuple(puzzle.ground_truth[pid])
    )


def render_assembly(assembly: Assembly, puzzle: Puzzle, mark_errors: bool = True) -> np.ndarray:
    """Paint placed pieces onto a gray canvas; optionally dot misplaced ones red."""
    spec = puzzle.spec
    s = spec.piece_size
    canvas = np.empty((spec.height, spec.width, 3), dtype=np.uint8)
    canvas[...] = EMPTY_CELL_RGB
    for pid, (r, c) in assembly.placements.items():
        canvas[r * s:(r + 1) * s, c * s:(c + 1) * s] = puzzle.piece(pid).pixels
    if mark_errors:
        disk = _disk_mask(s)
        for pid in misplaced_ids(assembly, puzzle):
            r, c = assembly.placements[pid]
            canvas[r * s:(r + 1) * s, c * s:(c + 1) * s][disk] = MARK_RGB
    return canvas
