"""Synthetic and bundled image sources for tests and desk-scale benchmarks."""
from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
from PIL import Image

from fragmenta.compatibility import Metric, build_match_table
from fragmenta.puzzle import Puzzle, PuzzleSpec, save_image, slice_image, to_rgb

logger = logging.getLogger(__name__)

# bundled scikit-image photographs used for the desk corpus
PHOTO_NAMES = (
    "astronaut", "coffee", "chelsea", "rocket", "immunohistochemistry",
    "camera", "brick", "grass", "gravel",
)


def smooth_gradient_image(spec: PuzzleSpec, seed: int) -> np.ndarray:
    """Red ramps along columns, green along rows, blue is a radial bowl.

    Unit integer slopes keep the ramps exact after 8-bit quantisation, so
    every true neighbour continues the boundary gradient perfectly.
    """
    rng = np.random.default_rng(seed)
    h, w = spec.height, spec.width
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    if rng.random() < 0.5:
        xx = xx[:, ::-1]
    if rng.random() < 0.5:
        yy = yy[::-1, :]
    red = xx + rng.integers(0, 256 - w + 1)
    green = yy + rng.integers(0, 256 - h + 1)
    cy, cx = rng.uniform(0, h), rng.uniform(0, w)
    radius = np.hypot(yy - cy, xx - cx)
    blue = 30 + 190 * radius / radius.max()
    return to_rgb(np.stack([red, green, blue], axis=2))


def unambiguous(puzzle: Puzzle, metrics=(Metric.MGC, Metric.L1_PRED)) -> bool:
    """Every true adjacency is a strict unique minimum and a mutual best buddy.

    Checked exhaustively in both directions for every listed metric.
    """
    spec = puzzle.spec
    pieces = sorted(puzzle.visible_pieces, key=lambda p: p.id)
    ids = [p.id for p in pieces]
    index = {pid: k for k, pid in enumerate(ids)}
    at = {tuple(puzzle.ground_truth[pid]): index[pid] for pid in ids}
    for metric in metrics:
        D = build_match_table(pieces, metric).D
        for (r, c), i in at.items():
            for rel, (dr, dc) in ((0, (0, 1)), (1, (1, 0))):
                j = at.get((r + dr, c + dc))
                if j is None:
                    continue
                row = D[rel, i].copy()
                col = D[rel, :, j].copy()
                if np.sum(row <= row[j]) != 1 or np.sum(col <= col[i]) != 1:
                    return False
    return True


def unambiguous_gradient_puzzles(spec: PuzzleSpec, count: int, seed: int = 0,
                                 max_tries: int = 1000) -> list[Puzzle]:
    """First ``count`` smooth-gradient puzzles (seeds from ``seed``) that pass :func:`unambiguous`."""
    found = []
    for k in range(max_tries):
        puzzle = slice_image(smooth_gradient_image(spec, seed + k), spec, f"gradient-{seed + k}")
        if unambiguous(puzzle):
            found.append(puzzle)
            if len(found) == count:
                return found
    raise RuntimeError(f"only {len(found)} unambiguous puzzles in {max_tries} tries")


def _bundled_photo(name: str) -> np.ndarray:
    import skimage.data

    return to_rgb(getattr(skimage.data, name)())


def detail_score(image: np.ndarray) -> float:
    """Mean absolute neighbour difference over channels, a cheap texture measure."""
    f = image.astype(np.float64)
    return float((np.abs(np.diff(f, axis=0)).mean() + np.abs(np.diff(f, axis=1)).mean()) / 2)


def desk_photo_corpus(out_dir, count: int = 50, size: int = 192, seed: int = 0,
                      min_detail: float = 4.0, max_dark: float = 0.25) -> list[Path]:
    """Write ``count`` square photo crops as PNG files and return their paths.

    Crops come from scikit-image's bundled photographs at random positions
    and scales. Low-texture or mostly dark crops are rejected.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    photos = {name: _bundled_photo(name) for name in PHOTO_NAMES}
    paths = []
    attempts = 0
    while len(paths) < count:
        attempts += 1
        if attempts > 100 * count:
            raise RuntimeError("could not find enough detailed crops")
        name = PHOTO_NAMES[len(paths) % len(PHOTO_NAMES)]
        photo = photos[name]
        h, w = photo.shape[:2]
        side = int(rng.integers(size, min(h, w, 2 * size) + 1))
        top = int(rng.integers(0, h - side + 1))
        left = int(rng.integers(0, w - side + 1))
        crop = photo[top:top + side, left:left + side]
        if side != size:
            crop = np.asarray(Image.fromarray(crop).resize((size, size), Image.BILINEAR))
        dark = (crop.max(axis=2) < 24).mean()
        if detail_score(crop) < min_detail or dark > max_dark:
            continue
        path = out_dir / f"{len(paths):03d}_{name}.png"
        save_image(crop, path)
        paths.append(path)
    logger.info("wrote %d crops to %s after %d attempts", len(paths), out_dir, attempts)
    return paths
