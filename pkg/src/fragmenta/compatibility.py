"""Pairwise piece dissimilarities and the match table the solvers share.

Two relations cover all four adjacencies through argument order:
``LEFT_RIGHT`` means the first piece sits directly left of the second,
``TOP_BOTTOM`` means it sits directly above. Top/bottom values are computed by
transposing pieces and reusing the left/right kernels.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from fragmenta.puzzle import Piece

EPS = 1e-9

# gradient samples appended before estimating the edge covariance
DUMMY_GRADIENTS = np.array(
    [[0, 0, 0], [1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]],
    dtype=np.float64,
)

# rows of pieces per block when building tables, bounds peak memory
_BLOCK = 64


class Relation(enum.IntEnum):
    LEFT_RIGHT = 0
    TOP_BOTTOM = 1

    @property
    def delta(self) -> tuple[int, int]:
        """Grid displacement (drow, dcol) from the first piece to the second."""
        return (0, 1) if self is Relation.LEFT_RIGHT else (1, 0)


class Metric(str, enum.Enum):
    MGC = "mgc"
    L1_PRED = "l1pred"


@dataclass(frozen=True)
class EdgeGradientStats:
    mu: np.ndarray
    sigma_inv: np.ndarray


def _as_float(pieces) -> np.ndarray:
    return np.stack([np.asarray(p.pixels if isinstance(p, Piece) else p, dtype=np.float64)
                     for p in pieces])


def _oriented(stack: np.ndarray, rel: Relation) -> np.ndarray:
    """View the stack so that ``rel`` becomes a left/right adjacency."""
    return stack if rel is Relation.LEFT_RIGHT else stack.transpose(0, 2, 1, 3)


def inverse_3x3(m: np.ndarray) -> np.ndarray:
    """Closed-form adjugate inverse for a stack of 3x3 matrices."""
    a, b, c = m[..., 0, 0], m[..., 0, 1], m[..., 0, 2]
    d, e, f = m[..., 1, 0], m[..., 1, 1], m[..., 1, 2]
    g, h, i = m[..., 2, 0], m[..., 2, 1], m[..., 2, 2]
    co = np.empty_like(m)
    co[..., 0, 0] = e * i - f * h
    co[..., 0, 1] = c * h - b * i
    co[..., 0, 2] = b * f - c * e
    co[..., 1, 0] = f * g - d * i
    co[..., 1, 1] = a * i - c * g
    co[..., 1, 2] = c * d - a * f
    co[..., 2, 0] = d * h - e * g
    co[..., 2, 1] = b * g - a * h
    co[..., 2, 2] = a * e - b * d
    det = a * co[..., 0, 0] + b * co[..., 1, 0] + c * co[..., 2, 0]
    return co / det[..., None, None]


def gradient_stats(gradients: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and inverse covariance of edge gradients, shape ``(..., S, 3)``.

    The mean uses the real gradients only. The covariance is estimated on the
    gradients plus the seven dummy samples, which keeps it positive definite
    on flat pieces.
    """
    mu = gradients.mean(axis=-2)
    dummies = np.broadcast_to(DUMMY_GRADIENTS, gradients.shape[:-2] + DUMMY_GRADIENTS.shape)
    aug = np.concatenate([gradients, dummies], axis=-2)
    centred = aug - aug.mean(axis=-2, keepdims=True)
    cov = np.einsum("...ka,...kb->...ab", centred, centred) / (aug.shape[-2] - 1)
    return mu, inverse_3x3(cov)


def _edge_arrays(stack: np.ndarray):
    right = stack[:, :, -1, :]
    left = stack[:, :, 0, :]
    right_grad = right - stack[:, :, -2, :]
    left_grad = left - stack[:, :, 1, :]
    return left, right, left_grad, right_grad


def edge_stats(piece: Piece, rel: Relation, side: str) -> EdgeGradientStats:
    """Gradient statistics of one piece edge; ``side`` is ``"first"`` or ``"second"``.

    ``"first"`` describes the edge facing the second piece of ``rel`` (right or
    bottom), ``"second"`` the edge facing the first piece (left or top).
    """
    stack = _oriented(_as_float([piece]), rel)
    _, _, left_grad, right_grad = _edge_arrays(stack)
    mu, inv = gradient_stats(right_grad if side == "first" else left_grad)
    return EdgeGradientStats(mu[0], inv[0])


def _quad(diff: np.ndarray, inv: np.ndarray) -> np.ndarray:
    """Sum over rows of diff^T inv diff; diff ``(..., S, 3)``, inv ``(..., 3, 3)``."""
    return np.einsum("...ra,...ab,...rb->...", diff, inv, diff)


def _mgc_lr(stack: np.ndarray) -> np.ndarray:
    left, right, left_grad, right_grad = _edge_arrays(stack)
    mu_r, inv_r = gradient_stats(right_grad)
    mu_l, inv_l = gradient_stats(left_grad)
    n = stack.shape[0]
    out = np.empty((n, n))
    for start in range(0, n, _BLOCK):
        stop = min(n, start + _BLOCK)
        cross = left[None, :, :, :] - right[start:stop, None, :, :]
        first = _quad(cross - mu_r[start:stop, None, None, :], inv_r[start:stop, None])
        second = _quad(-cross - mu_l[None, :, None, :], inv_l[None, :])
        out[start:stop] = first + second
    return np.maximum(out, 0.0)


def _l1_lr(stack: np.ndarray) -> np.ndarray:
    left, right, _, right_grad = _edge_arrays(stack)
    predicted = np.clip(right + right_grad, 0.0, 255.0)
    n = stack.shape[0]
    out = np.empty((n, n))
    for start in range(0, n, _BLOCK):
        stop = min(n, start + _BLOCK)
        diff = np.abs(predicted[start:stop, None] - left[None, :])
        out[start:stop] = diff.sum(axis=(2, 3))
    return out


_KERNELS = {Metric.MGC: _mgc_lr, Metric.L1_PRED: _l1_lr}


def _pair(a: Piece, b: Piece, rel: Relation, metric: Metric) -> float:
    if a.pixels.shape != b.pixels.shape:
        raise ValueError("pieces differ in size")
    stack = _oriented(_as_float([a, b]), Relation(rel))
    return float(_KERNELS[metric](stack)[0, 1])


def mgc_dissimilarity(a: Piece, b: Piece, rel: Relation) -> float:
    """Symmetrised Mahalanobis gradient compatibility of ``a`` then ``b`` under ``rel``."""
    return _pair(a, b, rel, Metric.MGC)


def l1_pred_dissimilarity(a: Piece, b: Piece, rel: Relation) -> float:
    """L1 distance between a's linearly extrapolated boundary and b's boundary."""
    return _pair(a, b, rel, Metric.L1_PRED)


def _best_two(d: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """argmin (smallest index on ties), smallest and second-smallest along ``axis``."""
    best_idx = np.argmin(d, axis=axis)
    part = np.sort(d, axis=axis)
    if d.shape[axis] < 2:
        second = np.full(part.shape[:axis] + part.shape[axis + 1:], np.inf)
    else:
        second = np.take(part, 1, axis=axis)
    return best_idx, np.take(part, 0, axis=axis), second


@dataclass(frozen=True, eq=False)
class MatchTable:
    """Dissimilarities ``D[rel, i, j]`` over table indices ``0..N-1``.

    ``ids[k]`` is the piece id at index ``k``. The diagonal is ``inf``.
    ``*_fwd`` arrays are per (rel, i) over partners j; ``*_bwd`` are per
    (rel, j) over partners i.
    """

    metric: Metric
    ids: tuple[int, ...]
    D: np.ndarray
    best_fwd: np.ndarray
    second_fwd: np.ndarray
    best_bwd: np.ndarray
    second_bwd: np.ndarray

    @classmethod
    def from_dissimilarities(cls, D: np.ndarray, ids: Sequence[int] | None = None,
                             metric: Metric = Metric.MGC) -> MatchTable:
        D = np.array(D, dtype=np.float64)
        n = D.shape[1]
        if D.shape != (2, n, n):
            raise ValueError(f"expected shape (2, N, N), got {D.shape}")
        D[:, np.arange(n), np.arange(n)] = np.inf
        D.setflags(write=False)
        _, _, second_fwd = _best_two(D, axis=2)
        _, _, second_bwd = _best_two(D, axis=1)
        ids = tuple(range(n)) if ids is None else tuple(int(i) for i in ids)
        return cls(Metric(metric), ids, D, np.argmin(D, axis=2), second_fwd,
                   np.argmin(D, axis=1), second_bwd)

    @property
    def piece_count(self) -> int:
        return len(self.ids)

    def index(self, piece_id: int) -> int:
        return self.ids.index(piece_id)

    def second_best(self, i: int, rel: Relation, forward: bool = True) -> float:
        arr = self.second_fwd if forward else self.second_bwd
        return float(arr[int(rel), i])


def build_match_table(pieces: Sequence[Piece], metric: Metric | str = Metric.MGC) -> MatchTable:
    if len(pieces) < 2:
        raise ValueError("a match table needs at least two pieces")
    metric = Metric(metric)
    stack = _as_float(pieces)
    D = np.stack([_KERNELS[metric](_oriented(stack, rel)) for rel in Relation])
    return MatchTable.from_dissimilarities(D, [p.id for p in pieces], metric)


def best_buddies(table: MatchTable) -> set[tuple[int, int, Relation]]:
    """Mutual-best oriented pairs ``(i, j, rel)`` in table indices."""
    out = set()
    for rel in Relation:
        fwd = table.best_fwd[rel]
        bwd = table.best_bwd[rel]
        for i, j in enumerate(fwd):
            if bwd[j] == i and i != j:
                out.add((i, int(j), rel))
    return out


def ratio_score(table: MatchTable, i: int, j: int, rel: Relation) -> float:
    """D(i, j) over i's second-best forward dissimilarity; lower is more confident."""
    return float(table.D[int(rel), i, j] / (table.second_fwd[int(rel), i] + EPS))


def ratio_matrix(table: MatchTable) -> np.ndarray:
    """:func:`ratio_score` for every (rel, i, j) at once; the diagonal stays ``inf``."""
    with np.errstate(invalid="ignore"):
        out = table.D / (table.second_fwd[:, :, None] + EPS)
    n = table.piece_count
    out[:, np.arange(n), np.arange(n)] = np.inf
    return out


def dump_table_csv(table: MatchTable, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "relation", "D"])
        for rel in Relation:
            for a in range(table.piece_count):
                for b in range(table.piece_count):
                    if a != b:
                        writer.writerow([table.ids[a], table.ids[b], rel.name, repr(float(table.D[rel, a, b]))])
