"""Seeded corruption sweeps over an image corpus, with CSV, SVG and manifest output.

Every puzzle's seed is a stable hash of (master seed, source id, size, level),
so results do not depend on how tasks are scheduled across workers. Output
rows are always sorted by key before they are written.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from fragmenta import __version__
from fragmenta.compatibility import Metric, build_match_table
from fragmenta.corruption import (
    ERODED_CONTENTS, ERODED_EDGES, KINDS, MISSING_PIECES, CorruptionSpec, apply_corruption,
    substitute_black_patches,
)
from fragmenta.evaluation import ExperimentReport, PuzzleResult, aggregate, evaluate
from fragmenta.puzzle import ImageTooSmall, PuzzleSpec, fit_image, load_image, shuffle_pieces, slice_image
from fragmenta.solvers import DEFAULT_METRIC, SOLVERS

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
THREADS_ENV = "FRAGMENTA_THREADS"

RESULTS_HEADER = ("solver", "source_id", "rows", "cols", "corruption_type", "level", "seed",
                  "direct_comparison", "perfect", "wall_time_s")
SUMMARY_HEADER = ("solver", "rows", "cols", "corruption_type", "level", "n",
                  "mean_direct_comparison", "perfect_rate")

# sweep levels are percentages for every corruption type
LEVEL_LIMITS = {MISSING_PIECES: 50.0, ERODED_EDGES: 50.0, ERODED_CONTENTS: 100.0}

PLOT_METRICS = ("direct_comparison", "perfect_rate")


class EmptyCorpus(ValueError):
    """The corpus directory holds no decodable image."""


@dataclass
class BenchConfig:
    """One sweep. ``corruption`` is ``{"type", "levels"}`` or a list of such sweeps.

    Levels are percentages: missing fraction, edge probability, or erosion
    factor. ``record_wall_time`` is off by default so that ``results.csv``
    stays byte-identical across runs; timings always go to the manifest.
    """

    corpus_dir: str
    solvers: list = field(default_factory=lambda: list(SOLVERS))
    sizes: list = field(default_factory=lambda: [(6, 6)])
    corruption: dict | list = field(
        default_factory=lambda: {"type": MISSING_PIECES, "levels": [0]})
    metric_backend: dict = field(default_factory=dict)
    master_seed: int = 0
    output_dir: str = "bench_out"
    max_images: int | None = None
    piece_size: int = 32
    record_wall_time: bool = False

    def __post_init__(self):
        self.sizes = [tuple(int(v) for v in size) for size in self.sizes]
        for r, c in self.sizes:
            PuzzleSpec(r, c, self.piece_size)
        unknown = set(self.solvers) - set(SOLVERS)
        if unknown or not self.solvers:
            raise ValueError(f"solvers must be a nonempty subset of {sorted(SOLVERS)}")
        for sweep in self.sweeps:
            if sweep["type"] not in KINDS:
                raise ValueError(f"unknown corruption type {sweep['type']!r}")
            limit = LEVEL_LIMITS[sweep["type"]]
            if not sweep["levels"]:
                raise ValueError("a sweep needs at least one level")
            for level in sweep["levels"]:
                if not 0.0 <= float(level) <= limit:
                    raise ValueError(f"{sweep['type']} level {level} outside [0, {limit}]")
        for name, metric in self.metric_backend.items():
            if name not in SOLVERS:
                raise ValueError(f"metric_backend names unknown solver {name!r}")
            Metric(metric)
        if self.max_images is not None and self.max_images < 1:
            raise ValueError("max_images must be positive")

    @property
    def sweeps(self) -> list[dict]:
        items = self.corruption if isinstance(self.corruption, list) else [self.corruption]
        return [{"type": s["type"], "levels": [float(v) for v in s["levels"]]} for s in items]

    def metric_for(self, solver: str) -> Metric:
        return Metric(self.metric_backend.get(solver, DEFAULT_METRIC[solver]))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["sizes"] = [list(s) for s in self.sizes]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> BenchConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - names
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> BenchConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))

    def hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


def derive_seed(master_seed: int, source_id: str, rows: int, cols: int, level: float) -> int:
    """Stable 64-bit seed from the puzzle's identity; independent of scheduling."""
    key = f"{int(master_seed)}|{source_id}|{int(rows)}|{int(cols)}|{float(level)!r}"
    return int.from_bytes(hashlib.blake2b(key.encode(), digest_size=8).digest(), "big")


def worker_count(requested: int | None = None) -> int:
    """Requested workers (default: CPU count), capped by ``FRAGMENTA_THREADS`` when it is > 0."""
    n = requested if requested is not None and requested > 0 else (os.cpu_count() or 1)
    cap = int(os.environ.get(THREADS_ENV, "0") or 0)
    if cap > 0:
        n = min(n, cap)
    return max(1, n)


def scan_corpus(corpus_dir, max_images: int | None = None):
    """Decodable images in name order, plus the names of files that failed to decode."""
    corpus_dir = Path(corpus_dir)
    if not corpus_dir.is_dir():
        raise EmptyCorpus(f"corpus directory {corpus_dir} does not exist")
    images, failures = [], []
    for path in sorted(corpus_dir.iterdir()):
        if path.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        if max_images is not None and len(images) >= max_images:
            break
        try:
            load_image(path)
        except Exception as exc:  # any decoder error just skips the file
            logger.warning("skipping %s: %s", path.name, exc)
            failures.append(path.name)
            continue
        images.append(path)
    if not images:
        raise EmptyCorpus(f"no decodable image in {corpus_dir}")
    return images, failures


@dataclass(frozen=True)
class _Task:
    path: str
    source_id: str
    rows: int
    cols: int
    piece_size: int
    sweeps: tuple
    solvers: tuple
    metrics: tuple
    master_seed: int


def prepare_puzzle(image, spec: PuzzleSpec, source_id: str, corruption_type: str,
                   level: float, seed: int):
    """Slice, corrupt (level 0 is the clean baseline), black-fill missing, shuffle."""
    puzzle = slice_image(fit_image(image, spec), spec, source_id)
    if level > 0:
        puzzle = apply_corruption(puzzle, CorruptionSpec.from_percent(corruption_type, level, seed))
        if corruption_type == MISSING_PIECES:
            puzzle = substitute_black_patches(puzzle)
    return shuffle_pieces(puzzle, seed)


def _run_task(task: _Task) -> tuple[list[PuzzleResult], list[str]]:
    spec = PuzzleSpec(task.rows, task.cols, task.piece_size)
    image = load_image(task.path)
    results, too_small = [], []
    for ctype, levels in task.sweeps:
        for level in levels:
            seed = derive_seed(task.master_seed, task.source_id, task.rows, task.cols, level)
            try:
                puzzle = prepare_puzzle(image, spec, task.source_id, ctype, level, seed)
            except ImageTooSmall as exc:
                logger.warning("skipping %s at %dx%d: %s", task.source_id, task.rows, task.cols, exc)
                return [], [task.source_id]
            pieces = puzzle.visible_pieces
            tables = {}
            for solver, metric in zip(task.solvers, task.metrics):
                start = time.perf_counter()
                if metric not in tables:
                    tables[metric] = build_match_table(pieces, metric)
                assembly = SOLVERS[solver](pieces, tables[metric], spec)
                elapsed = time.perf_counter() - start
                dc, perfect = evaluate(assembly, puzzle)
                results.append(PuzzleResult(task.source_id, solver, spec, ctype, level, seed,
                                            dc, perfect, elapsed))
    return results, too_small


@dataclass
class SweepOutcome:
    results: list[PuzzleResult]
    reports: list[ExperimentReport]
    decode_failures: list[str]
    too_small: list[str]
    elapsed_s: float
    workers: int


def run_sweep(config: BenchConfig, workers: int | None = None) -> SweepOutcome:
    """Run every image x size x level x solver; results sorted by key."""
    started = time.perf_counter()
    images, failures = scan_corpus(config.corpus_dir, config.max_images)
    sweeps = tuple((s["type"], tuple(s["levels"])) for s in config.sweeps)
    solvers = tuple(config.solvers)
    metrics = tuple(config.metric_for(s) for s in solvers)
    tasks = [
        _Task(str(path), path.stem, r, c, config.piece_size, sweeps, solvers, metrics,
              config.master_seed)
        for path in images for r, c in config.sizes
    ]
    n_workers = min(worker_count(workers), len(tasks))
    if n_workers == 1:
        outputs = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            outputs = list(pool.map(_run_task, tasks))
    results = sorted((r for rs, _ in outputs for r in rs), key=lambda r: r.sort_key)
    too_small = sorted({s for _, small in outputs for s in small})
    if not results:
        raise EmptyCorpus("no image in the corpus could be sliced at the requested sizes")
    reports = aggregate(results, seed=config.master_seed)
    return SweepOutcome(results, reports, failures, too_small,
                        time.perf_counter() - started, n_workers)


def _num(value: float) -> str:
    """Shortest text that parses back to the same float; integers without a point."""
    value = float(value)
    return str(int(value)) if value.is_integer() else repr(value)


def _write_csv(path: Path, header, rows) -> None:
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def emit_csv(results: Iterable[PuzzleResult], reports: Iterable[ExperimentReport], out_dir,
             record_wall_time: bool = False) -> list[Path]:
    """Write ``results.csv`` and ``summary.csv`` in key order; returns their paths.

    Without ``record_wall_time`` the wall-time column is left blank.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result_rows = []
    for r in sorted(results, key=lambda r: r.sort_key):
        result_rows.append([
            r.solver, r.source_id, r.spec.rows, r.spec.cols, r.corruption_type, _num(r.level),
            r.seed,
            "" if r.direct_comparison is None else repr(float(r.direct_comparison)),
            "" if r.perfect is None else int(r.perfect),
            repr(float(r.wall_time)) if record_wall_time else "",
        ])
    summary_rows = [
        [g.solver, g.rows, g.cols, g.corruption_type, _num(g.level), g.n_puzzles,
         repr(float(g.mean_direct_comparison)), repr(float(g.perfect_rate))]
        for g in sorted(reports, key=lambda g: g.key)
    ]
    paths = [out_dir / "results.csv", out_dir / "summary.csv"]
    _write_csv(paths[0], RESULTS_HEADER, result_rows)
    _write_csv(paths[1], SUMMARY_HEADER, summary_rows)
    return paths


def read_summary(path, seed: int | None = None) -> list[ExperimentReport]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SUMMARY_HEADER:
            raise ValueError(f"{path} does not have the summary header")
        return [
            ExperimentReport(row["solver"], int(row["rows"]), int(row["cols"]),
                             row["corruption_type"], float(row["level"]), int(row["n"]),
                             float(row["mean_direct_comparison"]), float(row["perfect_rate"]),
                             seed)
            for row in reader
        ]


def read_results(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULTS_HEADER:
            raise ValueError(f"{path} does not have the results header")
        return list(reader)


# fixed per-solver colours; unknown names fall back to gray
SOLVER_COLORS = {"gallagher": "#1f77b4", "paikin-tal": "#d62728", "yu-lp": "#2ca02c"}
_W, _H = 640, 400
_LEFT, _RIGHT, _TOP, _BOTTOM = 60, 150, 40, 50


def _svg_text(x, y, text, anchor="middle", size=12) -> str:
    safe = str(text).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
    return (f'<text x="{x:.2f}" y="{y:.2f}" font-family="sans-serif" font-size="{size}" '
            f'text-anchor="{anchor}">{safe}</text>')


def render_svg(reports: list[ExperimentReport], metric: str, title: str) -> str:
    """Line chart of ``metric`` against corruption level, one polyline per solver."""
    levels = sorted({g.level for g in reports})
    lo, hi = levels[0], levels[-1]
    span = hi - lo
    plot_w = _W - _LEFT - _RIGHT
    plot_h = _H - _TOP - _BOTTOM

    def px(level):
        return _LEFT + (plot_w / 2 if span == 0 else plot_w * (level - lo) / span)

    def py(value):
        return _TOP + plot_h * (1.0 - value / 100.0)

    attr = "mean_direct_comparison" if metric == "direct_comparison" else "perfect_rate"
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
           f'viewBox="0 0 {_W} {_H}">',
           f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
           _svg_text(_W / 2, 22, title, size=14)]
    x0, x1, y0, y1 = _LEFT, _LEFT + plot_w, _TOP, _TOP + plot_h
    out.append(f'<line x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}" stroke="black"/>')
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>')
    for v in range(0, 101, 20):
        y = py(v)
        out.append(f'<line x1="{x0 - 5}" y1="{y:.2f}" x2="{x0}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<line x1="{x0}" y1="{y:.2f}" x2="{x1}" y2="{y:.2f}" stroke="#dddddd"/>')
        out.append(_svg_text(x0 - 8, y + 4, v, anchor="end"))
    for level in levels:
        x = px(level)
        out.append(f'<line x1="{x:.2f}" y1="{y1}" x2="{x:.2f}" y2="{y1 + 5}" stroke="black"/>')
        out.append(_svg_text(x, y1 + 20, _num(level)))
    out.append(_svg_text(_LEFT + plot_w / 2, _H - 8, "corruption level (%)"))
    out.append(f'<text x="16" y="{_TOP + plot_h / 2:.2f}" font-family="sans-serif" '
               f'font-size="12" text-anchor="middle" transform="rotate(-90 16 '
               f'{_TOP + plot_h / 2:.2f})">{metric.replace("_", " ")} (%)</text>')

    solvers = sorted({g.solver for g in reports})
    for k, solver in enumerate(solvers):
        color = SOLVER_COLORS.get(solver, "#7f7f7f")
        points = sorted((g.level, getattr(g, attr)) for g in reports if g.solver == solver)
        coords = " ".join(f"{px(lv):.2f},{py(v):.2f}" for lv, v in points)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}"/>')
        for lv, v in points:
            out.append(f'<circle cx="{px(lv):.2f}" cy="{py(v):.2f}" r="3" fill="{color}"/>')
        ly = _TOP + 10 + 20 * k
        lx = x1 + 15
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" '
                   f'stroke-width="2"/>')
        out.append(_svg_text(lx + 26, ly + 4, solver, anchor="start"))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(reports: Iterable[ExperimentReport], metric: str, out_dir) -> list[Path]:
    """One SVG per (corruption type, size) for ``metric``; returns the paths written."""
    if metric not in PLOT_METRICS:
        raise ValueError(f"metric must be one of {PLOT_METRICS}")
    reports = list(reports)
    if not reports:
        raise ValueError("nothing to plot")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    groups: dict[tuple, list[ExperimentReport]] = {}
    for g in reports:
        groups.setdefault((g.corruption_type, g.rows, g.cols), []).append(g)
    paths = []
    for (ctype, rows, cols), members in sorted(groups.items()):
        title = f"{ctype.replace('_', ' ')}, {rows}x{cols}"
        path = out_dir / f"{metric}_{ctype}_{rows}x{cols}.svg"
        path.write_text(render_svg(members, metric, title))
        paths.append(path)
    return paths


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_outputs(config: BenchConfig, outcome: SweepOutcome, out_dir=None) -> Path:
    """CSV, SVG plots and ``manifest.json`` for one sweep; returns the manifest path."""
    out_dir = Path(out_dir or config.output_dir)
    files = emit_csv(outcome.results, outcome.reports, out_dir, config.record_wall_time)
    for metric in PLOT_METRICS:
        files += emit_plot(outcome.reports, metric, out_dir / "plots")
    seeds = {}
    for r in outcome.results:
        seeds[f"{r.source_id}|{r.spec.rows}x{r.spec.cols}|{_num(r.level)}"] = r.seed
    manifest = {
        "config": config.to_dict(),
        "config_hash": config.hash(),
        "version": __version__,
        "seeds": dict(sorted(seeds.items())),
        "timing": {
            "total_s": outcome.elapsed_s,
            "workers": outcome.workers,
            "solve_s": {s: sum(r.wall_time for r in outcome.results if r.solver == s)
                        for s in config.solvers},
        },
        "skipped": {"decode_failures": outcome.decode_failures, "too_small": outcome.too_small},
        "n_results": len(outcome.results),
        "files": {str(p.relative_to(out_dir)): sha256_file(p) for p in files},
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def verify_manifest(path) -> list[str]:
    """Files listed in a run manifest that are missing or whose hash changed."""
    path = Path(path)
    data = json.loads(path.read_text())
    bad = []
    for name, digest in data["files"].items():
        target = path.parent / name
        if not target.exists() or sha256_file(target) != digest:
            bad.append(name)
    return bad


def run_bench(config: BenchConfig, workers: int | None = None) -> Path:
    outcome = run_sweep(config, workers)
    return write_outputs(config, outcome)
