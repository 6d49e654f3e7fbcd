"""On-disk formats: puzzle directories and assembly JSON.

A puzzle directory holds ``piece_<id>.png`` for every piece, ``source.png``
when the cropped source is known, and ``manifest.json`` with the spec, seed,
solver input order, ground truth, piece status and flags, and the corruption
record.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from fragmenta.corruption import CorruptionRecord
from fragmenta.puzzle import Assembly, Piece, PieceStatus, Puzzle, PuzzleSpec, load_image, save_image

MANIFEST = "manifest.json"
SOURCE = "source.png"
FORMAT = "fragmenta-puzzle/1"


def piece_filename(piece_id: int) -> str:
    return f"piece_{piece_id}.png"


def spec_to_dict(spec: PuzzleSpec) -> dict:
    return {"rows": spec.rows, "cols": spec.cols, "piece_size": spec.piece_size}


def spec_from_dict(d) -> PuzzleSpec:
    return PuzzleSpec(int(d["rows"]), int(d["cols"]), int(d.get("piece_size", 32)))


def _flag_to_json(flag):
    kind, value = flag
    return [kind, value.item() if isinstance(value, np.generic) else value]


def puzzle_manifest(puzzle: Puzzle) -> dict:
    return {
        "format": FORMAT,
        "spec": spec_to_dict(puzzle.spec),
        "source_id": puzzle.source_id,
        "seed": puzzle.seed,
        "order": [p.id for p in puzzle.pieces],
        "ground_truth": {str(pid): list(cell) for pid, cell in sorted(puzzle.ground_truth.items())},
        "pieces": [
            {"id": p.id, "status": p.status.value, "flags": [_flag_to_json(f) for f in p.flags],
             "file": piece_filename(p.id)}
            for p in sorted(puzzle.pieces, key=lambda p: p.id)
        ],
        "corruption": None if puzzle.corruption is None else puzzle.corruption.to_dict(),
        "source": SOURCE if puzzle.source is not None else None,
    }


def write_json(data, path) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def save_puzzle(puzzle: Puzzle, out_dir) -> Path:
    """Export ``puzzle`` into ``out_dir`` (created if needed); returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for p in puzzle.pieces:
        save_image(p.pixels, out_dir / piece_filename(p.id))
    if puzzle.source is not None:
        save_image(puzzle.source, out_dir / SOURCE)
    manifest = out_dir / MANIFEST
    write_json(puzzle_manifest(puzzle), manifest)
    return manifest


def _manifest_path(path) -> Path:
    path = Path(path)
    return path / MANIFEST if path.is_dir() else path


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def load_puzzle(path) -> Puzzle:
    """Read a puzzle directory (or its ``manifest.json``) back into a :class:`Puzzle`."""
    manifest = _manifest_path(path)
    base = manifest.parent
    data = json.loads(manifest.read_text())
    spec = spec_from_dict(data["spec"])
    s = spec.piece_size
    by_id = {}
    for entry in data["pieces"]:
        pixels = load_image(base / entry["file"])
        if pixels.shape != (s, s, 3):
            raise ValueError(f"{entry['file']} has shape {pixels.shape}, expected {(s, s, 3)}")
        flags = tuple((kind, value) for kind, value in entry.get("flags", []))
        by_id[int(entry["id"])] = Piece(int(entry["id"]), _readonly(pixels),
                                        PieceStatus(entry["status"]), flags)
    pieces = tuple(by_id[int(pid)] for pid in data["order"])
    ground_truth = {int(k): tuple(v) for k, v in data["ground_truth"].items()}
    source = None
    if data.get("source"):
        source = _readonly(load_image(base / data["source"]))
    corruption = data.get("corruption")
    return Puzzle(
        spec, pieces, ground_truth, source=source,
        corruption=None if corruption is None else CorruptionRecord.from_dict(corruption),
        source_id=data.get("source_id", ""), seed=data.get("seed"),
    )


def assembly_to_dict(assembly: Assembly) -> dict:
    return {
        "spec": spec_to_dict(assembly.spec),
        "placements": [[pid, int(r), int(c)] for pid, (r, c) in sorted(assembly.placements.items())],
    }


def assembly_from_dict(d) -> Assembly:
    placements = {int(pid): (int(r), int(c)) for pid, r, c in d["placements"]}
    return Assembly(placements, spec_from_dict(d["spec"]))


def save_assembly(assembly: Assembly, path) -> None:
    write_json(assembly_to_dict(assembly), path)


def load_assembly(path) -> Assembly:
    return assembly_from_dict(json.loads(Path(path).read_text()))
