import json

import numpy as np
import pytest

from fragmenta.cli import EXIT_DATA, EXIT_USAGE, main
from fragmenta.datasets import smooth_gradient_image
from fragmenta.io import load_assembly, load_puzzle, save_assembly
from fragmenta.puzzle import Assembly, PuzzleSpec, load_image, save_image


@pytest.fixture
def image(tmp_path):
    path = tmp_path / "grad.png"
    save_image(smooth_gradient_image(PuzzleSpec(3, 3, 32), seed=2), path)
    return path


def _sliced(tmp_path, image):
    assert main(["slice", str(image), "--rows", "3", "--cols", "3", "--seed", "4",
                 "--out", str(tmp_path / "p")]) == 0
    return tmp_path / "p"


def test_slice_solve_eval(tmp_path, image, capsys):
    puzzle_dir = _sliced(tmp_path, image)
    puzzle = load_puzzle(puzzle_dir)
    assert puzzle.source_id == "grad" and len(puzzle.pieces) == 9
    for solver in ["gallagher", "paikin-tal", "yu-lp"]:
        out = tmp_path / f"{solver}.json"
        assert main(["solve", "--puzzle", str(puzzle_dir), "--solver", solver,
                     "--out", str(out), "--dump-table", str(tmp_path / "t.csv")]) == 0
        capsys.readouterr()
        assert main(["eval", "--puzzle", str(puzzle_dir), "--assembly", str(out)]) == 0
        scores = json.loads(capsys.readouterr().out)
        assert scores == {"direct_comparison": 100.0, "perfect": True}
    assert (tmp_path / "t.csv").read_text().startswith("i,j,relation,D")


def test_corrupt(tmp_path, image):
    puzzle_dir = _sliced(tmp_path, image)
    assert main(["corrupt", "--puzzle", str(puzzle_dir), "--type", "missing_pieces",
                 "--level", "30", "--seed", "1", "--out", str(tmp_path / "c")]) == 0
    puzzle = load_puzzle(tmp_path / "c")
    assert len(puzzle.corruption.removed_ids) == 3 and len(puzzle.visible_pieces) == 9
    assert main(["corrupt", "--puzzle", str(puzzle_dir), "--type", "missing_pieces",
                 "--level", "30", "--keep-missing", "--out", str(tmp_path / "k")]) == 0
    assert len(load_puzzle(tmp_path / "k").visible_pieces) == 6
    assert main(["corrupt", "--puzzle", str(puzzle_dir), "--type", "eroded_edges",
                 "--level", "80", "--out", str(tmp_path / "e")]) == EXIT_DATA


def test_render_marks_errors(tmp_path, image):
    puzzle_dir = _sliced(tmp_path, image)
    puzzle = load_puzzle(puzzle_dir)
    placements = dict(puzzle.ground_truth)
    placements[0], placements[8] = placements[8], placements[0]
    save_assembly(Assembly(placements, puzzle.spec), tmp_path / "a.json")
    assert main(["render", "--puzzle", str(puzzle_dir), "--assembly", str(tmp_path / "a.json"),
                 "--out", str(tmp_path / "r.png")]) == 0
    red = np.all(load_image(tmp_path / "r.png") == (255, 0, 0), axis=2)
    assert red[:32, :32].any() and red[64:, 64:].any() and not red[32:64].any()
    assert main(["render", "--puzzle", str(puzzle_dir), "--out", str(tmp_path / "t.png")]) == 0
    assert np.array_equal(load_image(tmp_path / "t.png"), puzzle.source)


def test_bench_and_plot(tmp_path, image):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    image.rename(corpus / image.name)
    config = {"corpus_dir": str(corpus), "solvers": ["gallagher"], "sizes": [[3, 3]],
              "corruption": {"type": "eroded_edges", "levels": [0, 20]}}
    (tmp_path / "cfg.json").write_text(json.dumps(config))
    assert main(["bench", "--config", str(tmp_path / "cfg.json"), "--workers", "1",
                 "--output-dir", str(tmp_path / "run")]) == 0
    assert (tmp_path / "run" / "manifest.json").exists()
    assert main(["plot", str(tmp_path / "run" / "summary.csv"), "--out",
                 str(tmp_path / "plots")]) == 0
    names = sorted(p.name for p in (tmp_path / "plots").iterdir())
    assert names == ["direct_comparison_eroded_edges_3x3.svg", "perfect_rate_eroded_edges_3x3.svg"]


def test_exit_codes(tmp_path, image):
    assert main([]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main(["slice", str(image), "--rows", "3"]) == EXIT_USAGE
    assert main(["solve", "--puzzle", str(tmp_path / "absent"), "--solver", "yu-lp",
                 "--out", str(tmp_path / "x.json")]) == EXIT_DATA
    assert main(["slice", str(image), "--rows", "1", "--cols", "3",
                 "--out", str(tmp_path / "bad")]) == EXIT_DATA
    (tmp_path / "cfg.json").write_text("{not json")
    assert main(["bench", "--config", str(tmp_path / "cfg.json")]) == EXIT_DATA
    assert main(["--help"]) == 0


def test_assembly_file_loads(tmp_path, image):
    puzzle_dir = _sliced(tmp_path, image)
    main(["solve", "--puzzle", str(puzzle_dir), "--solver", "yu-lp", "--out", str(tmp_path / "a.json")])
    assembly = load_assembly(tmp_path / "a.json")
    assert sorted(assembly.placements) == list(range(9))
