import json

import numpy as np
import pytest

from fragmenta.bench import (
    RESULTS_HEADER, SUMMARY_HEADER, THREADS_ENV, BenchConfig, EmptyCorpus, derive_seed, emit_csv,
    emit_plot, prepare_puzzle, read_results, read_summary, render_svg, run_sweep, scan_corpus,
    verify_manifest, worker_count, write_outputs,
)
from fragmenta.corruption import ERODED_CONTENTS, ERODED_EDGES, MISSING_PIECES
from fragmenta.datasets import smooth_gradient_image
from fragmenta.evaluation import ExperimentReport
from fragmenta.puzzle import PieceStatus, PuzzleSpec, save_image


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    spec = PuzzleSpec(3, 3, 32)
    for k in range(3):
        save_image(smooth_gradient_image(spec, seed=k), root / f"img{k}.png")
    save_image(np.zeros((40, 40, 3), dtype=np.uint8), root / "tiny.png")
    (root / "broken.png").write_bytes(b"not an image")
    (root / "notes.txt").write_text("ignored")
    return root


def _config(corpus, **kw):
    base = dict(corpus_dir=str(corpus), sizes=[(3, 3)],
                corruption={"type": MISSING_PIECES, "levels": [0, 20]})
    base.update(kw)
    return BenchConfig(**base)


def test_config_validation(corpus):
    for bad in [dict(solvers=["nope"]), dict(solvers=[]), dict(sizes=[(1, 6)]),
                dict(corruption={"type": ERODED_EDGES, "levels": [60]}),
                dict(corruption={"type": "noise", "levels": [0]}),
                dict(corruption={"type": MISSING_PIECES, "levels": []}),
                dict(metric_backend={"gallagher": "cosine"}), dict(max_images=0)]:
        with pytest.raises(ValueError):
            _config(corpus, **bad)
    with pytest.raises(ValueError):
        BenchConfig.from_dict({"corpus_dir": "x", "colour": 1})
    cfg = _config(corpus, corruption=[{"type": ERODED_CONTENTS, "levels": [100]},
                                      {"type": MISSING_PIECES, "levels": [50]}])
    assert [s["type"] for s in cfg.sweeps] == [ERODED_CONTENTS, MISSING_PIECES]
    again = BenchConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again.hash() == cfg.hash()
    assert _config(corpus, master_seed=1).hash() != cfg.hash()


def test_derive_seed_stable():
    a = derive_seed(0, "img0", 6, 6, 10)
    assert a == derive_seed(0, "img0", 6, 6, 10.0)
    assert 0 <= a < 2**64
    assert len({a, derive_seed(1, "img0", 6, 6, 10), derive_seed(0, "img1", 6, 6, 10),
                derive_seed(0, "img0", 6, 7, 10), derive_seed(0, "img0", 6, 6, 20)}) == 5


def test_worker_count(monkeypatch):
    monkeypatch.delenv(THREADS_ENV, raising=False)
    assert worker_count(3) == 3
    monkeypatch.setenv(THREADS_ENV, "2")
    assert worker_count(3) == 2 and worker_count(1) == 1
    monkeypatch.setenv(THREADS_ENV, "0")
    assert worker_count(5) == 5


def test_scan_corpus(corpus, tmp_path):
    images, failures = scan_corpus(corpus)
    assert [p.name for p in images] == ["img0.png", "img1.png", "img2.png", "tiny.png"]
    assert failures == ["broken.png"]
    assert len(scan_corpus(corpus, max_images=2)[0]) == 2
    with pytest.raises(EmptyCorpus):
        scan_corpus(tmp_path)
    with pytest.raises(EmptyCorpus):
        scan_corpus(tmp_path / "absent")


def test_level_zero_identical_across_types():
    spec = PuzzleSpec(3, 3, 32)
    img = smooth_gradient_image(spec, seed=5)
    seed = derive_seed(0, "x", 3, 3, 0)
    puzzles = [prepare_puzzle(img, spec, "x", t, 0, seed)
               for t in (MISSING_PIECES, ERODED_EDGES, ERODED_CONTENTS)]
    for p in puzzles[1:]:
        assert [q.id for q in p.pieces] == [q.id for q in puzzles[0].pieces]
        assert all(np.array_equal(a.pixels, b.pixels) for a, b in zip(p.pieces, puzzles[0].pieces))


def test_missing_levels_use_black_substitutes():
    spec = PuzzleSpec(3, 3, 32)
    puzzle = prepare_puzzle(smooth_gradient_image(spec, 1), spec, "x", MISSING_PIECES, 30, 4)
    black = [p for p in puzzle.visible_pieces if p.status is PieceStatus.BLACK_SUBSTITUTE]
    assert len(puzzle.visible_pieces) == 9 and len(black) == 3


def test_single_image_example(corpus, tmp_path):
    cfg = _config(corpus, max_images=1, corruption={"type": MISSING_PIECES, "levels": [0]})
    outcome = run_sweep(cfg, workers=1)
    assert len(outcome.results) == 3
    assert {r.solver for r in outcome.results} == {"gallagher", "paikin-tal", "yu-lp"}
    write_outputs(cfg, outcome, tmp_path)
    rows = read_results(tmp_path / "results.csv")
    assert len(rows) == 3 and all(r["level"] == "0" for r in rows)
    assert all(r["wall_time_s"] == "" for r in rows)


def test_sweep_outputs_deterministic(corpus, tmp_path):
    cfg = _config(corpus)
    first = run_sweep(cfg, workers=1)
    assert first.decode_failures == ["broken.png"] and first.too_small == ["tiny"]
    assert len(first.results) == 3 * 2 * 3
    m1 = write_outputs(cfg, first, tmp_path / "a")
    m2 = write_outputs(cfg, run_sweep(cfg, workers=2), tmp_path / "b")
    for name in ["results.csv", "summary.csv", "plots/direct_comparison_missing_pieces_3x3.svg",
                 "plots/perfect_rate_missing_pieces_3x3.svg"]:
        assert (m1.parent / name).read_bytes() == (m2.parent / name).read_bytes(), name
    assert verify_manifest(m1) == []
    (m1.parent / "summary.csv").write_text("tampered\n")
    assert verify_manifest(m1) == ["summary.csv"]
    manifest = json.loads(m2.read_text())
    assert manifest["config_hash"] == cfg.hash()
    assert manifest["skipped"] == {"decode_failures": ["broken.png"], "too_small": ["tiny"]}
    assert manifest["seeds"]["img0|3x3|20"] == derive_seed(0, "img0", 3, 3, 20)


def test_summary_round_trip(tmp_path):
    reports = [ExperimentReport("yu-lp", 6, 6, MISSING_PIECES, 12.5, 3, 100 / 3, 2 / 3 * 100),
               ExperimentReport("gallagher", 6, 6, MISSING_PIECES, 0.0, 50, 93.22, 86.0)]
    emit_csv([], reports, tmp_path)
    back = read_summary(tmp_path / "summary.csv")
    assert back == sorted(reports, key=lambda g: g.key)
    lines = (tmp_path / "summary.csv").read_text().splitlines()
    assert lines[0] == ",".join(SUMMARY_HEADER)
    assert lines[1].split(",")[4] == "0" and lines[2].split(",")[4] == "12.5"


def test_empty_outputs_are_header_only(tmp_path):
    emit_csv([], [], tmp_path)
    assert (tmp_path / "results.csv").read_text() == ",".join(RESULTS_HEADER) + "\n"
    assert (tmp_path / "summary.csv").read_text() == ",".join(SUMMARY_HEADER) + "\n"


def _reports(ctype=MISSING_PIECES):
    return [ExperimentReport(s, 6, 6, ctype, lv, 10, v, v / 2)
            for s, base in [("gallagher", 90.0), ("yu-lp", 95.0)]
            for lv, v in [(0.0, base), (25.0, base - 20), (50.0, base - 40)]]


def test_svg_deterministic_and_labelled(tmp_path):
    a = render_svg(_reports(), "direct_comparison", "t")
    assert a == render_svg(list(reversed(_reports())), "direct_comparison", "t")
    assert a.startswith("<svg") and a.count("<polyline") == 2
    for tick in ["0", "25", "50", "100", "gallagher", "yu-lp"]:
        assert f">{tick}</text>" in a
    paths = emit_plot(_reports() + _reports(ERODED_EDGES), "perfect_rate", tmp_path)
    assert [p.name for p in paths] == ["perfect_rate_eroded_edges_6x6.svg",
                                       "perfect_rate_missing_pieces_6x6.svg"]
    single = render_svg([r for r in _reports() if r.level == 0], "direct_comparison", "one level")
    assert single.count("<circle") == 2
    with pytest.raises(ValueError):
        emit_plot(_reports(), "accuracy", tmp_path)
