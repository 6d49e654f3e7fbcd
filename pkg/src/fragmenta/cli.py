"""Command line entry point: ``fragmenta <subcommand> ...``.

Exit codes: 0 on success, 1 on usage errors, 2 on IO or data errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from fragmenta import bench
from fragmenta.compatibility import Metric, build_match_table, dump_table_csv
from fragmenta.corruption import KINDS, MISSING_PIECES, CorruptionSpec, apply_corruption, substitute_black_patches
from fragmenta.evaluation import evaluate
from fragmenta.io import load_assembly, load_puzzle, save_assembly, save_puzzle
from fragmenta.puzzle import PuzzleSpec, fit_image, load_image, render_assembly, save_image, shuffle_pieces, slice_image
from fragmenta.solvers import DEFAULT_METRIC, SOLVERS

EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def cmd_slice(args) -> int:
    spec = PuzzleSpec(args.rows, args.cols, args.piece_size)
    image = load_image(args.image)
    if not args.no_fit:
        image = fit_image(image, spec)
    source_id = args.source_id or Path(args.image).stem
    puzzle = slice_image(image, spec, source_id)
    if not args.no_shuffle:
        puzzle = shuffle_pieces(puzzle, args.seed)
    print(save_puzzle(puzzle, args.out))
    return 0


def cmd_corrupt(args) -> int:
    puzzle = load_puzzle(args.puzzle)
    spec = CorruptionSpec.from_percent(args.type, args.level, args.seed)
    puzzle = apply_corruption(puzzle, spec)
    if args.type == MISSING_PIECES and not args.keep_missing:
        puzzle = substitute_black_patches(puzzle)
    print(save_puzzle(puzzle, args.out))
    return 0


def cmd_solve(args) -> int:
    puzzle = load_puzzle(args.puzzle)
    metric = Metric(args.metric) if args.metric else DEFAULT_METRIC[args.solver]
    pieces = puzzle.visible_pieces
    table = build_match_table(pieces, metric)
    if args.dump_table:
        dump_table_csv(table, args.dump_table)
    assembly = SOLVERS[args.solver](pieces, table, puzzle.spec)
    save_assembly(assembly, args.out)
    print(args.out)
    return 0


def cmd_eval(args) -> int:
    puzzle = load_puzzle(args.puzzle)
    assembly = load_assembly(args.assembly)
    dc, perfect = evaluate(assembly, puzzle)
    print(json.dumps({"direct_comparison": dc, "perfect": perfect}))
    return 0


def cmd_bench(args) -> int:
    config = bench.BenchConfig.load(args.config)
    if args.output_dir:
        config.output_dir = args.output_dir
    print(bench.run_bench(config, args.workers))
    return 0


def cmd_plot(args) -> int:
    reports = bench.read_summary(args.summary)
    metrics = bench.PLOT_METRICS if args.metric == "both" else (args.metric,)
    for metric in metrics:
        for path in bench.emit_plot(reports, metric, args.out):
            print(path)
    return 0


def cmd_render(args) -> int:
    puzzle = load_puzzle(args.puzzle)
    assembly = load_assembly(args.assembly) if args.assembly else puzzle.ground_truth_assembly()
    assembly.validate_against(puzzle)
    save_image(render_assembly(assembly, puzzle, mark_errors=not args.no_marks), args.out)
    print(args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fragmenta", description="Type-1 jigsaw puzzle solving and benchmarking.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("slice", help="cut an image into a shuffled puzzle directory")
    p.add_argument("image")
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--cols", type=int, required=True)
    p.add_argument("--piece-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0, help="shuffle seed")
    p.add_argument("--source-id", default=None)
    p.add_argument("--no-shuffle", action="store_true")
    p.add_argument("--no-fit", action="store_true", help="crop only, never downscale")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_slice)

    p = sub.add_parser("corrupt", help="apply one corruption to a puzzle directory")
    p.add_argument("--puzzle", required=True)
    p.add_argument("--type", choices=KINDS, required=True)
    p.add_argument("--level", type=float, required=True, help="percent")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--keep-missing", action="store_true",
                   help="do not replace missing pieces with black patches")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("solve", help="reassemble a puzzle directory")
    p.add_argument("--puzzle", required=True)
    p.add_argument("--solver", choices=sorted(SOLVERS), required=True)
    p.add_argument("--metric", choices=[m.value for m in Metric], default=None)
    p.add_argument("--dump-table", default=None, help="write the match table as CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("eval", help="score an assembly against its puzzle")
    p.add_argument("--puzzle", required=True)
    p.add_argument("--assembly", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="run a benchmark sweep from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--output-dir", default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("plot", help="draw SVG charts from a summary.csv")
    p.add_argument("summary")
    p.add_argument("--metric", choices=bench.PLOT_METRICS + ("both",), default="both")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("render", help="draw an assembly, marking misplaced pieces")
    p.add_argument("--puzzle", required=True)
    p.add_argument("--assembly", default=None, help="defaults to the ground truth")
    p.add_argument("--no-marks", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"fragmenta {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
