"""Run the desk benchmark and print the trend and ordering checks.

Builds the corpus first if it is missing. Prints, per solver and corruption
type, the mean Direct Comparison at each level.
"""
import argparse
import logging
from collections import defaultdict
from pathlib import Path

from fragmenta.bench import BenchConfig, run_sweep, write_outputs
from fragmenta.datasets import desk_photo_corpus


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default="configs/desk.json")
    parser.add_argument("--workers", type=int, default=None)
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    config = BenchConfig.load(args.config)
    corpus = Path(config.corpus_dir)
    if not corpus.is_dir() or not any(corpus.glob("*.png")):
        desk_photo_corpus(corpus, config.max_images or 50)
    outcome = run_sweep(config, args.workers)
    manifest = write_outputs(config, outcome)

    curves = defaultdict(list)
    for g in outcome.reports:
        curves[(g.corruption_type, g.rows, g.cols, g.solver)].append(g)
    for (ctype, rows, cols, solver), groups in sorted(curves.items()):
        cells = "  ".join(f"{g.level:g}:{g.mean_direct_comparison:5.1f}/{g.perfect_rate:3.0f}"
                          for g in sorted(groups, key=lambda g: g.level))
        print(f"{ctype:16s} {rows}x{cols} {solver:11s} {cells}")
    print(f"{outcome.elapsed_s:.1f} s with {outcome.workers} worker(s); manifest at {manifest}")


if __name__ == "__main__":
    main()
