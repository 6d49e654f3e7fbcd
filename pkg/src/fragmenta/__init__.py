"""Type-1 jigsaw puzzle solvers, corruptions and robustness benchmarks."""

__version__ = "0.1.0"
