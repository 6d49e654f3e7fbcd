"""Write the desk-scale photo corpus (random crops of scikit-image's bundled photos)."""
import argparse
import logging

from fragmenta.datasets import desk_photo_corpus


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data/desk_corpus")
    parser.add_argument("--count", type=int, default=50)
    parser.add_argument("--size", type=int, default=192, help="crop side in pixels")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO)
    paths = desk_photo_corpus(args.out, args.count, args.size, args.seed)
    print(f"{len(paths)} images in {args.out}")


if __name__ == "__main__":
    main()
