"""Turn a grayscale image into a word map with a patch codebook.

A small codebook is trained on one synthetic texture image and then used
to tokenize a second image into 16-pixel cells, the same way textons turn
aerial imagery into words.
"""
import argparse
import logging

import numpy as np

from rostexplore import make_rng, tokenize_image, train_codebook

log = logging.getLogger("texture_words")


def texture(rng, size=128):
    """Left half smooth and bright, right half noisy and dark."""
    img = np.empty((size, size))
    img[:, : size // 2] = 180 + rng.normal(0, 5, (size, size // 2))
    img[:, size // 2:] = 60 + rng.normal(0, 40, (size, size - size // 2))
    return np.clip(img, 0, 255).astype(np.uint8)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--words", type=int, default=8)
    ap.add_argument("--stride", type=int, default=2)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    rng = make_rng(args.seed)
    cb = train_codebook([texture(rng)], args.words, patch_size=5, seed=args.seed, stride=args.stride)
    log.info("k-means error per iteration: %s", " ".join(f"{e:.0f}" for e in cb.errors[:6]))
    world = tokenize_image(texture(rng), cb, cell_width=16)
    log.info("%dx%d cells, %d words per cell", world.width, world.height, world.cell_words(0, 0).size)
    for y in range(world.height):
        print(" ".join(str(int(np.bincount(world.cell_words(x, y)).argmax())) for x in range(world.width)))


if __name__ == "__main__":
    main()
