"""Recover terrain labels from a synthetic word map with the batch sampler.

Every cell of the map is added to a spatial topic model at once, the
sampler sweeps the whole map, and the majority topic of each cell is
compared with the generator's terrain ids.

    python demos/batch_topics.py --size 32 --topics 16
"""
import argparse
import logging

import numpy as np

from rostexplore import (ModelConfig, TerrainSpec, batch_oracle_labeling, entropy,
                         generate_synthetic_map, mutual_information, terrain_distributions)

log = logging.getLogger("batch_topics")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=32)
    ap.add_argument("--terrains", type=int, default=3)
    ap.add_argument("--topics", type=int, default=16)
    ap.add_argument("--iterations", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    spec = TerrainSpec(terrain_distributions(args.terrains, 150, seed=args.seed), "regions", 32.0, n_regions=9)
    world = generate_synthetic_map(spec, (args.size, args.size), seed=args.seed)
    log.info("map %dx%d, %d words", world.width, world.height, world.n_words())

    for iters in (0, 5, 20, args.iterations):
        z, _ = batch_oracle_labeling(world, ModelConfig(n_topics=args.topics), iters, seed=args.seed)
        gt = world.ground_truth_labeling()
        log.info("%4d sweeps: MI %.3f of %.3f bits, %d topics in use",
                 iters, mutual_information(z, gt), entropy(gt), np.unique(z.labels).size)

    # a coarse picture of the final labeling, one character per topic
    chars = "abcdefghijklmnopqrstuvwxyz0123456789"
    for row in z.labels:
        print("".join(chars[k % len(chars)] for k in row))


if __name__ == "__main__":
    main()
