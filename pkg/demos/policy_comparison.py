"""Compare the four step policies by how well their models label the map.

Each policy explores from the same restart cells.  The model learned along
each path labels the full map by fold-in, and the labeling is scored by
mutual information against the terrain ground truth.
"""
import argparse
import logging

from rostexplore import (ExperimentConfig, ModelConfig, Policy, RefinementConfig,
                         generate_synthetic_map, mann_whitney, rare_trail_spec, run_experiment)

log = logging.getLogger("policy_comparison")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=32)
    ap.add_argument("--restarts", type=int, default=6)
    ap.add_argument("--lengths", default="20,80")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    world = generate_synthetic_map(rare_trail_spec(seed=args.seed),
                                   (args.size, args.size), seed=args.seed)
    cfg = ExperimentConfig(path_lengths=[int(s) for s in args.lengths.split(",")],
                           restarts=args.restarts, model=ModelConfig(n_topics=32),
                           refine=RefinementConfig(sweeps_per_step=10), batch_iterations=50,
                           fold_in_iterations=10, seed=args.seed, workers=args.workers)
    res = run_experiment(cfg, world)
    print(f"{'policy':<10}" + "".join(f"{n:>10}" for n in cfg.path_lengths))
    for p in Policy:
        print(f"{p.value:<10}" + "".join(f"{res.values(p, n).mean():10.3f}" for n in cfg.path_lengths))
    n = cfg.path_lengths[-1]
    log.info("topicppx vs random at %d steps: p = %.3f", n,
             mann_whitney(res.values(Policy.TOPIC_PERPLEXITY, n), res.values(Policy.RANDOM_WALK, n)))


if __name__ == "__main__":
    main()
