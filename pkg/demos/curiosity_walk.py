"""Follow a single curiosity-driven path across a rare-trail map.

Writes the path trace as CSV and prints the map with the visited cells
marked, so the pull of the trail on the topic-perplexity policy is visible.
"""
import argparse
import logging

from rostexplore import (ModelConfig, Policy, RefinementConfig, generate_synthetic_map,
                         rare_trail_spec, run_exploration, write_trace_csv)

log = logging.getLogger("curiosity_walk")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--policy", default="topicppx", choices=[p.value for p in Policy])
    ap.add_argument("--steps", type=int, default=160)
    ap.add_argument("--size", type=int, default=40)
    ap.add_argument("--seed", type=int, default=2)
    ap.add_argument("--trace", default="path.csv")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    spec = rare_trail_spec(seed=args.seed, shared_fraction=0.0)
    world = generate_synthetic_map(spec, (args.size, args.size), seed=args.seed)
    res = run_exploration(world, Policy(args.policy), args.steps, ModelConfig(n_topics=16),
                          RefinementConfig(sweeps_per_step=10), seed=args.seed)
    write_trace_csv(res.trace, args.trace)

    visited = {(c.x, c.y) for c in res.path}
    trail = world.ground_truth == spec.n_terrains - 1
    on_trail = sum(trail[y, x] for x, y in visited)
    log.info("%s: %d steps, %d distinct cells, %d on the trail", args.policy, len(res.path),
             len(visited), on_trail)
    for y in range(world.height):
        print("".join("#" if (x, y) in visited else ("=" if trail[y, x] else ".")
                      for x in range(world.width)))
    log.info("trace written to %s", args.trace)


if __name__ == "__main__":
    main()
