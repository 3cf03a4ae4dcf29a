"""Realtime refinement over a stream of observations.

Words arrive one cell per timestep.  After each arrival the sampler spends
a fixed budget revisiting earlier timesteps, preferring the newest one with
probability eta.  The script prints how the refinement effort was spread
over lags and how long each step took.
"""
import argparse
import logging

import numpy as np

from rostexplore import (CellKey, GridBounds, RefinementConfig, TopicModel, make_rng,
                         realtime_refine, theta)

log = logging.getLogger("streaming")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=60)
    ap.add_argument("--eta", type=float, default=0.5)
    ap.add_argument("--budget-ms", type=float, default=20.0)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    rng = make_rng(args.seed)
    # a robot drifting along a corridor: the scene changes half way through
    model = TopicModel(8, 40, 0.1, 0.1, GridBounds(args.steps, 1, None))
    cfg = RefinementConfig(eta=args.eta, time_budget_ms=args.budget_ms)
    history, lags, spent = [], np.zeros(args.steps, int), []
    for t in range(args.steps):
        lo = 0 if t < args.steps // 2 else 20
        c = CellKey(t, 0, t)
        model.add_observation(c, rng.integers(lo, lo + 20, 30), rng)
        history.append([c])
        st = realtime_refine(model, history, cfg, rng)
        spent.append(st.elapsed_s * 1000)
        for tt in st.times:
            lags[len(history) - tt] += 1

    log.info("median step %.1f ms, slowest %.1f ms (budget %.0f ms)", np.median(spent), max(spent), args.budget_ms)
    log.info("share of draws on the newest timestep: %.2f", lags[0] / lags.sum())
    log.info("dominant topic at the start %d, at the end %d",
             int(np.argmax(theta(model, CellKey(0, 0, 0)))),
             int(np.argmax(theta(model, CellKey(args.steps - 1, 0, args.steps - 1)))))


if __name__ == "__main__":
    main()
