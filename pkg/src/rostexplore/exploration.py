"""Next-step weight functions and the exploration loop.

The robot moves between 4-connected cells of a static word map.  Each step it
adds the words of a newly visited cell to the topic model, refines the model
within its budget, scores the spatial neighbors and samples the next cell in
proportion to the score divided by a repulsive visit potential.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .core import CellKey, make_rng, spatial_neighbors
from .perplexity import curiosity_decay, topic_perplexity, word_perplexity
from .topic_model import ModelConfig, RefinementConfig, RefineStats, TopicModel, realtime_refine
from .world import WordMap, observe

logger = logging.getLogger(__name__)

# independent RNG streams of one exploration run
_START, _INIT, _REFINE, _SCORE, _MOVE = range(5)


class Policy(str, Enum):
    RANDOM_WALK = "random"
    STOCHASTIC_COVERAGE = "coverage"
    WORD_PERPLEXITY = "wordppx"
    TOPIC_PERPLEXITY = "topicppx"


@dataclass
class ExplorationState:
    current: CellKey
    path: list[CellKey]
    visit_counts: dict[CellKey, int]
    path_topics: np.ndarray
    last_candidates: list[CellKey] = field(default_factory=list)
    last_weights: np.ndarray = field(default_factory=lambda: np.empty(0))

    @classmethod
    def start(cls, c: CellKey, n_topics: int) -> "ExplorationState":
        return cls(c, [c], {c: 1}, np.zeros(n_topics, dtype=np.int64))

    def move_to(self, c: CellKey) -> None:
        self.current = c
        self.path.append(c)
        self.visit_counts[c] = self.visit_counts.get(c, 0) + 1


def repulsive_potential(g: CellKey, state: ExplorationState) -> float:
    """Sum over visited cells of ``visits / d^2``, with ``d^2`` clamped below at 1."""
    if not state.visit_counts:
        return 0.0
    xy = np.array([(c.x, c.y) for c in state.visit_counts], dtype=np.float64)
    n = np.fromiter(state.visit_counts.values(), dtype=np.float64, count=len(state.visit_counts))
    d2 = ((xy - (g.x, g.y)) ** 2).sum(axis=1)
    return float((n / np.maximum(d2, 1.0)).sum())


def step_weights(policy: Policy, candidates: Sequence[CellKey], state: ExplorationState,
                 model: TopicModel | None, world: WordMap | None, rng: np.random.Generator,
                 gamma: float = 1.0) -> np.ndarray:
    """Unnormalised step probabilities for ``candidates`` under ``policy``."""
    policy = Policy(policy)
    m = len(candidates)
    if policy is Policy.RANDOM_WALK:
        return np.ones(m)
    weights = np.empty(m)
    for j, g in enumerate(candidates):
        pot = repulsive_potential(g, state)
        if policy is Policy.STOCHASTIC_COVERAGE:
            score = 1.0
        else:
            words = observe(world, g)
            if policy is Policy.WORD_PERPLEXITY:
                score = word_perplexity(words, model, state.path_topics)
            else:
                score = topic_perplexity(words, model, g, state.path_topics, rng)
            score = curiosity_decay(score, state.visit_counts.get(g, 0), gamma)
        weights[j] = score / pot if pot > 0 else score
    if not np.all(np.isfinite(weights)) or weights.sum() <= 0:
        logger.warning("degenerate step weights %s; falling back to uniform", weights)
        return np.ones(m)
    return weights


def sample_index(weights: np.ndarray, rng: np.random.Generator) -> int:
    """Index drawn with probability proportional to ``weights``."""
    cdf = np.cumsum(weights)
    return min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), len(cdf) - 1)


def commit_path_topics(state: ExplorationState, model: TopicModel, recompute: bool = False) -> None:
    """Fold the current cell's committed labels into the path topic history.

    With ``recompute`` the history is rebuilt from the latest labels of every
    path cell (with multiplicity) instead of accumulating frozen snapshots.
    """
    if recompute:
        hist = np.zeros(model.K, dtype=np.int64)
        for c in state.path:
            if c in model:
                hist += model.cell_topic_counts[model.cell_index(c)]
        state.path_topics = hist
    elif state.current in model:
        state.path_topics = state.path_topics + model.cell_topic_counts[model.cell_index(state.current)]


def next_step(policy: Policy, state: ExplorationState, model: TopicModel, world: WordMap,
              rng: np.random.Generator, gamma: float = 1.0, recompute_path_topics: bool = False,
              score_rng: np.random.Generator | None = None) -> CellKey:
    """Leave the current cell: update the path topic history, score neighbors, move."""
    candidates = spatial_neighbors(state.current, world.bounds)
    if not candidates:
        raise ValueError("no movement candidates: world is a single cell")
    commit_path_topics(state, model, recompute_path_topics)
    w = step_weights(policy, candidates, state, model, world,
                     score_rng if score_rng is not None else rng, gamma)
    choice = candidates[sample_index(w, rng)]
    state.last_candidates, state.last_weights = list(candidates), w
    state.move_to(choice)
    return choice


@dataclass
class TraceRow:
    step: int
    x: int
    y: int
    chosen_weight: float | None
    candidates: list[tuple[int, int, float]]


@dataclass
class ExplorationResult:
    path: list[CellKey]
    model: TopicModel
    trace: list[TraceRow]
    refine: list[RefineStats]
    state: ExplorationState | None = None


def run_exploration(world: WordMap, policy: Policy, steps: int, model_cfg: ModelConfig,
                    refine_cfg: RefinementConfig, seed: int, start: CellKey | None = None,
                    gamma: float = 1.0, recompute_path_topics: bool = False,
                    schedule: Sequence[int] | None = None,
                    snapshots: Sequence[int] = (),
                    on_snapshot: Callable[[int, TopicModel, list[CellKey], float], None] | None = None,
                    ) -> ExplorationResult:
    """Walk ``steps`` cells from ``start`` (random if ``None``), learning online.

    ``schedule[i]`` fixes the number of refinement draws at step ``i+1``
    (used to replay a time-budgeted run exactly).  ``on_snapshot(n, model,
    path, elapsed_ms)`` is called after the refinement of every step ``n`` in
    ``snapshots``; stopping there gives the same model as a run of length
    ``n``.
    """
    policy = Policy(policy)
    model = TopicModel.from_config(model_cfg, world.V, world.bounds)
    if steps <= 0:
        return ExplorationResult([], model, [], [])
    rngs = [make_rng(seed, s) for s in range(5)]
    if start is None:
        start = CellKey(int(rngs[_START].integers(world.width)), int(rngs[_START].integers(world.height)))
    state = ExplorationState.start(start, model.K)
    trace = [TraceRow(1, start.x, start.y, None, [])]
    history: list[list[CellKey]] = []
    refine_log: list[RefineStats] = []
    wanted = set(snapshots)
    t0 = time.perf_counter()
    for step in range(1, steps + 1):
        c = state.current
        if state.visit_counts[c] == 1:
            model.add_observation(c, observe(world, c), rngs[_INIT])
        history.append([c])
        n_draws = schedule[step - 1] if schedule is not None else None
        if model.n_words:
            refine_log.append(realtime_refine(model, history, refine_cfg, rngs[_REFINE], n_draws))
        else:
            refine_log.append(RefineStats())
        if step in wanted and on_snapshot is not None:
            on_snapshot(step, model, list(state.path), (time.perf_counter() - t0) * 1000.0)
        if step == steps:
            break
        nxt = next_step(policy, state, model, world, rngs[_MOVE], gamma, recompute_path_topics,
                        score_rng=rngs[_SCORE])
        k = state.last_candidates.index(nxt)
        trace.append(TraceRow(step + 1, nxt.x, nxt.y, float(state.last_weights[k]),
                              [(g.x, g.y, float(wt)) for g, wt in zip(state.last_candidates, state.last_weights)]))
    return ExplorationResult(state.path, model, trace, refine_log, state)


def write_trace_csv(trace: Sequence[TraceRow], path) -> None:
    """CSV columns: step,x,y,chosen_weight,candidate_weights.

    ``candidate_weights`` lists ``x:y:weight`` triples separated by ``;``;
    weights use ``repr`` so files are reproducible byte for byte.
    """
    lines = ["step,x,y,chosen_weight,candidate_weights"]
    for r in trace:
        cw = "" if r.chosen_weight is None else repr(r.chosen_weight)
        cand = ";".join(f"{x}:{y}:{w!r}" for x, y, w in r.candidates)
        lines.append(f"{r.step},{r.x},{r.y},{cw},{cand}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
