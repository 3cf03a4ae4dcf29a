"""Spatiotemporal topic model: sufficient statistics and Gibbs samplers.

The model is collapsed: only counts are stored.  ``theta`` and ``phi`` are
views computed from them on demand.

A cell's context is the cell itself plus its in-bounds neighbors; the
neighborhood topic counts in the Gibbs conditional sum over that context.
With ``spatial_radius=0, temporal_depth=0`` the context is the cell alone and
the sampler is plain per-document LDA with one document per cell.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Sequence

import numpy as np

from . import _kernels
from .core import (UNLABELED, CellKey, GridBounds, Labeling, NeighborhoodConfig,
                   Vocabulary, neighbors, row_major)

if TYPE_CHECKING:
    from .world import WordMap

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = "ROSTMODEL 1"


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters of a topic model (K topics, Dirichlet priors)."""

    n_topics: int = 64
    alpha: float = 0.1
    beta: float = 0.1
    neighborhood: NeighborhoodConfig = field(default_factory=NeighborhoodConfig)

    def __post_init__(self):
        if self.n_topics <= 0:
            raise ValueError("n_topics must be positive")
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")


@dataclass(frozen=True)
class RefinementConfig:
    """Refinement schedule.

    ``eta`` is the refinement bias: the probability that a realtime draw
    targets the newest timestep.  ``time_budget_ms`` bounds each realtime
    step.  If ``sweeps_per_step`` is set, exactly that many draws are made per
    step and the clock is ignored, which makes runs reproducible.
    ``iterations`` is the number of full sweeps in batch mode.
    """

    eta: float = 0.5
    time_budget_ms: float = 200.0
    iterations: int = 50
    sweeps_per_step: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if self.time_budget_ms < 0:
            raise ValueError("time_budget_ms must be >= 0")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.sweeps_per_step is not None and self.sweeps_per_step < 0:
            raise ValueError("sweeps_per_step must be >= 0")


class TopicModel:
    """Counts of a collapsed spatiotemporal topic model.

    Attributes
    ----------
    topic_word : (K, V) int64 array of word-topic counts ``n_k^v``.
    topic_totals : (K,) int64 array, row sums of ``topic_word``.
    cell_topic_counts : (n_cells, K) int64 view, one row per stored cell.
    cell_keys : cells in insertion order; row ``i`` of the count matrix
        belongs to ``cell_keys[i]``.
    """

    def __init__(self, n_topics: int, vocab_size: int, alpha: float = 0.1, beta: float = 0.1,
                 bounds: GridBounds | None = None,
                 neighborhood: NeighborhoodConfig | None = None):
        if n_topics <= 0 or vocab_size <= 0:
            raise ValueError("n_topics and vocab_size must be positive")
        self.K = int(n_topics)
        self.V = int(vocab_size)
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.bounds = bounds
        self.neighborhood = neighborhood if neighborhood is not None else NeighborhoodConfig()
        self.vocab = Vocabulary(self.V)
        self.topic_word = np.zeros((self.K, self.V), dtype=np.int64)
        self.topic_totals = np.zeros(self.K, dtype=np.int64)
        self.cell_keys: list[CellKey] = []
        self._index: dict[CellKey, int] = {}
        self._words: list[np.ndarray] = []
        self._labels: list[np.ndarray] = []
        self._ctx: list[list[int]] = []
        self._ctx_arr: list[np.ndarray | None] = []
        self._cell_topic = np.zeros((16, self.K), dtype=np.int64)

    @classmethod
    def from_config(cls, cfg: ModelConfig, vocab_size: int, bounds: GridBounds | None = None):
        return cls(cfg.n_topics, vocab_size, cfg.alpha, cfg.beta, bounds, cfg.neighborhood)

    # -- bookkeeping -------------------------------------------------------

    @property
    def n_cells(self) -> int:
        return len(self.cell_keys)

    @property
    def n_words(self) -> int:
        return int(self.topic_totals.sum())

    @property
    def cell_topic_counts(self) -> np.ndarray:
        return self._cell_topic[: self.n_cells]

    def __contains__(self, c: CellKey) -> bool:
        return c in self._index

    def cell_index(self, c: CellKey) -> int:
        return self._index[c]

    def words(self, c: CellKey) -> np.ndarray:
        return self._words[self._index[c]]

    def labels(self, c: CellKey) -> np.ndarray:
        return self._labels[self._index[c]]

    def assignments(self, c: CellKey) -> list[tuple[int, int]]:
        i = self._index[c]
        return list(zip(self._words[i].tolist(), self._labels[i].tolist()))

    def _neighbor_keys(self, c: CellKey) -> list[CellKey]:
        if self.bounds is None:
            lo = GridBounds(max(c.x, 0) + self.neighborhood.spatial_radius + 1,
                            max(c.y, 0) + self.neighborhood.spatial_radius + 1, None)
            return neighbors(c, self.neighborhood, lo)
        return neighbors(c, self.neighborhood, self.bounds)

    def _new_cell(self, c: CellKey) -> int:
        if self.bounds is not None and not self.bounds.contains(c):
            raise ValueError(f"{c} outside model grid {self.bounds}")
        i = self.n_cells
        if i == self._cell_topic.shape[0]:
            grown = np.zeros((2 * i, self.K), dtype=np.int64)
            grown[:i] = self._cell_topic
            self._cell_topic = grown
        self.cell_keys.append(c)
        self._index[c] = i
        self._words.append(np.empty(0, dtype=np.int32))
        self._labels.append(np.empty(0, dtype=np.int32))
        ctx = [i]
        for nb in self._neighbor_keys(c):
            j = self._index.get(nb)
            if j is not None:
                ctx.append(j)
                self._ctx[j].append(i)
                self._ctx_arr[j] = None
        self._ctx.append(ctx)
        self._ctx_arr.append(None)
        return i

    def _context(self, i: int) -> np.ndarray:
        arr = self._ctx_arr[i]
        if arr is None:
            arr = np.array(self._ctx[i], dtype=np.int64)
            self._ctx_arr[i] = arr
        return arr

    def add_observation(self, c: CellKey, words, rng: np.random.Generator) -> "TopicModel":
        """Append words to cell ``c`` with topic labels drawn uniformly from all K."""
        w = self.vocab.validate(words)
        if w.size == 0:
            return self
        i = self._index.get(c)
        if i is None:
            i = self._new_cell(c)
        z = rng.integers(0, self.K, size=w.size).astype(np.int32)
        self._words[i] = np.concatenate([self._words[i], w])
        self._labels[i] = np.concatenate([self._labels[i], z])
        np.add.at(self.topic_word, (z, w), 1)
        zc = np.bincount(z, minlength=self.K)
        self.topic_totals += zc
        self._cell_topic[i] += zc
        return self

    def context_counts(self, c: CellKey) -> np.ndarray:
        """Topic counts summed over ``c`` and its neighbors (float64, length K)."""
        i = self._index.get(c)
        if i is not None:
            return self._cell_topic[self._context(i)].sum(axis=0).astype(np.float64)
        rows = [self._index[nb] for nb in self._neighbor_keys(c) if nb in self._index]
        if not rows:
            return np.zeros(self.K)
        return self._cell_topic[rows].sum(axis=0).astype(np.float64)

    def copy(self) -> "TopicModel":
        other = TopicModel(self.K, self.V, self.alpha, self.beta, self.bounds, self.neighborhood)
        other.topic_word = self.topic_word.copy()
        other.topic_totals = self.topic_totals.copy()
        other.cell_keys = list(self.cell_keys)
        other._index = dict(self._index)
        other._words = list(self._words)          # word arrays are never mutated in place
        other._labels = [z.copy() for z in self._labels]
        other._ctx = [list(c) for c in self._ctx]
        other._ctx_arr = [None] * len(self._ctx)
        other._cell_topic = self._cell_topic.copy()
        return other

    def check_invariants(self) -> None:
        """Raise AssertionError if any count disagrees with the stored labels."""
        tw = np.zeros_like(self.topic_word)
        for i in range(self.n_cells):
            w, z = self._words[i], self._labels[i]
            np.add.at(tw, (z, w), 1)
            assert np.array_equal(np.bincount(z, minlength=self.K), self._cell_topic[i]), i
        assert np.array_equal(tw, self.topic_word)
        assert np.array_equal(self.topic_word.sum(axis=1), self.topic_totals)
        assert (self.topic_word >= 0).all() and (self.cell_topic_counts >= 0).all()

    # -- CSR packing for whole-corpus sweeps --------------------------------

    def _pack(self, order: Sequence[int]):
        pos = np.empty(self.n_cells, dtype=np.int64)
        pos[np.asarray(order, dtype=np.int64)] = np.arange(len(order))
        sizes = np.array([self._words[i].size for i in order], dtype=np.int64)
        offsets = np.zeros(len(order) + 1, dtype=np.int64)
        np.cumsum(sizes, out=offsets[1:])
        words = np.concatenate([self._words[i] for i in order]) if order else np.empty(0, np.int32)
        labels = np.concatenate([self._labels[i] for i in order]) if order else np.empty(0, np.int32)
        ctx_ptr = np.zeros(len(order) + 1, dtype=np.int64)
        ctx_idx = []
        for n, i in enumerate(order):
            ctx_idx.extend(pos[j] for j in self._ctx[i])
            ctx_ptr[n + 1] = len(ctx_idx)
        cell_topic = self.cell_topic_counts[np.asarray(order, dtype=np.int64)].copy()
        return offsets, words.astype(np.int32), labels.astype(np.int32), cell_topic, ctx_ptr, \
            np.asarray(ctx_idx, dtype=np.int64)

    def _unpack(self, order: Sequence[int], offsets: np.ndarray, labels: np.ndarray,
                cell_topic: np.ndarray) -> None:
        for n, i in enumerate(order):
            self._labels[i] = labels[offsets[n]:offsets[n + 1]].copy()
            self._cell_topic[i] = cell_topic[n]


# -- posterior views -----------------------------------------------------------

def phi(model: TopicModel, k: int) -> np.ndarray:
    """Word distribution of topic ``k``: proportional to ``n_k^v + beta``."""
    row = model.topic_word[k] + model.beta
    return row / row.sum()


def phi_matrix(model: TopicModel) -> np.ndarray:
    """All topics' word distributions as a (K, V) array."""
    m = model.topic_word + model.beta
    return m / m.sum(axis=1, keepdims=True)


def theta(model: TopicModel, c: CellKey) -> np.ndarray:
    """Topic distribution around cell ``c``: context topic counts plus ``alpha``."""
    v = model.context_counts(c) + model.alpha
    return v / v.sum()


def gibbs_conditional(model: TopicModel, w: int, c: CellKey, exclude: int | None = None) -> np.ndarray:
    """Posterior over the topic of word ``w`` in cell ``c``.

    ``exclude`` is the index of an existing assignment of ``c`` whose counts are
    removed before evaluation; ``None`` scores a word that is not in the model.
    """
    tw = model.topic_word[:, w].astype(np.float64)
    tt = model.topic_totals.astype(np.float64)
    ctx = model.context_counts(c)
    if exclude is not None:
        i = model.cell_index(c)
        if model._words[i][exclude] != w:
            raise ValueError("excluded assignment does not hold word w")
        z = int(model._labels[i][exclude])
        tw[z] -= 1
        tt[z] -= 1
        ctx[z] -= 1
    return conditional_from_counts(tw, tt, ctx, model.alpha, model.beta, model.V)


def conditional_from_counts(word_topic: np.ndarray, topic_totals: np.ndarray, ctx_counts: np.ndarray,
                            alpha: float, beta: float, V: int) -> np.ndarray:
    """Normalised product of the word term and the neighborhood term for one word.

    ``word_topic[k]`` is how often the word carries topic ``k``; all counts
    already exclude the word being resampled.
    """
    word_term = (np.asarray(word_topic, float) + beta) / (np.asarray(topic_totals, float) + V * beta)
    ctx = np.asarray(ctx_counts, float) + alpha
    p = word_term * (ctx / ctx.sum())
    return p / p.sum()


# -- samplers ------------------------------------------------------------------

def resample_cell(model: TopicModel, c: CellKey, rng: np.random.Generator) -> TopicModel:
    """Resample every word of ``c`` in insertion order; unknown cells are a no-op."""
    i = model._index.get(c)
    if i is None:
        return model
    _resample_index(model, i, rng)
    return model


def _resample_index(model: TopicModel, i: int, rng: np.random.Generator) -> None:
    words = model._words[i]
    if words.size == 0:
        return
    ctx = model._cell_topic[model._context(i)].sum(axis=0).astype(np.float64)
    _kernels.sweep_cell(words, model._labels[i], model.topic_word, model.topic_totals,
                        model._cell_topic[i], ctx, model.alpha, model.beta,
                        rng.random(words.size), True)


def batch_refine(model: TopicModel, iterations: int, rng: np.random.Generator) -> TopicModel:
    """Run ``iterations`` full sweeps over all cells in row-major spacetime order."""
    if iterations <= 0 or model.n_cells == 0:
        return model
    order = [model._index[c] for c in row_major(model.cell_keys)]
    offsets, words, labels, cell_topic, ctx_ptr, ctx_idx = model._pack(order)
    for _ in range(iterations):
        _kernels.sweep_corpus(offsets, words, labels, cell_topic, ctx_ptr, ctx_idx,
                              model.topic_word, model.topic_totals, model.alpha, model.beta,
                              rng.random(words.size), True)
    model._unpack(order, offsets, labels, cell_topic)
    return model


def pick_refinement_time(T: int, eta: float, rng: np.random.Generator) -> int:
    """Draw a timestep in ``1..T``: ``T`` with probability ``eta``, else uniform over the past."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if T == 1:
        return 1
    if rng.random() < eta:
        return T
    return int(rng.integers(1, T))


@dataclass
class RefineStats:
    draws: int = 0
    elapsed_s: float = 0.0
    max_draw_s: float = 0.0
    times: list[int] = field(default_factory=list)


def realtime_refine(model: TopicModel, history: Sequence[Sequence[CellKey]],
                    cfg: RefinementConfig, rng: np.random.Generator,
                    n_draws: int | None = None,
                    clock: Callable[[], float] = time.perf_counter) -> RefineStats:
    """Anytime refinement after the observation at timestep ``T = len(history)``.

    Each draw picks ``t ~ P(t|T)`` and resamples every cell in ``history[t-1]``.
    Without a fixed draw count the loop runs until ``cfg.time_budget_ms``
    elapses; the clock is read between cell sweeps, so the overshoot is at
    most one draw.  At least one draw is always made.
    """
    stats = RefineStats()
    T = len(history)
    if T == 0:
        return stats
    fixed = n_draws if n_draws is not None else cfg.sweeps_per_step
    budget = cfg.time_budget_ms / 1000.0
    start = clock()
    prev = start
    while True:
        if fixed is not None and stats.draws >= fixed:
            break
        t = pick_refinement_time(T, cfg.eta, rng)
        for c in history[t - 1]:
            i = model._index.get(c)
            if i is not None:
                _resample_index(model, i, rng)
        stats.draws += 1
        stats.times.append(t)
        now = clock()
        stats.max_draw_s = max(stats.max_draw_s, now - prev)
        prev = now
        if fixed is None and now - start >= budget:
            break
    stats.elapsed_s = prev - start
    return stats


# -- labelings -----------------------------------------------------------------

def majority_labels(labels: np.ndarray, offsets: np.ndarray, n_topics: int) -> np.ndarray:
    """Most frequent label per CSR segment; ties go to the lowest topic; empty -> UNLABELED."""
    out = np.full(offsets.size - 1, UNLABELED, dtype=np.int64)
    for n in range(offsets.size - 1):
        seg = labels[offsets[n]:offsets[n + 1]]
        if seg.size:
            out[n] = int(np.argmax(np.bincount(seg, minlength=n_topics)))
    return out


def model_labeling(model: TopicModel, width: int, height: int, t: int = 0) -> Labeling:
    """Majority label of each stored cell at timestep ``t``."""
    grid = np.full((height, width), UNLABELED, dtype=np.int64)
    for i, c in enumerate(model.cell_keys):
        if c.t == t and model._labels[i].size:
            grid[c.y, c.x] = int(np.argmax(model._cell_topic[i]))
    return Labeling(grid, model.K)


def fold_in_label(world: "WordMap", frozen: TopicModel, iterations: int,
                  rng: np.random.Generator) -> Labeling:
    """Label every cell of ``world`` with topics of a frozen model.

    Only the query map's cell-topic counts evolve; ``frozen.topic_word`` is
    read but never written.  Labels start uniform at random.
    """
    bounds = GridBounds(world.width, world.height, 1)
    order = [(x, y) for y in range(world.height) for x in range(world.width)]
    sizes = np.array([world.cell_words(x, y).size for x, y in order], dtype=np.int64)
    offsets = np.zeros(len(order) + 1, dtype=np.int64)
    np.cumsum(sizes, out=offsets[1:])
    words = np.concatenate([world.cell_words(x, y) for x, y in order]).astype(np.int32) \
        if order else np.empty(0, np.int32)
    if words.size and words.max() >= frozen.V:
        raise ValueError("map vocabulary exceeds the model's")
    labels = rng.integers(0, frozen.K, size=words.size).astype(np.int32)
    cell_topic = np.zeros((len(order), frozen.K), dtype=np.int64)
    for n in range(len(order)):
        cell_topic[n] = np.bincount(labels[offsets[n]:offsets[n + 1]], minlength=frozen.K)
    nb = NeighborhoodConfig(frozen.neighborhood.spatial_radius, 0)
    ctx_ptr = np.zeros(len(order) + 1, dtype=np.int64)
    ctx_idx: list[int] = []
    for n, (x, y) in enumerate(order):
        ctx_idx.append(n)
        ctx_idx.extend(c.y * world.width + c.x for c in neighbors(CellKey(x, y), nb, bounds))
        ctx_ptr[n + 1] = len(ctx_idx)
    ctx_idx_arr = np.asarray(ctx_idx, dtype=np.int64)
    phi_t = np.ascontiguousarray(phi_matrix(frozen).T)
    for _ in range(iterations):
        _kernels.foldin_corpus(offsets, words, labels, cell_topic, ctx_ptr, ctx_idx_arr,
                               phi_t, frozen.alpha, rng.random(words.size))
    grid = majority_labels(labels, offsets, frozen.K).reshape(world.height, world.width)
    return Labeling(grid, frozen.K)


# -- checkpoint I/O --------------------------------------------------------------

def save_checkpoint(model: TopicModel, path: str | Path) -> None:
    """Write a textual checkpoint.

    Layout::

        ROSTMODEL 1
        K <int> V <int>
        ALPHA <float.hex> BETA <float.hex>
        NEIGHBORHOOD <spatial_radius> <temporal_depth>
        BOUNDS <width> <height> <timesteps or ->     (or: BOUNDS -)
        CELLS <n>
        <x> <y> <t> : <w>:<z> <w>:<z> ...            (n lines, insertion order)
        TOPICWORD <K>
        <k> : <v>:<count> ...                        (K lines, nonzero entries)
        END

    Floats use ``float.hex`` so the round trip is bit-exact.  On load the
    topic-word block is checked against the counts implied by the cells.
    """
    lines = [CHECKPOINT_MAGIC, f"K {model.K} V {model.V}",
             f"ALPHA {model.alpha.hex()} BETA {model.beta.hex()}",
             f"NEIGHBORHOOD {model.neighborhood.spatial_radius} {model.neighborhood.temporal_depth}"]
    b = model.bounds
    if b is None:
        lines.append("BOUNDS -")
    else:
        lines.append(f"BOUNDS {b.width} {b.height} {'-' if b.timesteps is None else b.timesteps}")
    lines.append(f"CELLS {model.n_cells}")
    for i, c in enumerate(model.cell_keys):
        pairs = " ".join(f"{w}:{z}" for w, z in zip(model._words[i].tolist(), model._labels[i].tolist()))
        lines.append(f"{c.x} {c.y} {c.t} : {pairs}".rstrip())
    lines.append(f"TOPICWORD {model.K}")
    for k in range(model.K):
        nz = np.flatnonzero(model.topic_word[k])
        lines.append(f"{k} : " + " ".join(f"{v}:{model.topic_word[k, v]}" for v in nz.tolist()))
    lines.append("END")
    Path(path).write_text("\n".join(lines) + "\n")


class CheckpointError(ValueError):
    pass


def load_checkpoint(path: str | Path) -> TopicModel:
    text = Path(path).read_text().splitlines()
    it = iter(enumerate(text, 1))

    def take(prefix):
        try:
            n, line = next(it)
        except StopIteration:
            raise CheckpointError(f"{path}: truncated, expected {prefix}") from None
        tok = line.split()
        if not tok or tok[0] != prefix:
            raise CheckpointError(f"{path}:{n}: expected {prefix!r}, got {line!r}")
        return n, tok

    n, tok = take("ROSTMODEL")
    if tok[1:] != ["1"]:
        raise CheckpointError(f"{path}:{n}: unsupported version")
    try:
        _, tok = take("K")
        K, V = int(tok[1]), int(tok[3])
        _, tok = take("ALPHA")
        alpha, beta = float.fromhex(tok[1]), float.fromhex(tok[3])
        _, tok = take("NEIGHBORHOOD")
        nbhd = NeighborhoodConfig(int(tok[1]), int(tok[2]))
        _, tok = take("BOUNDS")
        bounds = None if tok[1] == "-" else GridBounds(int(tok[1]), int(tok[2]),
                                                        None if tok[3] == "-" else int(tok[3]))
        _, tok = take("CELLS")
        n_cells = int(tok[1])
    except (IndexError, ValueError) as e:
        raise CheckpointError(f"{path}: malformed header: {e}") from None
    model = TopicModel(K, V, alpha, beta, bounds, nbhd)
    for _ in range(n_cells):
        n, line = next(it, (None, None))
        if line is None:
            raise CheckpointError(f"{path}: truncated cell block")
        try:
            head, _, body = line.partition(":")
            x, y, t = (int(s) for s in head.split())
            pairs = [p.split(":") for p in body.split()]
            w = np.array([int(a) for a, _ in pairs], dtype=np.int32)
            z = np.array([int(b) for _, b in pairs], dtype=np.int32)
        except ValueError as e:
            raise CheckpointError(f"{path}:{n}: {e}") from None
        if w.size and (w.max() >= V or z.max() >= K or w.min() < 0 or z.min() < 0):
            raise CheckpointError(f"{path}:{n}: id out of range")
        i = model._new_cell(CellKey(x, y, t))
        model._words[i] = w
        model._labels[i] = z
        np.add.at(model.topic_word, (z, w), 1)
        model._cell_topic[i] = np.bincount(z, minlength=K)
    model.topic_totals = model.topic_word.sum(axis=1)
    _, tok = take("TOPICWORD")
    tw = np.zeros((K, V), dtype=np.int64)
    for _ in range(K):
        n, line = next(it, (None, None))
        if line is None:
            raise CheckpointError(f"{path}: truncated topic-word block")
        head, _, body = line.partition(":")
        k = int(head)
        for p in body.split():
            v, cnt = p.split(":")
            tw[k, int(v)] = int(cnt)
    if not np.array_equal(tw, model.topic_word):
        raise CheckpointError(f"{path}: topic-word block disagrees with cell assignments")
    take("END")
    return model
