import numpy as np
import pytest

from rostexplore.core import CellKey, GridBounds, NeighborhoodConfig, make_rng
from rostexplore.topic_model import TopicModel


def brute_conditional(assignments, K, V, alpha, beta, w, cell, exclude, context):
    """Evaluate the collapsed conditional from a raw assignment list.

    ``assignments`` is a list of ``(cell, word, label)``; ``exclude`` is the
    position in that list of the word being resampled (or None); ``context``
    is the set of cells whose topic counts form the neighborhood term.
    """
    table = [[0] * V for _ in range(K)]
    n_gk = [0] * K
    for pos, (c, v, z) in enumerate(assignments):
        if pos == exclude:
            continue
        table[z][v] += 1
        if c in context:
            n_gk[z] += 1
    word = [(table[k][w] + beta) / sum(table[k][v] + beta for v in range(V)) for k in range(K)]
    denom_g = sum(n_gk[k] + alpha for k in range(K))
    ctx = [(n_gk[k] + alpha) / denom_g for k in range(K)]
    p = [word[k] * ctx[k] for k in range(K)]
    s = sum(p)
    return [x / s for x in p]


def random_model(rng, K, V, width=3, height=3, max_words=5, nbhd=None, bounds=None):
    """Small model with random words and labels written straight into its counts."""
    bounds = bounds or GridBounds(width, height, 1)
    model = TopicModel(K, V, float(rng.uniform(0.05, 2)), float(rng.uniform(0.05, 2)), bounds,
                       nbhd or NeighborhoodConfig(1, 1))
    raw = []
    for y in range(height):
        for x in range(width):
            n = int(rng.integers(0, max_words + 1))
            if n == 0:
                continue
            c = CellKey(x, y)
            words = rng.integers(0, V, n)
            model.add_observation(c, words, rng)
            for v, z in zip(model.words(c).tolist(), model.labels(c).tolist()):
                raw.append((c, v, z))
    return model, raw


@pytest.fixture
def rng():
    return make_rng(12345)
