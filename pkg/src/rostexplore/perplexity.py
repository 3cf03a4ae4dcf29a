"""Word-space and topic-space perplexity of a candidate cell.

Both scores are conditioned on the topic distribution of the path executed
so far.  A cell with no words scores 1, the neutral weight.
"""
from __future__ import annotations

import numpy as np

from . import _kernels
from .core import CellKey
from .topic_model import TopicModel


def path_topic_distribution(history: np.ndarray, alpha: float) -> np.ndarray:
    """Smoothed topic distribution of the path: ``(history + alpha) / sum``."""
    h = np.asarray(history, dtype=np.float64) + alpha
    return h / h.sum()


def word_perplexity(words, model: TopicModel, path_history: np.ndarray) -> float:
    """Inverse geometric mean of ``sum_k P(w|k) P(k|path)`` over the words."""
    w = np.asarray(words, dtype=np.int64)
    if w.size == 0:
        return 1.0
    p_path = path_topic_distribution(path_history, model.alpha)
    phi_w = (model.topic_word[:, w] + model.beta) / (model.topic_totals + model.V * model.beta)[:, None]
    p_word = p_path @ phi_w
    return float(np.exp(-np.mean(np.log(p_word))))


def sample_provisional_labels(words, model: TopicModel, c: CellKey,
                              rng: np.random.Generator) -> np.ndarray:
    """One Gibbs draw per word from the committed counts; the model is not modified."""
    w = np.asarray(words, dtype=np.int32)
    ctx = model.context_counts(c)
    return _kernels.sample_labels(w, model.topic_word, model.topic_totals, ctx,
                                  model.alpha, model.beta, rng.random(w.size))


def topic_perplexity(words, model: TopicModel, c: CellKey, path_history: np.ndarray,
                     rng: np.random.Generator) -> float:
    """Perplexity of provisional topic labels of ``words`` under the path's topic distribution."""
    w = np.asarray(words, dtype=np.int32)
    if w.size == 0:
        return 1.0
    z = sample_provisional_labels(w, model, c, rng)
    return perplexity_of_labels(z, path_history, model.alpha)


def perplexity_of_labels(labels, path_history: np.ndarray, alpha: float) -> float:
    p_path = path_topic_distribution(path_history, alpha)
    return float(np.exp(-np.mean(np.log(p_path[np.asarray(labels)]))))


def curiosity_decay(score: float, visits: int, gamma: float) -> float:
    """Attenuate a curiosity score by ``gamma ** visits``; ``gamma=1`` disables decay."""
    return score * gamma ** visits
