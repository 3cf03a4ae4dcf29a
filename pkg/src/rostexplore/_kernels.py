"""Compiled inner loops of the collapsed Gibbs samplers.

All randomness enters as pre-drawn uniforms so that a numpy ``Generator``
fully determines every trajectory.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _draw(cdf, u):
    # cdf is an unnormalised running sum; u in [0, 1)
    target = u * cdf[cdf.size - 1]
    for k in range(cdf.size):
        if cdf[k] > target:
            return k
    return cdf.size - 1


@njit(cache=True)
def sweep_cell(words, labels, topic_word, topic_totals, cell_counts, ctx_counts,
               alpha, beta, uniforms, update_global):
    """Resample every word of one cell in insertion order.

    ``ctx_counts`` holds the topic counts of the cell's whole context (the
    cell itself included) and is kept current as labels move.
    ``update_global=False`` freezes ``topic_word``/``topic_totals`` (fold-in).
    """
    K = topic_word.shape[0]
    vbeta = topic_word.shape[1] * beta
    cdf = np.empty(K)
    ctx_total = 0.0
    for k in range(K):
        ctx_total += ctx_counts[k]
    for i in range(words.size):
        w = words[i]
        z = labels[i]
        cell_counts[z] -= 1
        ctx_counts[z] -= 1
        if update_global:
            topic_word[z, w] -= 1
            topic_totals[z] -= 1
        denom_ctx = ctx_total - 1.0 + K * alpha
        acc = 0.0
        for k in range(K):
            acc += ((topic_word[k, w] + beta) / (topic_totals[k] + vbeta)) * \
                   ((ctx_counts[k] + alpha) / denom_ctx)
            cdf[k] = acc
        z = _draw(cdf, uniforms[i])
        labels[i] = z
        cell_counts[z] += 1
        ctx_counts[z] += 1
        if update_global:
            topic_word[z, w] += 1
            topic_totals[z] += 1


@njit(cache=True)
def sweep_corpus(offsets, words, labels, cell_topic, ctx_ptr, ctx_idx,
                 topic_word, topic_totals, alpha, beta, uniforms, update_global):
    """One full sweep over cells ``0..n-1`` stored in CSR form.

    Cell ``c`` owns ``words[offsets[c]:offsets[c+1]]``; its context cells
    (itself included) are ``ctx_idx[ctx_ptr[c]:ctx_ptr[c+1]]``.
    """
    K = topic_word.shape[0]
    ctx = np.empty(K)
    for c in range(offsets.size - 1):
        lo = offsets[c]
        hi = offsets[c + 1]
        if hi == lo:
            continue
        for k in range(K):
            ctx[k] = 0.0
        for j in range(ctx_ptr[c], ctx_ptr[c + 1]):
            row = ctx_idx[j]
            for k in range(K):
                ctx[k] += cell_topic[row, k]
        sweep_cell(words[lo:hi], labels[lo:hi], topic_word, topic_totals,
                   cell_topic[c], ctx, alpha, beta, uniforms[lo:hi], update_global)


@njit(cache=True)
def sample_labels(words, topic_word, topic_totals, ctx_counts, alpha, beta, uniforms):
    """Draw one provisional label per word from the committed counts, updating nothing."""
    K = topic_word.shape[0]
    vbeta = topic_word.shape[1] * beta
    cdf = np.empty(K)
    out = np.empty(words.size, dtype=np.int32)
    for i in range(words.size):
        w = words[i]
        acc = 0.0
        for k in range(K):
            acc += ((topic_word[k, w] + beta) / (topic_totals[k] + vbeta)) * (ctx_counts[k] + alpha)
            cdf[k] = acc
        out[i] = _draw(cdf, uniforms[i])
    return out


@njit(cache=True)
def foldin_corpus(offsets, words, labels, cell_topic, ctx_ptr, ctx_idx, phi_t, alpha, uniforms):
    """``sweep_corpus`` against frozen topics; ``phi_t`` is the (V, K) word-topic table.

    Constant normalisers of the conditional are dropped; sampling is invariant to them.
    """
    K = phi_t.shape[1]
    ctx = np.empty(K)
    cdf = np.empty(K)
    for c in range(offsets.size - 1):
        lo = offsets[c]
        hi = offsets[c + 1]
        if hi == lo:
            continue
        for k in range(K):
            ctx[k] = alpha
        for j in range(ctx_ptr[c], ctx_ptr[c + 1]):
            row = ctx_idx[j]
            for k in range(K):
                ctx[k] += cell_topic[row, k]
        for i in range(lo, hi):
            w = words[i]
            z = labels[i]
            cell_topic[c, z] -= 1
            ctx[z] -= 1.0
            acc = 0.0
            for k in range(K):
                acc += phi_t[w, k] * ctx[k]
                cdf[k] = acc
            z = _draw(cdf, uniforms[i])
            labels[i] = z
            cell_topic[c, z] += 1
            ctx[z] += 1.0
