"""Pure-numpy flooding sum-product kernel, vectorised over a batch of words."""

import numpy as np

LLR_CLIP = 50.0
TANH_CLIP = 19.07
PROD_CLIP = 1.0 - 1e-15


def decode(check_slots, bit_slots, edge_bit, llr, max_iter):
    """Return (posterior, converged, iterations) for each row of ``llr``."""
    n_words = llr.shape[0]
    n_edges = edge_bit.size
    cmask = check_slots >= 0
    cidx = np.where(cmask, check_slots, n_edges)
    bidx = np.where(bit_slots >= 0, bit_slots, n_edges)

    post = llr.copy()
    c2v = np.zeros((n_words, n_edges))
    converged = np.zeros(n_words, dtype=bool)
    iterations = np.zeros(n_words, dtype=np.int64)
    active = np.arange(n_words)

    for it in range(1, max_iter + 1):
        a_post = post[active]
        a_c2v = c2v[active]
        v2c = np.clip(a_post[:, edge_bit] - a_c2v, -LLR_CLIP, LLR_CLIP)
        t = np.ones((active.size, n_edges + 1))
        t[:, :n_edges] = np.tanh(np.clip(0.5 * v2c, -TANH_CLIP, TANH_CLIP))
        tp = t[:, cidx]
        ones = np.ones(tp.shape[:2] + (1,))
        fwd = np.concatenate([ones, np.cumprod(tp, axis=2)[..., :-1]], axis=2)
        bwd = np.concatenate([np.cumprod(tp[..., ::-1], axis=2)[..., ::-1][..., 1:], ones], axis=2)
        excl = np.clip(fwd * bwd, -PROD_CLIP, PROD_CLIP)
        # edges are numbered check-major, so the masked slots come out in edge order
        a_c2v = 2.0 * np.arctanh(excl[:, cmask])
        ext = np.zeros((active.size, n_edges + 1))
        ext[:, :n_edges] = a_c2v
        a_post = llr[active] + ext[:, bidx].sum(axis=2)
        c2v[active] = a_c2v
        post[active] = a_post

        hard = (a_post < 0).astype(np.int8)
        hp = np.zeros((active.size, n_edges + 1), dtype=np.int8)
        hp[:, :n_edges] = hard[:, edge_bit]
        ok = ~np.any(hp[:, cidx].sum(axis=2) % 2, axis=1)
        iterations[active] = it
        converged[active[ok]] = True
        active = active[~ok]
        if active.size == 0:
            break
    return post, converged, iterations
