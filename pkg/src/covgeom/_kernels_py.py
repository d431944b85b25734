"""Pure-numpy fallback for the Gaussian-KDE kernels."""

import numpy as np
from scipy.special import logsumexp

# rows of the (query x reference) exponent matrix built per block
_BLOCK_BYTES = 32 * 2**20


def kde_logpdf_score(query, samples, bandwidth):
    """Return ``(logpdf, score)`` of the Gaussian KDE at each query row."""
    query = np.ascontiguousarray(query, dtype=np.float64)
    samples = np.ascontiguousarray(samples, dtype=np.float64)
    h = np.asarray(bandwidth, dtype=np.float64)
    m, dim = query.shape
    n_ref = samples.shape[0]
    zs = samples / h
    log_norm = np.log(h).sum() + 0.5 * dim * np.log(2.0 * np.pi) + np.log(n_ref)

    logpdf = np.empty(m)
    score = np.empty((m, dim))
    block = max(1, _BLOCK_BYTES // (8 * n_ref * max(dim, 1)))
    for start in range(0, m, block):
        zq = query[start:start + block] / h
        diff = zs[None, :, :] - zq[:, None, :]
        e = -0.5 * np.einsum("qkj,qkj->qk", diff, diff)
        lse = logsumexp(e, axis=1)
        w = np.exp(e - lse[:, None])
        logpdf[start:start + block] = lse - log_norm
        score[start:start + block] = np.einsum("qk,qkj->qj", w, diff) / h
    return logpdf, score
