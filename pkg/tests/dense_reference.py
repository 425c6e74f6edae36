"""Independent O(V^2) log-domain forward-backward on the materialized
kernel. Deliberately shares no code with the package's message passing:
full-matrix logsumexp recursions, evidence applied as -inf log factors."""

import numpy as np
from scipy.special import logsumexp


def dense_log_smooth(chain, tokens: np.ndarray) -> np.ndarray:
    """log posterior marginals (T, V) of one masked sequence (-1 = masked)."""
    log_p = np.log(chain.kernel.materialize())
    log_pi = np.log(chain.pi0)
    T = len(tokens)
    v = chain.vocab_size

    def log_phi(t):
        out = np.zeros(v)
        if tokens[t] >= 0:
            out[:] = -np.inf
            out[tokens[t]] = 0.0
        return out

    log_alpha = np.empty((T, v))
    log_alpha[0] = log_pi + log_phi(0)
    for t in range(1, T):
        log_alpha[t] = log_phi(t) + logsumexp(
            log_alpha[t - 1][:, None] + log_p, axis=0
        )
    log_beta = np.empty((T, v))
    log_beta[T - 1] = 0.0
    for t in range(T - 2, -1, -1):
        log_beta[t] = logsumexp(
            log_p + (log_phi(t + 1) + log_beta[t + 1])[None, :], axis=1
        )
    with np.errstate(invalid="ignore"):
        log_gamma = log_alpha + log_beta
        log_gamma -= logsumexp(log_gamma, axis=1, keepdims=True)
    return log_gamma
