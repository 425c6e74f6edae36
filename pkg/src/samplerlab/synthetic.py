"""Deterministic synthetic oracles and corpora.

Used by the verify command and the test suite: small random chains for
brute-force comparisons, an English-like 27-state chain whose conditional
entropy rate is calibrated to the character-level reference value, and a
heavy-tailed document generator standing in for subword corpora.
"""

from __future__ import annotations

import numpy as np

from .corpus import CharVocab
from .kernel import OracleChain, TransitionKernel, stationary

TEXT8_ENTROPY_RATE = 2.3754  # nats per character, bigram conditional

# common digraph structure: strong/medium/weak bonuses, '_' is space
_DIGRAPH_BONUS = {
    3.0: ["qu"],
    1.6: ["th", "he", "in", "er", "an", "re", "on", "at", "en", "nd", "ti", "es", "or"],
    1.2: ["te", "of", "ed", "is", "it", "al", "ar", "st", "to", "nt", "ng", "se", "ha",
          "as", "ou", "io", "le", "ve", "co", "me", "de", "hi", "ri", "ro", "ic", "ne",
          "ea", "ra", "ce", "li", "ch", "ll", "be", "ma", "si", "om", "ur"],
    0.8: ["e_", "s_", "d_", "t_", "n_", "y_", "r_", "o_", "f_", "g_",
          "_t", "_a", "_i", "_s", "_o", "_w", "_c", "_b", "_p", "_h", "_f", "_m"],
    -1.2: ["aa", "ii", "uu", "jj", "qq", "vv", "ww", "xx", "yy", "zz", "kk", "hh"],
    -3.0: ["__"],
    -2.0: ["q_", "_q", "j_", "v_"],
}

# letter frequencies (percent of letters); space takes ~19% of all symbols
_LETTER_FREQ = {
    "e": 12.7, "t": 9.1, "a": 8.2, "o": 7.5, "i": 7.0, "n": 6.7, "s": 6.3,
    "h": 6.1, "r": 6.0, "d": 4.3, "l": 4.0, "c": 2.8, "u": 2.8, "m": 2.4,
    "w": 2.4, "f": 2.2, "g": 2.0, "y": 2.0, "p": 1.9, "b": 1.5, "v": 0.98,
    "k": 0.77, "j": 0.15, "x": 0.15, "q": 0.095, "z": 0.074,
}

_VOWELS = "aeiou"

# per-state row concentration: rare letters have very spiky outgoing rows,
# vowels and space comparatively flat (amplitude 0.15 below keeps the
# confidence-collapse behavior of real character bigram chains)
_ROW_SHARPNESS = {
    " ": 0.7, "e": 0.9, "a": 0.9, "o": 0.9, "i": 0.9, "u": 1.1,
    "q": 5.0, "z": 2.5, "j": 2.5, "x": 2.0, "k": 1.5, "v": 1.8,
    "w": 1.3, "b": 1.2, "t": 1.1, "h": 1.3, "n": 1.1,
}
_SHARPNESS_AMPLITUDE = 0.15
_ALTERNATION = 0.8  # vowel/consonant alternation strength (slows mixing)


def english_like_affinity() -> tuple[np.ndarray, np.ndarray]:
    """Symbol frequencies and a log-affinity matrix over the 27 symbols."""
    v = CharVocab.size
    freq = np.empty(v)
    freq[0] = 19.0
    letter_total = sum(_LETTER_FREQ.values())
    for ch, pct in _LETTER_FREQ.items():
        freq[CharVocab.encode(ch)] = 81.0 * pct / letter_total
    freq /= freq.sum()

    bonus = np.zeros((v, v))
    for value, pairs in _DIGRAPH_BONUS.items():
        for pair in pairs:
            i = CharVocab.encode(pair[0].replace("_", " "))
            j = CharVocab.encode(pair[1].replace("_", " "))
            bonus[i, j] = value
    cls = np.zeros(v)
    for ch in "abcdefghijklmnopqrstuvwxyz":
        cls[CharVocab.encode(ch)] = 1.0 if ch in _VOWELS else -1.0
    bonus -= _ALTERNATION * np.outer(cls, cls)
    return freq, bonus


def _row_gains() -> np.ndarray:
    profile = np.ones(CharVocab.size)
    for ch, g in _ROW_SHARPNESS.items():
        profile[CharVocab.encode(ch)] = g
    return 1.0 + _SHARPNESS_AMPLITUDE * (profile - 1.0)


def _affinity_chain(freq: np.ndarray, bonus: np.ndarray, sharpness: float,
                    epsilon: float, gains: np.ndarray | None = None) -> OracleChain:
    scale = sharpness if gains is None else (sharpness * gains)[:, None]
    rows_dense = freq[None, :] * np.exp(scale * bonus)
    rows_dense /= rows_dense.sum(axis=1, keepdims=True)
    v = len(freq)
    ids = np.arange(v)
    rows = [(ids, rows_dense[i]) for i in range(v)]
    kernel = TransitionKernel(rows, epsilon, freq)
    return OracleChain.from_kernel(kernel)


def english_like_chain(epsilon: float = 1e-4,
                       entropy_target: float = TEXT8_ENTROPY_RATE) -> OracleChain:
    """Deterministic 27-state chain with English digraph structure, with the
    affinity sharpness bisected so the stationary conditional entropy rate
    matches ``entropy_target``."""
    freq, bonus = english_like_affinity()
    gains = _row_gains()

    def entropy_rate_of(lam: float) -> float:
        chain = _affinity_chain(freq, bonus, lam, epsilon, gains)
        dense = chain.kernel.materialize()
        h_rows = -(dense * np.log(dense)).sum(axis=1)
        return float(chain.pi0 @ h_rows)

    lo, hi = 0.0, 4.0
    if not (entropy_rate_of(hi) <= entropy_target <= entropy_rate_of(lo)):
        raise ValueError(f"entropy target {entropy_target} outside the calibratable range")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if entropy_rate_of(mid) > entropy_target:
            lo = mid
        else:
            hi = mid
    return _affinity_chain(freq, bonus, 0.5 * (lo + hi), epsilon, gains)


def english_like_corpus(n_chars: int, seed: int = 0, chain: OracleChain | None = None) -> np.ndarray:
    """One synthetic document of character ids sampled from the chain."""
    from .kernel import sample_ar

    if chain is None:
        chain = english_like_chain()
    return sample_ar(chain, n_chars, 1, seed)[0].astype(np.int64)


def random_chain(V: int, K: int, epsilon: float, seed: int,
                 concentration: float = 1.0) -> OracleChain:
    """Random top-K chain for tests: K distinct successors per state with
    Dirichlet row weights, Dirichlet teleport."""
    gen = np.random.default_rng(seed)
    rows = []
    for _ in range(V):
        ids = np.sort(gen.choice(V, size=min(K, V), replace=False))
        probs = gen.dirichlet(np.full(len(ids), concentration))
        probs = np.maximum(probs, 1e-12)
        rows.append((ids, probs / probs.sum()))
    nu = gen.dirichlet(np.full(V, 5.0))
    nu = np.maximum(nu, 1e-9)
    kernel = TransitionKernel(rows, epsilon, nu)
    return OracleChain(kernel=kernel, pi0=stationary(kernel, tol=1e-12))


def zipf_documents(n_docs: int, doc_len: int, V: int, seed: int,
                   top_ranks: int = 512) -> list[np.ndarray]:
    """Heavy-tailed synthetic documents over a V-token vocabulary.

    Each state transitions through its own permuted rank list with a
    state-specific power-law exponent, so per-state effective supports are
    strongly right-skewed like subword bigram statistics.
    """
    gen = np.random.default_rng(seed)
    R = min(top_ranks, V)
    exponents = gen.uniform(1.05, 2.2, size=V)
    ranks = np.arange(1, R + 1, dtype=np.float64)
    weights = ranks[None, :] ** -exponents[:, None]
    cum = np.cumsum(weights, axis=1)
    cum /= cum[:, -1:]
    successor = np.empty((V, R), dtype=np.int32)
    for i in range(V):
        successor[i] = gen.choice(V, size=R, replace=False)
    docs = []
    state = gen.integers(0, V, size=n_docs)
    tokens = np.empty((n_docs, doc_len), dtype=np.int64)
    tokens[:, 0] = state
    for t in range(1, doc_len):
        u = gen.random(n_docs)
        rank_idx = np.sum(cum[state] < u[:, None], axis=1)
        state = successor[state, np.minimum(rank_idx, R - 1)].astype(np.int64)
        tokens[:, t] = state
    for d in range(n_docs):
        docs.append(tokens[d])
    return docs
