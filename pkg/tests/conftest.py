import os
from pathlib import Path

import numpy as np
import pytest

from samplerlab.synthetic import english_like_chain, random_chain

DATA_DIR = Path(__file__).parent / "data"


def text8_path() -> Path | None:
    """Real text8 corpus, if the environment provides one."""
    env = os.environ.get("SAMPLERLAB_TEXT8")
    if env and Path(env).exists():
        return Path(env)
    local = DATA_DIR / "text8"
    return local if local.exists() else None


@pytest.fixture(scope="session")
def tiny_chain():
    return random_chain(V=4, K=3, epsilon=0.1, seed=1)


@pytest.fixture(scope="session")
def toy3_chain():
    return random_chain(V=3, K=3, epsilon=0.05, seed=42, concentration=2.0)


@pytest.fixture(scope="session")
def char_chain():
    return english_like_chain()


def enumerate_sequence_law(chain, T: int) -> np.ndarray:
    """Exact probability of every length-T sequence, by direct products."""
    dense = chain.kernel.materialize()
    v = chain.vocab_size
    n = v**T
    probs = np.empty(n)
    for code in range(n):
        seq = []
        c = code
        for _ in range(T):
            seq.append(c % v)
            c //= v
        seq = seq[::-1]
        p = chain.pi0[seq[0]]
        for a, b in zip(seq[:-1], seq[1:]):
            p *= dense[a, b]
        probs[code] = p
    return probs


def sequence_codes(seqs: np.ndarray, v: int) -> np.ndarray:
    codes = np.zeros(len(seqs), dtype=np.int64)
    for t in range(seqs.shape[1]):
        codes = codes * v + seqs[:, t]
    return codes
