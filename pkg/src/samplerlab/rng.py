"""Counter-based random number generation (Philox4x64-10).

Every random draw in this package is addressed by an absolute counter
(seed, stream, sequence index, step index, draw index) instead of being
pulled from a stateful generator. Workers can therefore produce any slice
of the draw space independently: results do not depend on how sequences
are sharded across processes or on the order in which cells run.

The block function is the standard 10-round Philox4x64 and is verified
bit-for-bit against ``numpy.random.Philox`` in the test suite.
"""

from __future__ import annotations

import numpy as np

PHILOX_M0 = np.uint64(0xD2E7470EE14C6C93)
PHILOX_M1 = np.uint64(0xCA5A826395121157)
PHILOX_W0 = np.uint64(0x9E3779B97F4A7C15)
PHILOX_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)

# Domain constant mixed into the key so that streams from this package can
# never collide with a plain Philox(seed) stream.
_KEY_DOMAIN = np.uint64(0x53414D504C4C4142)

# Stream identifiers (counter word 1). One per independent purpose.
STREAM_INIT = 0       # initial-state draws (AR first token)
STREAM_AR = 1         # AR trajectory draws
STREAM_DECISION = 2   # per-position unmask/remask decisions
STREAM_TOKEN = 3      # per-position token draws
STREAM_SELECT = 4     # subset selection (random remasking)


def _mulhilo64(a: np.uint64, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Full 64x64 -> 128 bit product via 32-bit limbs; returns (hi, lo)."""
    ah = a >> _SHIFT32
    al = a & _MASK32
    bh = b >> _SHIFT32
    bl = b & _MASK32
    ll = al * bl
    lh = al * bh
    hl = ah * bl
    carry = (ll >> _SHIFT32) + (lh & _MASK32) + (hl & _MASK32)
    hi = ah * bh + (lh >> _SHIFT32) + (hl >> _SHIFT32) + (carry >> _SHIFT32)
    lo = a * b  # wrapping multiply gives the low word directly
    return hi, lo


def philox4x64(counter: np.ndarray, key: np.ndarray, rounds: int = 10) -> np.ndarray:
    """Apply the Philox4x64 block function.

    counter: uint64 array (..., 4); key: uint64 array (..., 2) or (2,).
    Returns uint64 array (..., 4). Pure function of its inputs.
    """
    counter = np.asarray(counter, dtype=np.uint64)
    key = np.asarray(key, dtype=np.uint64)
    c0 = counter[..., 0].copy()
    c1 = counter[..., 1].copy()
    c2 = counter[..., 2].copy()
    c3 = counter[..., 3].copy()
    k0 = np.broadcast_to(key[..., 0], c0.shape).copy()
    k1 = np.broadcast_to(key[..., 1], c0.shape).copy()
    for _ in range(rounds):
        hi0, lo0 = _mulhilo64(PHILOX_M0, c0)
        hi1, lo1 = _mulhilo64(PHILOX_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        k0 = k0 + PHILOX_W0
        k1 = k1 + PHILOX_W1
    return np.stack([c0, c1, c2, c3], axis=-1)


def _key_for_seed(seed: int) -> np.ndarray:
    return np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), _KEY_DOMAIN], dtype=np.uint64)


def _to_unit_interval(bits: np.ndarray) -> np.ndarray:
    # top 53 bits -> double in [0, 1)
    return (bits >> np.uint64(11)) * np.float64(2.0**-53)


def uniform_grid(
    seed: int,
    stream: int,
    step: int,
    seqs: int | np.ndarray,
    n_pos: int,
    draws: int = 1,
) -> np.ndarray:
    """Uniforms addressed by (seed, stream, sequence, step, position, draw).

    ``seqs`` is either a count (sequences 0..n-1) or an array of absolute
    sequence indices. Returns float64 of shape (n_seq, n_pos) when draws == 1,
    else (n_seq, n_pos, draws). The value at a given address never depends on
    the shape of the request, so any worker can regenerate any sub-block.
    """
    if isinstance(seqs, (int, np.integer)):
        seq_ids = np.arange(int(seqs), dtype=np.uint64)
    else:
        seq_ids = np.asarray(seqs, dtype=np.uint64)
    n_seq = seq_ids.shape[0]
    total = n_pos * draws
    n_blocks = (total + 3) // 4
    counter = np.empty((n_seq, n_blocks, 4), dtype=np.uint64)
    counter[..., 0] = np.arange(n_blocks, dtype=np.uint64)[None, :]
    counter[..., 1] = np.uint64(stream)
    counter[..., 2] = seq_ids[:, None]
    counter[..., 3] = np.uint64(step)
    bits = philox4x64(counter.reshape(-1, 4), _key_for_seed(seed))
    out = _to_unit_interval(bits).reshape(n_seq, n_blocks * 4)[:, :total]
    if draws == 1:
        return out.reshape(n_seq, n_pos)
    return out.reshape(n_seq, n_pos, draws)
