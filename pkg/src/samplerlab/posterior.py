"""Exact posterior marginals over partially masked sequences.

A masked sequence is a hidden-Markov-model observation pattern: revealed
positions are hard evidence, masked positions carry no evidence. Smoothing
combines forward and backward messages into per-position marginals

    gamma_u(v) = p(x_u = v | revealed tokens),

computed exactly in O(T*V*K) by exploiting the rank-1 teleport split of the
kernel: the sparse part is pushed through top-K edges and the teleport part
collapses to a scalar per step.

Messages are propagated in the probability domain with a mandatory
per-position normalization (forward) and max-scaling (backward). This is
algebraically identical to log-domain recursion with per-step log-sum-exp
normalization; strict kernel positivity bounds every retained value away
from underflow, so the exported log lattices are exact. Hard evidence is
applied by index selection (zeroing non-evidence columns), never by -inf
arithmetic.

Note the marginals are per-position only: their product is not the joint
posterior. The gap between that product and the joint is precisely the
independence error the samplers in this package are measured against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernel import OracleChain

MASK = -1

_BRUTE_FORCE_LIMIT = 10_000_000


@dataclass(frozen=True)
class MaskedSequence:
    """Length-T token array over [0, V) with MASK (-1) at hidden positions."""

    tokens: np.ndarray

    def __post_init__(self):
        tokens = np.asarray(self.tokens, dtype=np.int32)
        if tokens.ndim != 1 or len(tokens) == 0:
            raise ValueError("tokens must be a nonempty 1-D array")
        if np.any(tokens < MASK):
            raise ValueError("token ids must be >= 0 (or MASK)")
        object.__setattr__(self, "tokens", tokens)

    @classmethod
    def fully_masked(cls, T: int) -> "MaskedSequence":
        return cls(np.full(T, MASK, dtype=np.int32))

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def revealed_set(self) -> np.ndarray:
        return np.nonzero(self.tokens != MASK)[0]

    def validate_against(self, vocab_size: int) -> None:
        if np.any(self.tokens >= vocab_size):
            raise ValueError(f"token id exceeds vocab size {vocab_size}")


@dataclass(frozen=True)
class PosteriorMarginals:
    """T x V log-probability lattice; rows log-sum-exp to 0."""

    log_gamma: np.ndarray

    @property
    def gamma(self) -> np.ndarray:
        return np.exp(self.log_gamma)

    def check(self, z: MaskedSequence, atol: float = 1e-9) -> None:
        g = self.gamma
        assert np.all(np.isfinite(g)), "gamma must contain no NaN or infinities"
        assert np.max(np.abs(g.sum(axis=1) - 1.0)) < atol
        revealed = z.revealed_set
        if len(revealed):
            assert np.all(g[revealed, z.tokens[revealed]] > 1.0 - atol)


@dataclass(frozen=True)
class MessageLattice:
    """Forward/backward messages plus the per-step scale constants that were
    divided out (forward: log of the pre-normalization row sum; backward:
    log of the row max)."""

    log_alpha: np.ndarray
    log_beta: np.ndarray
    log_scale_fwd: np.ndarray
    log_scale_bwd: np.ndarray


def _apply_evidence(values: np.ndarray, z_col: np.ndarray) -> None:
    """Zero every non-evidence column of rows with revealed tokens, in place."""
    revealed = np.nonzero(z_col >= 0)[0]
    if len(revealed) == 0:
        return
    toks = z_col[revealed].astype(np.int64)
    kept = values[revealed, toks].copy()
    values[revealed, :] = 0.0
    values[revealed, toks] = kept


def _forward_batch(chain: OracleChain, Z: np.ndarray, scales: list | None = None) -> np.ndarray:
    """Normalized forward messages, laid out (T, N, V) for contiguous steps."""
    kernel = chain.kernel
    n, T = Z.shape
    v = kernel.vocab_size
    eps = kernel.epsilon
    eps_nu = eps * kernel.nu
    alpha = np.empty((T, n, v), dtype=np.float64)
    a = alpha[0]
    a[:] = chain.pi0
    _apply_evidence(a, Z[:, 0])
    total = np.empty((n, 1), dtype=np.float64)
    for t in range(T):
        if t > 0:
            a = alpha[t]
            res = kernel.push_forward(alpha[t - 1], out=a)
            if res is not a:
                np.copyto(a, res)
            a *= 1.0 - eps
            a += eps_nu
            _apply_evidence(a, Z[:, t])
        a.sum(axis=1, keepdims=True, out=total)
        if not np.all(total > 0.0) or not np.all(np.isfinite(total)):
            raise RuntimeError(f"forward message vanished at position {t}: numerics bug")
        a /= total
        if scales is not None:
            scales.append(np.log(total[:, 0]))
    return alpha


def _backward_smooth_batch(
    chain: OracleChain,
    Z: np.ndarray,
    alpha: np.ndarray,
    beta_out: np.ndarray | None = None,
    scales: list | None = None,
) -> np.ndarray:
    """Backward messages fused with smoothing; returns gamma (T, N, V)."""
    kernel = chain.kernel
    n, T = Z.shape
    v = kernel.vocab_size
    eps = kernel.epsilon
    gamma = np.empty((T, n, v), dtype=np.float64)
    b = np.ones((n, v), dtype=np.float64)
    x = np.empty_like(b)
    total = np.empty((n, 1), dtype=np.float64)
    gamma[T - 1] = alpha[T - 1]
    if beta_out is not None:
        beta_out[T - 1] = b
    for t in range(T - 2, -1, -1):
        x[:] = b
        _apply_evidence(x, Z[:, t + 1])
        c = x @ kernel.nu  # teleport collapses to one scalar per sequence
        res = kernel.pull_backward(x, out=b)
        if res is not b:
            np.copyto(b, res)
        b *= 1.0 - eps
        b += (eps * c)[:, None]
        peak = b.max(axis=1, keepdims=True)
        if not np.all(peak > 0.0) or not np.all(np.isfinite(peak)):
            raise RuntimeError(f"backward message vanished at position {t}: numerics bug")
        b /= peak
        if scales is not None:
            scales.append(np.log(peak[:, 0]))
        if beta_out is not None:
            beta_out[t] = b
        g = gamma[t]
        np.multiply(alpha[t], b, out=g)
        g.sum(axis=1, keepdims=True, out=total)
        g /= total
    return gamma


_fused_smooth = None


def _get_fused_smooth():
    """Compile the fused dense-kernel smoother on first use; None when
    numba is unavailable. Numerically interchangeable with the numpy path
    (asserted in the test suite)."""
    global _fused_smooth
    if _fused_smooth is not None:
        return _fused_smooth
    try:
        from numba import njit
    except ImportError:
        return None

    @njit(cache=True)
    def fused(P, PT, nu, eps, pi0, Z, alpha, gamma):  # pragma: no cover
        N, T = Z.shape
        V = P.shape[0]
        for n in range(N):
            if Z[n, 0] >= 0:
                for v in range(V):
                    alpha[0, n, v] = 0.0
                alpha[0, n, Z[n, 0]] = 1.0
            else:
                for v in range(V):
                    alpha[0, n, v] = pi0[v]
        for t in range(1, T):
            a = alpha[t]
            np.dot(alpha[t - 1], P, a)
            for n in range(N):
                z = Z[n, t]
                if z >= 0:
                    for v in range(V):
                        a[n, v] = 0.0
                    a[n, z] = 1.0
                else:
                    tot = 0.0
                    for v in range(V):
                        a[n, v] = (1.0 - eps) * a[n, v] + eps * nu[v]
                        tot += a[n, v]
                    if not (tot > 0.0 and np.isfinite(tot)):
                        raise RuntimeError("forward message vanished: numerics bug")
                    inv = 1.0 / tot
                    for v in range(V):
                        a[n, v] *= inv
        b = np.ones((N, V))
        x = np.empty((N, V))
        for n in range(N):
            for v in range(V):
                gamma[T - 1, n, v] = alpha[T - 1, n, v]
        for t in range(T - 2, -1, -1):
            for n in range(N):
                z = Z[n, t + 1]
                if z >= 0:
                    for v in range(V):
                        x[n, v] = 0.0
                    x[n, z] = b[n, z]
                else:
                    for v in range(V):
                        x[n, v] = b[n, v]
            np.dot(x, PT, b)
            for n in range(N):
                c = 0.0
                for v in range(V):
                    c += nu[v] * x[n, v]
                peak = 0.0
                for v in range(V):
                    b[n, v] = (1.0 - eps) * b[n, v] + eps * c
                    if b[n, v] > peak:
                        peak = b[n, v]
                if not (peak > 0.0 and np.isfinite(peak)):
                    raise RuntimeError("backward message vanished: numerics bug")
                inv = 1.0 / peak
                tot = 0.0
                g = gamma[t, n]
                for v in range(V):
                    b[n, v] *= inv
                    g[v] = alpha[t, n, v] * b[n, v]
                    tot += g[v]
                inv = 1.0 / tot
                for v in range(V):
                    g[v] *= inv

    _fused_smooth = fused
    return fused


def smooth_batch_positionwise(chain: OracleChain, Z: np.ndarray, fused: bool = True) -> np.ndarray:
    """Posterior marginals for a batch, laid out (T, N, V).

    The position-major layout is what the samplers consume; it keeps every
    per-position slice contiguous.
    """
    Z = np.asarray(Z)
    if Z.ndim != 2:
        raise ValueError("Z must have shape (N, T)")
    if np.any(Z >= chain.vocab_size) or np.any(Z < MASK):
        raise ValueError("Z contains token ids outside [0, V) and MASK")
    kernel = chain.kernel
    if fused and kernel._dense_topk is not None:
        runner = _get_fused_smooth()
        if runner is not None:
            n, T = Z.shape
            v = kernel.vocab_size
            alpha = np.empty((T, n, v))
            gamma = np.empty((T, n, v))
            if kernel._dense_topk_t is None:
                kernel._dense_topk_t = np.ascontiguousarray(kernel._dense_topk.T)
            runner(kernel._dense_topk, kernel._dense_topk_t, kernel.nu,
                   kernel.epsilon, chain.pi0, np.ascontiguousarray(Z, dtype=np.int32),
                   alpha, gamma)
            return gamma
    alpha = _forward_batch(chain, Z)
    return _backward_smooth_batch(chain, Z, alpha)


def smooth_batch(chain: OracleChain, Z: np.ndarray) -> np.ndarray:
    """Posterior marginals for a batch of masked sequences.

    Z: (N, T) int array with MASK (-1) at hidden positions.
    Returns gamma as probabilities, shape (N, T, V).
    """
    return np.ascontiguousarray(np.moveaxis(smooth_batch_positionwise(chain, Z), 0, 1))


def forward_pass(chain: OracleChain, z: MaskedSequence) -> tuple[np.ndarray, np.ndarray]:
    """Normalized forward messages. Returns (log_alpha (T, V), log_Z (T,))."""
    z.validate_against(chain.vocab_size)
    scales: list = []
    alpha = _forward_batch(chain, z.tokens[None, :], scales)
    with np.errstate(divide="ignore"):
        log_alpha = np.log(alpha[:, 0, :])
    return log_alpha, np.concatenate(scales)


def backward_pass(chain: OracleChain, z: MaskedSequence) -> tuple[np.ndarray, np.ndarray]:
    """Max-scaled backward messages. Returns (log_beta (T, V), log shifts (T,)).

    The terminal row is identically zero in log space (beta_T = 1); per-step
    scaling is arbitrary and cancels in the smoothing marginals.
    """
    z.validate_against(chain.vocab_size)
    T = len(z)
    alpha = _forward_batch(chain, z.tokens[None, :])
    beta = np.empty((T, 1, chain.vocab_size), dtype=np.float64)
    scales: list = []
    _backward_smooth_batch(chain, z.tokens[None, :], alpha, beta_out=beta, scales=scales)
    with np.errstate(divide="ignore"):
        log_beta = np.log(beta[:, 0, :])
    shifts = np.zeros(T)
    if scales:
        shifts[: T - 1] = np.concatenate(scales)[::-1]
    return log_beta, shifts


def compute_lattice(chain: OracleChain, z: MaskedSequence) -> MessageLattice:
    log_alpha, log_z = forward_pass(chain, z)
    log_beta, shifts = backward_pass(chain, z)
    return MessageLattice(log_alpha, log_beta, log_z, shifts)


def smooth(chain: OracleChain, z: MaskedSequence, fused: bool = True) -> PosteriorMarginals:
    """Exact smoothing marginals of one masked sequence.

    Revealed positions come out as point masses at the evidence; masked
    positions are the exact conditionals given every revealed token.
    """
    z.validate_against(chain.vocab_size)
    gamma = smooth_batch_positionwise(chain, z.tokens[None, :], fused=fused)[:, 0, :]
    with np.errstate(divide="ignore"):
        return PosteriorMarginals(np.log(gamma))


def brute_force_posterior(chain: OracleChain, z: MaskedSequence) -> PosteriorMarginals:
    """Marginals by explicit summation over every completion of the masks.

    Independent of the message-passing path: enumerates all assignments of
    the masked positions, weighs each completed sequence by its probability
    under the chain, and normalizes per position. Refuses instances with
    more than ~1e7 completions.
    """
    z.validate_against(chain.vocab_size)
    v = chain.vocab_size
    tokens = z.tokens
    T = len(tokens)
    masked = np.nonzero(tokens == MASK)[0]
    n_comp = v ** len(masked)
    if n_comp > _BRUTE_FORCE_LIMIT:
        raise ValueError(
            f"instance too large for enumeration: V^masked = {v}^{len(masked)} "
            f"= {n_comp:.3e} completions (limit {_BRUTE_FORCE_LIMIT:.0e})"
        )
    dense = chain.kernel.materialize()
    log_dense = np.log(dense)
    log_pi0 = np.log(chain.pi0)

    if len(masked):
        grids = np.indices((v,) * len(masked)).reshape(len(masked), -1).T
    else:
        grids = np.zeros((1, 0), dtype=np.int64)
    seqs = np.tile(tokens.astype(np.int64), (len(grids), 1))
    if len(masked):
        seqs[:, masked] = grids
    logp = log_pi0[seqs[:, 0]]
    for t in range(1, T):
        logp = logp + log_dense[seqs[:, t - 1], seqs[:, t]]
    w = np.exp(logp - logp.max())
    gamma = np.empty((T, v), dtype=np.float64)
    for t in range(T):
        row = np.bincount(seqs[:, t], weights=w, minlength=v)
        gamma[t] = row / row.sum()
    with np.errstate(divide="ignore"):
        return PosteriorMarginals(np.log(gamma))


def dump_lattice(fh, chain: OracleChain, z: MaskedSequence) -> None:
    """Text dump of (log_alpha, log_beta, log_gamma) for golden-file tests.

    Pinned to the portable numpy path so dumps are stable across machines
    with and without the compiled fast path."""
    lattice = compute_lattice(chain, z)
    marginals = smooth(chain, z, fused=False)
    for name, mat in (
        ("log_alpha", lattice.log_alpha),
        ("log_beta", lattice.log_beta),
        ("log_gamma", marginals.log_gamma),
    ):
        fh.write(f"# {name} {mat.shape[0]} {mat.shape[1]}\n")
        for row in mat:
            fh.write(" ".join(f"{x:+.12e}" for x in row) + "\n")
