"""Ground-truth sparse Markov chains with a rank-1 teleport mixture.

The effective transition law is

    P(j | i) = (1 - epsilon) * T(j | i) + epsilon * nu(j)

where T keeps at most K successors per state (renormalized after
truncation) and nu is a strictly positive teleport distribution. The
teleport term bounds every transition probability away from zero, which
keeps posterior smoothing and KL evaluation well defined, and its rank-1
structure lets message passing and power iteration run in O(V*K).
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import rng

DOC_SEPARATOR = 0xFFFFFFFF

# materialize a dense copy of the sparse part below this vocab size
_DENSE_VOCAB_LIMIT = 512

_KERNEL_MAGIC = b"SLKERN01"


@dataclass(frozen=True)
class BigramCounts:
    """Finalized bigram statistics of a token corpus.

    Pairs are stored as sorted uint64 keys ``i * V + j`` with parallel
    counts; ``unigram`` counts every non-separator token (including the
    last token of each document, which has no outgoing transition).
    """

    vocab_size: int
    total_tokens: int
    unigram: np.ndarray
    pair_keys: np.ndarray
    pair_counts: np.ndarray

    def __post_init__(self):
        if int(self.unigram.sum()) != self.total_tokens:
            raise ValueError("unigram counts must sum to total_tokens")
        if np.any(self.pair_counts < 1):
            raise ValueError("every recorded pair must have count >= 1")

    @property
    def n_pairs(self) -> int:
        return len(self.pair_keys)

    @property
    def total_transitions(self) -> int:
        return int(self.pair_counts.sum())

    def row(self, state: int) -> tuple[np.ndarray, np.ndarray]:
        """Successor ids and counts of one state."""
        v = self.vocab_size
        lo = np.searchsorted(self.pair_keys, state * v)
        hi = np.searchsorted(self.pair_keys, (state + 1) * v)
        return (self.pair_keys[lo:hi] % v).astype(np.int64), self.pair_counts[lo:hi]

    def as_dict(self) -> dict[int, dict[int, int]]:
        v = self.vocab_size
        out: dict[int, dict[int, int]] = {}
        for key, cnt in zip(self.pair_keys.tolist(), self.pair_counts.tolist()):
            out.setdefault(key // v, {})[key % v] = cnt
        return out

    def merge(self, other: "BigramCounts") -> "BigramCounts":
        """Combine counts from two independently ingested streams."""
        if other.vocab_size != self.vocab_size:
            raise ValueError("vocab_size mismatch")
        keys = np.concatenate([self.pair_keys, other.pair_keys])
        cnts = np.concatenate([self.pair_counts, other.pair_counts])
        uk, inv = np.unique(keys, return_inverse=True)
        merged = np.zeros(len(uk), dtype=np.int64)
        np.add.at(merged, inv, cnts)
        return BigramCounts(
            vocab_size=self.vocab_size,
            total_tokens=self.total_tokens + other.total_tokens,
            unigram=self.unigram + other.unigram,
            pair_keys=uk,
            pair_counts=merged,
        )


def count_bigrams(
    token_stream, vocab_size: int, chunk_size: int = 1 << 20, flat_chunks: bool = False
) -> BigramCounts:
    """Stream bigram counts from token ids.

    ``token_stream`` is either a flat iterable of ids (DOC_SEPARATOR splits
    documents) or an iterable of per-document id arrays; with
    ``flat_chunks`` set, yielded arrays are instead consecutive pieces of
    one flat stream. Counting restarts at every document boundary, so no
    transition straddles two documents. Memory stays bounded: chunks are
    reduced to unique (pair, count) blocks as they arrive.

    Raises ValueError with the absolute stream position of the first
    out-of-range id.
    """
    if vocab_size < 1:
        raise ValueError("vocab_size must be >= 1")
    v = vocab_size
    unigram = np.zeros(v, dtype=np.int64)
    blocks_keys: list[np.ndarray] = []
    blocks_cnts: list[np.ndarray] = []
    pending = 0  # entries buffered across blocks before consolidation
    total = 0
    carry = -1  # last token of the previous chunk, -1 at document boundaries

    def consolidate() -> None:
        # keep ingestion memory bounded by the number of distinct pairs
        nonlocal pending
        keys = np.concatenate(blocks_keys)
        cnts = np.concatenate(blocks_cnts)
        uk, inv = np.unique(keys, return_inverse=True)
        merged = np.zeros(len(uk), dtype=np.int64)
        np.add.at(merged, inv, cnts)
        blocks_keys.clear()
        blocks_cnts.clear()
        blocks_keys.append(uk)
        blocks_cnts.append(merged)
        pending = len(uk)

    def consume(arr: np.ndarray, base_pos: int, lead: int) -> int:
        nonlocal total
        bad = (arr != DOC_SEPARATOR) & ((arr < 0) | (arr >= v))
        if bad.any():
            at = int(np.argmax(bad))
            raise ValueError(
                f"token id {int(arr[at])} out of range [0, {v}) at stream position {base_pos + at}"
            )
        tokens = arr[arr != DOC_SEPARATOR]
        if len(tokens):
            unigram[:] += np.bincount(tokens, minlength=v)
            total += len(tokens)
        if lead >= 0:
            arr = np.concatenate([np.array([lead], dtype=arr.dtype), arr])
        ok = (arr[:-1] != DOC_SEPARATOR) & (arr[1:] != DOC_SEPARATOR)
        if ok.any():
            nonlocal pending
            pairs = arr[:-1][ok].astype(np.uint64) * np.uint64(v) + arr[1:][ok].astype(np.uint64)
            uk, cnt = np.unique(pairs, return_counts=True)
            blocks_keys.append(uk)
            blocks_cnts.append(cnt.astype(np.int64))
            pending += len(uk)
            if pending > 8 * chunk_size:
                consolidate()
        return int(arr[-1]) if arr[-1] != DOC_SEPARATOR else -1

    def chunks():
        # yields (chunk array, is_whole_document)
        if isinstance(token_stream, np.ndarray):
            flat = token_stream.ravel()
            for lo in range(0, len(flat), chunk_size):
                yield np.asarray(flat[lo:lo + chunk_size], dtype=np.int64), False
            return
        it = iter(token_stream)
        try:
            first = next(it)
        except StopIteration:
            return
        if np.ndim(first) > 0:  # array items: documents, or flat pieces
            for doc in _chain_first(first, it):
                yield np.asarray(doc, dtype=np.int64).ravel(), not flat_chunks
            return
        buf = [int(first)]
        for tok in it:
            buf.append(int(tok))
            if len(buf) >= chunk_size:
                yield np.asarray(buf, dtype=np.int64), False
                buf = []
        if buf:
            yield np.asarray(buf, dtype=np.int64), False

    pos_seen = 0
    for arr, is_doc in chunks():
        if len(arr) == 0:
            continue
        lead = -1 if is_doc else carry
        carry = consume(arr, pos_seen, lead)
        if is_doc:
            carry = -1
        pos_seen += len(arr)

    if blocks_keys:
        keys = np.concatenate(blocks_keys)
        cnts = np.concatenate(blocks_cnts)
        uk, inv = np.unique(keys, return_inverse=True)
        merged = np.zeros(len(uk), dtype=np.int64)
        np.add.at(merged, inv, cnts)
    else:
        uk = np.empty(0, dtype=np.uint64)
        merged = np.empty(0, dtype=np.int64)
    return BigramCounts(
        vocab_size=v,
        total_tokens=total,
        unigram=unigram,
        pair_keys=uk,
        pair_counts=merged,
    )


def _chain_first(first, rest):
    yield first
    yield from rest


@dataclass(frozen=True)
class SparsifyResult:
    """Output of top-K truncation: global K, per-state truncated rows,
    and the per-state effective support sizes k_star used to pick K."""

    K: int
    rows: list[tuple[np.ndarray, np.ndarray]]
    k_star: np.ndarray


def sparsify(counts: BigramCounts, mass_threshold: float, percentile: float) -> SparsifyResult:
    """Truncate each row to its global top-K successors.

    k_star[i] is the smallest k whose top-k successors carry at least
    ``mass_threshold`` of row i's mass; K is the ``percentile`` nearest-rank
    quantile of {k_star}. Rows are truncated to their top-K successors by
    probability (ties broken toward smaller ids) and renormalized. States
    with no outgoing counts receive the unigram distribution, truncated and
    renormalized the same way.
    """
    if not (0.0 < mass_threshold <= 1.0):
        raise ValueError("mass_threshold must be in (0, 1]")
    if not (0.0 < percentile <= 1.0):
        raise ValueError("percentile must be in (0, 1]")
    v = counts.vocab_size
    raw_rows = []
    k_star_list = []
    for i in range(v):
        ids, cnt = counts.row(i)
        if len(ids) == 0:
            raw_rows.append(None)
            continue
        probs = cnt / cnt.sum()
        order = np.argsort(-probs, kind="stable")  # stable: ties keep ascending id
        sorted_probs = probs[order]
        cum = np.cumsum(sorted_probs)
        k_star = int(np.searchsorted(cum, mass_threshold - 1e-12) + 1)
        k_star = min(k_star, len(ids))
        k_star_list.append(k_star)
        raw_rows.append((ids[order], sorted_probs))
    if not k_star_list:
        raise ValueError("no state has outgoing counts; cannot sparsify an empty corpus")
    k_star_arr = np.sort(np.asarray(k_star_list, dtype=np.int64))
    rank = max(1, int(np.ceil(percentile * len(k_star_arr))))  # nearest-rank quantile
    K = int(k_star_arr[rank - 1])

    if counts.total_tokens == 0:
        raise ValueError("empty corpus")
    uni_probs = counts.unigram / counts.unigram.sum()
    uni_order = np.argsort(-uni_probs, kind="stable")

    rows: list[tuple[np.ndarray, np.ndarray]] = []
    for i in range(v):
        raw = raw_rows[i]
        if raw is None:
            ids_sorted, probs_sorted = uni_order, uni_probs[uni_order]
            keep = min(K, int(np.count_nonzero(probs_sorted)))
            if keep == 0:
                raise ValueError(f"state {i} has no outgoing counts and unigram is empty")
        else:
            ids_sorted, probs_sorted = raw
            keep = min(K, len(ids_sorted))
        ids_k = ids_sorted[:keep].astype(np.int64)
        probs_k = probs_sorted[:keep]
        probs_k = probs_k / probs_k.sum()
        order = np.argsort(ids_k)  # rows are stored by ascending successor id
        rows.append((ids_k[order], probs_k[order]))
    return SparsifyResult(K=K, rows=rows, k_star=np.asarray(k_star_list, dtype=np.int64))


class TransitionKernel:
    """Row-stochastic top-K kernel plus rank-1 teleport.

    Rows are stored CSR-style with successor ids ascending, which fixes
    the accumulation order of every sparse reduction.
    """

    def __init__(self, rows: list[tuple[np.ndarray, np.ndarray]], epsilon: float, nu: np.ndarray):
        if not (0.0 < epsilon < 1.0):
            raise ValueError("epsilon must be in (0, 1)")
        nu = np.asarray(nu, dtype=np.float64)
        v = len(rows)
        if nu.shape != (v,):
            raise ValueError("nu length must match the number of states")
        if np.any(nu <= 0):
            raise ValueError("nu must be strictly positive (enable add-one smoothing upstream)")
        nu = nu / nu.sum()

        indptr = np.zeros(v + 1, dtype=np.int64)
        idx_parts = []
        prob_parts = []
        for i, (ids, probs) in enumerate(rows):
            ids = np.asarray(ids, dtype=np.int64)
            probs = np.asarray(probs, dtype=np.float64)
            if len(ids) == 0:
                raise ValueError(f"state {i} has an empty row")
            if np.any(ids < 0) or np.any(ids >= v):
                raise ValueError(f"state {i} has a successor id out of range")
            if np.any(np.diff(ids) <= 0):
                order = np.argsort(ids)
                ids, probs = ids[order], probs[order]
                if np.any(np.diff(ids) == 0):
                    raise ValueError(f"state {i} has duplicate successors")
            total = probs.sum()
            if not np.isfinite(total) or total <= 0:
                raise ValueError(f"state {i} row mass is not positive")
            probs = probs / total
            indptr[i + 1] = indptr[i] + len(ids)
            idx_parts.append(ids)
            prob_parts.append(probs)

        self.vocab_size = v
        self.epsilon = float(epsilon)
        self.nu = nu
        self.indptr = indptr
        self.indices = np.concatenate(idx_parts)
        self.probs = np.concatenate(prob_parts)
        self.K = int(np.max(np.diff(indptr)))

        self._csr = sp.csr_matrix(
            (self.probs, self.indices, self.indptr), shape=(v, v)
        )
        self._csr_t = self._csr.T.tocsr()
        self._dense_topk = self._csr.toarray() if v <= _DENSE_VOCAB_LIMIT else None
        self._dense_topk_t = None
        # support keys are globally sorted because rows and in-row ids ascend
        self._support_keys = (
            np.repeat(np.arange(v, dtype=np.uint64), np.diff(indptr)) * np.uint64(v)
            + self.indices.astype(np.uint64)
        )
        self.nu_cum = np.cumsum(nu)
        self._row_cum_pad = None
        self._row_ids_pad = None

    # -- queries ---------------------------------------------------------

    def row_support(self, state: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.indptr[state], self.indptr[state + 1]
        return self.indices[lo:hi], self.probs[lo:hi]

    def sparse_prob(self, state: int, successor: int) -> float:
        """Top-K part of P(successor | state); 0 when outside the support."""
        ids, probs = self.row_support(state)
        pos = np.searchsorted(ids, successor)
        if pos < len(ids) and ids[pos] == successor:
            return float(probs[pos])
        return 0.0

    def prob(self, state: int, successor: int) -> float:
        """Effective transition probability, O(log K)."""
        return (1.0 - self.epsilon) * self.sparse_prob(state, successor) + self.epsilon * float(
            self.nu[successor]
        )

    def prob_pairs(self, states: np.ndarray, successors: np.ndarray) -> np.ndarray:
        """Vectorized effective probabilities for (state, successor) pairs."""
        states = np.asarray(states, dtype=np.int64)
        successors = np.asarray(successors, dtype=np.int64)
        keys = states.astype(np.uint64) * np.uint64(self.vocab_size) + successors.astype(np.uint64)
        pos = np.searchsorted(self._support_keys, keys)
        pos_c = np.minimum(pos, len(self._support_keys) - 1)
        hit = self._support_keys[pos_c] == keys
        sparse = np.where(hit, self.probs[pos_c], 0.0)
        return (1.0 - self.epsilon) * sparse + self.epsilon * self.nu[successors]

    def log_prob_pairs(self, states: np.ndarray, successors: np.ndarray) -> np.ndarray:
        return np.log(self.prob_pairs(states, successors))

    def in_support(self, states: np.ndarray, successors: np.ndarray) -> np.ndarray:
        """Membership of (state, successor) pairs in the top-K support."""
        keys = (
            np.asarray(states, dtype=np.uint64) * np.uint64(self.vocab_size)
            + np.asarray(successors, dtype=np.uint64)
        )
        pos = np.minimum(np.searchsorted(self._support_keys, keys), len(self._support_keys) - 1)
        return self._support_keys[pos] == keys

    def effective_row(self, state: int) -> np.ndarray:
        """Materialize one full row of P, O(K + V)."""
        row = self.epsilon * self.nu.copy()
        ids, probs = self.row_support(state)
        row[ids] += (1.0 - self.epsilon) * probs
        return row

    def materialize(self) -> np.ndarray:
        """Dense (V, V) effective kernel; intended for small V and tests."""
        dense = self._csr.toarray()
        return (1.0 - self.epsilon) * dense + self.epsilon * self.nu[None, :]

    # -- message-passing primitives (rank-1 teleport split) ---------------

    def push_forward(self, dist: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        """(dist @ P_topK) for a batch of row vectors dist of shape (N, V)."""
        if self._dense_topk is not None:
            return np.matmul(dist, self._dense_topk, out=out)
        return self._csr_t.dot(dist.T).T

    def pull_backward(self, values: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        """(P_topK @ values^T)^T for a batch of column functions (N, V)."""
        if self._dense_topk is not None:
            if self._dense_topk_t is None:
                self._dense_topk_t = np.ascontiguousarray(self._dense_topk.T)
            return np.matmul(values, self._dense_topk_t, out=out)
        return self._csr.dot(values.T).T

    # -- sampling support --------------------------------------------------

    def _padded_rows(self) -> tuple[np.ndarray, np.ndarray]:
        if self._row_cum_pad is None:
            v, k = self.vocab_size, self.K
            cum = np.full((v, k), 2.0)  # padding > any uniform draw
            ids = np.zeros((v, k), dtype=np.int64)
            for i in range(v):
                lo, hi = self.indptr[i], self.indptr[i + 1]
                n = hi - lo
                cum[i, :n] = np.cumsum(self.probs[lo:hi])
                ids[i, :n] = self.indices[lo:hi]
                if n < k:
                    ids[i, n:] = self.indices[hi - 1]
            self._row_cum_pad = cum
            self._row_ids_pad = ids
        return self._row_cum_pad, self._row_ids_pad

    def draw_successors(self, states: np.ndarray, u_branch: np.ndarray, u_token: np.ndarray) -> np.ndarray:
        """One transition per state: sparse branch w.p. 1-epsilon, else teleport."""
        cum, ids = self._padded_rows()
        rows_cum = cum[states]
        k_idx = np.sum(rows_cum < u_token[:, None], axis=1)
        sparse_draw = ids[states, k_idx]
        teleport_draw = np.searchsorted(self.nu_cum, u_token, side="right")
        teleport_draw = np.minimum(teleport_draw, self.vocab_size - 1)
        return np.where(u_branch < 1.0 - self.epsilon, sparse_draw, teleport_draw)

    # -- validation and serialization -------------------------------------

    def validate(self, atol: float = 1e-12) -> None:
        """Check the kernel invariants; raises AssertionError on violation."""
        row_sums = np.add.reduceat(self.probs, self.indptr[:-1])
        assert np.max(np.abs(row_sums - 1.0)) < atol, "retained row mass must sum to 1"
        assert abs(self.nu.sum() - 1.0) < atol, "nu must sum to 1"
        assert np.all(self.nu > 0), "nu must be strictly positive"

    def min_prob(self) -> float:
        return self.epsilon * float(self.nu.min())

    def save(self, path) -> None:
        """Binary container: header, row offset table, (id, prob) pairs, nu."""
        with open(path, "wb") as fh:
            fh.write(_KERNEL_MAGIC)
            fh.write(struct.pack("<III", 1, self.vocab_size, self.K))
            fh.write(struct.pack("<d", self.epsilon))
            fh.write(self.indptr.astype("<u8").tobytes())
            pair = np.empty(len(self.indices), dtype=[("id", "<u4"), ("p", "<f8")])
            pair["id"] = self.indices
            pair["p"] = self.probs
            fh.write(pair.tobytes())
            fh.write(self.nu.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "TransitionKernel":
        with open(path, "rb") as fh:
            magic = fh.read(8)
            if magic != _KERNEL_MAGIC:
                raise ValueError(f"not a kernel file (bad magic {magic!r})")
            version, v, k = struct.unpack("<III", fh.read(12))
            if version != 1:
                raise ValueError(f"unsupported kernel file version {version}")
            (epsilon,) = struct.unpack("<d", fh.read(8))
            indptr = np.frombuffer(fh.read(8 * (v + 1)), dtype="<u8").astype(np.int64)
            nnz = int(indptr[-1])
            pair = np.frombuffer(fh.read(12 * nnz), dtype=[("id", "<u4"), ("p", "<f8")])
            nu = np.frombuffer(fh.read(8 * v), dtype="<f8").astype(np.float64)
        rows = [
            (pair["id"][indptr[i]:indptr[i + 1]].astype(np.int64), pair["p"][indptr[i]:indptr[i + 1]])
            for i in range(v)
        ]
        kernel = cls(rows, epsilon, nu)
        if kernel.K > k:
            raise ValueError("kernel file header K is inconsistent with row lengths")
        return kernel

    def dump_text(self, fh: io.TextIOBase) -> None:
        """Lossless JSON dump, practical for small vocabularies."""
        rows = [
            [[int(i), float(p)] for i, p in zip(*self.row_support(s))]
            for s in range(self.vocab_size)
        ]
        json.dump(
            {
                "format": "samplerlab-kernel",
                "version": 1,
                "vocab_size": self.vocab_size,
                "K": self.K,
                "epsilon": self.epsilon,
                "nu": self.nu.tolist(),
                "rows": rows,
            },
            fh,
        )

    @classmethod
    def from_text(cls, fh: io.TextIOBase) -> "TransitionKernel":
        obj = json.load(fh)
        if obj.get("format") != "samplerlab-kernel":
            raise ValueError("not a kernel text dump")
        rows = [
            (np.array([e[0] for e in row], dtype=np.int64), np.array([e[1] for e in row]))
            for row in obj["rows"]
        ]
        return cls(rows, obj["epsilon"], np.asarray(obj["nu"], dtype=np.float64))


def build_kernel(
    rows: list[tuple[np.ndarray, np.ndarray]],
    epsilon: float,
    nu: np.ndarray,
    add_one_smoothing: bool = False,
) -> TransitionKernel:
    """Assemble the effective kernel from truncated rows and teleport weights.

    ``nu`` is given as nonnegative weights (typically unigram counts). Zeros
    are rejected unless ``add_one_smoothing`` is set, in which case nu
    becomes (w + 1) / (sum(w) + V).
    """
    nu = np.asarray(nu, dtype=np.float64)
    if add_one_smoothing:
        nu = (nu + 1.0) / (nu.sum() + len(nu))
    return TransitionKernel(rows, epsilon, nu)


def dense_rows_from_counts(counts: BigramCounts) -> list[tuple[np.ndarray, np.ndarray]]:
    """Normalized full rows with no truncation (K = V for observed rows);
    unseen predecessors fall back to the unigram distribution."""
    v = counts.vocab_size
    uni = counts.unigram.astype(np.float64)
    rows = []
    for i in range(v):
        ids, cnt = counts.row(i)
        if len(ids) == 0:
            keep = np.nonzero(uni)[0]
            if len(keep) == 0:
                raise ValueError("empty corpus")
            rows.append((keep, uni[keep] / uni[keep].sum()))
        else:
            rows.append((ids, cnt / cnt.sum()))
    return rows


def stationary(
    kernel: TransitionKernel,
    tol: float = 1e-10,
    max_iters: int = 20000,
    init: np.ndarray | None = None,
) -> np.ndarray:
    """Stationary distribution of the effective kernel by power iteration.

    The rank-1 teleport split makes each iteration O(V*K):
    pi <- (1 - eps) * (pi @ P_topK) + eps * nu. Raises RuntimeError with the
    final residual if the L1 fixed-point residual does not fall below tol.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    v = kernel.vocab_size
    if init is None:
        pi = np.full(v, 1.0 / v)
    else:
        pi = np.asarray(init, dtype=np.float64)
        if pi.shape != (v,) or np.any(pi < 0) or pi.sum() <= 0:
            raise ValueError("init must be a nonnegative distribution over V states")
        pi = pi / pi.sum()
    eps = kernel.epsilon
    for _ in range(max_iters):
        nxt = (1.0 - eps) * kernel.push_forward(pi[None, :])[0] + eps * kernel.nu
        nxt /= nxt.sum()
        residual = float(np.abs(nxt - pi).sum())
        pi = nxt
        if residual < tol:
            return pi
    raise RuntimeError(
        f"power iteration did not converge within {max_iters} iterations "
        f"(final L1 residual {residual:.3e}, tol {tol:.3e})"
    )


@dataclass(frozen=True)
class OracleChain:
    """A transition kernel together with its stationary initial law."""

    kernel: TransitionKernel
    pi0: np.ndarray = field(repr=False)

    def __post_init__(self):
        pi0 = np.asarray(self.pi0, dtype=np.float64)
        if abs(pi0.sum() - 1.0) > 1e-12:
            raise ValueError("pi0 must sum to 1 within 1e-12")
        push = (1.0 - self.kernel.epsilon) * self.kernel.push_forward(pi0[None, :])[0]
        push += self.kernel.epsilon * self.kernel.nu
        if np.abs(push - pi0).sum() >= 1e-9:
            raise ValueError("pi0 is not a fixed point of the kernel (residual >= 1e-9)")
        object.__setattr__(self, "pi0", pi0)
        object.__setattr__(self, "_pi0_cum", np.cumsum(pi0))

    @classmethod
    def from_kernel(cls, kernel: TransitionKernel, tol: float = 1e-10) -> "OracleChain":
        return cls(kernel=kernel, pi0=stationary(kernel, tol=tol))

    @property
    def vocab_size(self) -> int:
        return self.kernel.vocab_size

    def draw_initial(self, u: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self._pi0_cum, u, side="right")
        return np.minimum(idx, self.vocab_size - 1)


def sample_ar(chain: OracleChain, T: int, N: int, seed: int, seq_offset: int = 0) -> np.ndarray:
    """Ancestral sampling from the chain itself: x_1 ~ pi0, x_{u+1} ~ P(. | x_u).

    Sampling draws from the mixture directly: a branch draw picks the sparse
    row or the teleport distribution, so no dense row is ever materialized.
    Deterministic in (seed, absolute sequence index, position).
    """
    if T < 1 or N < 1:
        raise ValueError("T and N must be >= 1")
    seqs = np.arange(seq_offset, seq_offset + N)
    out = np.empty((N, T), dtype=np.int32)
    u0 = rng.uniform_grid(seed, rng.STREAM_INIT, 0, seqs, 1)[:, 0]
    out[:, 0] = chain.draw_initial(u0)
    if T == 1:
        return out
    draws = rng.uniform_grid(seed, rng.STREAM_AR, 0, seqs, T - 1, draws=2)
    for t in range(1, T):
        out[:, t] = chain.kernel.draw_successors(
            out[:, t - 1].astype(np.int64), draws[:, t - 1, 0], draws[:, t - 1, 1]
        )
    return out


def sample_ar_sharpened(
    chain: OracleChain, beta: float, T: int, N: int, seed: int, seq_offset: int = 0
) -> np.ndarray:
    """AR sampling with every conditional replaced by its renormalized
    beta-power. beta = 1 delegates to sample_ar and is bit-identical to it."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    if beta == 1.0:
        return sample_ar(chain, T, N, seed, seq_offset=seq_offset)
    if T < 1 or N < 1:
        raise ValueError("T and N must be >= 1")
    seqs = np.arange(seq_offset, seq_offset + N)
    out = np.empty((N, T), dtype=np.int32)
    u0 = rng.uniform_grid(seed, rng.STREAM_INIT, 0, seqs, 1)[:, 0]
    out[:, 0] = chain.draw_initial(u0)
    if T == 1:
        return out
    kernel = chain.kernel
    v = kernel.vocab_size
    draws = rng.uniform_grid(seed, rng.STREAM_AR, 0, seqs, T - 1, draws=2)
    base = kernel.epsilon * kernel.nu
    dense_topk = kernel._csr.toarray() if kernel._dense_topk is None else kernel._dense_topk
    for t in range(1, T):
        states = out[:, t - 1].astype(np.int64)
        rows = base[None, :] + (1.0 - kernel.epsilon) * dense_topk[states]
        rows = rows / rows.max(axis=1, keepdims=True)
        np.power(rows, beta, out=rows)
        np.cumsum(rows, axis=1, out=rows)
        u = draws[:, t - 1, 1] * rows[:, -1]
        idx = (rows < u[:, None]).sum(axis=1)
        out[:, t] = np.minimum(idx, v - 1)
    return out
