"""Transition-level and surface evaluation of generated sequences.

All distributional metrics compare the empirical next-token conditionals
p_hat(j | i), estimated from the generated batch, against the effective
kernel P(j | i), weighted by the empirical state frequency pi_hat(i).
The identity nll_rate = kl_rate + entropy_rate holds for every report and
is verified at construction.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields

import numpy as np

from .kernel import OracleChain
from .posterior import MASK

CSV_COLUMNS = [
    "Dataset", "Type", "Model", "Steps", "Seed",
    "NLL", "KL rate", "TV rate", "Ent rate", "Unigram L1",
    "2-gram Diversity", "3-gram Diversity", "Duplicate", "Other mass", "Support frac",
]

_IDENTITY_TOL = 1e-9


@dataclass(frozen=True)
class TransitionStats:
    """Sparse empirical transition counts of a generated batch.

    pair_keys are sorted uint64 codes i * V + j with counts >= 1;
    row_totals[i] = sum_j c(i, j); the empirical state frequency is
    pi_hat(i) = row_totals[i] / (N * (T - 1)).
    """

    vocab_size: int
    n_sequences: int
    seq_len: int
    pair_keys: np.ndarray
    pair_counts: np.ndarray
    row_totals: np.ndarray

    def __post_init__(self):
        total = self.n_sequences * (self.seq_len - 1)
        if int(self.pair_counts.sum()) != total:
            raise ValueError("pair counts must sum to N * (T - 1)")
        if int(self.row_totals.sum()) != total:
            raise ValueError("row totals must sum to N * (T - 1)")

    @property
    def total(self) -> int:
        return self.n_sequences * (self.seq_len - 1)

    @property
    def n_pairs(self) -> int:
        return len(self.pair_keys)

    @property
    def pi_hat(self) -> np.ndarray:
        return self.row_totals / self.total

    @property
    def states(self) -> np.ndarray:
        return (self.pair_keys // np.uint64(self.vocab_size)).astype(np.int64)

    @property
    def successors(self) -> np.ndarray:
        return (self.pair_keys % np.uint64(self.vocab_size)).astype(np.int64)

    def merge(self, other: "TransitionStats") -> "TransitionStats":
        """Counts of the concatenation of two batches (same T, same V)."""
        if (other.vocab_size, other.seq_len) != (self.vocab_size, self.seq_len):
            raise ValueError("cannot merge stats with different vocab or length")
        keys = np.concatenate([self.pair_keys, other.pair_keys])
        cnts = np.concatenate([self.pair_counts, other.pair_counts])
        uk, inv = np.unique(keys, return_inverse=True)
        merged = np.zeros(len(uk), dtype=np.int64)
        np.add.at(merged, inv, cnts)
        return TransitionStats(
            vocab_size=self.vocab_size,
            n_sequences=self.n_sequences + other.n_sequences,
            seq_len=self.seq_len,
            pair_keys=uk,
            pair_counts=merged,
            row_totals=self.row_totals + other.row_totals,
        )


def accumulate(sequences: np.ndarray, vocab_size: int) -> TransitionStats:
    """Count transitions of a (N, T) batch of finished sequences.

    Rejects any residual mask sentinel or out-of-range id, reporting the
    offending (sequence, position).
    """
    seqs = np.asarray(sequences)
    if seqs.ndim != 2 or seqs.shape[1] < 2:
        raise ValueError("sequences must have shape (N, T) with T >= 2")
    bad = (seqs < 0) | (seqs >= vocab_size)
    if bad.any():
        n, t = np.argwhere(bad)[0]
        what = "residual MASK token" if seqs[n, t] == MASK else f"token id {int(seqs[n, t])}"
        raise ValueError(f"{what} at sequence {int(n)}, position {int(t)}")
    n, T = seqs.shape
    v = np.uint64(vocab_size)
    pairs = seqs[:, :-1].astype(np.uint64) * v + seqs[:, 1:].astype(np.uint64)
    uk, cnt = np.unique(pairs.ravel(), return_counts=True)
    row_totals = np.bincount(seqs[:, :-1].ravel(), minlength=vocab_size).astype(np.int64)
    return TransitionStats(
        vocab_size=vocab_size,
        n_sequences=n,
        seq_len=T,
        pair_keys=uk,
        pair_counts=cnt.astype(np.int64),
        row_totals=row_totals,
    )


def nll_rate(stats: TransitionStats, chain: OracleChain) -> float:
    """Average negative log-likelihood of the observed transitions under
    the kernel; finite because every effective transition is positive."""
    if stats.total == 0:
        raise ValueError("empty stats")
    logp = chain.kernel.log_prob_pairs(stats.states, stats.successors)
    return float(-(stats.pair_counts * logp).sum() / stats.total)


def kl_rate(stats: TransitionStats, chain: OracleChain) -> float:
    """State-weighted KL of empirical conditionals from the kernel rows.
    Cells the batch never visited contribute zero."""
    logp = chain.kernel.log_prob_pairs(stats.states, stats.successors)
    log_phat = np.log(stats.pair_counts / stats.row_totals[stats.states])
    return float((stats.pair_counts * (log_phat - logp)).sum() / stats.total)


def entropy_rate(stats: TransitionStats) -> float:
    log_phat = np.log(stats.pair_counts / stats.row_totals[stats.states])
    return float(-(stats.pair_counts * log_phat).sum() / stats.total)


def tv_rate(stats: TransitionStats, chain: OracleChain) -> float:
    """State-weighted total variation between empirical conditionals and
    effective rows. Successors outside both the empirical support and the
    sparse support differ by exactly epsilon * nu(j); that tail is summed
    analytically per state instead of scanning all V columns."""
    kernel = chain.kernel
    eps = kernel.epsilon
    total = stats.total
    acc = 0.0
    states = stats.states
    row_starts = np.searchsorted(states, np.arange(kernel.vocab_size))
    row_ends = np.searchsorted(states, np.arange(kernel.vocab_size), side="right")
    for i in np.nonzero(stats.row_totals)[0]:
        lo, hi = row_starts[i], row_ends[i]
        emp_j = stats.successors[lo:hi]
        emp_p = stats.pair_counts[lo:hi] / stats.row_totals[i]
        sup_j, sup_p = kernel.row_support(i)
        union = np.union1d(emp_j, sup_j)
        p_hat = np.zeros(len(union))
        p_hat[np.searchsorted(union, emp_j)] = emp_p
        p_eff = eps * kernel.nu[union]
        p_eff[np.searchsorted(union, sup_j)] += (1.0 - eps) * sup_p
        tail = eps * (1.0 - kernel.nu[union].sum())
        acc += (stats.row_totals[i] / total) * 0.5 * (np.abs(p_hat - p_eff).sum() + tail)
    return float(acc)


def surface_metrics(
    sequences: np.ndarray, chain: OracleChain, stats: TransitionStats | None = None
) -> tuple[float, float, float, float]:
    """(unigram L1 to the stationary law, 2-gram diversity, 3-gram
    diversity, duplication rate). Diversity pools n-grams over the whole
    batch: unique n-grams / total n-grams."""
    seqs = np.asarray(sequences)
    if stats is None:
        stats = accumulate(seqs, chain.vocab_size)
    unigram_l1 = float(np.abs(stats.pi_hat - chain.pi0).sum())

    v = np.uint64(chain.vocab_size)
    big = seqs[:, :-1].astype(np.uint64) * v + seqs[:, 1:].astype(np.uint64)
    div2 = len(np.unique(big.ravel())) / big.size
    tri = big[:, :-1] * v + seqs[:, 2:].astype(np.uint64)
    div3 = len(np.unique(tri.ravel())) / tri.size

    n_distinct = len(np.unique(seqs, axis=0))
    duplication = 1.0 - n_distinct / seqs.shape[0]
    return unigram_l1, float(div2), float(div3), float(duplication)


def coverage_metrics(stats: TransitionStats, chain: OracleChain) -> tuple[float, float]:
    """(other_mass, support_fraction): empirical mass landing outside the
    top-K sparse support (teleport excluded), and distinct observed
    transition types over total observed transitions."""
    inside = chain.kernel.in_support(stats.states, stats.successors)
    other_mass = float(stats.pair_counts[~inside].sum() / stats.total)
    support_fraction = len(stats.pair_keys) / stats.total
    return other_mass, float(support_fraction)


@dataclass(frozen=True)
class MetricsReport:
    """One evaluation row in the harness CSV schema."""

    dataset: str
    kind: str
    model: str
    steps: int | None
    seed: int | None
    nll_rate: float
    kl_rate: float
    tv_rate: float
    entropy_rate: float
    unigram_l1: float
    diversity_2gram: float
    diversity_3gram: float
    duplication_rate: float
    other_mass: float
    support_fraction: float

    def __post_init__(self):
        if self.kl_rate < -_IDENTITY_TOL or not np.isfinite(self.kl_rate):
            raise ValueError("kl_rate must be finite and nonnegative")
        if not (-_IDENTITY_TOL <= self.tv_rate <= 1.0 + _IDENTITY_TOL):
            raise ValueError("tv_rate must lie in [0, 1]")
        gap = abs(self.nll_rate - (self.kl_rate + self.entropy_rate))
        if gap > _IDENTITY_TOL:
            raise ValueError(f"metric identity violated: nll - (kl + ent) = {gap:.3e}")

    def to_csv_row(self) -> list[str]:
        return [
            self.dataset,
            self.kind,
            self.model,
            "-" if self.steps is None else str(self.steps),
            "-" if self.seed is None else str(self.seed),
            repr(self.nll_rate),
            repr(self.kl_rate),
            repr(self.tv_rate),
            repr(self.entropy_rate),
            repr(self.unigram_l1),
            repr(self.diversity_2gram),
            repr(self.diversity_3gram),
            repr(self.duplication_rate),
            repr(self.other_mass),
            repr(self.support_fraction),
        ]

    def to_record(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_record(cls, rec: dict) -> "MetricsReport":
        return cls(**rec)


def compute_report(
    sequences: np.ndarray,
    chain: OracleChain,
    dataset: str = "",
    kind: str = "",
    model: str = "",
    steps: int | None = None,
    seed: int | None = None,
) -> MetricsReport:
    """Evaluate one batch end to end and assemble the CSV row."""
    stats = accumulate(sequences, chain.vocab_size)
    unigram_l1, div2, div3, dup = surface_metrics(sequences, chain, stats)
    other_mass, support_frac = coverage_metrics(stats, chain)
    return MetricsReport(
        dataset=dataset,
        kind=kind,
        model=model,
        steps=steps,
        seed=seed,
        nll_rate=nll_rate(stats, chain),
        kl_rate=kl_rate(stats, chain),
        tv_rate=tv_rate(stats, chain),
        entropy_rate=entropy_rate(stats),
        unigram_l1=unigram_l1,
        diversity_2gram=div2,
        diversity_3gram=div3,
        duplication_rate=dup,
        other_mass=other_mass,
        support_fraction=support_frac,
    )


def write_csv(path, reports: list[MetricsReport]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for report in reports:
            writer.writerow(report.to_csv_row())


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_COLUMNS:
            raise ValueError("unexpected CSV header")
        return list(reader)
