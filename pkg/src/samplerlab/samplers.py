"""Oracle-driven discrete diffusion samplers.

All samplers start from a fully masked state (optionally with a fixed
revealed prompt prefix) and consume exact posterior marginals gamma from
the posterior module:

- sedd: tau-leaping over the absorbing reverse process; token draws use a
  beta-tempered version of gamma (beta = 1 is the exact oracle).
- mdlm: parallel factorized unmasking; every masked position independently
  unmasks with the schedule's reverse-step probability and draws from its
  own marginal. A ``sequential`` variant unmasks exactly one position per
  step, which removes the independence error entirely.
- llada: draws candidates for all masked positions, keeps the most
  confident ones per step, and remasks the rest.
- remdm-conf / remdm-loop: masked-diffusion with remasking; confidence or
  windowed schedules set the per-token remask probability sigma, and token
  draws can be nucleus-filtered.

Within a step all position updates share the gamma computed from the
pre-step state (parallel-update semantics); gamma is recomputed from
scratch every step. Every random decision is addressed by
(seed, sequence, step, position), so outputs are reproducible regardless
of how sequences are sharded across workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import rng
from .kernel import OracleChain
from .posterior import MASK, smooth_batch_positionwise

SEDD = "sedd"
MDLM = "mdlm"
LLADA = "llada"
REMDM_CONF = "remdm-conf"
REMDM_LOOP = "remdm-loop"
FAMILIES = (SEDD, MDLM, LLADA, REMDM_CONF, REMDM_LOOP)

# per-trajectory-chunk memory target for the (chunk, T, V) lattices
_CHUNK_BYTES = 1 << 28


@dataclass(frozen=True)
class NoiseSchedule:
    """Survival probabilities alpha_s for s = 0..S; alpha_0 = 1, alpha_S = 0,
    strictly decreasing in between."""

    alphas: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alphas, dtype=np.float64)
        if a.ndim != 1 or len(a) < 2:
            raise ValueError("schedule needs at least one step")
        if a[0] != 1.0 or a[-1] != 0.0:
            raise ValueError("schedule must start at alpha=1 and end at alpha=0 exactly")
        if np.any(np.diff(a) >= 0):
            raise ValueError("alpha must be strictly decreasing")
        object.__setattr__(self, "alphas", a)

    @classmethod
    def linear(cls, steps: int) -> "NoiseSchedule":
        if steps < 1:
            raise ValueError("steps must be >= 1")
        a = 1.0 - np.arange(steps + 1, dtype=np.float64) / steps
        a[0], a[-1] = 1.0, 0.0
        return cls(a)

    @property
    def steps(self) -> int:
        return len(self.alphas) - 1

    def unmask_prob(self, s: int, sigma: float | np.ndarray = 0.0):
        """Probability that a masked position reveals on the step s -> s-1."""
        a_prev, a_cur = self.alphas[s - 1], self.alphas[s]
        return (a_prev - (1.0 - sigma) * a_cur) / (1.0 - a_cur)

    def sigma_max(self, s: int) -> float:
        """Largest remask probability keeping the reverse mixture weights
        nonnegative on the step s -> s-1."""
        a_prev, a_cur = self.alphas[s - 1], self.alphas[s]
        if a_cur <= 0.0:
            return 1.0
        return min(1.0, (1.0 - a_prev) / a_cur)


@dataclass(frozen=True)
class SamplerConfig:
    family: str
    steps: int
    beta: float = 1.0
    eta_cap: float = 0.02
    t_on: float = 0.55
    t_off: float = 0.05
    nucleus_p: float = 1.0
    remask_strategy: str = "low-confidence"
    prompt: tuple[int, ...] = ()
    seed: int = 0
    sequential: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown sampler family {self.family!r}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if not (0.0 <= self.t_off < self.t_on <= 1.0):
            raise ValueError("need 0 <= t_off < t_on <= 1")
        if not (0.0 <= self.eta_cap <= 1.0):
            raise ValueError("eta_cap must be in [0, 1]")
        if not (0.0 < self.nucleus_p <= 1.0):
            raise ValueError("nucleus_p must be in (0, 1]")
        if self.remask_strategy not in ("low-confidence", "random"):
            raise ValueError("remask_strategy must be 'low-confidence' or 'random'")
        if self.sequential and self.family != MDLM:
            raise ValueError("the sequential variant is defined for mdlm only")
        object.__setattr__(self, "prompt", tuple(int(t) for t in self.prompt))


@dataclass
class TrajectoryRecord:
    """Per-step diagnostics of a sampler run, aggregated over the batch.

    mask_counts[s] is the total number of masked positions when the batch
    sits at step s (s = steps .. 0); unmasked[k] / remasked[k] count events
    during the k-th executed transition (k = 0 is steps -> steps-1).
    """

    steps: int
    prompt_len: int
    n_sequences: int
    mask_counts: np.ndarray
    unmasked: np.ndarray
    remasked: np.ndarray
    history: list[np.ndarray] | None = None

    def validate(self, T: int) -> None:
        assert self.mask_counts[self.steps] == self.n_sequences * (T - self.prompt_len)
        assert self.mask_counts[0] == 0

    def merge(self, other: "TrajectoryRecord") -> "TrajectoryRecord":
        assert (self.steps, self.prompt_len) == (other.steps, other.prompt_len)
        return TrajectoryRecord(
            steps=self.steps,
            prompt_len=self.prompt_len,
            n_sequences=self.n_sequences + other.n_sequences,
            mask_counts=self.mask_counts + other.mask_counts,
            unmasked=self.unmasked + other.unmasked,
            remasked=self.remasked + other.remasked,
            history=None,
        )


def tempered_scores(gamma_row: np.ndarray, beta: float) -> np.ndarray:
    """Renormalized beta-power of a distribution (last axis).

    beta = 1 returns the input exactly: the time-dependent scale of the
    reverse-process score multiplies all tokens of a position equally, so
    it cancels under normalization and only the power matters.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    gamma_row = np.asarray(gamma_row, dtype=np.float64)
    if beta == 1.0:
        return gamma_row
    peak = gamma_row.max(axis=-1, keepdims=True)
    w = (gamma_row / peak) ** beta
    return w / w.sum(axis=-1, keepdims=True)


def nucleus_filter(row: np.ndarray, p: float) -> np.ndarray:
    """Top-p truncation: keep the smallest descending-order prefix with
    cumulative mass >= p (the crossing token is included), renormalize."""
    row = np.asarray(row, dtype=np.float64)
    if not (0.0 < p <= 1.0):
        raise ValueError("p must be in (0, 1]")
    if p == 1.0:
        return row
    return _nucleus_batch(row[None, :], p)[0]


def _nucleus_batch(dist: np.ndarray, p: float) -> np.ndarray:
    if p == 1.0:
        return dist
    order = np.argsort(-dist, axis=-1, kind="stable")
    ranked = np.take_along_axis(dist, order, axis=-1)
    cum = np.cumsum(ranked, axis=-1)
    keep = (cum - ranked) < p  # mass strictly before this token has not reached p yet
    ranked = np.where(keep, ranked, 0.0)
    ranked /= ranked.sum(axis=-1, keepdims=True)
    out = np.empty_like(dist)
    np.put_along_axis(out, order, ranked, axis=-1)
    return out


def _draw_categorical(dist_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    cum = np.cumsum(dist_rows, axis=-1)
    x = u * cum[:, -1]
    idx = np.sum(cum < x[:, None], axis=-1)
    return np.minimum(idx, dist_rows.shape[-1] - 1)


def _conf_sigma(gamma: np.ndarray, Z: np.ndarray, updatable: np.ndarray, sigma_base: float) -> np.ndarray:
    """Per-token remask probabilities of the confidence schedule.

    Confidence of an unmasked token is its own posterior probability;
    masked (and prompt) positions carry infinite confidence so their
    weight is exactly zero. Weights are softmax(-confidence) over all
    positions of a sequence; with no unmasked token the softmax degenerates
    and the step remasks nothing.
    """
    n, T = Z.shape
    unmasked = (Z != MASK) & updatable
    psi = np.full((n, T), np.inf)
    if unmasked.any():
        rows, cols = np.nonzero(unmasked)
        psi[rows, cols] = gamma[rows, cols, Z[rows, cols]]
    w = np.exp(-psi)  # exp(-inf) = 0 for masked positions
    denom = w.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore"):
        eta = np.where(denom > 0.0, w / denom, 0.0)
    return sigma_base * eta


def absorbing_step(
    Z: np.ndarray,
    gamma: np.ndarray,
    schedule: NoiseSchedule,
    s: int,
    sigma,
    nucleus_p: float,
    beta: float,
    decision_u: np.ndarray,
    token_u: np.ndarray,
    updatable: np.ndarray | None = None,
) -> tuple[np.ndarray, int, int]:
    """One reverse transition s -> s-1 for a batch of states.

    Unmasked positions remask with probability sigma (their token is
    discarded); masked positions unmask with the reverse mixture weight
    and draw from the (tempered, nucleus-filtered) marginal. Returns
    (new state, unmask events, remask events).
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma < 0.0) or np.any(sigma > 1.0):
        raise ValueError(f"sigma outside [0, 1] at step {s}")
    masked = Z == MASK
    if updatable is None:
        updatable = np.ones_like(masked)
    unmask_p = schedule.unmask_prob(s, sigma)
    assert np.all((unmask_p >= 0.0) & (unmask_p <= 1.0)), f"invalid mixture weight at step {s}"

    do_unmask = masked & (decision_u < unmask_p)
    do_remask = (~masked) & updatable & (decision_u < np.broadcast_to(sigma, Z.shape))

    out = Z.copy()
    if do_unmask.any():
        dist = gamma[do_unmask]
        if beta != 1.0:
            dist = tempered_scores(dist, beta)
        if nucleus_p < 1.0:
            dist = _nucleus_batch(dist, nucleus_p)
        out[do_unmask] = _draw_categorical(dist, token_u[do_unmask]).astype(out.dtype)
    out[do_remask] = MASK
    return out, int(do_unmask.sum()), int(do_remask.sum())


def remdm_step(
    state: np.ndarray,
    gamma: np.ndarray,
    schedule: NoiseSchedule,
    s: int,
    sigma,
    nucleus_p: float,
    decision_u: np.ndarray,
    token_u: np.ndarray,
) -> np.ndarray:
    """Single remasking-diffusion step; sigma = 0 recovers the plain
    factorized unmasking step exactly."""
    sig = np.asarray(sigma, dtype=np.float64)
    if np.any(sig > schedule.sigma_max(s)):
        raise ValueError(
            f"sigma exceeds the validity bound {schedule.sigma_max(s):.6g} at step {s}"
        )
    out, _, _ = absorbing_step(
        state, gamma, schedule, s, sig, nucleus_p, 1.0, decision_u, token_u
    )
    return out


def step_categorical_params(
    Z: np.ndarray,
    gamma: np.ndarray,
    schedule: NoiseSchedule,
    s: int,
    sigma,
    nucleus_p: float,
    beta: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-position categorical parameters of one step, for identity checks:
    (unmask probability, remask probability, token distributions)."""
    masked = Z == MASK
    sigma = np.broadcast_to(np.asarray(sigma, dtype=np.float64), Z.shape)
    unmask_p = np.where(masked, schedule.unmask_prob(s, sigma), 0.0)
    remask_p = np.where(~masked, sigma, 0.0)
    dist = gamma
    if beta != 1.0:
        dist = tempered_scores(dist, beta)
    if nucleus_p < 1.0:
        dist = _nucleus_batch(dist.reshape(-1, dist.shape[-1]), nucleus_p).reshape(dist.shape)
    return unmask_p, remask_p, dist


def _family_sigma(config: SamplerConfig, schedule: NoiseSchedule, s: int,
                  gamma: np.ndarray, Z: np.ndarray, updatable: np.ndarray):
    if config.family in (SEDD, MDLM):
        return 0.0
    sigma_base = min(config.eta_cap, schedule.sigma_max(s))
    if config.family == REMDM_LOOP:
        t_diff = s / schedule.steps
        if config.t_off < t_diff <= config.t_on:
            return np.where(updatable, sigma_base, 0.0)
        return 0.0
    if config.family == REMDM_CONF:
        return _conf_sigma(gamma, Z, updatable, sigma_base)
    raise ValueError(config.family)


def _init_state(config: SamplerConfig, T: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    prompt = np.asarray(config.prompt, dtype=np.int32)
    if len(prompt) > T:
        raise ValueError(f"prompt of length {len(prompt)} does not fit T={T}")
    Z = np.full((n, T), MASK, dtype=np.int32)
    if len(prompt):
        Z[:, : len(prompt)] = prompt[None, :]
    updatable = np.ones((n, T), dtype=bool)
    updatable[:, : len(prompt)] = False  # prompt tokens are never remasked
    return Z, updatable


def _run_absorbing_chunk(
    chain: OracleChain, config: SamplerConfig, T: int, lo: int, hi: int,
    keep_history: bool = False,
) -> tuple[np.ndarray, TrajectoryRecord]:
    n = hi - lo
    S = config.steps
    schedule = NoiseSchedule.linear(S)
    seqs = np.arange(lo, hi)
    Z, updatable = _init_state(config, T, n)
    record = TrajectoryRecord(
        steps=S,
        prompt_len=len(config.prompt),
        n_sequences=n,
        mask_counts=np.zeros(S + 1, dtype=np.int64),
        unmasked=np.zeros(S, dtype=np.int64),
        remasked=np.zeros(S, dtype=np.int64),
        history=[] if keep_history else None,
    )
    record.mask_counts[S] = int((Z == MASK).sum())
    sequential = config.sequential
    if sequential and S != T - len(config.prompt):
        raise ValueError("sequential mdlm requires steps == number of masked positions")
    for k, s in enumerate(range(S, 0, -1)):
        gamma = np.swapaxes(smooth_batch_positionwise(chain, Z), 0, 1)
        token_u = rng.uniform_grid(config.seed, rng.STREAM_TOKEN, s, seqs, T)
        if sequential:
            col = len(config.prompt) + k  # one position per step, left to right
            dist = gamma[:, col, :]
            Z[:, col] = _draw_categorical(dist, token_u[:, col]).astype(Z.dtype)
            n_unmask, n_remask = n, 0
        else:
            decision_u = rng.uniform_grid(config.seed, rng.STREAM_DECISION, s, seqs, T)
            sigma = _family_sigma(config, schedule, s, gamma, Z, updatable)
            beta = config.beta if config.family == SEDD else 1.0
            nucleus_p = config.nucleus_p if config.family in (REMDM_CONF, REMDM_LOOP) else 1.0
            new_Z, n_unmask, n_remask = absorbing_step(
                Z, gamma, schedule, s, sigma, nucleus_p, beta, decision_u, token_u, updatable
            )
            if config.family in (SEDD, MDLM):
                assert n_remask == 0 and ((new_Z == MASK) <= (Z == MASK)).all(), \
                    "mask set must never grow without remasking"
            Z = new_Z
        record.mask_counts[s - 1] = int((Z == MASK).sum())
        record.unmasked[k] = n_unmask
        record.remasked[k] = n_remask
        if keep_history:
            record.history.append(Z.copy())
    assert not (Z == MASK).any(), "final state must contain no masks"
    return Z, record


def _run_llada_chunk(
    chain: OracleChain, config: SamplerConfig, T: int, lo: int, hi: int,
    keep_history: bool = False,
) -> tuple[np.ndarray, TrajectoryRecord]:
    n = hi - lo
    S = config.steps
    seqs = np.arange(lo, hi)
    Z, _ = _init_state(config, T, n)
    record = TrajectoryRecord(
        steps=S,
        prompt_len=len(config.prompt),
        n_sequences=n,
        mask_counts=np.zeros(S + 1, dtype=np.int64),
        unmasked=np.zeros(S, dtype=np.int64),
        remasked=np.zeros(S, dtype=np.int64),
        history=[] if keep_history else None,
    )
    record.mask_counts[S] = int((Z == MASK).sum())
    remaining = T - len(config.prompt)
    for k, s in enumerate(range(S, 0, -1)):
        if remaining == 0:
            record.mask_counts[s - 1] = 0
            continue
        gamma = np.swapaxes(smooth_batch_positionwise(chain, Z), 0, 1)
        token_u = rng.uniform_grid(config.seed, rng.STREAM_TOKEN, s, seqs, T)
        m_s = math.ceil(remaining / s)

        masked_rows, masked_cols = np.nonzero(Z == MASK)  # row-major: positions ascend
        positions = masked_cols.reshape(n, remaining)
        dist = gamma[masked_rows, masked_cols].reshape(n, remaining, -1)
        u = token_u[masked_rows, masked_cols].reshape(n, remaining)
        cand = _draw_categorical(dist.reshape(n * remaining, -1), u.ravel()).reshape(n, remaining)

        if config.remask_strategy == "low-confidence":
            conf = np.take_along_axis(dist, cand[:, :, None], axis=2)[:, :, 0]
            order = np.argsort(-conf, axis=1, kind="stable")  # ties: ascending position
        else:
            scores = rng.uniform_grid(config.seed, rng.STREAM_SELECT, s, seqs, remaining)
            order = np.argsort(scores, axis=1, kind="stable")
        keep = order[:, :m_s]
        keep_pos = np.take_along_axis(positions, keep, axis=1)
        keep_tok = np.take_along_axis(cand, keep, axis=1)
        Z[np.repeat(np.arange(n), m_s), keep_pos.ravel()] = keep_tok.ravel().astype(Z.dtype)

        remaining -= m_s
        record.mask_counts[s - 1] = int((Z == MASK).sum())
        record.unmasked[k] = n * m_s
        record.remasked[k] = 0
        if keep_history:
            record.history.append(Z.copy())
    assert not (Z == MASK).any(), "final state must contain no masks"
    return Z, record


def _run_chunk(chain, config, T, lo, hi, keep_history=False):
    if config.family == LLADA:
        return _run_llada_chunk(chain, config, T, lo, hi, keep_history)
    return _run_absorbing_chunk(chain, config, T, lo, hi, keep_history)


def _auto_chunk(T: int, V: int) -> int:
    return max(1, _CHUNK_BYTES // (T * V * 8 * 4))


def run_sampler(
    chain: OracleChain,
    config: SamplerConfig,
    T: int,
    N: int,
    n_workers: int = 1,
    chunk_size: int | None = None,
    keep_history: bool = False,
) -> tuple[np.ndarray, TrajectoryRecord]:
    """Sample N length-T sequences under the configured sampler.

    Sequences are independent trajectories; they are processed in chunks
    (optionally across processes) without affecting results.
    """
    if T < 1 or N < 1:
        raise ValueError("T and N must be >= 1")
    for tok in config.prompt:
        if not (0 <= tok < chain.vocab_size):
            raise ValueError(f"prompt token {tok} outside vocabulary")
    if chunk_size is None:
        chunk_size = _auto_chunk(T, chain.vocab_size)
    bounds = [(lo, min(lo + chunk_size, N)) for lo in range(0, N, chunk_size)]
    if n_workers > 1 and len(bounds) > 1 and not keep_history:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            parts = list(pool.map(
                _run_chunk,
                [chain] * len(bounds), [config] * len(bounds), [T] * len(bounds),
                [b[0] for b in bounds], [b[1] for b in bounds],
            ))
    else:
        parts = [_run_chunk(chain, config, T, lo, hi, keep_history) for lo, hi in bounds]
    seqs = np.concatenate([p[0] for p in parts], axis=0)
    record = parts[0][1]
    for _, rec in parts[1:]:
        record = record.merge(rec)
    record.validate(T)
    return seqs, record


def sedd_sample(chain, config: SamplerConfig, T: int, N: int, **kw):
    if config.family != SEDD:
        raise ValueError("config.family must be 'sedd'")
    return run_sampler(chain, config, T, N, **kw)


def mdlm_sample(chain, config: SamplerConfig, T: int, N: int, **kw):
    if config.family != MDLM:
        raise ValueError("config.family must be 'mdlm'")
    return run_sampler(chain, config, T, N, **kw)


def llada_sample(chain, config: SamplerConfig, T: int, N: int, **kw):
    if config.family != LLADA:
        raise ValueError("config.family must be 'llada'")
    return run_sampler(chain, config, T, N, **kw)


def remdm_sample(chain, config: SamplerConfig, T: int, N: int, **kw):
    if config.family not in (REMDM_CONF, REMDM_LOOP):
        raise ValueError("config.family must be 'remdm-conf' or 'remdm-loop'")
    return run_sampler(chain, config, T, N, **kw)

