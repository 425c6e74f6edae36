"""Experiment orchestration: oracle construction, sweeps, evaluation,
text export, and the self-check battery behind the verify command.

A sweep is a grid of cells (family, steps, seed, variant parameters).
Each finished cell is persisted under ``cells/<config-hash>.json``; reruns
skip finished cells and the CSV is always regenerated from the persisted
cells in a deterministic order, so an interrupted and resumed sweep yields
a byte-identical CSV.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, corpus, metrics, posterior, samplers, synthetic
from .kernel import (
    OracleChain,
    TransitionKernel,
    build_kernel,
    count_bigrams,
    dense_rows_from_counts,
    sample_ar,
    sample_ar_sharpened,
    sparsify,
    stationary,
)

_MODEL_NAMES = {
    "ar": "AR",
    samplers.SEDD: "SEDD",
    samplers.MDLM: "MDLM",
    samplers.LLADA: "LLaDA",
    samplers.REMDM_CONF: "ReMDM",
    samplers.REMDM_LOOP: "ReMDM-loop",
}

DEFAULT_STEPS = (8, 16, 32, 64, 128, 256, 512, 1024)


def workers_from_env(default: int = 1) -> int:
    return int(os.environ.get("SAMPLERLAB_WORKERS", default))


def outdir_from_env(default: str) -> Path:
    return Path(os.environ.get("SAMPLERLAB_OUTDIR", default))


# ---------------------------------------------------------------------------
# oracle construction


def build_oracle(
    source: Path,
    fmt: str,
    out_path: Path,
    vocab_size: int | None = None,
    mass_threshold: float = 0.99,
    percentile: float = 0.90,
    epsilon: float = 1e-4,
    dense: bool = False,
    lenient_text: bool = True,
) -> dict:
    """Corpus -> counts -> (sparsify) -> teleport kernel -> stationary checks.

    Writes the kernel container to ``out_path`` and a human-readable JSON
    summary (k* histogram, sanity-check residuals) alongside it. Returns
    the summary.
    """
    t0 = time.time()
    if fmt == "text8":
        vocab_size = corpus.CharVocab.size
        stream = corpus.iter_text8_file(source, lenient=lenient_text)
        counts = count_bigrams(stream, vocab_size, flat_chunks=True)
    elif fmt == "tokens":
        if vocab_size is None:
            raise ValueError("token streams need an explicit --vocab-size")
        counts = count_bigrams(corpus.load_token_stream(source, vocab_size), vocab_size)
    else:
        raise ValueError(f"unknown corpus format {fmt!r}")

    if dense:
        rows = dense_rows_from_counts(counts)
        k_star = np.array([len(ids) for ids, _ in rows], dtype=np.int64)
        K = int(k_star.max())
    else:
        result = sparsify(counts, mass_threshold, percentile)
        rows, K, k_star = result.rows, result.K, result.k_star

    kernel = build_kernel(rows, epsilon, counts.unigram.astype(np.float64), add_one_smoothing=True)
    kernel.validate()
    kernel.save(out_path)

    # stationary sanity: distinct initializations must agree pairwise
    v = kernel.vocab_size
    inits = [
        np.full(v, 1.0 / v),
        kernel.nu.copy(),
        _one_hot(v, 0),
    ]
    pis = [stationary(kernel, tol=1e-11, init=init) for init in inits]
    pairwise = max(
        float(np.abs(pis[i] - pis[j]).sum()) for i in range(3) for j in range(i + 1, 3)
    )
    chain = OracleChain(kernel=kernel, pi0=pis[0])
    residual = float(
        np.abs(
            (1.0 - epsilon) * kernel.push_forward(chain.pi0[None, :])[0]
            + epsilon * kernel.nu
            - chain.pi0
        ).sum()
    )
    hist_values, hist_counts = np.unique(k_star, return_counts=True)
    summary = {
        "vocab_size": v,
        "K": K,
        "epsilon": epsilon,
        "dense": dense,
        "mass_threshold": None if dense else mass_threshold,
        "percentile": None if dense else percentile,
        "total_tokens": counts.total_tokens,
        "distinct_bigrams": counts.n_pairs,
        "k_star_histogram": {int(kv): int(kc) for kv, kc in zip(hist_values, hist_counts)},
        "k_star_mean": float(k_star.mean()),
        "k_star_median": float(np.median(k_star)),
        "stationary_residual_l1": residual,
        "stationary_pairwise_agreement_l1": pairwise,
        "row_sum_max_abs_dev": float(
            np.abs(np.add.reduceat(kernel.probs, kernel.indptr[:-1]) - 1.0).max()
        ),
        "build_seconds": time.time() - t0,
        "kernel_path": str(out_path),
    }
    with open(Path(out_path).with_suffix(".summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    return summary


def _one_hot(v: int, i: int) -> np.ndarray:
    x = np.zeros(v)
    x[i] = 1.0
    return x


def load_chain(path: Path) -> OracleChain:
    kernel = TransitionKernel.load(path)
    return OracleChain.from_kernel(kernel, tol=1e-11)


# ---------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class Cell:
    """One grid point of a sweep."""

    family: str
    steps: int | None
    seed: int | None
    beta: float = 1.0
    nucleus_p: float = 1.0
    eta_cap: float = 0.02
    t_on: float = 0.55
    t_off: float = 0.05
    remask_strategy: str = "low-confidence"
    prompt: tuple[int, ...] = ()
    sequential: bool = False

    def model_name(self) -> str:
        name = _MODEL_NAMES[self.family]
        tags = []
        if self.family == samplers.SEDD and self.beta != 1.0:
            tags.append(f"beta={self.beta:g}")
        if self.family in (samplers.REMDM_CONF, samplers.REMDM_LOOP) and self.nucleus_p < 1.0:
            tags.append(f"p={self.nucleus_p:g}")
        if self.sequential:
            tags.append("sequential")
        return name + (f"({','.join(tags)})" if tags else "")

    def sampler_config(self) -> samplers.SamplerConfig:
        return samplers.SamplerConfig(
            family=self.family,
            steps=self.steps,
            beta=self.beta,
            eta_cap=self.eta_cap,
            t_on=self.t_on,
            t_off=self.t_off,
            nucleus_p=self.nucleus_p,
            remask_strategy=self.remask_strategy,
            prompt=self.prompt,
            seed=self.seed,
            sequential=self.sequential,
        )


@dataclass
class SweepSpec:
    """Sampler families with per-family grids, a step sweep, and seeds."""

    oracle: str
    dataset: str
    T: int = 1024
    N: int = 512
    steps: tuple[int, ...] = DEFAULT_STEPS
    seeds: tuple[int, ...] = (123,)
    families: tuple[str, ...] = ("ar", samplers.SEDD, samplers.MDLM, samplers.LLADA,
                                 samplers.REMDM_CONF, samplers.REMDM_LOOP)
    sedd_betas: tuple[float, ...] = (1.0,)
    remdm_nucleus: tuple[float, ...] = (1.0,)
    extra_cells: list[Cell] = field(default_factory=list)

    @classmethod
    def from_json(cls, path: Path) -> "SweepSpec":
        with open(path) as fh:
            obj = json.load(fh)
        extra = [Cell(**{**c, "prompt": tuple(c.get("prompt", ()))}) for c in obj.pop("extra_cells", [])]
        spec = cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in obj.items()},
                   extra_cells=extra)
        return spec

    def cells(self) -> list[Cell]:
        out: list[Cell] = []
        for family in self.families:
            if family == "ar":
                for seed in self.seeds:
                    out.append(Cell(family="ar", steps=None, seed=seed))
                continue
            betas = self.sedd_betas if family == samplers.SEDD else (1.0,)
            nucleus = self.remdm_nucleus if family in (samplers.REMDM_CONF, samplers.REMDM_LOOP) else (1.0,)
            for steps in self.steps:
                for seed in self.seeds:
                    for beta in betas:
                        for p in nucleus:
                            out.append(Cell(family=family, steps=steps, seed=seed,
                                            beta=beta, nucleus_p=p))
        out.extend(self.extra_cells)
        return out


_code_digest_cache: str | None = None


def _code_digest() -> str:
    # cached results must not survive source changes
    global _code_digest_cache
    if _code_digest_cache is None:
        h = hashlib.sha256()
        pkg_dir = Path(__file__).parent
        for src in sorted(pkg_dir.glob("*.py")):
            h.update(src.read_bytes())
        _code_digest_cache = h.hexdigest()[:16]
    return _code_digest_cache


def _cell_key(cell: Cell, spec_fields: dict, oracle_digest: str) -> str:
    payload = {"cell": asdict(cell), "oracle": oracle_digest, **spec_fields,
               "code": _code_digest(), "version": 1}
    blob = json.dumps(payload, sort_keys=True, default=list)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()[:16]


_CHAIN_CACHE: dict[str, OracleChain] = {}


def _cached_chain(oracle_path: str) -> OracleChain:
    chain = _CHAIN_CACHE.get(oracle_path)
    if chain is None:
        chain = load_chain(Path(oracle_path))
        _CHAIN_CACHE[oracle_path] = chain
    return chain


def run_cell(
    chain: OracleChain, cell: Cell, T: int, N: int, dataset: str,
    sampler_workers: int = 1,
) -> tuple[metrics.MetricsReport, np.ndarray]:
    """Evaluate one grid point; returns (report, sequences)."""
    if cell.family == "ar":
        if cell.beta != 1.0:
            seqs = sample_ar_sharpened(chain, cell.beta, T, N, cell.seed)
        else:
            seqs = sample_ar(chain, T, N, cell.seed)
        kind = "Baseline"
    else:
        seqs, _ = samplers.run_sampler(chain, cell.sampler_config(), T, N,
                                       n_workers=sampler_workers)
        kind = "Diffusion"
    report = metrics.compute_report(
        seqs, chain, dataset=dataset, kind=kind, model=cell.model_name(),
        steps=cell.steps, seed=cell.seed,
    )
    return report, seqs


def _run_cell_job(oracle_path: str, cell: Cell, T: int, N: int, dataset: str) -> dict:
    t0 = time.time()
    chain = _cached_chain(oracle_path)
    report, _ = run_cell(chain, cell, T, N, dataset)
    return {"report": report.to_record(), "wall_seconds": time.time() - t0}


_FAMILY_ORDER = {name: i for i, name in enumerate(
    ["ar", samplers.SEDD, samplers.MDLM, samplers.LLADA, samplers.REMDM_CONF,
     samplers.REMDM_LOOP])}


def _cell_sort_key(cell: Cell):
    return (
        _FAMILY_ORDER[cell.family],
        cell.steps if cell.steps is not None else -1,
        cell.seed if cell.seed is not None else -1,
        cell.beta,
        -cell.nucleus_p,
        cell.sequential,
    )


def sweep(spec: SweepSpec, outdir: Path, workers: int = 1, csv_name: str = "sweep.csv") -> Path:
    """Run every cell of the spec (skipping already finished ones), write
    the CSV and the run manifest. Returns the CSV path."""
    outdir = Path(outdir)
    cells_dir = outdir / "cells"
    cells_dir.mkdir(parents=True, exist_ok=True)
    oracle_digest = _file_digest(Path(spec.oracle))
    spec_fields = {"T": spec.T, "N": spec.N, "dataset": spec.dataset}

    cells = spec.cells()
    keys = [_cell_key(c, spec_fields, oracle_digest) for c in cells]
    pending = [(c, k) for c, k in zip(cells, keys) if not (cells_dir / f"{k}.json").exists()]

    manifest_path = outdir / "manifest.jsonl"
    t0 = time.time()

    def finish(cell: Cell, key: str, payload: dict) -> None:
        record = {
            "config_hash": key,
            "version": __version__,
            "cell": asdict(cell),
            "spec": spec_fields,
            "oracle": {"path": spec.oracle, "digest": oracle_digest},
            **payload,
        }
        with open(cells_dir / f"{key}.json", "w") as fh:
            json.dump(record, fh, indent=2, default=list)
        with open(manifest_path, "a") as fh:
            fh.write(json.dumps({
                "config_hash": key,
                "version": __version__,
                "wall_seconds": payload["wall_seconds"],
                "output": str(cells_dir / f"{key}.json"),
            }) + "\n")

    if workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {
                pool.submit(_run_cell_job, spec.oracle, cell, spec.T, spec.N, spec.dataset): (cell, key)
                for cell, key in pending
            }
            for future, (cell, key) in futures.items():
                try:
                    finish(cell, key, future.result())
                except Exception as exc:  # cell failures stay isolated
                    _record_failure(manifest_path, key, exc)
    else:
        for cell, key in pending:
            try:
                finish(cell, key, _run_cell_job(spec.oracle, cell, spec.T, spec.N, spec.dataset))
            except Exception as exc:
                _record_failure(manifest_path, key, exc)

    # CSV is rebuilt from the persisted cells in deterministic order
    rows = []
    for cell, key in sorted(zip(cells, keys), key=lambda ck: _cell_sort_key(ck[0])):
        cell_file = cells_dir / f"{key}.json"
        if not cell_file.exists():
            continue
        with open(cell_file) as fh:
            record = json.load(fh)
        rows.append(metrics.MetricsReport.from_record(record["report"]))
    csv_path = outdir / csv_name
    metrics.write_csv(csv_path, rows)
    with open(manifest_path, "a") as fh:
        fh.write(json.dumps({
            "run": "sweep", "version": __version__, "csv": str(csv_path),
            "cells_total": len(cells), "cells_computed": len(pending),
            "wall_seconds": time.time() - t0,
        }) + "\n")
    return csv_path


def _record_failure(manifest_path: Path, key: str, exc: Exception) -> None:
    with open(manifest_path, "a") as fh:
        fh.write(json.dumps({"config_hash": key, "error": repr(exc)}) + "\n")


# ---------------------------------------------------------------------------
# sampling / evaluation / export


def sample_to_file(
    chain: OracleChain, cell: Cell, T: int, N: int, out_path: Path,
    sampler_workers: int = 1,
) -> dict:
    """Sample one configuration and write the token stream plus a metadata
    sidecar (family, steps, seed, schedule, wall time)."""
    t0 = time.time()
    if cell.family == "ar":
        seqs = (sample_ar_sharpened(chain, cell.beta, T, N, cell.seed)
                if cell.beta != 1.0 else sample_ar(chain, T, N, cell.seed))
    else:
        seqs, _ = samplers.run_sampler(chain, cell.sampler_config(), T, N,
                                       n_workers=sampler_workers)
    corpus.write_token_stream(out_path, [row for row in seqs], chain.vocab_size)
    meta = {
        "family": cell.family,
        "model": cell.model_name(),
        "steps": cell.steps,
        "seed": cell.seed,
        "beta": cell.beta,
        "nucleus_p": cell.nucleus_p,
        "schedule": "linear",
        "T": T,
        "N": N,
        "vocab_size": chain.vocab_size,
        "wall_seconds": time.time() - t0,
        "version": __version__,
    }
    with open(Path(out_path).with_suffix(".meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2)
    return meta


def read_sequences(path: Path, vocab_size: int) -> np.ndarray:
    docs = list(corpus.load_token_stream(path, vocab_size))
    lengths = {len(d) for d in docs}
    if len(lengths) != 1:
        raise ValueError("sequence file contains mixed lengths")
    return np.stack(docs).astype(np.int32)


def export_text(
    sequences: np.ndarray, vocab_map: dict[int, str], out_path: Path,
    placeholder: str = "\N{REPLACEMENT CHARACTER}",
) -> int:
    """Write one document per sequence, newline-delimited. Returns the
    number of ids that had no mapping and were replaced."""
    missing = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        for row in np.asarray(sequences):
            parts = []
            for tok in row.tolist():
                piece = vocab_map.get(tok)
                if piece is None:
                    missing += 1
                    piece = placeholder
                parts.append(piece)
            fh.write("".join(parts).replace("\n", " ") + "\n")
    return missing


def load_vocab_map(spec: str) -> dict[int, str]:
    if spec == "text8":
        return corpus.CharVocab.id_to_string_map()
    with open(spec) as fh:
        raw = json.load(fh)
    return {int(k): str(v) for k, v in raw.items()}


# ---------------------------------------------------------------------------
# verify battery


def verify(verbose: bool = True) -> bool:
    """Brute-force and identity self-checks; prints one line per check."""
    checks: list[tuple[str, bool, str]] = []

    def check(name: str, ok: bool, detail: str = "") -> None:
        checks.append((name, ok, detail))
        if verbose:
            print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" ({detail})" if detail else ""))

    gen = np.random.default_rng(2024)
    worst = 0.0
    for i in range(40):
        V = int(gen.integers(3, 6))
        T = int(gen.integers(4, 7))
        chain = synthetic.random_chain(V, min(V, 3), float(gen.choice([0.01, 0.1])), seed=100 + i)
        tokens = gen.integers(0, V, size=T).astype(np.int32)
        mask = gen.random(T) < gen.random()
        tokens[mask] = posterior.MASK
        z = posterior.MaskedSequence(tokens)
        got = posterior.smooth(chain, z).gamma
        want = posterior.brute_force_posterior(chain, z).gamma
        worst = max(worst, float(np.abs(got - want).max()))
    check("smoothing equals enumeration (40 random instances)", worst < 1e-9,
          f"max dev {worst:.2e}")

    chain = synthetic.random_chain(6, 3, 0.05, seed=7)
    sched = samplers.NoiseSchedule.linear(6)
    Z = np.full((4, 9), posterior.MASK, dtype=np.int32)
    Z[:, 2] = 1
    gamma = posterior.smooth_batch(chain, Z)
    u1 = np.linspace(0.05, 0.95, 36).reshape(4, 9)
    u2 = np.linspace(0.9, 0.1, 36).reshape(4, 9)
    a = samplers.remdm_step(Z, gamma, sched, 4, 0.0, 1.0, u1, u2)
    b, _, _ = samplers.absorbing_step(Z, gamma, sched, 4, 0.0, 1.0, 1.0, u1, u2)
    check("remdm with sigma=0, p=1 equals plain unmasking step", bool(np.array_equal(a, b)))

    row = np.array([0.5, 0.2, 0.3])
    check("tempering at beta=1 is the identity",
          bool(np.array_equal(samplers.tempered_scores(row, 1.0), row)))
    check("nucleus at p=1 is the identity",
          bool(np.array_equal(samplers.nucleus_filter(row, 1.0), row)))

    seqs = sample_ar(chain, 64, 200, seed=5)
    rep = metrics.compute_report(seqs, chain, model="AR")
    gap = abs(rep.nll_rate - rep.kl_rate - rep.entropy_rate)
    check("metric identity nll = kl + entropy", gap < 1e-9, f"gap {gap:.2e}")

    again = sample_ar(chain, 64, 200, seed=5)
    check("AR sampling is deterministic in the seed", bool(np.array_equal(seqs, again)))

    return all(ok for _, ok, _ in checks)
