"""Acceptance suite: one test per criterion, each printing a summary line.

The character-level table criteria bind to an oracle built from the real
text8 corpus (supply it via SAMPLERLAB_TEXT8 or tests/data/text8). Without
it, absolute table values are skipped and every chain-robust criterion
runs at the full protocol scale (N=512, T=1024) against the deterministic
English-like surrogate oracle instead; see the README for details.

Sweep cells are cached under .cache/acceptance keyed by oracle, parameters
and package source, so reruns only recompute what changed.
"""

import json
import os
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from samplerlab import harness
from samplerlab.corpus import write_token_stream
from samplerlab.harness import Cell, SweepSpec
from samplerlab.kernel import sample_ar
from samplerlab.metrics import compute_report, read_csv
from samplerlab.posterior import (
    MASK,
    MaskedSequence,
    brute_force_posterior,
    smooth,
    smooth_batch,
)
from samplerlab.samplers import (
    MDLM,
    SEDD,
    NoiseSchedule,
    SamplerConfig,
    nucleus_filter,
    run_sampler,
    step_categorical_params,
    tempered_scores,
)
from samplerlab.synthetic import english_like_chain, random_chain, zipf_documents

from conftest import enumerate_sequence_law, sequence_codes, text8_path
from dense_reference import dense_log_smooth

EXPECT = json.loads((Path(__file__).parent / "expectations.json").read_text())
CACHE = Path(__file__).parent.parent / ".cache" / "acceptance"
SWEEP_STEPS = (8, 32, 128, 1024)
SEED = 123


def _workers() -> int:
    return int(os.environ.get("SAMPLERLAB_WORKERS", min(8, os.cpu_count() or 1)))


@pytest.fixture(scope="session")
def oracle_env():
    """Oracle file + chain: real text8 when available, surrogate otherwise."""
    CACHE.mkdir(parents=True, exist_ok=True)
    real = text8_path()
    if real is not None:
        kernel_path = CACHE / "text8.kern"
        if not kernel_path.exists():
            harness.build_oracle(real, "text8", kernel_path, dense=True, epsilon=1e-4)
        dataset = EXPECT["dataset"]
    else:
        kernel_path = CACHE / "surrogate.kern"
        if not kernel_path.exists():
            chain = english_like_chain()
            seqs = sample_ar(chain, T=4000, N=1000, seed=2026)
            stream = CACHE / "surrogate_corpus.tok"
            write_token_stream(stream, [row for row in seqs], 27)
            harness.build_oracle(stream, "tokens", kernel_path, vocab_size=27,
                                 dense=True, epsilon=1e-4)
        dataset = "Surrogate (Char)"
    return {
        "path": kernel_path,
        "chain": harness.load_chain(kernel_path),
        "dataset": dataset,
        "is_real_text8": real is not None,
    }


@pytest.fixture(scope="session")
def sweep_rows(oracle_env):
    """All sweep cells the criteria consume, keyed by (Model, Steps)."""
    spec = SweepSpec(
        oracle=str(oracle_env["path"]),
        dataset=oracle_env["dataset"],
        T=EXPECT["protocol"]["T"],
        N=EXPECT["protocol"]["N"],
        steps=SWEEP_STEPS,
        seeds=(SEED,),
        families=("ar", "sedd", "mdlm", "llada", "remdm-conf"),
        extra_cells=[
            Cell(family="sedd", steps=128, seed=SEED, beta=2.0),
            Cell(family="sedd", steps=128, seed=SEED, beta=4.0),
            Cell(family="remdm-conf", steps=64, seed=SEED),
            Cell(family="remdm-conf", steps=512, seed=SEED),
            Cell(family="remdm-conf", steps=8, seed=SEED, nucleus_p=0.9),
            Cell(family="remdm-conf", steps=64, seed=SEED, nucleus_p=0.9),
            Cell(family="remdm-conf", steps=512, seed=SEED, nucleus_p=0.9),
        ],
    )
    csv_path = harness.sweep(spec, CACHE / "sweep", workers=_workers(),
                             csv_name="acceptance.csv")
    rows = {}
    for row in read_csv(csv_path):
        steps = None if row["Steps"] == "-" else int(row["Steps"])
        rows[(row["Model"], steps)] = {
            "nll": float(row["NLL"]), "kl": float(row["KL rate"]),
            "tv": float(row["TV rate"]), "entropy": float(row["Ent rate"]),
            "unigram_l1": float(row["Unigram L1"]),
            "div2": float(row["2-gram Diversity"]), "div3": float(row["3-gram Diversity"]),
            "dup": float(row["Duplicate"]), "other": float(row["Other mass"]),
            "support": float(row["Support frac"]),
        }
    return rows


# -- criterion: posterior exactness ------------------------------------------------


def test_posterior_exactness_against_enumeration():
    gen = np.random.default_rng(11)
    t0 = time.time()
    worst = 0.0
    for i in range(200):
        V = int(gen.choice([3, 4, 5]))
        T = int(gen.choice([4, 5, 6]))
        eps = float(gen.choice([0.01, 0.1]))
        chain = random_chain(V, int(gen.integers(2, V + 1)), eps, seed=3000 + i)
        tokens = gen.integers(0, V, size=T).astype(np.int32)
        if i % 5 == 1:
            tokens[:] = MASK
        elif i % 5 != 2:
            tokens[gen.random(T) < gen.random()] = MASK
        z = MaskedSequence(tokens)
        got = smooth(chain, z).gamma
        want = brute_force_posterior(chain, z).gamma
        worst = max(worst, float(np.abs(got - want).max()))
    elapsed = time.time() - t0
    print(f"\n[criterion] posterior exactness: max|dev| {worst:.2e} over 200 instances "
          f"in {elapsed:.1f}s -> {'PASS' if worst < 1e-9 and elapsed < 10 else 'FAIL'}")
    assert worst < 1e-9
    assert elapsed < 10.0


def test_sparse_rank1_equals_dense_reference():
    gen = np.random.default_rng(12)
    t0 = time.time()
    worst = 0.0
    for i in range(50):
        chain = random_chain(V=32, K=8, epsilon=float(gen.choice([0.01, 0.1])), seed=4000 + i)
        tokens = gen.integers(0, 32, size=12).astype(np.int32)
        tokens[gen.random(12) < gen.random()] = MASK
        got = smooth(chain, MaskedSequence(tokens)).log_gamma
        want = dense_log_smooth(chain, tokens)
        finite = np.isfinite(want)
        assert np.array_equal(finite, np.isfinite(got))
        worst = max(worst, float(np.abs(got[finite] - want[finite]).max()))
    elapsed = time.time() - t0
    print(f"\n[criterion] sparse = dense: max log-space dev {worst:.2e} over 50 "
          f"V=32,K=8 instances in {elapsed:.1f}s -> "
          f"{'PASS' if worst < 1e-9 and elapsed < 10 else 'FAIL'}")
    assert worst < 1e-9
    assert elapsed < 10.0


# -- criterion: metric identity ------------------------------------------------------


def test_metric_identity_everywhere(sweep_rows):
    worst = 0.0
    for (model, steps), row in sweep_rows.items():
        worst = max(worst, abs(row["nll"] - (row["kl"] + row["entropy"])))
    for spot in EXPECT["table1_identity_spot_checks"]:
        assert abs(spot["kl"] + spot["entropy"] - spot["nll"]) <= 1.5e-4
    print(f"\n[criterion] metric identity: max |nll-(kl+ent)| {worst:.2e} over "
          f"{len(sweep_rows)} reports -> {'PASS' if worst < 1e-9 else 'FAIL'}")
    assert worst < 1e-9


# -- criterion: exactness at S = T ----------------------------------------------------


def test_sequential_one_per_step_is_exact():
    t0 = time.time()
    chain = random_chain(V=3, K=3, epsilon=0.05, seed=42, concentration=2.0)
    T, N = 4, 100_000
    probs = enumerate_sequence_law(chain, T)
    cfg = SamplerConfig(family=MDLM, steps=T, seed=SEED, sequential=True)
    seqs, _ = run_sampler(chain, cfg, T, N)
    obs = np.bincount(sequence_codes(seqs, 3), minlength=81)
    chi2, _ = stats.chisquare(obs, f_exp=probs * N)
    crit = stats.chi2.ppf(0.99, 80)
    elapsed = time.time() - t0
    print(f"\n[criterion] exactness at S=T: chi2 {chi2:.1f} < {crit:.1f} "
          f"({N} samples, {elapsed:.0f}s) -> {'PASS' if chi2 < crit else 'FAIL'}")
    assert chi2 < crit
    assert elapsed < 60.0


# -- criterion: character-level table reproduction ------------------------------------


def test_text8_table_reproduction(sweep_rows, oracle_env):
    if not oracle_env["is_real_text8"]:
        pytest.skip(
            "real text8 corpus not available in this environment (no general "
            "network; package mirrors only) - absolute Table values bind to the "
            "real corpus. Supply it via SAMPLERLAB_TEXT8 or tests/data/text8. "
            "All chain-robust criteria below ran at full protocol scale on the "
            "calibrated surrogate oracle."
        )
    ar = sweep_rows[("AR", None)]
    exp = EXPECT["ar"]
    for field, key in [("nll", "nll_rate"), ("kl", "kl_rate"),
                       ("entropy", "entropy_rate"), ("div3", "diversity_3gram")]:
        band = exp[key]
        assert abs(ar[field] - band["value"]) <= band["tol"], (field, ar[field])
    for model, by_steps in EXPECT["kl_by_family_and_steps"].items():
        for steps, band in by_steps.items():
            got = sweep_rows[(model, int(steps))]["kl"]
            assert abs(got - band["value"]) <= band["tol"], (model, steps, got)
    llada = sweep_rows[("LLaDA", 1024)]
    assert llada["kl"] >= EXPECT["llada_1024"]["kl_min"]
    assert llada["entropy"] <= EXPECT["llada_1024"]["entropy_max"]
    print("\n[criterion] text8 table reproduction: all bands met -> PASS")


def test_llada_persistent_nonconvergence(sweep_rows):
    # the expected failure mode: heavy transition-level error at S = 1024
    llada = sweep_rows[("LLaDA", 1024)]
    ok = llada["kl"] >= EXPECT["llada_1024"]["kl_min"] and \
        llada["entropy"] <= EXPECT["llada_1024"]["entropy_max"]
    print(f"\n[criterion] LLaDA non-convergence at S=1024: kl {llada['kl']:.4f} >= 0.9, "
          f"entropy {llada['entropy']:.4f} <= 0.55 -> {'PASS' if ok else 'FAIL'}")
    assert llada["kl"] >= EXPECT["llada_1024"]["kl_min"]
    assert llada["entropy"] <= EXPECT["llada_1024"]["entropy_max"]


# -- criterion: monotone convergence ---------------------------------------------------


def test_monotone_kl_convergence(sweep_rows):
    bands = {int(k): v for k, v in EXPECT["kl_band_by_steps"].items()}
    lines = []
    ok = True
    for model in ("MDLM", "SEDD", "ReMDM"):
        kls = [sweep_rows[(model, s)]["kl"] for s in SWEEP_STEPS]
        for (s1, k1), (s2, k2) in zip(zip(SWEEP_STEPS, kls), zip(SWEEP_STEPS[1:], kls[1:])):
            if not k2 <= k1 + bands[s2]:
                ok = False
        lines.append(f"{model}: " + " -> ".join(f"{k:.4f}" for k in kls))
    print("\n[criterion] monotone KL convergence over S in {8,32,128,1024}: "
          + "; ".join(lines) + f" -> {'PASS' if ok else 'FAIL'}")
    for model in ("MDLM", "SEDD", "ReMDM"):
        kls = [sweep_rows[(model, s)]["kl"] for s in SWEEP_STEPS]
        for (s1, k1), (s2, k2) in zip(zip(SWEEP_STEPS, kls), zip(SWEEP_STEPS[1:], kls[1:])):
            assert k2 <= k1 + bands[s2], (model, s1, k1, s2, k2)


# -- criterion: reduction identities ----------------------------------------------------


def test_reduction_identities_exact(oracle_env):
    chain = random_chain(V=5, K=4, epsilon=0.05, seed=9)
    gen = np.random.default_rng(17)
    Z = np.full((6, 10), MASK, dtype=np.int32)
    reveal = gen.random(Z.shape) < 0.35
    Z[reveal] = gen.integers(0, 5, size=int(reveal.sum()))
    gamma = smooth_batch(chain, Z)
    sched = NoiseSchedule.linear(7)
    for s in (7, 5, 2, 1):
        mdlm = step_categorical_params(Z, gamma, sched, s, 0.0, 1.0, 1.0)
        remdm0 = step_categorical_params(Z, gamma, sched, s, np.zeros(Z.shape), 1.0, 1.0)
        sedd1 = step_categorical_params(Z, gamma, sched, s, 0.0, 1.0, 1.0)
        for a, b in zip(mdlm, remdm0):
            assert np.array_equal(a, b)
        for a, b in zip(mdlm, sedd1):
            assert np.array_equal(a, b)
    row = gen.dirichlet(np.ones(6))
    assert np.array_equal(tempered_scores(row, 1.0), row)
    assert np.array_equal(nucleus_filter(row, 1.0), row)

    T, N = 24, 16
    out = {}
    for fam, extra in [(MDLM, {}), (SEDD, {"beta": 1.0}),
                       ("remdm-conf", {"eta_cap": 0.0, "nucleus_p": 1.0})]:
        cfg = SamplerConfig(family=fam, steps=6, seed=3, **extra)
        out[fam], _ = run_sampler(chain, cfg, T, N)
    assert np.array_equal(out[MDLM], out[SEDD])
    assert np.array_equal(out[MDLM], out["remdm-conf"])
    print("\n[criterion] reduction identities (ReMDM sigma=0 = MDLM = SEDD beta=1; "
          "beta=1 and p=1 are identities): exact -> PASS")


# -- criterion: sharpening direction ------------------------------------------------------


def test_sharpening_direction(sweep_rows):
    r1 = sweep_rows[("SEDD", 128)]
    r2 = sweep_rows[("SEDD(beta=2)", 128)]
    r4 = sweep_rows[("SEDD(beta=4)", 128)]
    ok = (r4["kl"] > r2["kl"] > r1["kl"]
          and r4["entropy"] < r2["entropy"] < r1["entropy"]
          and r4["div3"] < r2["div3"] < r1["div3"])
    print(f"\n[criterion] sharpening direction at S=128: KL {r1['kl']:.4f} < "
          f"{r2['kl']:.4f} < {r4['kl']:.4f}; entropy {r1['entropy']:.4f} > "
          f"{r2['entropy']:.4f} > {r4['entropy']:.4f}; div3 {r1['div3']:.4f} > "
          f"{r2['div3']:.4f} > {r4['div3']:.4f} -> {'PASS' if ok else 'FAIL'}")
    assert r4["kl"] > r2["kl"] > r1["kl"]
    assert r4["entropy"] < r2["entropy"] < r1["entropy"]
    assert r4["div3"] < r2["div3"] < r1["div3"]


# -- criterion: nucleus effect ---------------------------------------------------------------


def test_nucleus_tail_suppression_direction(sweep_rows):
    # the attainable part of the nucleus criterion: truncating low-probability
    # tails lowers NLL, entropy, and the support fraction at every step count
    for s in (8, 64, 512):
        full = sweep_rows[("ReMDM", s)]
        cut = sweep_rows[("ReMDM(p=0.9)", s)]
        for field in ("nll", "entropy", "support"):
            assert cut[field] < full[field], (s, field, cut[field], full[field])
    print("\n[criterion] nucleus p=0.9 lowers NLL, entropy, support fraction at "
          "every S in {8,64,512} -> PASS")


def test_nucleus_effect(sweep_rows):
    # Criterion as stated, including the KL direction. The KL clause cannot
    # hold on a character-level oracle at these step counts: truncating a
    # conditional q to its top-p prefix with kept mass m adds
    # KL(nucleus(q) || q) = log(1/m), a floor of about 0.045 nats for rows
    # of this concentration, which exceeds the p=1 baseline KL (~0.001-0.01
    # here, and 0.0046-0.0109 at S in {64, 512} in the reference table) for
    # every S. NLL, entropy, and support directions all hold (see the
    # companion test); the measured KL values below document the floor.
    ok = True
    details = []
    for s in (8, 64, 512):
        full = sweep_rows[("ReMDM", s)]
        cut = sweep_rows[("ReMDM(p=0.9)", s)]
        for field in ("kl", "nll", "entropy", "support"):
            if not cut[field] < full[field]:
                ok = False
        details.append(f"S={s}: KL {cut['kl']:.4f} vs {full['kl']:.4f}")
    print("\n[criterion] nucleus p=0.9 lowers KL, NLL, entropy, support fraction: "
          + "; ".join(details) + f" -> {'PASS' if ok else 'FAIL'}")
    for s in (8, 64, 512):
        full = sweep_rows[("ReMDM", s)]
        cut = sweep_rows[("ReMDM(p=0.9)", s)]
        for field in ("kl", "nll", "entropy", "support"):
            assert cut[field] < full[field], (
                s, field, cut[field], full[field],
                "nucleus truncation KL floor log(1/kept_mass) exceeds the "
                "p=1 baseline at this step count",
            )


# -- OWT note: subsample K-selection mechanics -------------------------------------------------


def test_subword_subsample_k_selection_mechanics(tmp_path):
    docs = zipf_documents(n_docs=5000, doc_len=400, V=4096, seed=31)
    stream = tmp_path / "subsample.tok"
    write_token_stream(stream, docs, vocab_size=4096)
    kernel_path = tmp_path / "subsample.kern"
    summary = harness.build_oracle(stream, "tokens", kernel_path, vocab_size=4096,
                                   mass_threshold=0.99, percentile=0.90, epsilon=1e-4)
    assert 0 < summary["K"] < 4096
    assert summary["k_star_mean"] > summary["k_star_median"]  # right-skewed

    chain = harness.load_chain(kernel_path)
    seqs = sample_ar(chain, T=256, N=200, seed=7)
    report = compute_report(seqs, chain, dataset="Subword subsample", kind="Baseline",
                            model="AR", seed=7)
    gap = abs(report.nll_rate - (report.kl_rate + report.entropy_rate))
    assert gap < 1e-9
    assert report.other_mass > 0.0  # teleport leaks off the truncated support
    print(f"\n[criterion] subword subsample mechanics: K={summary['K']}, k* mean "
          f"{summary['k_star_mean']:.1f} > median {summary['k_star_median']:.1f}, "
          f"identity gap {gap:.1e} -> PASS")
