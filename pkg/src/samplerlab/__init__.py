"""Sampler-correctness laboratory for masked discrete diffusion.

Builds known ground-truth Markov chains, computes exact posteriors over
partially masked sequences, drives oracle instantiations of masked
diffusion samplers, and quantifies the distributional error the samplers
introduce.
"""

from .kernel import (
    BigramCounts,
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
from .metrics import MetricsReport, TransitionStats, accumulate, compute_report
from .posterior import (
    MASK,
    MaskedSequence,
    PosteriorMarginals,
    brute_force_posterior,
    smooth,
    smooth_batch,
)
from .samplers import (
    FAMILIES,
    NoiseSchedule,
    SamplerConfig,
    TrajectoryRecord,
    llada_sample,
    mdlm_sample,
    nucleus_filter,
    remdm_sample,
    run_sampler,
    sedd_sample,
    tempered_scores,
)

__version__ = "0.1.0"

__all__ = [
    "BigramCounts", "OracleChain", "TransitionKernel", "build_kernel",
    "count_bigrams", "dense_rows_from_counts", "sample_ar",
    "sample_ar_sharpened", "sparsify", "stationary",
    "MetricsReport", "TransitionStats", "accumulate", "compute_report",
    "MASK", "MaskedSequence", "PosteriorMarginals", "brute_force_posterior",
    "smooth", "smooth_batch",
    "FAMILIES", "NoiseSchedule", "SamplerConfig", "TrajectoryRecord",
    "llada_sample", "mdlm_sample", "nucleus_filter", "remdm_sample",
    "run_sampler", "sedd_sample", "tempered_scores",
    "__version__",
]
