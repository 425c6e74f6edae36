"""Generate the bridge test fixtures from the primary toolkit.

Everything the frontend consumes goes through the primary's external
interfaces: the JSON kernel dump, newline-delimited text exports, and the
sweep CSV schema. Deterministic: fixed seeds, fixed protocol.
"""

import sys
from pathlib import Path

from samplerlab import harness
from samplerlab.kernel import sample_ar, sample_ar_sharpened
from samplerlab.samplers import SamplerConfig, run_sampler
from samplerlab.synthetic import english_like_chain

FIXTURES = Path(__file__).parent.parent / "frontend" / "fixtures"

AR_BETAS = (1.0, 2.0, 5.0, 10.0, 25.0)


def main() -> int:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    chain = english_like_chain()
    vocab_map = harness.load_vocab_map("text8")

    with open(FIXTURES / "chain.kern.json", "w") as fh:
        chain.kernel.dump_text(fh)
    print("wrote chain.kern.json")

    for beta in AR_BETAS:
        seqs = sample_ar_sharpened(chain, beta, T=512, N=48, seed=7)
        out = FIXTURES / f"ar_beta{beta:g}.txt"
        harness.export_text(seqs, vocab_map, out)
        print(f"wrote {out.name}")

    for beta in (1.0, 8.0):
        cfg = SamplerConfig(family="sedd", steps=64, beta=beta, seed=11)
        seqs, _ = run_sampler(chain, cfg, T=256, N=64)
        out = FIXTURES / f"sedd_beta{beta:g}.txt"
        harness.export_text(seqs, vocab_map, out)
        print(f"wrote {out.name}")

    reference = sample_ar(chain, T=256, N=64, seed=12)
    harness.export_text(reference, vocab_map, FIXTURES / "ar_reference.txt")
    print("wrote ar_reference.txt")
    return 0


if __name__ == "__main__":
    sys.exit(main())
