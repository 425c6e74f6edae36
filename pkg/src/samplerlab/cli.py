"""Command line interface.

Subcommands: build-oracle, sweep, sample, evaluate, export-text, verify.
Any flag may also be supplied through a JSON configuration file via
--config; explicit command line flags win. SAMPLERLAB_WORKERS and
SAMPLERLAB_OUTDIR provide environment overrides for worker count and
output directory.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness, metrics
from .harness import Cell, SweepSpec


def _add_config_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file supplying defaults for any flag")


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    # two-phase parse: config file values become defaults, flags override
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config", type=Path)
    known, _ = probe.parse_known_args(argv)
    if known.config:
        with open(known.config) as fh:
            overrides = {k.replace("-", "_"): v for k, v in json.load(fh).items()}
        parser.set_defaults(**overrides)
        for action in parser._actions:
            if action.dest in overrides:
                action.required = False
    return parser.parse_args(argv)


def _cmd_build_oracle(argv: list[str]) -> int:
    p = argparse.ArgumentParser(prog="samplerlab build-oracle")
    _add_config_arg(p)
    p.add_argument("--input", type=Path, required=True, help="corpus file")
    p.add_argument("--format", choices=("text8", "tokens"), required=True)
    p.add_argument("--vocab-size", type=int, help="required for token streams")
    p.add_argument("--mass", type=float, default=0.99, help="cumulative mass threshold")
    p.add_argument("--percentile", type=float, default=0.90, help="quantile of per-state k*")
    p.add_argument("--epsilon", type=float, default=1e-4, help="teleport weight")
    p.add_argument("--dense", action="store_true", help="keep all successors (no truncation)")
    p.add_argument("--strict-text", action="store_true",
                   help="reject characters outside the 27-symbol alphabet")
    p.add_argument("-o", "--output", type=Path, required=True, help="kernel file to write")
    args = _apply_config(p, argv)
    summary = harness.build_oracle(
        args.input, args.format, args.output,
        vocab_size=args.vocab_size, mass_threshold=args.mass,
        percentile=args.percentile, epsilon=args.epsilon, dense=args.dense,
        lenient_text=not args.strict_text,
    )
    print(json.dumps(summary, indent=2))
    return 0


def _parse_cell(args, steps) -> Cell:
    return Cell(
        family=args.family,
        steps=None if args.family == "ar" else steps,
        seed=args.seed,
        beta=args.beta,
        nucleus_p=args.nucleus_p,
        eta_cap=args.eta_cap,
        t_on=args.t_on,
        t_off=args.t_off,
        remask_strategy=args.remask_strategy,
        prompt=tuple(args.prompt or ()),
        sequential=args.sequential,
    )


def _add_sampler_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--family", required=True,
                   choices=("ar", "sedd", "mdlm", "llada", "remdm-conf", "remdm-loop"))
    p.add_argument("--steps", type=int, default=1024)
    p.add_argument("--seed", type=int, default=123)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--nucleus-p", type=float, default=1.0)
    p.add_argument("--eta-cap", type=float, default=0.02)
    p.add_argument("--t-on", type=float, default=0.55)
    p.add_argument("--t-off", type=float, default=0.05)
    p.add_argument("--remask-strategy", choices=("low-confidence", "random"),
                   default="low-confidence")
    p.add_argument("--prompt", type=int, nargs="*", help="revealed prefix token ids")
    p.add_argument("--sequential", action="store_true",
                   help="mdlm variant unmasking one position per step")
    p.add_argument("-T", type=int, default=1024)
    p.add_argument("-N", type=int, default=512)


def _cmd_sample(argv: list[str]) -> int:
    p = argparse.ArgumentParser(prog="samplerlab sample")
    _add_config_arg(p)
    p.add_argument("--oracle", type=Path, required=True)
    _add_sampler_args(p)
    p.add_argument("--workers", type=int, default=harness.workers_from_env())
    p.add_argument("-o", "--output", type=Path, required=True, help="token stream to write")
    args = _apply_config(p, argv)
    chain = harness.load_chain(args.oracle)
    meta = harness.sample_to_file(chain, _parse_cell(args, args.steps), args.T, args.N,
                                  args.output, sampler_workers=args.workers)
    print(json.dumps(meta, indent=2))
    return 0


def _cmd_evaluate(argv: list[str]) -> int:
    p = argparse.ArgumentParser(prog="samplerlab evaluate")
    _add_config_arg(p)
    p.add_argument("--oracle", type=Path, required=True)
    p.add_argument("--sequences", type=Path, required=True)
    p.add_argument("--dataset", default="")
    p.add_argument("--type", dest="kind", default="Diffusion")
    p.add_argument("--model", default="")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--output", type=Path, help="CSV to write (defaults to stdout)")
    args = _apply_config(p, argv)
    chain = harness.load_chain(args.oracle)
    seqs = harness.read_sequences(args.sequences, chain.vocab_size)
    report = metrics.compute_report(seqs, chain, dataset=args.dataset, kind=args.kind,
                                    model=args.model, steps=args.steps, seed=args.seed)
    if args.output:
        metrics.write_csv(args.output, [report])
    else:
        print(",".join(metrics.CSV_COLUMNS))
        print(",".join(report.to_csv_row()))
    return 0


def _cmd_sweep(argv: list[str]) -> int:
    p = argparse.ArgumentParser(prog="samplerlab sweep")
    _add_config_arg(p)
    p.add_argument("--oracle", type=Path, required=True)
    p.add_argument("--dataset", required=True, help="Dataset column value, e.g. 'Text8 (Char)'")
    p.add_argument("--families", nargs="+",
                   default=["ar", "sedd", "mdlm", "llada", "remdm-conf", "remdm-loop"])
    p.add_argument("--steps", type=int, nargs="+", default=list(harness.DEFAULT_STEPS))
    p.add_argument("--seeds", type=int, nargs="+", default=[123])
    p.add_argument("--sedd-betas", type=float, nargs="+", default=[1.0])
    p.add_argument("--remdm-nucleus", type=float, nargs="+", default=[1.0])
    p.add_argument("-T", type=int, default=1024)
    p.add_argument("-N", type=int, default=512)
    p.add_argument("--workers", type=int, default=harness.workers_from_env())
    p.add_argument("--outdir", type=Path, default=None)
    p.add_argument("--csv-name", default="sweep.csv")
    args = _apply_config(p, argv)
    outdir = args.outdir if args.outdir is not None else harness.outdir_from_env("sweep-out")
    spec = SweepSpec(
        oracle=str(args.oracle), dataset=args.dataset, T=args.T, N=args.N,
        steps=tuple(args.steps), seeds=tuple(args.seeds), families=tuple(args.families),
        sedd_betas=tuple(args.sedd_betas), remdm_nucleus=tuple(args.remdm_nucleus),
    )
    csv_path = harness.sweep(spec, outdir, workers=args.workers, csv_name=args.csv_name)
    print(csv_path)
    return 0


def _cmd_export_text(argv: list[str]) -> int:
    p = argparse.ArgumentParser(prog="samplerlab export-text")
    _add_config_arg(p)
    p.add_argument("--sequences", type=Path, required=True)
    p.add_argument("--vocab-size", type=int, required=True)
    p.add_argument("--vocab-map", required=True,
                   help="'text8' or a JSON file mapping id -> string")
    p.add_argument("-o", "--output", type=Path, required=True)
    args = _apply_config(p, argv)
    seqs = harness.read_sequences(args.sequences, args.vocab_size)
    vocab_map = harness.load_vocab_map(args.vocab_map)
    missing = harness.export_text(seqs, vocab_map, args.output)
    if missing:
        print(f"warning: {missing} ids had no mapping and were replaced", file=sys.stderr)
    print(args.output)
    return 0


def _cmd_verify(argv: list[str]) -> int:
    p = argparse.ArgumentParser(prog="samplerlab verify")
    p.parse_args(argv)
    return 0 if harness.verify() else 1


_COMMANDS = {
    "build-oracle": _cmd_build_oracle,
    "sweep": _cmd_sweep,
    "sample": _cmd_sample,
    "evaluate": _cmd_evaluate,
    "export-text": _cmd_export_text,
    "verify": _cmd_verify,
}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if not argv or argv[0] in ("-h", "--help"):
        print("usage: samplerlab {" + ",".join(_COMMANDS) + "} ...")
        return 0 if argv else 2
    cmd = argv[0]
    if cmd not in _COMMANDS:
        print(f"unknown command {cmd!r}; expected one of {', '.join(_COMMANDS)}", file=sys.stderr)
        return 2
    return _COMMANDS[cmd](argv[1:])


if __name__ == "__main__":
    sys.exit(main())
