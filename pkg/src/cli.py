#!/usr/bin/env python3
"""
Command-line frontend.

    cli.py genome    --length 100000 --seed 7 --out target.fa
    cli.py build-ref --references refs.fa --organisms refs.tsv --out ref.db
    cli.py stats     --db ref.db --out degrees.tsv
    cli.py filter    --db ref.db --bottom-fraction 0.1 --out bottom10.db
    cli.py simulate  --host host.fa --host-reads 10000 --target ecoli:1000=ecoli.fa --fastq s.fq --truth t.tsv
    cli.py identify  --db bottom10.db --sample s.fq --out runs/bottom10
    cli.py eval      --run runs/bottom10 --baseline runs/full --truth t.tsv
    cli.py sweep     --db ref.db --sample s.fq --setting 0.1,0 --setting 0.15,0.15 --out sweep.tsv
    cli.py pipeline  --workdir out --host host.fa --host-reads 10000 --target ecoli:1000=ecoli.fa

Exit codes: 0 success, 1 bad input or usage, 2 internal error.
"""

import argparse
import sys
from dataclasses import fields
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple

from dotenv import load_dotenv

from orchestrate_identification import (
    STATS_AXES,
    build_reference_flow,
    eval_flow,
    filter_flow,
    genome_flow,
    identify_flow,
    pipeline_flow,
    simulate_flow,
    stats_flow,
    sweep_flow,
    with_threads,
)
from tasks.metrics import format_comparison, format_summary
from tasks.simgen import SimSpec, TargetSpec
from utils.config import RunConfig, load_config
from utils.errors import ConfigError, InputError

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INTERNAL = 2


class UsageParser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with code 1 instead of 2."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


# -- argument helpers --------------------------------------------------------


def parse_target(text: str) -> TargetSpec:
    """ORGANISM:COUNT[:RATE]=GENOME_FASTA"""
    head, sep, genome = text.partition("=")
    parts = head.split(":")
    if not sep or not genome or len(parts) not in (2, 3) or not parts[0]:
        raise ConfigError("--target", f"expected ORGANISM:COUNT[:RATE]=FASTA, got {text!r}")
    try:
        count = int(parts[1])
        rate = float(parts[2]) if len(parts) == 3 else None
    except ValueError:
        raise ConfigError("--target", f"bad read count or rate in {text!r}")
    return TargetSpec(Path(genome), parts[0], count, rate)


def parse_setting(text: str) -> Tuple[float, float]:
    """BOTTOM,TOP"""
    try:
        bottom, top = (float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError("--setting", f"expected BOTTOM,TOP fractions, got {text!r}")
    return bottom, top


def config_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Flag values named after RunConfig fields; unset flags are None and do not override."""
    return {f.name: getattr(args, f.name, None) for f in fields(RunConfig)}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file (flags override it)")
    p.add_argument("--threads", type=int, help="worker threads (default: 1)")
    p.add_argument("--seed", type=int, help="random seed (default: 0)")


def _add_build_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, help="k-mer length in residues (default: 4)")
    p.add_argument("--input-kind", dest="input_kind", choices=["dna", "protein"], help="reference alphabet (default: dna)")
    p.add_argument("--chunk-length", dest="chunk_length", type=int, help="reference window length, 0 = whole sequence")
    p.add_argument(
        "--chunk-overlap", dest="chunk_overlap", type=int, help="overlap between reference windows (default: k-mer span - 1)"
    )
    p.add_argument("--on-duplicate", dest="on_duplicate", choices=["error", "suffix"], help="duplicate id policy")


def _add_filter_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--bottom-fraction", dest="bottom_fraction", type=float, help="keep the lowest-degree fraction")
    p.add_argument("--top-fraction", dest="top_fraction", type=float, help="keep the highest-degree fraction")
    p.add_argument("--basis", dest="filter_basis", choices=["types", "mass"], help="fractions count k-mers or degree mass")
    p.add_argument("--degree-mode", dest="degree_mode", choices=["presence", "occurrence"])


def _add_identify_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--weighting", choices=["binary", "counts"], help="score weighting (default: binary)")
    p.add_argument("--min-shared", dest="min_shared", type=int, help="distinct shared k-mers to call a read (default: 2)")
    p.add_argument("--min-margin", dest="min_margin", type=float, help="score margin over the next organism (default: 0)")
    p.add_argument("--min-reads", dest="min_reads", type=int, help="reads to report an organism detected (default: 10)")


def _add_simulation_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--host", required=True, help="host genome FASTA")
    p.add_argument("--host-reads", dest="host_reads", type=int, default=0, help="host background reads")
    p.add_argument("--target", dest="targets", action="append", type=str, default=[],
                   help="ORGANISM:COUNT[:RATE]=FASTA, repeatable")
    p.add_argument("--read-length", dest="read_length", type=int, help="bases per read (default: 200)")
    p.add_argument("--substitution-rate", dest="substitution_rate", type=float, help="per-base rate (default: 0.01)")


def build_parser() -> argparse.ArgumentParser:
    parser = UsageParser(prog="protein-id", description="Protein-space organism identification")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("build-ref", help="build a reference db")
    p.add_argument("--references", required=True, help="reference FASTA ('-' for stdin)")
    p.add_argument("--organisms", help="reference_id<TAB>organism sidecar")
    p.add_argument("--out", required=True, help="db file to write")
    _add_build_options(p)
    _add_common(p)
    p.set_defaults(handler=cmd_build_ref)

    p = sub.add_parser("stats", help="k-mer degree histogram of a db")
    p.add_argument("--db", required=True)
    p.add_argument("--out", required=True, help="histogram TSV")
    p.add_argument("--bins", dest="histogram_bins", choices=["log2", "unit"])
    p.add_argument("--degree-mode", dest="degree_mode", choices=["presence", "occurrence"])
    p.add_argument(
        "--axis", choices=list(STATS_AXES), default="kmers", help="bin k-mers by column degree or rows by row degree"
    )
    _add_common(p)
    p.set_defaults(handler=cmd_stats)

    p = sub.add_parser("filter", help="restrict a db to a degree keep-set")
    p.add_argument("--db", required=True)
    p.add_argument("--out", required=True, help="filtered db file to write")
    _add_filter_options(p)
    _add_common(p)
    p.set_defaults(handler=cmd_filter)

    p = sub.add_parser("identify", help="call organisms for sample reads")
    p.add_argument("--db", required=True)
    p.add_argument("--sample", required=True, help="FASTA/FASTQ, optionally gzipped ('-' for stdin)")
    p.add_argument("--out", required=True, help="output prefix for .calls/.report/.work TSVs")
    _add_identify_options(p)
    p.add_argument("--on-duplicate", dest="on_duplicate", choices=["error", "suffix"], help="duplicate read id policy")
    _add_common(p)
    p.set_defaults(handler=cmd_identify)

    p = sub.add_parser("simulate", help="simulate a spiked sample")
    _add_simulation_options(p)
    p.add_argument("--fastq", required=True, help="FASTQ to write")
    p.add_argument("--truth", required=True, help="truth TSV to write")
    _add_common(p)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("eval", help="evaluate a run against truth")
    p.add_argument("--run", required=True, help="prefix of the run to evaluate")
    p.add_argument("--truth", required=True)
    p.add_argument("--baseline", help="prefix of the unfiltered run to compare against")
    p.add_argument("--out", help="output prefix (default: the run prefix)")
    _add_common(p)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("genome", help="write a synthetic random genome")
    p.add_argument("--length", type=int, required=True)
    p.add_argument("--id", dest="record_id", default="synthetic")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(handler=cmd_genome)

    p = sub.add_parser("sweep", help="identify under several filter thresholds")
    p.add_argument("--db", required=True, help="unfiltered db")
    p.add_argument("--sample", required=True)
    p.add_argument("--setting", dest="settings", action="append", default=[], help="BOTTOM,TOP, repeatable")
    p.add_argument("--truth", help="truth TSV for recall columns")
    p.add_argument("--out", required=True)
    p.add_argument("--basis", dest="filter_basis", choices=["types", "mass"])
    p.add_argument("--degree-mode", dest="degree_mode", choices=["presence", "occurrence"])
    _add_identify_options(p)
    p.add_argument("--on-duplicate", dest="on_duplicate", choices=["error", "suffix"], help="duplicate read id policy")
    _add_common(p)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("pipeline", help="simulate, build, filter, identify and evaluate")
    p.add_argument("--workdir", required=True)
    _add_simulation_options(p)
    _add_build_options(p)
    _add_filter_options(p)
    _add_identify_options(p)
    _add_common(p)
    p.set_defaults(handler=cmd_pipeline)

    return parser


# -- commands ----------------------------------------------------------------


def cmd_build_ref(args: argparse.Namespace, config: RunConfig) -> None:
    with_threads(build_reference_flow, config.threads)(args.references, args.out, args.organisms, config)


def cmd_stats(args: argparse.Namespace, config: RunConfig) -> None:
    with_threads(stats_flow, config.threads)(args.db, args.out, config, axis=args.axis)


def cmd_filter(args: argparse.Namespace, config: RunConfig) -> None:
    with_threads(filter_flow, config.threads)(args.db, args.out, config)


def cmd_identify(args: argparse.Namespace, config: RunConfig) -> None:
    with_threads(identify_flow, config.threads)(args.db, args.sample, args.out, config)


def _sim_spec(args: argparse.Namespace, config: RunConfig) -> SimSpec:
    return SimSpec(
        host_genome=Path(args.host),
        targets=tuple(parse_target(t) for t in args.targets),
        read_length=config.read_length,
        substitution_rate=config.substitution_rate,
        host_read_count=args.host_reads,
        seed=config.seed,
    )


def cmd_simulate(args: argparse.Namespace, config: RunConfig) -> None:
    with_threads(simulate_flow, config.threads)(_sim_spec(args, config), args.fastq, args.truth)


def cmd_eval(args: argparse.Namespace, config: RunConfig) -> None:
    result, comparison = with_threads(eval_flow, config.threads)(args.run, args.truth, args.out, args.baseline)
    sys.stdout.write(format_summary(result))
    if comparison is not None:
        sys.stdout.write(format_comparison(comparison))


def cmd_genome(args: argparse.Namespace, config: RunConfig) -> None:
    with_threads(genome_flow, config.threads)(args.out, args.length, config.seed, args.record_id)


def cmd_sweep(args: argparse.Namespace, config: RunConfig) -> None:
    settings = [parse_setting(s) for s in args.settings]
    with_threads(sweep_flow, config.threads)(args.db, args.sample, args.out, settings, args.truth, config)


def cmd_pipeline(args: argparse.Namespace, config: RunConfig) -> None:
    spec = _sim_spec(args, config)
    spec.validate()
    filtered_eval, comparison = with_threads(pipeline_flow, config.threads)(
        args.workdir, spec.host_genome, list(spec.targets), spec.host_read_count, config
    )
    sys.stdout.write(format_summary(filtered_eval))
    sys.stdout.write(format_comparison(comparison))


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        config = load_config(args.config, config_overrides(args))
        args.handler(args, config)
    except (InputError, OSError) as e:
        print(f"{parser.prog} {args.command}: error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as e:
        print(f"{parser.prog} {args.command}: internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
