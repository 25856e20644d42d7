#!/usr/bin/env python3
"""
Identification Orchestrator

Prefect flows for every stage of the pipeline: reference builds, degree
statistics, filtering, identification, simulation and evaluation, plus the
threshold sweep and the end-to-end pipeline.

Work is split into fixed-size blocks (reference rows for builds, sample reads for
scoring) that run as Prefect tasks on a thread pool. Block sizes never depend on
the worker count, so outputs are identical for any --threads value.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from prefect import flow
from prefect.logging import get_run_logger
from prefect.task_runners import ThreadPoolTaskRunner
from prefect.utilities.annotations import quote

from tasks.identify import (
    FLOAT_FORMAT,
    SCORE_BLOCK_ROWS,
    OrganismReport,
    ReadCall,
    RunWork,
    aggregate,
    call_reads,
    read_calls,
    read_report,
    read_work,
    index_read_block,
    score_read_block,
    write_calls,
    write_report,
    write_work,
)
from tasks.metrics import (
    EvalResult,
    RunComparison,
    compare_runs,
    evaluate,
    read_truth,
    write_comparison,
    write_eval,
)
from tasks.refdb import (
    ReferenceDB,
    apply_filter,
    assemble,
    build_partial_array,
    load,
    load_organism_map,
    reference_rows,
    save,
)
from tasks.simgen import SimSpec, TargetSpec, simulate_sample, synthesize_genome, write_simulation
from utils.aarray import AssocArray, merge_arrays, row_sums
from utils.artifacts import (
    create_comparison_artifact,
    create_eval_artifact,
    create_histogram_artifact,
    create_report_artifact,
    create_sweep_artifact,
)
from utils.config import RunConfig
from utils.degree import FilterSpec, histogram, histogram_values, write_histogram
from utils.errors import InputError, ReferenceDBError
from utils.seqio import Read, read_sequences, write_fasta

# Reference rows per build task
BUILD_BLOCK_ROWS = 128

STATS_AXES = ("kmers", "rows")

SWEEP_COLUMNS = [
    "bottom_fraction",
    "top_fraction",
    "kept_kmers",
    "comparisons",
    "counter_ratio",
    "classified_reads",
    "detected",
    "mean_recall",
    "fp_organisms",
]


@dataclass
class IdentifyResult:
    calls: List[ReadCall]
    reports: List[OrganismReport]
    work: RunWork


def run_outputs(prefix: Union[str, Path]) -> Dict[str, Path]:
    """Output paths of one identification run."""
    prefix = str(prefix)
    return {
        "calls": Path(f"{prefix}.calls.tsv"),
        "report": Path(f"{prefix}.report.tsv"),
        "work": Path(f"{prefix}.work.tsv"),
    }


def with_threads(flow_fn: Callable, threads: int) -> Callable:
    """The flow with a thread-pool task runner of `threads` workers."""
    return flow_fn.with_options(task_runner=ThreadPoolTaskRunner(max_workers=threads))


# -- building blocks shared by several flows ---------------------------------


def build_db(
    references: Sequence[Read],
    organism_map: Optional[Mapping[str, str]],
    config: RunConfig,
) -> ReferenceDB:
    """Parallel reference build: one task per block of rows, merged in block order."""
    logger = get_run_logger()
    rows = reference_rows(references, organism_map, config.chunk_length, config.window_overlap())
    if not rows:
        raise ReferenceDBError("empty reference set")

    blocks = [rows[i:i + BUILD_BLOCK_ROWS] for i in range(0, len(rows), BUILD_BLOCK_ROWS)]
    logger.info(f"🏗️ Building {len(rows)} reference rows in {len(blocks)} block(s)")
    futures = [build_partial_array.submit(quote(block), config.input_kind, config.k) for block in blocks]
    array = merge_arrays([f.result() for f in futures])

    db = assemble(array, rows, config.input_kind, config.chunk_length, config.window_overlap())
    logger.info(
        f"📚 Reference db: {array.num_rows} rows, {len(db.organisms)} organisms, {len(db.degrees)} distinct k-mers"
    )
    return db


def index_sample(reads: Sequence[Read], k: int) -> AssocArray:
    """Sample array of all reads, translated in parallel blocks and merged in read order."""
    futures = [
        index_read_block.submit(quote(reads[i:i + SCORE_BLOCK_ROWS]), k)
        for i in range(0, len(reads), SCORE_BLOCK_ROWS)
    ]
    if not futures:
        return AssocArray(k)
    return merge_arrays([f.result() for f in futures])


def identify_reads(sample: AssocArray, db: ReferenceDB, config: RunConfig) -> IdentifyResult:
    """Score row blocks of the sample in parallel, then call each block in read order and aggregate."""
    logger = get_run_logger()
    futures = [
        score_read_block.submit(sample.take_rows(i, i + SCORE_BLOCK_ROWS), quote(db), config.weighting)
        for i in range(0, sample.num_rows, SCORE_BLOCK_ROWS)
    ]

    calls: List[ReadCall] = []
    comparisons = 0
    empty = 0
    for future in futures:
        match = future.result()
        comparisons += match.comparisons
        empty += int(np.count_nonzero(np.diff(match.scores.indptr) == 0))
        calls.extend(call_reads(match, db, config.min_shared, config.min_margin))
    if empty:
        logger.warning(f"⚠️ {empty} of {sample.num_rows} reads share no k-mer with the reference db")

    reports = aggregate(calls, config.min_reads)
    spec = db.filter_applied
    work = RunWork(
        comparisons=comparisons,
        sample_rows=sample.num_rows,
        reference_rows=db.array.num_rows,
        weighting=config.weighting,
        filter=spec.describe() if spec is not None else "unfiltered",
    )
    classified = sum(r.reads_assigned for r in reports)
    logger.info(
        f"🔎 {classified}/{sample.num_rows} reads classified, "
        f"{sum(r.detected for r in reports)} organism(s) detected, {comparisons:,} comparisons"
    )
    return IdentifyResult(calls, reports, work)


def write_run(result: IdentifyResult, prefix: Union[str, Path]) -> Dict[str, Path]:
    paths = run_outputs(prefix)
    write_calls(result.calls, paths["calls"])
    write_report(result.reports, paths["report"])
    write_work(result.work, paths["work"])
    return paths


def evaluate_prefix(prefix: Union[str, Path], truth: Mapping[str, str]) -> Tuple[EvalResult, RunWork]:
    paths = run_outputs(prefix)
    result = evaluate(read_calls(paths["calls"]), truth, read_report(paths["report"]))
    return result, read_work(paths["work"])


# -- flows -------------------------------------------------------------------


@flow(name="Build Reference DB")
def build_reference_flow(
    reference_path: Union[str, Path],
    out_path: Union[str, Path],
    organism_map_path: Optional[Union[str, Path]] = None,
    config: RunConfig = RunConfig(),
) -> ReferenceDB:
    """Read references, build the db in parallel blocks, and save it."""
    logger = get_run_logger()
    references = list(read_sequences(reference_path, alphabet=config.input_kind, on_duplicate=config.on_duplicate))
    organism_map = load_organism_map(organism_map_path) if organism_map_path else None
    logger.info(f"📥 Loaded {len(references)} {config.input_kind} reference(s) from {reference_path}")

    db = build_db(references, organism_map, config)
    save(db, out_path)
    logger.info(f"💾 Saved reference db to {out_path}")
    return db


@flow(name="Degree Statistics")
def stats_flow(
    db_path: Union[str, Path],
    out_path: Union[str, Path],
    config: RunConfig = RunConfig(),
    axis: str = "kmers",
) -> List[Tuple[int, int]]:
    """Degree histogram of a reference db.

    axis "kmers" bins the k-mers the db array holds by column degree; for a
    filtered db that is the kept k-mers only, in either degree mode, with
    presence degrees still counted over the unfiltered rows. axis "rows" bins
    reference rows by their distinct k-mers (presence) or k-mer occurrences.
    """
    logger = get_run_logger()
    if axis not in STATS_AXES:
        raise InputError(f"unknown stats axis {axis!r}; expected one of {STATS_AXES}")
    db = load(db_path)
    if axis == "kmers":
        hist = histogram(db.degree_table(config.degree_mode), config.histogram_bins)
    else:
        hist = histogram_values(row_sums(db.array, config.degree_mode), config.histogram_bins)
    write_histogram(hist, out_path)
    create_histogram_artifact(hist, Path(db_path).stem, config.histogram_bins, axis)
    logger.info(f"📊 Wrote {len(hist)} {config.histogram_bins} {config.degree_mode} bin(s) over {axis} to {out_path}")
    return hist


@flow(name="Filter Reference DB")
def filter_flow(
    db_path: Union[str, Path],
    out_path: Union[str, Path],
    config: RunConfig = RunConfig(),
) -> ReferenceDB:
    db = apply_filter(load(db_path), config.filter_spec())
    save(db, out_path)
    get_run_logger().info(f"💾 Saved filtered db to {out_path}")
    return db


@flow(name="Identify Organisms")
def identify_flow(
    db_path: Union[str, Path],
    sample_path: Union[str, Path],
    out_prefix: Union[str, Path],
    config: RunConfig = RunConfig(),
) -> IdentifyResult:
    """Score a DNA sample against a (possibly filtered) db and write calls, report and work tables."""
    logger = get_run_logger()
    db = load(db_path)
    reads = list(read_sequences(sample_path, alphabet="dna", on_duplicate=config.on_duplicate))
    logger.info(f"📥 Loaded {len(reads)} reads from {sample_path}")

    result = identify_reads(index_sample(reads, db.k), db, config)
    paths = write_run(result, out_prefix)
    create_report_artifact(result.reports, Path(out_prefix).name)
    logger.info(f"💾 Wrote {paths['calls']}, {paths['report']} and {paths['work']}")
    return result


@flow(name="Simulate Spiked Sample")
def simulate_flow(
    spec: SimSpec,
    fastq_out: Union[str, Path],
    truth_out: Union[str, Path],
) -> int:
    """Generate a spiked sample and write FASTQ plus truth TSV; returns the read count."""
    sample = simulate_sample(quote(spec))
    write_simulation(sample, fastq_out, truth_out)
    get_run_logger().info(f"💾 Wrote {len(sample.reads)} reads to {fastq_out} and truth to {truth_out}")
    return len(sample.reads)


@flow(name="Synthesize Genome")
def genome_flow(out_path: Union[str, Path], length: int, seed: int, record_id: str = "synthetic") -> None:
    with open(out_path, "w", newline="\n") as handle:
        write_fasta([synthesize_genome(length, seed, record_id)], handle)
    get_run_logger().info(f"🧬 Wrote {length:,} bp synthetic genome to {out_path}")


@flow(name="Evaluate Run")
def eval_flow(
    run_prefix: Union[str, Path],
    truth_path: Union[str, Path],
    out_prefix: Optional[Union[str, Path]] = None,
    baseline_prefix: Optional[Union[str, Path]] = None,
) -> Tuple[EvalResult, Optional[RunComparison]]:
    """Evaluate a run against truth and, given a baseline (unfiltered) run, compare the two."""
    logger = get_run_logger()
    out_prefix = str(out_prefix or run_prefix)
    truth = read_truth(truth_path)

    result, work = evaluate_prefix(run_prefix, truth)
    write_eval(result, f"{out_prefix}.eval.tsv")
    create_eval_artifact(result, Path(out_prefix).name)
    logger.info(f"🎯 Wrote evaluation to {out_prefix}.eval.tsv")

    comparison = None
    if baseline_prefix is not None:
        baseline, baseline_work = evaluate_prefix(baseline_prefix, truth)
        comparison = compare_runs(baseline, baseline_work.comparisons, result, work.comparisons)
        write_comparison(comparison, f"{out_prefix}.compare.tsv")
        create_comparison_artifact(comparison, Path(out_prefix).name)
        logger.info(f"⚖️ Counter ratio {comparison.counter_ratio:.4f}; wrote {out_prefix}.compare.tsv")
    return result, comparison


@flow(name="Threshold Sweep")
def sweep_flow(
    db_path: Union[str, Path],
    sample_path: Union[str, Path],
    out_path: Union[str, Path],
    settings: Sequence[Tuple[float, float]],
    truth_path: Optional[Union[str, Path]] = None,
    config: RunConfig = RunConfig(),
) -> pd.DataFrame:
    """Identify the same sample under several (bottom, top) filters of one unfiltered db."""
    logger = get_run_logger()
    db = load(db_path)
    if db.filter_applied is not None:
        raise ReferenceDBError(f"{db_path}: sweep needs an unfiltered db")
    reads = list(read_sequences(sample_path, alphabet="dna", on_duplicate=config.on_duplicate))
    sample = index_sample(reads, db.k)
    truth = read_truth(truth_path) if truth_path else None

    baseline = None
    rows: List[Dict[str, Any]] = []
    for bottom, top in [(0.0, 0.0)] + [s for s in settings if s != (0.0, 0.0)]:
        spec = FilterSpec(bottom, top, config.filter_basis, config.degree_mode)
        filtered = apply_filter(db, spec)
        result = identify_reads(sample, filtered, config)
        if baseline is None:
            baseline = result.work.comparisons
        row: Dict[str, Any] = {
            "bottom_fraction": bottom,
            "top_fraction": top,
            "kept_kmers": len(filtered.kept_kmers),
            "comparisons": result.work.comparisons,
            "counter_ratio": result.work.comparisons / baseline if baseline else 1.0,
            "classified_reads": sum(r.reads_assigned for r in result.reports),
            "detected": ",".join(sorted(r.organism for r in result.reports if r.detected)),
            "mean_recall": float("nan"),
            "fp_organisms": "",
        }
        if truth is not None:
            evaluation = evaluate(result.calls, truth, result.reports)
            recalls = [evaluation.per_organism[o].recall for o in evaluation.truth_organisms]
            row["mean_recall"] = float(np.mean(recalls)) if recalls else 1.0
            row["fp_organisms"] = ",".join(sorted(evaluation.fp_organisms))
        rows.append(row)
        logger.info(f"   {spec.describe()}: ratio {row['counter_ratio']:.4f}, detected [{row['detected']}]")

    frame = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
    frame.to_csv(out_path, sep="\t", index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    create_sweep_artifact(rows, Path(out_path).stem)
    logger.info(f"💾 Wrote {len(rows)} sweep row(s) to {out_path}")
    return frame


def _genome_references(path: Union[str, Path], organism: str) -> Tuple[List[Read], Dict[str, str]]:
    """Genome records as references named "<organism>.<record id>"."""
    references = [Read(f"{organism}.{r.id}", r.seq) for r in read_sequences(path)]
    return references, {r.id: organism for r in references}


@flow(name="Identification Pipeline")
def pipeline_flow(
    workdir: Union[str, Path],
    host_genome: Union[str, Path],
    targets: Sequence[TargetSpec],
    host_read_count: int,
    config: RunConfig = RunConfig(),
) -> Tuple[EvalResult, RunComparison]:
    """Simulate, build, filter, identify (full and filtered) and evaluate in one run.

    The reference db is built from the same genomes the sample is drawn from.
    Everything lands in `workdir` under fixed names.
    """
    logger = get_run_logger()
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    (workdir / "config.txt").write_text(config.to_text())

    spec = SimSpec(
        host_genome=Path(host_genome),
        targets=tuple(targets),
        read_length=config.read_length,
        substitution_rate=config.substitution_rate,
        host_read_count=host_read_count,
        seed=config.seed,
    )
    logger.info("🧪 Step 1: simulate")
    sample = simulate_sample(quote(spec))
    write_simulation(sample, workdir / "sample.fastq", workdir / "truth.tsv")

    logger.info("🏗️ Step 2: build reference db")
    references, organism_map = _genome_references(host_genome, spec.host_name)
    for target in targets:
        target_refs, target_map = _genome_references(target.genome, target.organism)
        references.extend(target_refs)
        organism_map.update(target_map)
    db = build_db(references, organism_map, config)
    save(db, workdir / "reference.db")

    logger.info("✂️ Step 3: filter")
    filtered = apply_filter(db, config.filter_spec())
    save(filtered, workdir / "filtered.db")

    logger.info("🔎 Step 4: identify")
    truth = dict(sample.truth)
    sample_array = index_sample(sample.reads, db.k)
    full_run = identify_reads(sample_array, db, config)
    write_run(full_run, workdir / "full")
    filtered_run = identify_reads(sample_array, filtered, config)
    write_run(filtered_run, workdir / "filtered")
    create_report_artifact(filtered_run.reports, "pipeline-filtered")

    logger.info("🎯 Step 5: evaluate")
    full_eval = evaluate(full_run.calls, truth, full_run.reports)
    filtered_eval = evaluate(filtered_run.calls, truth, filtered_run.reports)
    write_eval(full_eval, workdir / "full.eval.tsv")
    write_eval(filtered_eval, workdir / "filtered.eval.tsv")
    comparison = compare_runs(full_eval, full_run.work.comparisons, filtered_eval, filtered_run.work.comparisons)
    write_comparison(comparison, workdir / "filtered.compare.tsv")
    create_eval_artifact(filtered_eval, "pipeline-filtered")
    create_comparison_artifact(comparison, "pipeline")

    logger.info(f"✅ Pipeline complete: outputs in {workdir}")
    return filtered_eval, comparison
