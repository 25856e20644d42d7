"""
Tests for the identification flows.
"""

from collections import Counter

import pandas as pd
import pytest

import orchestrate_identification
from orchestrate_identification import (
    SWEEP_COLUMNS,
    build_reference_flow,
    eval_flow,
    filter_flow,
    genome_flow,
    identify_flow,
    pipeline_flow,
    run_outputs,
    simulate_flow,
    stats_flow,
    sweep_flow,
    with_threads,
)
from tasks.identify import read_calls, read_report, read_work
from tasks.refdb import build, load
from tasks.simgen import SimSpec, TargetSpec
from utils.aarray import column_sums, row_sums
from utils.config import RunConfig
from utils.errors import InputError
from utils.seqio import read_sequences

SMALL = RunConfig(chunk_length=1000, chunk_overlap=150, read_length=100, min_reads=5)


@pytest.fixture
def genomes(tmp_path):
    """A 20 kb host and two 4 kb targets written by the genome flow."""
    paths = {}
    for name, length, seed in [("host", 20_000, 1), ("orgA", 4_000, 2), ("orgB", 4_000, 3)]:
        paths[name] = tmp_path / f"{name}.fa"
        genome_flow(paths[name], length, seed, record_id=name)
    return paths


@pytest.fixture
def references(tmp_path, genomes):
    """One FASTA with all three genomes, organisms from the header convention."""
    path = tmp_path / "refs.fa"
    with open(path, "w") as out:
        for name, genome in genomes.items():
            record = next(read_sequences(genome))
            out.write(f">{name}_1|{name}\n{record.seq}\n")
    return path


@pytest.fixture
def sample(tmp_path, genomes):
    spec = SimSpec(
        genomes["host"],
        (TargetSpec(genomes["orgA"], "orgA", 40), TargetSpec(genomes["orgB"], "orgB", 40)),
        read_length=100,
        host_read_count=200,
        seed=5,
    )
    fastq, truth = tmp_path / "sample.fastq", tmp_path / "truth.tsv"
    assert simulate_flow(spec, fastq, truth) == 280
    return fastq, truth


@pytest.fixture
def db_path(tmp_path, references):
    path = tmp_path / "ref.db"
    build_reference_flow(references, path, config=SMALL)
    return path


def test_genome_flow_writes_fasta(genomes):
    (record,) = list(read_sequences(genomes["orgA"]))
    assert record.id == "orgA"
    assert len(record) == 4_000


def test_parallel_build_equals_sequential_build(references, tmp_path, monkeypatch):
    monkeypatch.setattr(orchestrate_identification, "BUILD_BLOCK_ROWS", 3)
    out = tmp_path / "blocks.db"
    db = with_threads(build_reference_flow, 4)(references, out, config=SMALL)

    sequential = build(
        list(read_sequences(references)),
        input_kind="dna",
        chunk_length=SMALL.chunk_length,
        chunk_overlap=SMALL.chunk_overlap,
    )
    assert db == sequential
    assert load(out) == sequential
    assert db.organisms == ["host", "orgA", "orgB"]


def test_stats_flow(db_path, tmp_path):
    out = tmp_path / "degrees.tsv"
    hist = stats_flow(db_path, out)
    frame = pd.read_csv(out, sep="\t")
    assert list(frame.columns) == ["degree_bin", "count"]
    assert list(frame.itertuples(index=False, name=None)) == hist
    assert frame["count"].sum() == len(load(db_path).degrees)


def test_stats_flow_over_rows(db_path, tmp_path):
    db = load(db_path)
    hist = stats_flow(db_path, tmp_path / "rows.tsv", SMALL.merged({"histogram_bins": "unit"}), axis="rows")
    assert sum(count for _, count in hist) == db.array.num_rows
    assert dict(hist) == dict(Counter(row_sums(db.array, "presence").tolist()))


def test_stats_flow_rejects_unknown_axis(db_path, tmp_path):
    with pytest.raises(InputError, match="axis"):
        stats_flow(db_path, tmp_path / "x.tsv", axis="columns")


@pytest.mark.parametrize("mode", ["presence", "occurrence"])
def test_stats_on_filtered_db_covers_kept_kmers(db_path, tmp_path, mode):
    filtered_db = tmp_path / "bottom.db"
    filtered = filter_flow(db_path, filtered_db, SMALL.merged({"bottom_fraction": 0.10}))
    config = SMALL.merged({"degree_mode": mode, "histogram_bins": "unit"})
    hist = stats_flow(filtered_db, tmp_path / "degrees.tsv", config)
    assert sum(count for _, count in hist) == len(filtered.kept_kmers)
    assert dict(hist) == dict(Counter(column_sums(filtered.array, mode).degrees.tolist()))


def test_identify_and_eval(db_path, sample, tmp_path):
    fastq, truth = sample
    prefix = tmp_path / "full"
    result = identify_flow(db_path, fastq, prefix, SMALL)

    paths = run_outputs(prefix)
    assert read_calls(paths["calls"]) == result.calls
    written = read_report(paths["report"])
    assert [(r.organism, r.reads_assigned, r.detected) for r in written] == [
        (r.organism, r.reads_assigned, r.detected) for r in result.reports
    ]
    # fractions are written with six decimals
    assert [r.fraction_of_classified for r in written] == pytest.approx(
        [r.fraction_of_classified for r in result.reports], abs=5e-7
    )
    assert read_work(paths["work"]).comparisons == result.work.comparisons
    detected = {r.organism for r in result.reports if r.detected}
    assert {"orgA", "orgB"} <= detected

    evaluation, comparison = eval_flow(prefix, truth)
    assert comparison is None
    assert evaluation.per_organism["orgA"].recall >= 0.9
    assert evaluation.fp_organisms == frozenset()
    assert (tmp_path / "full.eval.tsv").exists()


def test_filtered_run_against_baseline(db_path, sample, tmp_path):
    fastq, truth = sample
    identify_flow(db_path, fastq, tmp_path / "full", SMALL)
    filtered_db = tmp_path / "bottom.db"
    filter_flow(db_path, filtered_db, SMALL.merged({"bottom_fraction": 0.10}))
    assert load(filtered_db).filter_applied.bottom_fraction == 0.10
    identify_flow(filtered_db, fastq, tmp_path / "bottom", SMALL)

    _, comparison = eval_flow(tmp_path / "bottom", truth, baseline_prefix=tmp_path / "full")
    assert comparison.counter_ratio < 1.0
    assert (tmp_path / "bottom.compare.tsv").exists()


def test_thread_count_does_not_change_outputs(db_path, sample, tmp_path, monkeypatch):
    monkeypatch.setattr(orchestrate_identification, "SCORE_BLOCK_ROWS", 17)
    fastq, _ = sample
    with_threads(identify_flow, 1)(db_path, fastq, tmp_path / "one", SMALL)
    with_threads(identify_flow, 8)(db_path, fastq, tmp_path / "eight", SMALL)
    for kind in ("calls", "report", "work"):
        assert run_outputs(tmp_path / "one")[kind].read_bytes() == run_outputs(tmp_path / "eight")[kind].read_bytes()


def test_scoring_block_size_does_not_change_outputs(db_path, sample, tmp_path, monkeypatch):
    fastq, _ = sample
    identify_flow(db_path, fastq, tmp_path / "whole", SMALL)
    monkeypatch.setattr(orchestrate_identification, "SCORE_BLOCK_ROWS", 17)
    identify_flow(db_path, fastq, tmp_path / "blocks", SMALL)
    for kind in ("calls", "report", "work"):
        assert run_outputs(tmp_path / "whole")[kind].read_bytes() == run_outputs(tmp_path / "blocks")[kind].read_bytes()


def test_identify_empty_sample(db_path, tmp_path):
    empty = tmp_path / "empty.fa"
    empty.write_text("")
    result = identify_flow(db_path, empty, tmp_path / "none", SMALL)
    assert result.calls == []
    assert result.reports == []
    assert result.work.comparisons == 0


def test_sweep_flow(db_path, sample, tmp_path):
    fastq, truth = sample
    out = tmp_path / "sweep.tsv"
    frame = sweep_flow(db_path, fastq, out, [(0.10, 0.0), (0.15, 0.15)], truth, SMALL)
    assert list(frame.columns) == SWEEP_COLUMNS
    assert frame[["bottom_fraction", "top_fraction"]].values.tolist() == [[0.0, 0.0], [0.10, 0.0], [0.15, 0.15]]
    assert frame["counter_ratio"].iloc[0] == 1.0
    assert frame["counter_ratio"].iloc[1] < 1.0
    assert pd.read_csv(out, sep="\t").shape == (3, len(SWEEP_COLUMNS))


def test_sweep_rejects_filtered_db(db_path, sample, tmp_path):
    fastq, _ = sample
    filtered_db = tmp_path / "bottom.db"
    filter_flow(db_path, filtered_db, SMALL.merged({"bottom_fraction": 0.10}))
    with pytest.raises(Exception, match="unfiltered db"):
        sweep_flow(filtered_db, fastq, tmp_path / "sweep.tsv", [(0.1, 0.0)])


def test_pipeline_with_keep_all_filter_matches_full_run(genomes, tmp_path):
    workdir = tmp_path / "run"
    targets = [TargetSpec(genomes["orgA"], "orgA", 30)]
    filtered_eval, comparison = pipeline_flow(workdir, genomes["host"], targets, 100, SMALL)

    for name in ("config.txt", "sample.fastq", "truth.tsv", "reference.db", "filtered.db", "filtered.compare.tsv"):
        assert (workdir / name).exists()
    assert (workdir / "full.calls.tsv").read_bytes() == (workdir / "filtered.calls.tsv").read_bytes()
    assert comparison.counter_ratio == 1.0
    assert set(comparison.recall_delta.values()) == {0.0}
    assert "orgA" in filtered_eval.detected_set
    assert RunConfig.from_file(workdir / "config.txt") == SMALL
