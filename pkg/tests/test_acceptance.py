"""
Desk-scale acceptance runs on synthetic spiked samples.

Dataset A: 1 Mb host, three 100 kb targets, 10,000 host reads and 1,000 reads
per target (200 bp, 1% substitutions). Dataset B adds three more targets
sequenced at 5% substitutions.

Run with: pytest -m slow
"""

from pathlib import Path
from types import SimpleNamespace

import pytest

from orchestrate_identification import (
    filter_flow,
    genome_flow,
    identify_flow,
    pipeline_flow,
    run_outputs,
    with_threads,
)
from tasks.identify import UNCLASSIFIED, read_calls, read_report
from tasks.metrics import evaluate, read_truth
from tasks.refdb import load, serialize
from tasks.simgen import HOST_ORGANISM, TargetSpec
from utils.config import RunConfig

pytestmark = pytest.mark.slow

HOST_LENGTH = 1_000_000
TARGET_LENGTH = 100_000
HOST_READS = 10_000
TARGET_READS = 1_000
TARGETS = ["target1", "target2", "target3"]
MUTANTS = ["mutant1", "mutant2", "mutant3"]

CONFIG_A = RunConfig(bottom_fraction=0.10, seed=2024)
CONFIG_B = RunConfig(bottom_fraction=0.15, seed=2025)


@pytest.fixture(scope="session")
def genomes(tmp_path_factory):
    root = tmp_path_factory.mktemp("genomes")
    paths = {HOST_ORGANISM: root / "host.fa"}
    genome_flow(paths[HOST_ORGANISM], HOST_LENGTH, 100, record_id="chr1")
    for seed, name in enumerate(TARGETS + MUTANTS, start=101):
        paths[name] = root / f"{name}.fa"
        genome_flow(paths[name], TARGET_LENGTH, seed, record_id="contig1")
    return paths


def dataset_a(genomes):
    return [TargetSpec(genomes[name], name, TARGET_READS) for name in TARGETS]


def dataset_b(genomes):
    return dataset_a(genomes) + [
        TargetSpec(genomes[name], name, TARGET_READS, substitution_rate=0.05) for name in MUTANTS
    ]


def load_run(workdir: Path, name: str):
    truth = read_truth(workdir / "truth.tsv")
    paths = run_outputs(workdir / name)
    calls = read_calls(paths["calls"])
    return SimpleNamespace(calls=calls, truth=truth, eval=evaluate(calls, truth, read_report(paths["report"])))


@pytest.fixture(scope="session")
def run_a(tmp_path_factory, genomes):
    workdir = tmp_path_factory.mktemp("dataset_a")
    _, comparison = with_threads(pipeline_flow, 1)(workdir, genomes[HOST_ORGANISM], dataset_a(genomes), HOST_READS, CONFIG_A)
    return SimpleNamespace(
        workdir=workdir,
        full=load_run(workdir, "full"),
        filtered=load_run(workdir, "filtered"),
        comparison=comparison,
    )


@pytest.fixture(scope="session")
def run_a_eight_threads(tmp_path_factory, genomes):
    workdir = tmp_path_factory.mktemp("dataset_a_threads8")
    with_threads(pipeline_flow, 8)(workdir, genomes[HOST_ORGANISM], dataset_a(genomes), HOST_READS, CONFIG_A)
    return workdir


@pytest.fixture(scope="session")
def run_b(tmp_path_factory, genomes):
    workdir = tmp_path_factory.mktemp("dataset_b")
    with_threads(pipeline_flow, 4)(workdir, genomes[HOST_ORGANISM], dataset_b(genomes), HOST_READS, CONFIG_B)

    two_sided = CONFIG_B.merged({"top_fraction": 0.15})
    filter_flow(workdir / "reference.db", workdir / "two_sided.db", two_sided)
    with_threads(identify_flow, 4)(workdir / "two_sided.db", workdir / "sample.fastq", workdir / "two_sided", two_sided)
    return SimpleNamespace(
        workdir=workdir,
        bottom=load_run(workdir, "filtered"),
        two_sided=load_run(workdir, "two_sided"),
    )


def test_full_run_identifies_every_target(run_a):
    result = run_a.full.eval
    for name in TARGETS:
        assert result.per_organism[name].recall >= 0.95, name
    assert set(TARGETS) <= result.detected_set
    assert result.fp_organisms == frozenset()

    host_to_target = sum(
        1
        for call in run_a.full.calls
        if run_a.full.truth[call.read_id] == HOST_ORGANISM and call.organism not in (HOST_ORGANISM, UNCLASSIFIED)
    )
    assert host_to_target <= 0.01 * HOST_READS


def test_bottom_ten_percent_keeps_detections(run_a):
    full, filtered = run_a.full.eval, run_a.filtered.eval
    assert set(TARGETS) <= filtered.detected_set
    for name in TARGETS:
        assert filtered.per_organism[name].recall >= full.per_organism[name].recall - 0.15, name
    assert filtered.fp_organisms == frozenset()


def test_bottom_ten_percent_cuts_comparisons(run_a):
    assert run_a.comparison.full_comparisons > 0
    assert run_a.comparison.counter_ratio <= 0.25


def test_two_sided_filter_on_high_mutation_targets(run_b):
    for run in (run_b.bottom, run_b.two_sided):
        assert set(TARGETS + MUTANTS) <= run.eval.detected_set
    for name in MUTANTS:
        assert run_b.two_sided.eval.per_organism[name].recall >= run_b.bottom.eval.per_organism[name].recall, name


def test_reference_db_roundtrip_is_bit_exact(run_a):
    path = run_a.workdir / "reference.db"
    assert serialize(load(path)) == path.read_bytes()
    filtered = run_a.workdir / "filtered.db"
    assert serialize(load(filtered)) == filtered.read_bytes()


def test_pipeline_is_byte_identical_across_thread_counts(run_a, run_a_eight_threads):
    names = sorted(p.name for p in run_a.workdir.iterdir() if p.suffix in (".tsv", ".db", ".fastq", ".txt"))
    assert "filtered.compare.tsv" in names
    for name in names:
        assert (run_a.workdir / name).read_bytes() == (run_a_eight_threads / name).read_bytes(), name
