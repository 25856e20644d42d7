"""
Tests for simgen.py module.
"""

from collections import Counter

import numpy as np
import pytest

from tasks.simgen import (
    SimSpec,
    TargetSpec,
    generate,
    synthesize_genome,
    write_simulation,
)
from utils.errors import SimulationError
from utils.seqio import Read, read_sequences, write_fasta
from utils.translate import reverse_complement


@pytest.fixture
def host_fasta(tmp_path):
    path = tmp_path / "host.fa"
    with open(path, "w") as handle:
        write_fasta([synthesize_genome(5000, seed=1, record_id="host1")], handle)
    return path


@pytest.fixture
def target_fasta(tmp_path):
    """Two records so reads have to be located across record boundaries."""
    path = tmp_path / "target.fa"
    with open(path, "w") as handle:
        write_fasta(
            [synthesize_genome(800, seed=2, record_id="chr1"), synthesize_genome(500, seed=3, record_id="chr2")],
            handle,
        )
    return path


def source_of(origin, records, read_length):
    seq = records[origin.record].seq[origin.start:origin.start + read_length]
    return reverse_complement(seq) if origin.reverse else seq


def test_noiseless_reads_are_genome_substrings(host_fasta, target_fasta):
    spec = SimSpec(
        host_fasta,
        (TargetSpec(target_fasta, "orgA", 50),),
        read_length=100,
        substitution_rate=0.0,
        host_read_count=50,
        seed=11,
    )
    sample = generate(spec)
    genomes = {
        "host": [r.seq for r in read_sequences(host_fasta)],
        "orgA": [r.seq for r in read_sequences(target_fasta)],
    }
    for read, (_, organism) in zip(sample.reads, sample.truth):
        assert len(read) == 100
        assert any(read.seq in g or read.seq in reverse_complement(g) for g in genomes[organism])


def test_origins_locate_every_read(target_fasta):
    spec = SimSpec(None, (TargetSpec(target_fasta, "orgA", 200),), read_length=60, substitution_rate=0.0, seed=5)
    sample = generate(spec)
    records = list(read_sequences(target_fasta))
    for read, origin in zip(sample.reads, sample.origins):
        assert read.seq == source_of(origin, records, 60)
    assert {o.record for o in sample.origins} == {0, 1}
    assert {o.reverse for o in sample.origins} == {True, False}


def test_counts_are_conserved(host_fasta, target_fasta):
    spec = SimSpec(host_fasta, (TargetSpec(target_fasta, "orgA", 10),), read_length=50, host_read_count=100)
    sample = generate(spec)
    assert len(sample.reads) == 110
    assert len(sample.truth) == 110
    assert Counter(organism for _, organism in sample.truth) == {"host": 100, "orgA": 10}
    # host first, ids are a running index
    assert sample.truth[0] == ("sim00000000", "host")
    assert sample.truth[-1] == ("sim00000109", "orgA")
    assert all(read.qual == "I" * 50 for read in sample.reads)


def test_same_seed_is_byte_identical(host_fasta, target_fasta, tmp_path):
    spec = SimSpec(host_fasta, (TargetSpec(target_fasta, "orgA", 30),), read_length=80, host_read_count=30, seed=42)
    write_simulation(generate(spec), tmp_path / "a.fastq", tmp_path / "a.tsv")
    write_simulation(generate(spec), tmp_path / "b.fastq", tmp_path / "b.tsv")
    assert (tmp_path / "a.fastq").read_bytes() == (tmp_path / "b.fastq").read_bytes()
    assert (tmp_path / "a.tsv").read_bytes() == (tmp_path / "b.tsv").read_bytes()
    assert (tmp_path / "a.tsv").read_text().splitlines()[:2] == ["read_id\torganism", "sim00000000\thost"]

    other = SimSpec(host_fasta, (TargetSpec(target_fasta, "orgA", 30),), read_length=80, host_read_count=30, seed=43)
    assert [r.seq for r in generate(other).reads] != [r.seq for r in generate(spec).reads]


def test_half_substitution_rate_mismatch_fraction(host_fasta):
    spec = SimSpec(host_fasta, read_length=50, substitution_rate=0.5, host_read_count=10_000, seed=3)
    sample = generate(spec)
    records = list(read_sequences(host_fasta))
    mismatches = 0
    for read, origin in zip(sample.reads, sample.origins):
        source = np.frombuffer(source_of(origin, records, 50).encode("ascii"), dtype=np.uint8)
        observed = np.frombuffer(read.seq.encode("ascii"), dtype=np.uint8)
        mismatches += int((source != observed).sum())
    assert mismatches / (10_000 * 50) == pytest.approx(0.5, abs=0.02)


def test_per_target_rate_override(host_fasta, target_fasta):
    spec = SimSpec(
        host_fasta,
        (TargetSpec(target_fasta, "orgA", 40, substitution_rate=0.0),),
        read_length=60,
        substitution_rate=0.3,
        host_read_count=10,
        seed=9,
    )
    sample = generate(spec)
    records = list(read_sequences(target_fasta))
    for read, origin in zip(sample.reads[10:], sample.origins[10:]):
        assert read.seq == source_of(origin, records, 60)


def test_n_bases_are_never_substituted(tmp_path):
    path = tmp_path / "n.fa"
    path.write_text(">n\n" + "N" * 100 + "\n")
    sample = generate(SimSpec(path, read_length=30, substitution_rate=1.0, host_read_count=20))
    assert all(read.seq == "N" * 30 for read in sample.reads)


@pytest.mark.parametrize(
    "overrides, message",
    [
        ({"read_length": 0}, "read_length"),
        ({"substitution_rate": 1.5}, "substitution rate"),
        ({"host_read_count": -1}, "host_read_count"),
        ({"seed": -1}, "seed"),
    ],
)
def test_invalid_specs(host_fasta, overrides, message):
    values = {"host_genome": host_fasta, "host_read_count": 5, **overrides}
    with pytest.raises(SimulationError, match=message):
        generate(SimSpec(**values))


def test_invalid_targets(host_fasta, target_fasta):
    with pytest.raises(SimulationError, match="invalid target organism"):
        generate(SimSpec(host_fasta, (TargetSpec(target_fasta, "host", 5),)))
    with pytest.raises(SimulationError, match="must be >= 0"):
        generate(SimSpec(host_fasta, (TargetSpec(target_fasta, "orgA", -5),)))
    with pytest.raises(SimulationError, match="no host genome"):
        generate(SimSpec(None, host_read_count=5))


def test_genome_shorter_than_read_length(target_fasta):
    with pytest.raises(SimulationError, match="shorter than the read length"):
        generate(SimSpec(None, (TargetSpec(target_fasta, "orgA", 5),), read_length=900))


def test_unreadable_genome(tmp_path):
    with pytest.raises(OSError):
        generate(SimSpec(tmp_path / "missing.fa", host_read_count=1))


def test_synthesize_genome_bit_layout():
    genome = synthesize_genome(100, seed=17)
    assert isinstance(genome, Read)
    assert len(genome) == 100
    assert set(genome.seq) <= set("ACGT")

    raw = [int(x) for x in np.random.PCG64(17).random_raw(4)]
    expected = "".join("ACGT"[(raw[i // 32] >> (2 * (i % 32))) & 3] for i in range(100))
    assert genome.seq == expected
    assert synthesize_genome(100, seed=17) == genome
    assert synthesize_genome(100, seed=18).seq != genome.seq


def test_synthesize_genome_rejects_empty():
    with pytest.raises(SimulationError):
        synthesize_genome(0, seed=1)
