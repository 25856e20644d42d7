"""
Deterministic spiked-sample simulator.

Host-background reads and target-organism reads are cut from genome FASTA files
and hit with independent per-base substitutions. There are no indels and no
quality model; every read gets the constant quality 'I'.

Random source: numpy's PCG64 bit generator seeded from the 64-bit seed through
SeedSequence. Only its raw 64-bit outputs (`random_raw`) are used and converted
with fixed rules, so a reimplementation of PCG64 reproduces the outputs exactly:

    uniform(x)   = (x >> 11) * 2**-53          a double in [0, 1)
    below(x, n)  = floor(uniform(x) * n)       an integer in [0, n)

Per read, in order, 2 + 2 * read_length raw values are consumed:
    1. below(x, S): start position among the S valid starts of the genome
       (records concatenated in file order, each contributing len - L + 1 starts)
    2. strand: reverse complement when uniform(x) < 0.5
    3. L values: base i is substituted when uniform(x) < substitution_rate
    4. L values: replacement for base i is the (1 + below(x, 3))-th next base in
       the cycle A, C, G, T (N is never substituted)
Host reads come first, then each target in spec order. Read ids are "sim" plus
an 8-digit running index.

synthesize_genome draws 32 bases per raw value, two bits each from the least
significant end, mapping 0..3 to A, C, G, T.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from prefect import task
from prefect.cache_policies import NO_CACHE

from utils.errors import SimulationError
from utils.log import get_logger
from utils.seqio import DEFAULT_QUALITY_CHAR, Read, read_sequences, write_fastq

HOST_ORGANISM = "host"
READ_ID_PREFIX = "sim"
TRUTH_COLUMNS = ["read_id", "organism"]

_BASES = np.frombuffer(b"ACGTN", dtype=np.uint8)
_CODES = np.full(256, 4, dtype=np.uint8)
for _code, _base in enumerate("ACGT"):
    _CODES[ord(_base)] = _code
_COMPLEMENT_CODES = np.array([3, 2, 1, 0, 4], dtype=np.uint8)
_UNIT = 2.0 ** -53


@dataclass(frozen=True)
class TargetSpec:
    genome: Path
    organism: str
    read_count: int
    # None uses the sample-wide rate
    substitution_rate: Optional[float] = None


@dataclass(frozen=True)
class SimSpec:
    host_genome: Optional[Path]
    targets: Tuple[TargetSpec, ...] = ()
    read_length: int = 200
    substitution_rate: float = 0.01
    host_read_count: int = 0
    seed: int = 0
    host_name: str = HOST_ORGANISM

    def validate(self) -> None:
        if self.read_length < 1:
            raise SimulationError(f"read_length must be >= 1, got {self.read_length}")
        if not 0 <= self.seed < 2 ** 64:
            raise SimulationError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.host_read_count < 0:
            raise SimulationError(f"host_read_count must be >= 0, got {self.host_read_count}")
        if self.host_read_count > 0 and self.host_genome is None:
            raise SimulationError("host reads requested but no host genome given")
        rates = [self.substitution_rate] + [t.substitution_rate for t in self.targets if t.substitution_rate is not None]
        for rate in rates:
            if not 0.0 <= rate <= 1.0:
                raise SimulationError(f"substitution rate must be in [0, 1], got {rate}")
        for target in self.targets:
            if target.read_count < 0:
                raise SimulationError(f"read count for {target.organism!r} must be >= 0")
            if not target.organism or target.organism == self.host_name:
                raise SimulationError(f"invalid target organism name {target.organism!r}")


@dataclass(frozen=True)
class ReadOrigin:
    organism: str
    record: int
    start: int
    reverse: bool


@dataclass
class SimulatedSample:
    reads: List[Read] = field(default_factory=list)
    truth: List[Tuple[str, str]] = field(default_factory=list)
    origins: List[ReadOrigin] = field(default_factory=list)


class _Genome:
    """Genome records as base codes with a flat index over valid read starts."""

    def __init__(self, path: Path, read_length: int):
        records = [np.asarray(_CODES[np.frombuffer(r.seq.encode("ascii"), dtype=np.uint8)]) for r in read_sequences(path)]
        self.records = records
        starts = np.array([max(0, len(r) - read_length + 1) for r in records], dtype=np.int64)
        if starts.sum() == 0:
            raise SimulationError(f"{path}: every record is shorter than the read length {read_length}")
        self.offsets = np.cumsum(starts)
        self.total_starts = int(self.offsets[-1])

    def locate(self, position: int) -> Tuple[int, int]:
        record = int(np.searchsorted(self.offsets, position, side="right"))
        before = int(self.offsets[record - 1]) if record else 0
        return record, position - before


def _uniform(raw: np.ndarray) -> np.ndarray:
    return (raw >> np.uint64(11)).astype(np.float64) * _UNIT


def _simulate_reads(
    genome: _Genome,
    organism: str,
    count: int,
    read_length: int,
    rate: float,
    bitgen: np.random.PCG64,
    sample: SimulatedSample,
) -> None:
    quality = DEFAULT_QUALITY_CHAR * read_length
    for _ in range(count):
        u = _uniform(bitgen.random_raw(2 + 2 * read_length))
        record, start = genome.locate(int(u[0] * genome.total_starts))
        reverse = bool(u[1] < 0.5)
        codes = genome.records[record][start:start + read_length]
        if reverse:
            codes = _COMPLEMENT_CODES[codes][::-1]
        substitute = (u[2:2 + read_length] < rate) & (codes < 4)
        shift = 1 + np.floor(u[2 + read_length:] * 3).astype(np.uint8)
        codes = np.where(substitute, (codes + shift) % 4, codes).astype(np.uint8)

        read_id = f"{READ_ID_PREFIX}{len(sample.reads):08d}"
        sample.reads.append(Read(read_id, _BASES[codes].tobytes().decode("ascii"), quality))
        sample.truth.append((read_id, organism))
        sample.origins.append(ReadOrigin(organism, record, start, reverse))


def generate(spec: SimSpec) -> SimulatedSample:
    """Simulate host and target reads; fully determined by spec (including seed)."""
    spec.validate()
    logger = get_logger()
    bitgen = np.random.PCG64(spec.seed)
    sample = SimulatedSample()

    sources = []
    if spec.host_read_count > 0:
        sources.append((spec.host_genome, spec.host_name, spec.host_read_count, spec.substitution_rate))
    for target in spec.targets:
        rate = spec.substitution_rate if target.substitution_rate is None else target.substitution_rate
        sources.append((target.genome, target.organism, target.read_count, rate))

    for path, organism, count, rate in sources:
        genome = _Genome(Path(path), spec.read_length)
        _simulate_reads(genome, organism, count, spec.read_length, rate, bitgen, sample)
        logger.info(f"🧬 Simulated {count} reads for {organism} (substitution rate {rate:g})")
    return sample


@task(name="Simulate Spiked Sample", cache_policy=NO_CACHE)
def simulate_sample(spec: SimSpec) -> SimulatedSample:
    return generate(spec)


def synthesize_genome(length: int, seed: int, record_id: str = "synthetic") -> Read:
    """Uniform random DNA of the given length (see module docstring for the bit layout)."""
    if length < 1:
        raise SimulationError(f"genome length must be >= 1, got {length}")
    raw = np.random.PCG64(seed).random_raw((length + 31) // 32).astype(np.uint64)
    shifts = np.arange(0, 64, 2, dtype=np.uint64)
    codes = ((raw[:, None] >> shifts) & np.uint64(3)).astype(np.uint8).ravel()[:length]
    return Read(record_id, _BASES[codes].tobytes().decode("ascii"))


def write_truth(truth: Sequence[Tuple[str, str]], out: Union[str, Path, IO[str]]) -> None:
    frame = pd.DataFrame(list(truth), columns=TRUTH_COLUMNS, dtype=str)
    frame.to_csv(out, sep="\t", index=False, lineterminator="\n")


def write_simulation(sample: SimulatedSample, fastq_out: Union[str, Path], truth_out: Union[str, Path]) -> None:
    with open(fastq_out, "w", newline="\n") as handle:
        write_fastq(sample.reads, handle)
    write_truth(sample.truth, truth_out)
