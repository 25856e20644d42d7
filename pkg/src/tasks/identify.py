"""
Organism identification: score sample reads against a reference db, call an
organism per read, and aggregate detections per organism.

The unfiltered ("extensive") run and subsampled runs are the same code path; a
filtered db simply carries the keep-set that is applied to the sample first.
"""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from prefect import task
from prefect.cache_policies import NO_CACHE

from tasks.refdb import ReferenceDB
from utils.aarray import AssocArray, MatchMatrix, MatchRow, from_reads, multiply_transpose, select_columns
from utils.errors import DimensionMismatchError, InputError
from utils.log import get_logger
from utils.seqio import Read

UNCLASSIFIED = "unclassified"

DEFAULT_MIN_SHARED = 2
DEFAULT_MIN_MARGIN = 0.0
DEFAULT_MIN_READS = 10

# Rows per scoring task; fixed so output never depends on the worker count
SCORE_BLOCK_ROWS = 2000

CALL_COLUMNS = ["read_id", "organism", "score", "shared_kmers", "margin"]
REPORT_COLUMNS = ["organism", "reads_assigned", "fraction", "detected"]
FLOAT_FORMAT = "%.6f"


@dataclass(frozen=True)
class ReadCall:
    read_id: str
    organism: str
    score: int
    shared_kmers: int
    margin: float

    @property
    def classified(self) -> bool:
        return self.organism != UNCLASSIFIED


@dataclass(frozen=True)
class OrganismReport:
    organism: str
    reads_assigned: int
    fraction_of_classified: float
    detected: bool


@dataclass(frozen=True)
class OrganismIndex:
    """Organism name per reference row, as integer codes into sorted names."""

    names: Sequence[str]
    codes: np.ndarray

    @classmethod
    def from_db(cls, db: ReferenceDB) -> "OrganismIndex":
        names, codes = db.organism_codes()
        return cls(tuple(names), codes)


@dataclass(frozen=True)
class RunWork:
    """Bookkeeping persisted next to each identification run."""

    comparisons: int
    sample_rows: int
    reference_rows: int
    weighting: str
    filter: str


# -- scoring -----------------------------------------------------------------


def restrict_sample(sample: AssocArray, db: ReferenceDB) -> AssocArray:
    """Apply the db's keep-set to a sample array (no-op for unfiltered or keep-all dbs)."""
    if sample.k != db.k:
        raise DimensionMismatchError(f"sample built with k={sample.k} but reference db has k={db.k}")
    spec = db.filter_applied
    if spec is None or spec.keeps_all:
        return sample
    return select_columns(sample, db.keep_columns())


def score_sample(sample: AssocArray, db: ReferenceDB, weighting: str = "binary") -> MatchMatrix:
    """Sparse product of the (keep-set restricted) sample with the reference array."""
    match = multiply_transpose(restrict_sample(sample, db), db.array, weighting)
    get_logger().debug(
        f"   Scored {sample.num_rows} reads: {match.scores.nnz} non-zero scores, {match.comparisons} comparisons"
    )
    return match


@task(name="Index Read Block", cache_policy=NO_CACHE)
def index_read_block(reads: Sequence[Read], k: int) -> AssocArray:
    """Six-frame translate one block of sample reads into a partial sample array."""
    return from_reads(reads, k=k)


@task(name="Score Read Block", cache_policy=NO_CACHE)
def score_read_block(block: AssocArray, db: ReferenceDB, weighting: str = "binary") -> MatchMatrix:
    return score_sample(block, db, weighting)


# -- calls -------------------------------------------------------------------


def call_read(
    row: MatchRow,
    db: Union[ReferenceDB, OrganismIndex],
    min_shared: int = DEFAULT_MIN_SHARED,
    min_margin: float = DEFAULT_MIN_MARGIN,
) -> ReadCall:
    """Best organism for one read.

    Reference rows are reduced to organism level (max score) first, so ties
    between strains of one organism are harmless. A tie between different
    organisms, too few shared k-mers, or too small a margin gives "unclassified".
    """
    index = db if isinstance(db, OrganismIndex) else OrganismIndex.from_db(db)
    if len(row.scores) == 0:
        return ReadCall(row.sample_label, UNCLASSIFIED, 0, 0, 0.0)

    organisms = index.codes[row.ref_indices]
    present, inverse = np.unique(organisms, return_inverse=True)
    best_per_organism = np.zeros(len(present), dtype=np.int64)
    np.maximum.at(best_per_organism, inverse, row.scores)

    top = int(best_per_organism.max())
    winners = present[best_per_organism == top]
    at_top = row.scores == top
    shared = int(row.shared[at_top & np.isin(organisms, winners)].max())

    if len(winners) > 1:
        return ReadCall(row.sample_label, UNCLASSIFIED, top, shared, 0.0)

    others = best_per_organism[present != winners[0]]
    margin = float(top - others.max()) if len(others) else math.inf
    if shared < min_shared or margin < min_margin:
        return ReadCall(row.sample_label, UNCLASSIFIED, top, shared, margin)
    return ReadCall(row.sample_label, index.names[int(winners[0])], top, shared, margin)


def call_reads(
    match: MatchMatrix,
    db: ReferenceDB,
    min_shared: int = DEFAULT_MIN_SHARED,
    min_margin: float = DEFAULT_MIN_MARGIN,
) -> List[ReadCall]:
    index = OrganismIndex.from_db(db)
    return [call_read(match.row(i), index, min_shared, min_margin) for i in range(match.shape[0])]


def aggregate(calls: Sequence[ReadCall], min_reads: int = DEFAULT_MIN_READS) -> List[OrganismReport]:
    """Per-organism read counts of the classified calls, most reads first, then by name."""
    counts: Dict[str, int] = {}
    for call in calls:
        if call.classified:
            counts[call.organism] = counts.get(call.organism, 0) + 1
    classified = sum(counts.values())
    ordered = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return [
        OrganismReport(organism, n, n / classified, n >= min_reads)
        for organism, n in ordered
    ]


# -- tables ------------------------------------------------------------------


def calls_frame(calls: Sequence[ReadCall]) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "read_id": [c.read_id for c in calls],
            "organism": [c.organism for c in calls],
            "score": pd.Series([c.score for c in calls], dtype=np.int64),
            "shared_kmers": pd.Series([c.shared_kmers for c in calls], dtype=np.int64),
            "margin": pd.Series([c.margin for c in calls], dtype=np.float64),
        },
        columns=CALL_COLUMNS,
    )


def report_frame(reports: Sequence[OrganismReport]) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "organism": [r.organism for r in reports],
            "reads_assigned": pd.Series([r.reads_assigned for r in reports], dtype=np.int64),
            "fraction": pd.Series([r.fraction_of_classified for r in reports], dtype=np.float64),
            "detected": pd.Series([r.detected for r in reports], dtype=bool),
        },
        columns=REPORT_COLUMNS,
    )


def write_calls(calls: Sequence[ReadCall], out: Union[str, Path, IO[str]]) -> None:
    calls_frame(calls).to_csv(out, sep="\t", index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def write_report(reports: Sequence[OrganismReport], out: Union[str, Path, IO[str]]) -> None:
    report_frame(reports).to_csv(out, sep="\t", index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def _read_table(path: Union[str, Path, IO[str]], columns: List[str], dtypes: Dict[str, type]) -> pd.DataFrame:
    frame = pd.read_csv(path, sep="\t", dtype=dtypes, keep_default_na=False)
    if list(frame.columns) != columns:
        raise InputError(f"{path}: expected columns {columns}, found {list(frame.columns)}")
    return frame


def read_calls(path: Union[str, Path, IO[str]]) -> List[ReadCall]:
    frame = _read_table(
        path, CALL_COLUMNS, {"read_id": str, "organism": str, "score": np.int64, "shared_kmers": np.int64, "margin": np.float64}
    )
    return [
        ReadCall(read_id, organism, int(score), int(shared), float(margin))
        for read_id, organism, score, shared, margin in frame.itertuples(index=False)
    ]


def read_report(path: Union[str, Path, IO[str]]) -> List[OrganismReport]:
    frame = _read_table(
        path, REPORT_COLUMNS, {"organism": str, "reads_assigned": np.int64, "fraction": np.float64, "detected": bool}
    )
    return [
        OrganismReport(organism, int(n), float(fraction), bool(detected))
        for organism, n, fraction, detected in frame.itertuples(index=False)
    ]


def write_work(work: RunWork, out: Union[str, Path, IO[str]]) -> None:
    frame = pd.DataFrame(
        {"key": list(work.__dataclass_fields__), "value": [str(getattr(work, f)) for f in work.__dataclass_fields__]}
    )
    frame.to_csv(out, sep="\t", index=False, lineterminator="\n")


def read_work(path: Union[str, Path, IO[str]]) -> RunWork:
    frame = pd.read_csv(path, sep="\t", dtype=str, keep_default_na=False)
    values = dict(zip(frame["key"], frame["value"]))
    try:
        return RunWork(
            comparisons=int(values["comparisons"]),
            sample_rows=int(values["sample_rows"]),
            reference_rows=int(values["reference_rows"]),
            weighting=values["weighting"],
            filter=values["filter"],
        )
    except (KeyError, ValueError) as e:
        raise InputError(f"{path}: malformed work table ({e})")
