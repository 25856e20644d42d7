"""
K-mer degree distributions and percentile keep-sets.

A degree table maps each k-mer present in a reference array to its degree:
the number of rows containing it (presence) or its total count (occurrence).
Keep-sets retain the low-degree tail, the high-degree tail, or both, so the
supernodes in between can be dropped from the search space.

Cutoffs are expressed on the degree axis. Whole tie groups at a cutoff are kept,
which makes the filter a pure function of degree values.
"""

import math
from dataclasses import dataclass
from typing import FrozenSet, IO, List, Mapping, Tuple, Union

import numpy as np
import pandas as pd

from utils.errors import FilterError, InputError

DEGREE_MODES = ("presence", "occurrence")
FILTER_BASES = ("types", "mass")
SIDES = ("bottom", "top")
BIN_POLICIES = ("log2", "unit")

# Absorbs float error in fraction * M, e.g. 0.15 * 20
_FRACTION_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class DegreeTable:
    """Degrees of the k-mers present in an array; ids are sorted ascending."""

    kmer_ids: np.ndarray
    degrees: np.ndarray
    mode: str = "presence"

    def __post_init__(self):
        if self.mode not in DEGREE_MODES:
            raise InputError(f"unknown degree mode {self.mode!r}")
        if len(self.kmer_ids) != len(self.degrees):
            raise InputError("kmer_ids and degrees differ in length")

    @classmethod
    def from_mapping(cls, degrees: Mapping[int, int], mode: str = "presence") -> "DegreeTable":
        ids = np.array(sorted(degrees), dtype=np.int64)
        values = np.array([degrees[k] for k in ids.tolist()], dtype=np.int64)
        return cls(ids, values, mode)

    def __len__(self) -> int:
        return len(self.kmer_ids)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DegreeTable):
            return NotImplemented
        return (
            self.mode == other.mode
            and np.array_equal(self.kmer_ids, other.kmer_ids)
            and np.array_equal(self.degrees, other.degrees)
        )

    def as_dict(self) -> dict:
        return dict(zip(self.kmer_ids.tolist(), self.degrees.tolist()))

    def restrict(self, keep: np.ndarray) -> "DegreeTable":
        """Table limited to the ids in `keep` (any order)."""
        mask = np.isin(self.kmer_ids, keep)
        return DegreeTable(self.kmer_ids[mask], self.degrees[mask], self.mode)


@dataclass(frozen=True)
class FilterSpec:
    """Fractions of the degree distribution to keep from each tail.

    basis "types" counts distinct k-mers; "mass" counts degree mass.
    Both fractions zero means keep everything.
    """

    bottom_fraction: float = 0.0
    top_fraction: float = 0.0
    basis: str = "types"
    degree_mode: str = "presence"

    def __post_init__(self):
        for name in ("bottom_fraction", "top_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise FilterError(f"{name} must be in [0, 1], got {value}")
        if self.bottom_fraction + self.top_fraction > 1.0 + _FRACTION_EPS:
            raise FilterError(
                f"bottom_fraction + top_fraction must be <= 1, got {self.bottom_fraction} + {self.top_fraction}"
            )
        if self.basis not in FILTER_BASES:
            raise FilterError(f"unknown filter basis {self.basis!r}; expected one of {FILTER_BASES}")
        if self.degree_mode not in DEGREE_MODES:
            raise FilterError(f"unknown degree mode {self.degree_mode!r}; expected one of {DEGREE_MODES}")

    @property
    def keeps_all(self) -> bool:
        return self.bottom_fraction == 0.0 and self.top_fraction == 0.0

    def describe(self) -> str:
        if self.keeps_all:
            return "keep-all"
        parts = []
        if self.bottom_fraction > 0:
            parts.append(f"bottom {self.bottom_fraction:g}")
        if self.top_fraction > 0:
            parts.append(f"top {self.top_fraction:g}")
        return " + ".join(parts) + f" ({self.basis}, {self.degree_mode})"


KEEP_ALL = FilterSpec()


def cutoff_degree(table: DegreeTable, fraction: float, side: str, basis: str = "types") -> int:
    """Degree value at the `fraction` threshold of the sorted distribution.

    With basis "types", M distinct k-mers are sorted by degree ascending; the
    bottom cutoff is the degree at 1-based position ceil(fraction * M) and the top
    cutoff the degree at position M - ceil(fraction * M) + 1. With basis "mass",
    the cutoff is the first degree at which the cumulative degree mass, taken
    from that side, reaches fraction of the total.
    """
    if len(table) == 0:
        raise FilterError("cannot take a cutoff of an empty degree table")
    if not 0.0 < fraction <= 1.0:
        raise FilterError(f"fraction must be in (0, 1], got {fraction}")
    if side not in SIDES:
        raise FilterError(f"side must be one of {SIDES}, got {side!r}")
    if basis not in FILTER_BASES:
        raise FilterError(f"unknown filter basis {basis!r}")

    ordered = np.sort(table.degrees)
    m = len(ordered)
    if basis == "types":
        position = min(m, max(1, math.ceil(fraction * m - _FRACTION_EPS)))
        index = position - 1 if side == "bottom" else m - position
        return int(ordered[index])

    if side == "top":
        ordered = ordered[::-1]
    cumulative = np.cumsum(ordered)
    target = fraction * cumulative[-1] * (1.0 - _FRACTION_EPS)
    index = min(m - 1, int(np.searchsorted(cumulative, target, side="left")))
    return int(ordered[index])


def keep_array(table: DegreeTable, spec: FilterSpec) -> np.ndarray:
    """Sorted ids retained by `spec` (numpy form of keep_set)."""
    if spec.keeps_all or len(table) == 0:
        return table.kmer_ids.copy()
    mask = np.zeros(len(table), dtype=bool)
    if spec.bottom_fraction > 0:
        mask |= table.degrees <= cutoff_degree(table, spec.bottom_fraction, "bottom", spec.basis)
    if spec.top_fraction > 0:
        mask |= table.degrees >= cutoff_degree(table, spec.top_fraction, "top", spec.basis)
    return table.kmer_ids[mask]


def keep_set(table: DegreeTable, spec: FilterSpec) -> FrozenSet[int]:
    """K-mers kept by `spec`: degree <= bottom cutoff, union degree >= top cutoff."""
    return frozenset(keep_array(table, spec).tolist())


def histogram(table: DegreeTable, bins: str = "log2") -> List[Tuple[int, int]]:
    """Number of distinct k-mers per degree bin, ascending.

    "log2" bins are labelled by their lower edge 2**j and cover [2**j, 2**(j+1));
    "unit" bins are single degree values.
    """
    return histogram_values(table.degrees, bins)


def histogram_values(values: np.ndarray, bins: str = "log2") -> List[Tuple[int, int]]:
    """Histogram of any non-negative integer values under the same bin policies; zeros get bin 0."""
    if bins not in BIN_POLICIES:
        raise InputError(f"unknown bin policy {bins!r}; expected one of {BIN_POLICIES}")
    values = np.asarray(values, dtype=np.int64)
    if len(values) == 0:
        return []
    if values.min() < 0:
        raise InputError(f"cannot bin negative value {int(values.min())}")
    if bins == "unit":
        labels = values
    else:
        _, exponents = np.frexp(values.astype(np.float64))
        labels = np.where(values > 0, np.left_shift(np.int64(1), np.maximum(exponents - 1, 0).astype(np.int64)), 0)
    bin_labels, counts = np.unique(labels, return_counts=True)
    return list(zip(bin_labels.tolist(), counts.tolist()))


def histogram_frame(hist: List[Tuple[int, int]]) -> pd.DataFrame:
    return pd.DataFrame(hist, columns=["degree_bin", "count"], dtype=np.int64)


def write_histogram(hist: List[Tuple[int, int]], out: Union[str, IO[str]]) -> None:
    """Write a histogram as a 2-column TSV (degree_bin, count)."""
    histogram_frame(hist).to_csv(out, sep="\t", index=False, lineterminator="\n")
