"""
Sparse associative arrays of k-mer counts.

Rows are sequence labels, columns are k-mer ids, values are counts. Storage is
a CSR matrix (row-major, columns sorted within each row). Cells are accumulated
while data is ingested: writes go to a pending buffer and are summed into the
matrix on the next read access.

An array under construction has a single writer. Parallel builds make partial
arrays and combine them with merge_arrays.
"""

from dataclasses import dataclass
from functools import partial
from typing import Callable, Dict, Iterable, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sps

from utils.degree import DEGREE_MODES, DegreeTable
from utils.errors import DimensionMismatchError, DuplicateIdError, InputError
from utils.kmer import DEFAULT_K, extract_array, vocabulary_size
from utils.seqio import Read
from utils.translate import six_frame

# Counts saturate here instead of wrapping (they are stored on disk as uint32)
COUNT_CEILING = 2 ** 32 - 1

WEIGHTINGS = ("binary", "counts")

KmerPipeline = Callable[[Read], np.ndarray]


class AssocArray:
    """Labelled sparse matrix: rows = sequence labels, columns = k-mer ids."""

    def __init__(self, k: int = DEFAULT_K):
        self.k = k
        self._labels: List[str] = []
        self._index: Dict[str, int] = {}
        self._matrix = sps.csr_matrix((0, self.vocab_size), dtype=np.int64)
        self._pending: List[Tuple[np.ndarray, np.ndarray, np.ndarray]] = []

    @classmethod
    def from_csr(cls, labels: Sequence[str], matrix: sps.csr_matrix, k: int = DEFAULT_K) -> "AssocArray":
        """Wrap an existing CSR matrix; labels must be unique and match its rows."""
        arr = cls(k)
        if matrix.shape != (len(labels), arr.vocab_size):
            raise DimensionMismatchError(
                f"matrix shape {matrix.shape} does not match {len(labels)} labels x {arr.vocab_size} columns"
            )
        for label in labels:
            arr._row_index(label)
        matrix = sps.csr_matrix(matrix, dtype=np.int64, copy=True)
        matrix.sum_duplicates()
        matrix.eliminate_zeros()
        matrix.sort_indices()
        np.minimum(matrix.data, COUNT_CEILING, out=matrix.data)
        arr._matrix = matrix
        return arr

    # -- shape ------------------------------------------------------------

    @property
    def vocab_size(self) -> int:
        return vocabulary_size(self.k)

    @property
    def row_labels(self) -> Tuple[str, ...]:
        return tuple(self._labels)

    @property
    def num_rows(self) -> int:
        return len(self._labels)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.num_rows, self.vocab_size)

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def __contains__(self, label: str) -> bool:
        return label in self._index

    def __len__(self) -> int:
        return self.num_rows

    # -- ingest -----------------------------------------------------------

    def _row_index(self, label: str) -> int:
        index = self._index.get(label)
        if index is None:
            if not label:
                raise InputError("row label must be non-empty")
            index = len(self._labels)
            self._labels.append(label)
            self._index[label] = index
        return index

    def accumulate(self, row: str, col: int, delta: int = 1) -> None:
        """Add `delta` to cell (row, col), creating the row if needed."""
        if delta < 1:
            raise InputError(f"delta must be a positive integer, got {delta}")
        if not 0 <= col < self.vocab_size:
            raise DimensionMismatchError(f"column {col} outside [0, {self.vocab_size})")
        index = self._row_index(row)
        self._pending.append((np.array([index]), np.array([col]), np.array([delta])))

    def add_counts(self, row: str, cols: np.ndarray, counts: np.ndarray) -> None:
        """Accumulate many cells of one row at once. The row exists afterwards even if `cols` is empty."""
        cols = np.asarray(cols, dtype=np.int64)
        counts = np.asarray(counts, dtype=np.int64)
        if len(cols) != len(counts):
            raise DimensionMismatchError(f"{len(cols)} columns but {len(counts)} counts")
        if len(counts) and counts.min() < 1:
            raise InputError(f"counts must be positive integers, got {int(counts.min())}")
        if len(cols) and not (0 <= cols.min() and cols.max() < self.vocab_size):
            raise DimensionMismatchError(f"column outside [0, {self.vocab_size})")
        index = self._row_index(row)
        if len(cols):
            self._pending.append((np.full(len(cols), index, dtype=np.int64), cols, counts))

    def add_kmers(self, row: str, kmer_ids: np.ndarray) -> None:
        """Accumulate one occurrence per id in `kmer_ids` (duplicates allowed)."""
        cols, counts = np.unique(kmer_ids, return_counts=True)
        self.add_counts(row, cols.astype(np.int64), counts.astype(np.int64))

    def _compact(self) -> None:
        shape = self.shape
        if self._matrix.shape != shape:
            self._matrix.resize(shape)
        if not self._pending:
            return
        rows = np.concatenate([p[0] for p in self._pending]).astype(np.int64)
        cols = np.concatenate([p[1] for p in self._pending]).astype(np.int64)
        vals = np.concatenate([p[2] for p in self._pending]).astype(np.int64)
        self._pending = []
        incoming = sps.csr_matrix((vals, (rows, cols)), shape=shape, dtype=np.int64)
        matrix = (self._matrix + incoming).tocsr()
        np.minimum(matrix.data, COUNT_CEILING, out=matrix.data)
        matrix.sort_indices()
        self._matrix = matrix

    @property
    def matrix(self) -> sps.csr_matrix:
        """The compacted CSR matrix (int64 counts, sorted column indices)."""
        self._compact()
        return self._matrix

    # -- access -----------------------------------------------------------

    def row(self, label: str) -> Dict[int, int]:
        """Cells of one row as {kmer_id: count}, ascending ids."""
        index = self._index[label]
        m = self.matrix
        start, stop = m.indptr[index], m.indptr[index + 1]
        return dict(zip(m.indices[start:stop].tolist(), m.data[start:stop].tolist()))

    def triples(self) -> Iterator[Tuple[str, int, int]]:
        """(row_label, kmer_id, count) in row order, ids ascending within a row."""
        m = self.matrix
        for index, label in enumerate(self._labels):
            start, stop = m.indptr[index], m.indptr[index + 1]
            for col, count in zip(m.indices[start:stop].tolist(), m.data[start:stop].tolist()):
                yield label, col, count

    def total_count(self) -> int:
        return int(self.matrix.data.sum())

    def take_rows(self, start: int, stop: int) -> "AssocArray":
        """Contiguous block of rows as a new array."""
        return AssocArray.from_csr(self._labels[start:stop], self.matrix[start:stop], self.k)

    def __eq__(self, other) -> bool:
        if not isinstance(other, AssocArray):
            return NotImplemented
        if self.k != other.k or self._labels != other._labels:
            return False
        a, b = self.matrix, other.matrix
        return (
            np.array_equal(a.indptr, b.indptr)
            and np.array_equal(a.indices, b.indices)
            and np.array_equal(a.data, b.data)
        )

    def __repr__(self) -> str:
        return f"AssocArray(k={self.k}, rows={self.num_rows}, nnz={self.nnz})"


class MatchRow(NamedTuple):
    """Non-zero scores of one sample row."""

    sample_label: str
    ref_indices: np.ndarray
    scores: np.ndarray
    shared: np.ndarray


@dataclass(eq=False)
class MatchMatrix:
    """Sample x reference scores from a sparse product.

    `shared` holds the number of distinct shared k-mers; in binary weighting it is
    the score matrix itself. `comparisons` counts the column-intersection work:
    for every sample non-zero, the length of that column's reference posting list.
    """

    sample_labels: Tuple[str, ...]
    ref_labels: Tuple[str, ...]
    scores: sps.csr_matrix
    shared: sps.csr_matrix
    weighting: str = "binary"
    comparisons: int = 0

    def __post_init__(self):
        if self.weighting not in WEIGHTINGS:
            raise InputError(f"unknown weighting {self.weighting!r}; expected one of {WEIGHTINGS}")
        if not np.array_equal(self.scores.indptr, self.shared.indptr):
            raise InputError("score and shared matrices differ in sparsity structure")

    @property
    def shape(self) -> Tuple[int, int]:
        return (len(self.sample_labels), len(self.ref_labels))

    def row(self, index: int) -> MatchRow:
        start, stop = self.scores.indptr[index], self.scores.indptr[index + 1]
        return MatchRow(
            self.sample_labels[index],
            self.scores.indices[start:stop],
            self.scores.data[start:stop],
            self.shared.data[start:stop],
        )


def accumulate(arr: AssocArray, row: str, col: int, delta: int = 1) -> None:
    arr.accumulate(row, col, delta)


def read_kmers(read: Read, k: int = DEFAULT_K) -> np.ndarray:
    """All k-mer ids of the six translated frames of a read, concatenated."""
    return np.concatenate([extract_array(f.residues, k) for f in six_frame(read)])


def from_reads(reads: Iterable[Read], k: int = DEFAULT_K, pipeline: Optional[KmerPipeline] = None) -> AssocArray:
    """One row per read: cell (read, kmer) = occurrences of kmer across its six frames."""
    pipeline = pipeline or partial(read_kmers, k=k)
    arr = AssocArray(k)
    for read in reads:
        if read.id in arr:
            raise DuplicateIdError(f"duplicate read id {read.id!r}")
        arr.add_kmers(read.id, pipeline(read))
    return arr


def merge_arrays(parts: Sequence[AssocArray]) -> AssocArray:
    """Sum partial arrays. Row order is first appearance across `parts`."""
    if not parts:
        raise InputError("nothing to merge")
    k = parts[0].k
    if any(p.k != k for p in parts):
        raise DimensionMismatchError("cannot merge arrays with different k")
    merged = AssocArray(k)
    for part in parts:
        coo = part.matrix.tocoo()
        remap = np.array([merged._row_index(label) for label in part.row_labels], dtype=np.int64)
        if coo.nnz:
            merged._pending.append((remap[coo.row], coo.col.astype(np.int64), coo.data.astype(np.int64)))
    return merged


def column_sums(arr: AssocArray, mode: str = "presence") -> DegreeTable:
    """Per-column degree: rows containing the k-mer (presence) or summed counts (occurrence)."""
    if mode not in DEGREE_MODES:
        raise InputError(f"unknown degree mode {mode!r}; expected one of {DEGREE_MODES}")
    m = arr.matrix
    weights = None if mode == "presence" else m.data
    sums = np.bincount(m.indices, weights=weights, minlength=arr.vocab_size)
    sums = np.minimum(np.rint(sums), COUNT_CEILING).astype(np.int64)
    ids = np.flatnonzero(sums)
    return DegreeTable(ids.astype(np.int64), sums[ids], mode)


def row_sums(arr: AssocArray, mode: str = "presence") -> np.ndarray:
    """Per-row degree: distinct k-mers (presence) or total k-mer occurrences (occurrence)."""
    if mode not in DEGREE_MODES:
        raise InputError(f"unknown degree mode {mode!r}; expected one of {DEGREE_MODES}")
    m = arr.matrix
    if mode == "presence":
        return np.diff(m.indptr).astype(np.int64)
    return np.asarray(m.sum(axis=1)).ravel().astype(np.int64)


def select_columns(arr: AssocArray, keep: Union[Iterable[int], np.ndarray]) -> AssocArray:
    """Drop every entry whose column is not in `keep`; all row labels are preserved."""
    keep_ids = np.fromiter(keep, dtype=np.int64) if not isinstance(keep, np.ndarray) else keep.astype(np.int64)
    mask = np.zeros(arr.vocab_size, dtype=bool)
    mask[keep_ids[(keep_ids >= 0) & (keep_ids < arr.vocab_size)]] = True
    coo = arr.matrix.tocoo()
    retained = mask[coo.col]
    matrix = sps.csr_matrix(
        (coo.data[retained], (coo.row[retained], coo.col[retained])), shape=arr.shape, dtype=np.int64
    )
    return AssocArray.from_csr(arr.row_labels, matrix, arr.k)


def _binary(matrix: sps.csr_matrix) -> sps.csr_matrix:
    ones = matrix.copy()
    ones.data = np.ones_like(ones.data)
    return ones


def multiply_transpose(a: AssocArray, b: AssocArray, weighting: str = "binary") -> MatchMatrix:
    """Score every row of `a` against every row of `b` through the inverted column index of `b`.

    binary: number of distinct shared k-mers; counts: sum over k of a(i,k) * b(j,k).
    Zero scores are not stored.
    """
    if weighting not in WEIGHTINGS:
        raise InputError(f"unknown weighting {weighting!r}; expected one of {WEIGHTINGS}")
    if a.vocab_size != b.vocab_size:
        raise DimensionMismatchError(f"column dimensions differ: {a.vocab_size} vs {b.vocab_size}")

    left = a.matrix
    inverted = b.matrix.T.tocsr()  # k-mer -> reference rows
    postings = np.diff(inverted.indptr)
    comparisons = int(postings[left.indices].sum())

    shared = (_binary(left) @ _binary(inverted)).tocsr()
    shared.eliminate_zeros()
    shared.sort_indices()
    if weighting == "binary":
        scores = shared
    else:
        scores = (left @ inverted).tocsr()
        scores.eliminate_zeros()
        scores.sort_indices()
    return MatchMatrix(a.row_labels, b.row_labels, scores, shared, weighting, comparisons)
