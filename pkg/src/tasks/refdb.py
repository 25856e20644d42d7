"""
Reference databases: reference sequences as k-mer associative arrays.

A ReferenceDB holds the reference array (one row per reference sequence, or per
window of it when chunking is on), the organism of every row, and the presence
degree table of the unfiltered array. Filtering drops columns from the array but
always keeps the original degree table.

On-disk format (all integers little-endian, fixed width):

    magic "PROTKDB\\0" | u16 version | u8 k | u8 input kind | u32 chunk length
    | u32 chunk overlap | i64 build timestamp | u64 file length | 32-byte source digest
    | u8 filter flag [f64 bottom, f64 top, u8 basis, u8 degree mode,
                      u64 n, n x u32 kept k-mer ids]
    | u32 rows, rows x (u32 length, UTF-8 label)
    | u32 organisms, organisms x (u32 length, UTF-8 name), rows x u32 organism index
    | u64 n, n x (u32 row, u32 kmer, u32 count) sorted by row then kmer
    | u8 degree mode, u64 n, n x (u32 kmer, u32 degree) sorted by kmer
    | 32-byte sha256 of everything before it
"""

import hashlib
import os
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy.sparse as sps
from prefect import task
from prefect.cache_policies import NO_CACHE

from utils.aarray import AssocArray, column_sums, read_kmers, select_columns
from utils.degree import DEGREE_MODES, FILTER_BASES, DegreeTable, FilterSpec, keep_array
from utils.errors import (
    ChecksumError,
    DuplicateIdError,
    FilterError,
    FormatVersionError,
    InputError,
    OrganismMapError,
    ReferenceDBError,
    TruncatedDBError,
)
from utils.kmer import DEFAULT_K, extract_array, vocabulary_size
from utils.log import get_logger
from utils.seqio import Read

FORMAT_MAGIC = b"PROTKDB\x00"
FORMAT_VERSION = 1
INPUT_KINDS = ("dna", "protein")
HEADER_ORGANISM_SEPARATOR = "|"

_HEADER = struct.Struct("<8sHBBIIqQ32s")
_DIGEST_SIZE = 32
_TRIPLE = np.dtype([("row", "<u4"), ("kmer", "<u4"), ("count", "<u4")])
_DEGREE = np.dtype([("kmer", "<u4"), ("degree", "<u4")])


@dataclass(frozen=True)
class DBMeta:
    k: int = DEFAULT_K
    input_kind: str = "dna"
    chunk_length: int = 0
    chunk_overlap: int = 0
    built_at: int = 0
    source_digest: str = "0" * 64


@dataclass(frozen=True)
class ReferenceRow:
    """One row of the reference array before k-mer extraction."""

    label: str
    organism: str
    sequence: str


@dataclass(eq=False)
class ReferenceDB:
    array: AssocArray
    organism_of: Dict[str, str]
    degrees: DegreeTable
    meta: DBMeta = field(default_factory=DBMeta)
    filter_applied: Optional[FilterSpec] = None
    kept_kmers: Optional[np.ndarray] = None

    def __post_init__(self):
        missing = [label for label in self.array.row_labels if label not in self.organism_of]
        if missing:
            raise OrganismMapError(f"no organism for reference row(s): {', '.join(missing[:5])}")

    @property
    def k(self) -> int:
        return self.array.k

    @property
    def organisms(self) -> List[str]:
        return sorted(set(self.organism_of[label] for label in self.array.row_labels))

    def organism_codes(self) -> Tuple[List[str], np.ndarray]:
        """Sorted organism names and, for every array row, the index of its organism."""
        names = self.organisms
        code = {name: i for i, name in enumerate(names)}
        rows = np.array([code[self.organism_of[label]] for label in self.array.row_labels], dtype=np.int64)
        return names, rows

    def keep_columns(self) -> Optional[np.ndarray]:
        """K-mer ids retained by the applied filter, or None for an unfiltered db."""
        return self.kept_kmers

    def degree_table(self, mode: str = "presence") -> DegreeTable:
        """Degrees of the k-mers the array holds.

        Presence degrees are the stored (pre-filter) values, limited to the kept
        k-mers when a filter was applied. Occurrence degrees are recounted from
        the array, which for a filtered db also covers only the kept k-mers.
        """
        if mode != "presence":
            return column_sums(self.array, mode)
        if self.kept_kmers is None:
            return self.degrees
        return self.degrees.restrict(self.kept_kmers)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ReferenceDB):
            return NotImplemented
        kept_equal = (self.kept_kmers is None and other.kept_kmers is None) or (
            self.kept_kmers is not None
            and other.kept_kmers is not None
            and np.array_equal(self.kept_kmers, other.kept_kmers)
        )
        return (
            self.array == other.array
            and self.organism_of == other.organism_of
            and self.degrees == other.degrees
            and self.meta == other.meta
            and self.filter_applied == other.filter_applied
            and kept_equal
        )


# -- organisms ---------------------------------------------------------------


def load_organism_map(path: Union[str, Path]) -> Dict[str, str]:
    """Read a 2-column TSV sidecar (reference_id, organism); '#' lines are comments."""
    frame = pd.read_csv(path, sep="\t", header=None, comment="#", dtype=str, keep_default_na=False)
    if frame.empty:
        return {}
    if frame.shape[1] != 2:
        raise OrganismMapError(f"{path}: expected 2 tab-separated columns, found {frame.shape[1]}")
    mapping: Dict[str, str] = {}
    for ref_id, organism in frame.itertuples(index=False):
        if not ref_id or not organism:
            raise OrganismMapError(f"{path}: empty reference id or organism")
        if mapping.get(ref_id, organism) != organism:
            raise OrganismMapError(f"{path}: reference {ref_id!r} mapped to two organisms")
        mapping[ref_id] = organism
    return mapping


def split_reference_id(read_id: str) -> Tuple[str, Optional[str]]:
    """'ref1|E_coli' -> ('ref1', 'E_coli'); ids without the separator have no organism."""
    base, sep, organism = read_id.partition(HEADER_ORGANISM_SEPARATOR)
    return base, (organism or None) if sep else None


def resolve_organism(read_id: str, organism_map: Optional[Mapping[str, str]]) -> Tuple[str, str]:
    """(row base id, organism) for a reference; the sidecar map wins over the header convention."""
    base, from_header = split_reference_id(read_id)
    organism_map = organism_map or {}
    organism = organism_map.get(read_id) or organism_map.get(base) or from_header
    if not organism:
        raise OrganismMapError(f"unknown organism for reference {read_id!r}")
    return base, organism


# -- build -------------------------------------------------------------------


def chunk_spans(length: int, chunk_length: int = 0, chunk_overlap: int = 0) -> List[Tuple[int, int]]:
    """Half-open windows covering [0, length); chunk_length 0 means one window."""
    if chunk_length <= 0 or length <= chunk_length:
        return [(0, length)]
    if not 0 <= chunk_overlap < chunk_length:
        raise InputError(f"chunk overlap {chunk_overlap} must be in [0, chunk length {chunk_length})")
    step = chunk_length - chunk_overlap
    spans = []
    start = 0
    while True:
        end = min(start + chunk_length, length)
        spans.append((start, end))
        if end == length:
            return spans
        start += step


def reference_rows(
    references: Iterable[Read],
    organism_map: Optional[Mapping[str, str]] = None,
    chunk_length: int = 0,
    chunk_overlap: int = 0,
) -> List[ReferenceRow]:
    """Resolve organisms and split references into labelled rows."""
    rows: List[ReferenceRow] = []
    seen = set()
    for ref in references:
        base, organism = resolve_organism(ref.id, organism_map)
        if base in seen:
            raise DuplicateIdError(f"duplicate reference id {base!r}")
        seen.add(base)
        spans = chunk_spans(len(ref.seq), chunk_length, chunk_overlap)
        for start, end in spans:
            label = base if len(spans) == 1 else f"{base}:{start + 1}-{end}"
            rows.append(ReferenceRow(label, organism, ref.seq[start:end]))
    return rows


def row_kmers(row: ReferenceRow, input_kind: str, k: int = DEFAULT_K) -> np.ndarray:
    """DNA rows are six-frame translated; protein rows are windowed directly."""
    if input_kind == "dna":
        return read_kmers(Read(row.label, row.sequence), k)
    return extract_array(row.sequence, k)


def rows_to_array(rows: Sequence[ReferenceRow], input_kind: str = "dna", k: int = DEFAULT_K) -> AssocArray:
    if input_kind not in INPUT_KINDS:
        raise InputError(f"unknown input kind {input_kind!r}; expected one of {INPUT_KINDS}")
    arr = AssocArray(k)
    for row in rows:
        arr.add_kmers(row.label, row_kmers(row, input_kind, k))
    return arr


def source_digest(rows: Sequence[ReferenceRow], input_kind: str, k: int) -> str:
    digest = hashlib.sha256(f"{input_kind}\t{k}\n".encode("utf-8"))
    for row in rows:
        digest.update(f"{row.label}\t{row.organism}\t{row.sequence}\n".encode("utf-8"))
    return digest.hexdigest()


def default_timestamp() -> int:
    """SOURCE_DATE_EPOCH when set, else 0, so rebuilding identical inputs gives identical files."""
    return int(os.environ.get("SOURCE_DATE_EPOCH", "0"))


def assemble(
    array: AssocArray,
    rows: Sequence[ReferenceRow],
    input_kind: str,
    chunk_length: int = 0,
    chunk_overlap: int = 0,
    built_at: Optional[int] = None,
) -> ReferenceDB:
    """Attach organisms, presence degrees and metadata to a built reference array."""
    meta = DBMeta(
        k=array.k,
        input_kind=input_kind,
        chunk_length=chunk_length,
        chunk_overlap=chunk_overlap,
        built_at=default_timestamp() if built_at is None else built_at,
        source_digest=source_digest(rows, input_kind, array.k),
    )
    organism_of = {row.label: row.organism for row in rows}
    return ReferenceDB(array, organism_of, column_sums(array, "presence"), meta)


def build(
    references: Iterable[Read],
    organism_map: Optional[Mapping[str, str]] = None,
    input_kind: str = "dna",
    k: int = DEFAULT_K,
    chunk_length: int = 0,
    chunk_overlap: int = 0,
    built_at: Optional[int] = None,
) -> ReferenceDB:
    """Build a reference db from DNA (six-frame translated) or protein references."""
    rows = reference_rows(references, organism_map, chunk_length, chunk_overlap)
    if not rows:
        raise ReferenceDBError("empty reference set")
    array = rows_to_array(rows, input_kind, k)
    db = assemble(array, rows, input_kind, chunk_length, chunk_overlap, built_at)
    get_logger().info(
        f"📚 Built reference db: {array.num_rows} rows, {len(db.organisms)} organisms, {len(db.degrees)} distinct k-mers"
    )
    return db


@task(name="Build Reference Block", cache_policy=NO_CACHE)
def build_partial_array(rows: Sequence[ReferenceRow], input_kind: str, k: int) -> AssocArray:
    """Partial array for one block of reference rows (merged by the flow)."""
    return rows_to_array(rows, input_kind, k)


def apply_filter(db: ReferenceDB, spec: FilterSpec) -> ReferenceDB:
    """Drop columns outside the keep-set; the stored degrees stay the pre-filter table."""
    if db.filter_applied is not None:
        raise FilterError(f"db is already filtered ({db.filter_applied.describe()}); filters do not compose")
    table = db.degree_table(spec.degree_mode)
    keep = keep_array(table, spec)
    array = db.array if spec.keeps_all else select_columns(db.array, keep)
    get_logger().info(
        f"✂️ Filter {spec.describe()}: kept {len(keep)}/{len(table)} k-mers, "
        f"{array.total_count()}/{db.array.total_count()} occurrences"
    )
    return replace(db, array=array, filter_applied=spec, kept_kmers=keep)


# -- persistence -------------------------------------------------------------


def _pack_text(text: str) -> bytes:
    data = text.encode("utf-8")
    return struct.pack("<I", len(data)) + data


def serialize(db: ReferenceDB) -> bytes:
    """Deterministic byte encoding of a db (see module docstring)."""
    meta = db.meta
    parts = []

    spec = db.filter_applied
    if spec is None:
        parts.append(struct.pack("<B", 0))
    else:
        kept = np.asarray(db.kept_kmers, dtype="<u4")
        parts.append(
            struct.pack(
                "<BddBBQ",
                1,
                spec.bottom_fraction,
                spec.top_fraction,
                FILTER_BASES.index(spec.basis),
                DEGREE_MODES.index(spec.degree_mode),
                len(kept),
            )
        )
        parts.append(kept.tobytes())

    labels = db.array.row_labels
    parts.append(struct.pack("<I", len(labels)))
    parts.extend(_pack_text(label) for label in labels)

    names, codes = db.organism_codes()
    parts.append(struct.pack("<I", len(names)))
    parts.extend(_pack_text(name) for name in names)
    parts.append(codes.astype("<u4").tobytes())

    coo = db.array.matrix.tocoo()
    triples = np.empty(coo.nnz, dtype=_TRIPLE)
    triples["row"], triples["kmer"], triples["count"] = coo.row, coo.col, coo.data
    triples.sort(order=["row", "kmer"])
    parts.append(struct.pack("<Q", len(triples)))
    parts.append(triples.tobytes())

    degrees = np.empty(len(db.degrees), dtype=_DEGREE)
    degrees["kmer"], degrees["degree"] = db.degrees.kmer_ids, db.degrees.degrees
    parts.append(struct.pack("<BQ", DEGREE_MODES.index(db.degrees.mode), len(degrees)))
    parts.append(degrees.tobytes())

    rest = b"".join(parts)
    header = _HEADER.pack(
        FORMAT_MAGIC,
        FORMAT_VERSION,
        meta.k,
        INPUT_KINDS.index(meta.input_kind),
        meta.chunk_length,
        meta.chunk_overlap,
        meta.built_at,
        _HEADER.size + len(rest) + _DIGEST_SIZE,
        bytes.fromhex(meta.source_digest),
    )
    body = header + rest
    return body + hashlib.sha256(body).digest()


def save(db: ReferenceDB, path: Union[str, Path]) -> None:
    Path(path).write_bytes(serialize(db))


class _Cursor:
    def __init__(self, buf: bytes, source: str):
        self.buf = buf
        self.pos = 0
        self.source = source

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedDBError(f"{self.source}: file ends inside a section (need {n} bytes at offset {self.pos})")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def text(self) -> str:
        (length,) = self.unpack("<I")
        return self.take(length).decode("utf-8")

    def array(self, dtype, count: int) -> np.ndarray:
        dtype = np.dtype(dtype)
        return np.frombuffer(self.take(dtype.itemsize * count), dtype=dtype)


def deserialize(buf: bytes, source: str = "<bytes>") -> ReferenceDB:
    if len(buf) < len(FORMAT_MAGIC) + 2:
        raise TruncatedDBError(f"{source}: file too short to be a reference db")
    if buf[:len(FORMAT_MAGIC)] != FORMAT_MAGIC:
        raise ReferenceDBError(f"{source}: not a reference db (bad magic)")
    (version,) = struct.unpack_from("<H", buf, len(FORMAT_MAGIC))
    if version != FORMAT_VERSION:
        raise FormatVersionError(f"{source}: format version {version}; this build reads version {FORMAT_VERSION}")
    if len(buf) < _HEADER.size + _DIGEST_SIZE:
        raise TruncatedDBError(f"{source}: file too short to be a reference db")
    declared = _HEADER.unpack_from(buf)[7]
    if len(buf) < declared:
        raise TruncatedDBError(f"{source}: file is {len(buf)} bytes, header declares {declared}")
    if len(buf) > declared:
        raise ReferenceDBError(f"{source}: {len(buf) - declared} unexpected bytes after the checksum")
    body, stored = buf[:-_DIGEST_SIZE], buf[-_DIGEST_SIZE:]
    if hashlib.sha256(body).digest() != stored:
        raise ChecksumError(f"{source}: checksum mismatch, file is corrupted or truncated")

    cur = _Cursor(body, source)
    _, _, k, kind, chunk_length, chunk_overlap, built_at, _, digest = cur.unpack(_HEADER.format)
    meta = DBMeta(k, INPUT_KINDS[kind], chunk_length, chunk_overlap, built_at, digest.hex())

    spec, kept = None, None
    (has_filter,) = cur.unpack("<B")
    if has_filter:
        bottom, top, basis, mode, n_kept = cur.unpack("<ddBBQ")
        spec = FilterSpec(bottom, top, FILTER_BASES[basis], DEGREE_MODES[mode])
        kept = cur.array("<u4", n_kept).astype(np.int64)

    (n_rows,) = cur.unpack("<I")
    labels = [cur.text() for _ in range(n_rows)]
    (n_names,) = cur.unpack("<I")
    names = [cur.text() for _ in range(n_names)]
    codes = cur.array("<u4", n_rows)
    organism_of = {label: names[code] for label, code in zip(labels, codes.tolist())}

    (n_triples,) = cur.unpack("<Q")
    triples = cur.array(_TRIPLE, n_triples)
    matrix = sps.csr_matrix(
        (triples["count"].astype(np.int64), (triples["row"].astype(np.int64), triples["kmer"].astype(np.int64))),
        shape=(n_rows, vocabulary_size(k)),
        dtype=np.int64,
    )
    array = AssocArray.from_csr(labels, matrix, k)

    mode, n_degrees = cur.unpack("<BQ")
    degree_rows = cur.array(_DEGREE, n_degrees)
    degrees = DegreeTable(
        degree_rows["kmer"].astype(np.int64), degree_rows["degree"].astype(np.int64), DEGREE_MODES[mode]
    )
    if cur.pos != len(body):
        raise ReferenceDBError(f"{source}: {len(body) - cur.pos} unexpected trailing bytes")
    return ReferenceDB(array, organism_of, degrees, meta, spec, kept)


def load(path: Union[str, Path]) -> ReferenceDB:
    db = deserialize(Path(path).read_bytes(), source=str(path))
    get_logger().info(
        f"📖 Loaded reference db {path}: {db.array.num_rows} rows, "
        f"filter {db.filter_applied.describe() if db.filter_applied else 'none'}"
    )
    return db
