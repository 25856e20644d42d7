"""
Streaming FASTA/FASTQ reading and writing.

Parsers are single-pass generators: memory is bounded by one record. Input
streams may be binary or text; binary streams are sniffed for the gzip magic
bytes and decompressed transparently.
"""

import gzip
import io
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator, Optional, Set, Tuple, Union

from utils.errors import AlphabetError, DuplicateIdError, InputError, SequenceFormatError

GZIP_MAGIC = b"\x1f\x8b"

DNA_ALPHABET = frozenset("ACGTN")
# 20 residues plus the extended IUPAC codes, ambiguity and stop
PROTEIN_ALPHABET = frozenset("ACDEFGHIKLMNPQRSTVWY" "BJOUZ" "X*")
ALPHABETS = {"dna": DNA_ALPHABET, "protein": PROTEIN_ALPHABET}

DUPLICATE_POLICIES = ("error", "suffix")

# Quality written for reads that carry none
DEFAULT_QUALITY_CHAR = "I"

Stream = Union[IO[bytes], IO[str]]


@dataclass(frozen=True)
class Read:
    """One sequence record. Quality is carried through but never interpreted."""

    id: str
    seq: str
    qual: Optional[str] = None

    def __post_init__(self):
        if not self.id:
            raise InputError("read id must be non-empty")
        if not self.seq:
            raise InputError(f"read {self.id!r} has an empty sequence")
        if self.qual is not None and len(self.qual) != len(self.seq):
            raise InputError(
                f"read {self.id!r}: quality length {len(self.qual)} != sequence length {len(self.seq)}"
            )

    def __len__(self) -> int:
        return len(self.seq)


class _IdRegistry:
    """Applies the duplicate-id policy within one input stream."""

    def __init__(self, policy: str, source: str):
        if policy not in DUPLICATE_POLICIES:
            raise InputError(f"unknown duplicate policy {policy!r}; expected one of {DUPLICATE_POLICIES}")
        self.policy = policy
        self.source = source
        self.seen: Set[str] = set()

    def admit(self, read_id: str, line: int) -> str:
        if read_id not in self.seen:
            self.seen.add(read_id)
            return read_id
        if self.policy == "error":
            raise DuplicateIdError(f"{self.source}:{line}: duplicate id {read_id!r}")
        n = 2
        while f"{read_id}.{n}" in self.seen:
            n += 1
        renamed = f"{read_id}.{n}"
        self.seen.add(renamed)
        return renamed


def _decompressed(stream: IO[bytes]) -> IO[bytes]:
    """Wrap a binary stream in a gzip reader when it starts with the gzip magic."""
    if hasattr(stream, "peek"):
        head = stream.peek(2)[:2]
    elif stream.seekable():
        pos = stream.tell()
        head = stream.read(2)
        stream.seek(pos)
    else:
        stream = io.BufferedReader(stream)
        head = stream.peek(2)[:2]
    if head == GZIP_MAGIC:
        return gzip.GzipFile(fileobj=stream, mode="rb")
    return stream


def _numbered_lines(stream: Stream) -> Iterator[Tuple[int, str]]:
    """Yield (1-based line number, line without newline) from a text or binary stream."""
    if isinstance(stream, io.TextIOBase):
        lines: Iterable = stream
        decode = False
    else:
        lines = _decompressed(stream)
        decode = True
    for lineno, line in enumerate(lines, start=1):
        if decode:
            line = line.decode("utf-8", errors="replace")
        yield lineno, line.rstrip("\r\n")


def _check_alphabet(raw: str, allowed: frozenset, line: int, source: str) -> str:
    seq = raw.upper()
    illegal = set(seq) - allowed
    if illegal:
        pos = min(seq.index(c) for c in illegal)
        raise AlphabetError(f"illegal character {raw[pos]!r}", line, source)
    return seq


def parse_fasta(
    stream: Stream,
    alphabet: str = "dna",
    on_duplicate: str = "error",
    source: str = "<stream>",
) -> Iterator[Read]:
    """Parse FASTA records; sequence lines may wrap.

    Args:
        stream: text or binary stream (gzip is detected on binary streams)
        alphabet: "dna" ({A,C,G,T,N}) or "protein"
        on_duplicate: "error" rejects repeated ids, "suffix" renames them id.2, id.3, ...
        source: name used in error messages

    Yields:
        Read records in input order, sequences upper-cased
    """
    allowed = ALPHABETS.get(alphabet)
    if allowed is None:
        raise InputError(f"unknown alphabet {alphabet!r}")
    registry = _IdRegistry(on_duplicate, source)

    read_id: Optional[str] = None
    header_line = 0
    chunks = []

    def finish() -> Read:
        if not chunks:
            raise SequenceFormatError(f"empty record {read_id!r}", header_line, source)
        return Read(id=registry.admit(read_id, header_line), seq="".join(chunks))

    for lineno, line in _numbered_lines(stream):
        if not line.strip():
            continue
        if line.startswith(">"):
            if read_id is not None:
                yield finish()
            tokens = line[1:].split()
            if not tokens:
                raise SequenceFormatError("header has no id", lineno, source)
            read_id, header_line, chunks = tokens[0], lineno, []
            continue
        if read_id is None:
            raise SequenceFormatError("sequence data before the first '>' header", lineno, source)
        chunks.append(_check_alphabet(line.strip(), allowed, lineno, source))

    if read_id is not None:
        yield finish()


def parse_fastq(stream: Stream, on_duplicate: str = "error", source: str = "<stream>") -> Iterator[Read]:
    """Parse unwrapped 4-line FASTQ records (@id / seq / + / qual)."""
    registry = _IdRegistry(on_duplicate, source)
    lines = _numbered_lines(stream)

    for lineno, header in lines:
        if not header.strip():
            continue
        if not header.startswith("@"):
            raise SequenceFormatError("expected '@' header line", lineno, source)
        tokens = header[1:].split()
        if not tokens:
            raise SequenceFormatError("header has no id", lineno, source)

        seq_entry = next(lines, None)
        plus_entry = next(lines, None)
        qual_entry = next(lines, None)
        if qual_entry is None:
            raise SequenceFormatError(f"truncated record {tokens[0]!r}", lineno, source)

        seq_no, seq_raw = seq_entry
        plus_no, plus = plus_entry
        qual_no, qual = qual_entry
        if not plus.startswith("+"):
            raise SequenceFormatError("expected '+' separator line", plus_no, source)
        if not seq_raw:
            raise SequenceFormatError(f"empty record {tokens[0]!r}", seq_no, source)
        seq = _check_alphabet(seq_raw, DNA_ALPHABET, seq_no, source)
        if len(qual) != len(seq):
            raise SequenceFormatError(
                f"quality length {len(qual)} does not match sequence length {len(seq)}", qual_no, source
            )
        yield Read(id=registry.admit(tokens[0], lineno), seq=seq, qual=qual)


def _open_binary(path: Union[str, Path]) -> IO[bytes]:
    if str(path) == "-":
        return sys.stdin.buffer
    return open(path, "rb")


def read_sequences(
    path: Union[str, Path],
    alphabet: str = "dna",
    on_duplicate: str = "error",
) -> Iterator[Read]:
    """Read FASTA or FASTQ from a path ("-" for standard input), gzip or plain.

    The format is chosen from the first non-blank character ('>' or '@').
    """
    source = "<stdin>" if str(path) == "-" else str(path)
    raw = _open_binary(path)
    try:
        stream = _decompressed(raw)
        head = stream.peek(256).lstrip() if hasattr(stream, "peek") else b""
        if head.startswith(b"@"):
            if alphabet != "dna":
                raise InputError(f"{source}: FASTQ input is always DNA")
            yield from parse_fastq(stream, on_duplicate=on_duplicate, source=source)
        elif head.startswith(b">") or not head:
            yield from parse_fasta(stream, alphabet=alphabet, on_duplicate=on_duplicate, source=source)
        else:
            raise SequenceFormatError("neither FASTA ('>') nor FASTQ ('@') input", 1, source)
    finally:
        if raw is not sys.stdin.buffer:
            raw.close()


def _writer(stream: Stream):
    if isinstance(stream, io.TextIOBase):
        return stream.write
    return lambda text: stream.write(text.encode("ascii"))


def write_fastq(reads: Iterable[Read], stream: Stream, default_quality: str = DEFAULT_QUALITY_CHAR) -> None:
    """Write reads as 4-line FASTQ. Reads without quality get a constant quality string."""
    write = _writer(stream)
    for read in reads:
        qual = read.qual if read.qual is not None else default_quality * len(read.seq)
        write(f"@{read.id}\n{read.seq}\n+\n{qual}\n")


def write_fasta(reads: Iterable[Read], stream: Stream, width: int = 60) -> None:
    """Write reads as FASTA, wrapping sequence lines at `width` columns."""
    write = _writer(stream)
    for read in reads:
        write(f">{read.id}\n")
        for start in range(0, len(read.seq), width):
            write(read.seq[start:start + width] + "\n")
