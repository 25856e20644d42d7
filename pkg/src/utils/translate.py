"""
Six-frame translation of DNA into protein space.

Every read is translated in the three codon offsets of its forward strand and of
its reverse complement. There is no transcription step and no ORF finding:
stop codons are rendered '*' and left in place, codons containing N become 'X'.
"""

from dataclasses import dataclass
from types import MappingProxyType
from typing import List, Mapping

import numpy as np

from utils.errors import InputError
from utils.seqio import Read

BASES = "TCAG"
# NCBI translation table 1, codons enumerated in TCAG order
_TABLE_1 = "FFLLSSSSYY**CC*WLLLLPPPPHHQQRRRRIIIMTTTTNNKKSSRRVVVVAAAADDEEGGGG"

STANDARD_CODE: Mapping[str, str] = MappingProxyType(
    {a + b + c: _TABLE_1[16 * i + 4 * j + k]
     for i, a in enumerate(BASES)
     for j, b in enumerate(BASES)
     for k, c in enumerate(BASES)}
)

STOP = "*"
AMBIGUOUS = "X"
STRANDS = ("forward", "reverse")
FRAMES = (0, 1, 2)

_COMPLEMENT = str.maketrans("ACGTN", "TGCAN")

# Base codes in ACGT order; N (and anything else) maps to 4
_BASE_CODE = np.full(256, 4, dtype=np.uint8)
for _code, _base in enumerate("ACGT"):
    _BASE_CODE[ord(_base)] = _code

# Residue for codon index 16*b0 + 4*b1 + b2 over ACGT codes, plus a slot for ambiguous codons
_CODON_RESIDUES = np.frombuffer(
    ("".join(STANDARD_CODE[a + b + c] for a in "ACGT" for b in "ACGT" for c in "ACGT") + AMBIGUOUS).encode("ascii"),
    dtype=np.uint8,
)
_AMBIGUOUS_SLOT = 64


@dataclass(frozen=True)
class ProteinFragment:
    """One reading frame of one read."""

    read_id: str
    strand: str
    frame: int
    residues: str

    def __len__(self) -> int:
        return len(self.residues)


def reverse_complement(seq: str) -> str:
    """Reverse and complement a DNA string (A<->T, C<->G, N->N)."""
    return seq.translate(_COMPLEMENT)[::-1]


def translate_frame(seq: str, frame: int) -> str:
    """Translate `seq` starting at offset `frame`; trailing partial codons are dropped."""
    if frame not in FRAMES:
        raise InputError(f"frame must be one of {FRAMES}, got {frame}")
    n_codons = max(0, (len(seq) - frame) // 3)
    if n_codons == 0:
        return ""
    codes = _BASE_CODE[np.frombuffer(seq.encode("ascii"), dtype=np.uint8)]
    codons = codes[frame:frame + 3 * n_codons].reshape(n_codons, 3).astype(np.int64)
    index = codons[:, 0] * 16 + codons[:, 1] * 4 + codons[:, 2]
    index[(codons == 4).any(axis=1)] = _AMBIGUOUS_SLOT
    return _CODON_RESIDUES[index].tobytes().decode("ascii")


def six_frame(read: Read) -> List[ProteinFragment]:
    """Translate a read in frames 0,1,2 of the forward strand, then of the reverse complement.

    Short reads still yield six fragments, some with empty residues.
    """
    reverse = reverse_complement(read.seq)
    fragments = []
    for strand, seq in zip(STRANDS, (read.seq, reverse)):
        for frame in FRAMES:
            fragments.append(ProteinFragment(read.id, strand, frame, translate_frame(seq, frame)))
    return fragments
