"""
Amino-acid k-mer encoding and sliding-window extraction.

A word of k residues is encoded as its base-20 positional value over the
alphabetical residue ordering below, so ids are dense in [0, 20**k) and ordered
like the words. k is 4 everywhere in the public interface; smaller k is used by
brute-force tests.
"""

from typing import List, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from utils.errors import KmerError
from utils.translate import ProteinFragment

RESIDUES = "ACDEFGHIKLMNPQRSTVWY"
ALPHABET_SIZE = len(RESIDUES)
DEFAULT_K = 4

_MASKED = 255
_RANK = np.full(256, _MASKED, dtype=np.uint8)
for _rank, _residue in enumerate(RESIDUES):
    _RANK[ord(_residue)] = _rank


def vocabulary_size(k: int = DEFAULT_K) -> int:
    return ALPHABET_SIZE ** k


def kmer_span(k: int = DEFAULT_K, input_kind: str = "protein") -> int:
    """Sequence letters one k-mer occurrence covers: k residues, or 3k bases of DNA."""
    return 3 * k if input_kind == "dna" else k


def encode(word: str, k: int = DEFAULT_K) -> int:
    """Encode a word of k residues as a KmerId."""
    if len(word) != k:
        raise KmerError(f"word {word!r} has length {len(word)}, expected {k}")
    value = 0
    for residue in word:
        rank = RESIDUES.find(residue)
        if rank < 0:
            raise KmerError(f"invalid residue {residue!r} in word {word!r}")
        value = value * ALPHABET_SIZE + rank
    return value


def decode(kmer_id: int, k: int = DEFAULT_K) -> str:
    """Inverse of encode."""
    if not 0 <= kmer_id < vocabulary_size(k):
        raise KmerError(f"k-mer id {kmer_id} outside [0, {vocabulary_size(k)})")
    letters = []
    for _ in range(k):
        kmer_id, rank = divmod(kmer_id, ALPHABET_SIZE)
        letters.append(RESIDUES[rank])
    return "".join(reversed(letters))


def extract_array(residues: str, k: int = DEFAULT_K) -> np.ndarray:
    """Ids of every stride-1 window of `residues`, skipping windows with any non-residue.

    Order and duplicates are preserved. Returns an int64 array.
    """
    if len(residues) < k:
        return np.empty(0, dtype=np.int64)
    ranks = _RANK[np.frombuffer(residues.encode("ascii"), dtype=np.uint8)]
    windows = sliding_window_view(ranks, k)
    valid = ~(windows == _MASKED).any(axis=1)
    powers = ALPHABET_SIZE ** np.arange(k - 1, -1, -1, dtype=np.int64)
    return windows[valid].astype(np.int64) @ powers


def extract(fragment: Union[ProteinFragment, str], k: int = DEFAULT_K) -> List[int]:
    """K-mer ids of a protein fragment (or a bare residue string), in window order."""
    residues = fragment.residues if isinstance(fragment, ProteinFragment) else fragment
    return extract_array(residues, k).tolist()
