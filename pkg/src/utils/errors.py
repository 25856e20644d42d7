"""
Exception hierarchy for the identification toolkit.

Everything caused by bad user input derives from InputError so the CLI can map
it to exit code 1; anything else is treated as an internal failure.
"""

from typing import Optional


class InputError(ValueError):
    """Base class for errors caused by user-supplied data or flags."""


class SequenceFormatError(InputError):
    """Malformed FASTA/FASTQ record."""

    def __init__(self, message: str, line: Optional[int] = None, source: str = "<stream>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


class AlphabetError(SequenceFormatError):
    """Character outside the accepted sequence alphabet."""


class DuplicateIdError(InputError):
    """The same read or reference id appeared twice in one input."""


class KmerError(InputError):
    """Invalid k-mer word or id."""


class DimensionMismatchError(InputError):
    """Two arrays do not share the same column space (different k)."""


class ConfigError(InputError):
    """Invalid configuration value; names the offending key or flag."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class FilterError(InputError):
    """Invalid FilterSpec or an attempt to filter an already filtered db."""


class OrganismMapError(InputError):
    """Reference id without an organism, or a malformed organism sidecar."""


class ReferenceDBError(InputError):
    """Problem reading or building a reference database."""


class FormatVersionError(ReferenceDBError):
    """Database file written by an unsupported format version."""


class ChecksumError(ReferenceDBError):
    """Database file failed its integrity check."""


class TruncatedDBError(ReferenceDBError):
    """Database file ends before its declared contents."""


class TruthError(InputError):
    """Ground-truth table inconsistent with the calls being evaluated."""


class SimulationError(InputError):
    """Invalid simulation spec or unusable genome."""
