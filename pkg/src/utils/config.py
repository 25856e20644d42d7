"""
Run configuration.

Precedence is command-line flags, then a flat key=value config file, then the
defaults below. The file format is the one python-dotenv reads, and
`RunConfig.to_text()` writes the same format back so a run can be replayed.
"""

from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from dotenv import dotenv_values

from utils.aarray import WEIGHTINGS
from utils.degree import BIN_POLICIES, DEGREE_MODES, FILTER_BASES, FilterSpec
from utils.errors import ConfigError, FilterError
from utils.kmer import DEFAULT_K, kmer_span
from utils.seqio import ALPHABETS, DUPLICATE_POLICIES

INPUT_KINDS = tuple(ALPHABETS)
MAX_K = 6
MAX_THREADS = 256

# chunk_overlap value meaning "one k-mer span minus one": every k-mer occurrence
# of a reference then lies in exactly one window.
AUTO_OVERLAP = -1


@dataclass(frozen=True)
class RunConfig:
    k: int = DEFAULT_K
    input_kind: str = "dna"
    chunk_length: int = 2000
    chunk_overlap: int = AUTO_OVERLAP
    degree_mode: str = "presence"
    bottom_fraction: float = 0.0
    top_fraction: float = 0.0
    filter_basis: str = "types"
    histogram_bins: str = "log2"
    weighting: str = "binary"
    min_shared: int = 2
    min_margin: float = 0.0
    min_reads: int = 10
    on_duplicate: str = "error"
    read_length: int = 200
    substitution_rate: float = 0.01
    seed: int = 0
    threads: int = 1

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any], source: str = "config") -> "RunConfig":
        """Config from string (or typed) values; unknown keys and unparsable values raise ConfigError."""
        types = {f.name: f.type for f in fields(cls)}
        parsed: Dict[str, Any] = {}
        for key, raw in values.items():
            name = key.strip().lower().replace("-", "_")
            if name not in types:
                raise ConfigError(key, f"unknown key in {source}")
            if raw is None:
                raise ConfigError(key, f"missing value in {source}")
            try:
                parsed[name] = _coerce(types[name], raw)
            except ValueError:
                raise ConfigError(key, f"cannot parse {raw!r} as {_type_name(types[name])} in {source}")
        return cls(**parsed)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError("--config", f"no such config file: {path}")
        return cls.from_mapping(dotenv_values(path), source=str(path))

    def merged(self, overrides: Mapping[str, Any]) -> "RunConfig":
        """Copy with every non-None override applied."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def validate(self) -> "RunConfig":
        if not 1 <= self.k <= MAX_K:
            raise ConfigError("k", f"must be in [1, {MAX_K}], got {self.k}")
        _check_choice("input_kind", self.input_kind, INPUT_KINDS)
        _check_choice("degree_mode", self.degree_mode, DEGREE_MODES)
        _check_choice("filter_basis", self.filter_basis, FILTER_BASES)
        _check_choice("histogram_bins", self.histogram_bins, BIN_POLICIES)
        _check_choice("weighting", self.weighting, WEIGHTINGS)
        _check_choice("on_duplicate", self.on_duplicate, DUPLICATE_POLICIES)
        if self.chunk_length < 0:
            raise ConfigError("chunk_length", f"must be >= 0, got {self.chunk_length}")
        if self.chunk_overlap < AUTO_OVERLAP:
            raise ConfigError("chunk_overlap", f"must be >= 0 or {AUTO_OVERLAP} for automatic, got {self.chunk_overlap}")
        if self.chunk_length and not 0 <= self.window_overlap() < self.chunk_length:
            raise ConfigError(
                "chunk_overlap", f"must be in [0, chunk_length), got {self.window_overlap()} (chunk_length {self.chunk_length})"
            )
        try:
            self.filter_spec()
        except FilterError as e:
            raise ConfigError("bottom_fraction/top_fraction", str(e))
        if self.min_shared < 0:
            raise ConfigError("min_shared", f"must be >= 0, got {self.min_shared}")
        if self.min_margin < 0:
            raise ConfigError("min_margin", f"must be >= 0, got {self.min_margin}")
        if self.min_reads < 0:
            raise ConfigError("min_reads", f"must be >= 0, got {self.min_reads}")
        if self.read_length < 1:
            raise ConfigError("read_length", f"must be >= 1, got {self.read_length}")
        if not 0.0 <= self.substitution_rate <= 1.0:
            raise ConfigError("substitution_rate", f"must be in [0, 1], got {self.substitution_rate}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed", f"must be a 64-bit unsigned integer, got {self.seed}")
        if not 1 <= self.threads <= MAX_THREADS:
            raise ConfigError("threads", f"must be in [1, {MAX_THREADS}], got {self.threads}")
        return self

    def window_overlap(self) -> int:
        """Overlap between reference windows, with AUTO_OVERLAP resolved for k and input kind."""
        if self.chunk_overlap == AUTO_OVERLAP:
            return kmer_span(self.k, self.input_kind) - 1
        return self.chunk_overlap

    def filter_spec(self) -> FilterSpec:
        return FilterSpec(self.bottom_fraction, self.top_fraction, self.filter_basis, self.degree_mode)

    def to_text(self) -> str:
        """key=value lines in field order, readable by from_file."""
        return "".join(f"{key}={value}\n" for key, value in asdict(self).items())


def load_config(path: Optional[Union[str, Path]] = None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """Defaults, then the config file, then flag overrides; validated."""
    config = RunConfig.from_file(path) if path else RunConfig()
    return config.merged(overrides or {}).validate()


def _check_choice(key: str, value: str, choices) -> None:
    if value not in choices:
        raise ConfigError(key, f"must be one of {', '.join(choices)}, got {value!r}")


def _type_name(kind) -> str:
    return getattr(kind, "__name__", str(kind))


def _coerce(kind, raw: Any):
    if not isinstance(raw, str):
        return kind(raw)
    text = raw.strip()
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    return text
