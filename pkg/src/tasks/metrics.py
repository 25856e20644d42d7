"""
Evaluation of identification runs against simulation ground truth.

Read-level recall is the primary statistic: the fraction of an organism's truth
reads that were called to that organism. Unclassified reads count as false
negatives for their true organism and never as false positives.
"""

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Dict, FrozenSet, List, Mapping, Sequence, Union

import numpy as np
import pandas as pd

from tasks.identify import FLOAT_FORMAT, OrganismReport, ReadCall
from tasks.simgen import TRUTH_COLUMNS
from utils.errors import TruthError

EVAL_COLUMNS = ["organism", "truth_reads", "true_positive", "false_positive", "false_negative", "recall", "precision", "detected"]
COMPARISON_COLUMNS = ["organism", "recall_full", "recall_filtered", "recall_delta", "detected_full", "detected_filtered"]


def _ratio(numerator: int, denominator: int) -> float:
    # 0/0 is a perfect score: nothing to find, nothing wrongly found
    return 1.0 if denominator == 0 else numerator / denominator


@dataclass(frozen=True)
class OrganismEval:
    organism: str
    truth_reads: int
    true_positive: int
    false_positive: int
    false_negative: int

    @property
    def recall(self) -> float:
        return _ratio(self.true_positive, self.true_positive + self.false_negative)

    @property
    def precision(self) -> float:
        return _ratio(self.true_positive, self.true_positive + self.false_positive)


@dataclass(frozen=True)
class EvalResult:
    per_organism: Dict[str, OrganismEval]
    detected_set: FrozenSet[str]
    fp_organisms: FrozenSet[str]
    unclassified_count: int
    truth_digest: str

    @property
    def truth_organisms(self) -> List[str]:
        return sorted(o for o, e in self.per_organism.items() if e.truth_reads > 0)


@dataclass(frozen=True)
class RunComparison:
    """Filtered run measured against the unfiltered run over the same truth."""

    recall_full: Dict[str, float]
    recall_filtered: Dict[str, float]
    full_comparisons: int
    filtered_comparisons: int
    gained: FrozenSet[str] = field(default_factory=frozenset)
    lost: FrozenSet[str] = field(default_factory=frozenset)
    detected_full: FrozenSet[str] = field(default_factory=frozenset)
    detected_filtered: FrozenSet[str] = field(default_factory=frozenset)

    @property
    def recall_delta(self) -> Dict[str, float]:
        return {o: self.recall_filtered[o] - self.recall_full[o] for o in self.recall_full}

    @property
    def counter_ratio(self) -> float:
        if self.full_comparisons == 0:
            return 1.0 if self.filtered_comparisons == 0 else math.inf
        return self.filtered_comparisons / self.full_comparisons


def truth_digest(truth: Mapping[str, str]) -> str:
    """sha256 over the truth table sorted by read id, one "id<TAB>organism<LF>" line per read."""
    digest = hashlib.sha256()
    for read_id in sorted(truth):
        digest.update(f"{read_id}\t{truth[read_id]}\n".encode("utf-8"))
    return digest.hexdigest()


def read_truth(path: Union[str, Path, IO[str]]) -> Dict[str, str]:
    """read_id -> organism, in file order."""
    frame = pd.read_csv(path, sep="\t", dtype=str, keep_default_na=False)
    if list(frame.columns) != TRUTH_COLUMNS:
        raise TruthError(f"{path}: expected columns {TRUTH_COLUMNS}, found {list(frame.columns)}")
    if frame["read_id"].duplicated().any():
        duplicate = frame.loc[frame["read_id"].duplicated(), "read_id"].iloc[0]
        raise TruthError(f"{path}: read id {duplicate!r} appears twice")
    return dict(zip(frame["read_id"], frame["organism"]))


def evaluate(
    calls: Sequence[ReadCall],
    truth: Mapping[str, str],
    reports: Sequence[OrganismReport],
) -> EvalResult:
    """Read-level confusion counts per organism plus organism-level false positives.

    A wrong call is a false positive for the called organism (host truth included)
    and a false negative for the true one. Truth reads without a call are false
    negatives, so TP + FN always equals an organism's truth read count.
    """
    truth_counts: Dict[str, int] = {}
    for organism in truth.values():
        truth_counts[organism] = truth_counts.get(organism, 0) + 1

    tp: Dict[str, int] = {}
    fp: Dict[str, int] = {}
    unclassified = 0
    for call in calls:
        try:
            actual = truth[call.read_id]
        except KeyError:
            raise TruthError(f"read id {call.read_id!r} is not in the truth table")
        if not call.classified:
            unclassified += 1
        elif call.organism == actual:
            tp[actual] = tp.get(actual, 0) + 1
        else:
            fp[call.organism] = fp.get(call.organism, 0) + 1

    per_organism = {}
    for organism in sorted(set(truth_counts) | set(fp) | set(tp)):
        n = truth_counts.get(organism, 0)
        hits = tp.get(organism, 0)
        per_organism[organism] = OrganismEval(organism, n, hits, fp.get(organism, 0), n - hits)

    detected = frozenset(r.organism for r in reports if r.detected)
    return EvalResult(
        per_organism=per_organism,
        detected_set=detected,
        fp_organisms=frozenset(detected - set(truth_counts)),
        unclassified_count=unclassified,
        truth_digest=truth_digest(truth),
    )


def compare_runs(
    full: EvalResult,
    full_comparisons: int,
    filtered: EvalResult,
    filtered_comparisons: int,
) -> RunComparison:
    """Recall deltas, work ratio and detection changes of a filtered run versus the full run."""
    if full.truth_digest != filtered.truth_digest:
        raise TruthError(
            f"runs were evaluated against different truth tables ({full.truth_digest[:12]} vs {filtered.truth_digest[:12]})"
        )
    organisms = full.truth_organisms
    return RunComparison(
        recall_full={o: full.per_organism[o].recall for o in organisms},
        recall_filtered={o: filtered.per_organism[o].recall for o in organisms},
        full_comparisons=full_comparisons,
        filtered_comparisons=filtered_comparisons,
        gained=frozenset(filtered.detected_set - full.detected_set),
        lost=frozenset(full.detected_set - filtered.detected_set),
        detected_full=full.detected_set,
        detected_filtered=filtered.detected_set,
    )


def eval_frame(result: EvalResult) -> pd.DataFrame:
    rows = result.per_organism.values()
    return pd.DataFrame(
        {
            "organism": [e.organism for e in rows],
            "truth_reads": pd.Series([e.truth_reads for e in rows], dtype=np.int64),
            "true_positive": pd.Series([e.true_positive for e in rows], dtype=np.int64),
            "false_positive": pd.Series([e.false_positive for e in rows], dtype=np.int64),
            "false_negative": pd.Series([e.false_negative for e in rows], dtype=np.int64),
            "recall": pd.Series([e.recall for e in rows], dtype=np.float64),
            "precision": pd.Series([e.precision for e in rows], dtype=np.float64),
            "detected": pd.Series([e.organism in result.detected_set for e in rows], dtype=bool),
        },
        columns=EVAL_COLUMNS,
    )


def write_eval(result: EvalResult, out: Union[str, Path, IO[str]]) -> None:
    eval_frame(result).to_csv(out, sep="\t", index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def comparison_frame(comparison: RunComparison) -> pd.DataFrame:
    organisms = list(comparison.recall_full)
    delta = comparison.recall_delta
    return pd.DataFrame(
        {
            "organism": organisms,
            "recall_full": pd.Series([comparison.recall_full[o] for o in organisms], dtype=np.float64),
            "recall_filtered": pd.Series([comparison.recall_filtered[o] for o in organisms], dtype=np.float64),
            "recall_delta": pd.Series([delta[o] for o in organisms], dtype=np.float64),
            "detected_full": pd.Series([o in comparison.detected_full for o in organisms], dtype=bool),
            "detected_filtered": pd.Series([o in comparison.detected_filtered for o in organisms], dtype=bool),
        },
        columns=COMPARISON_COLUMNS,
    )


def write_comparison(comparison: RunComparison, out: Union[str, Path, IO[str]]) -> None:
    comparison_frame(comparison).to_csv(out, sep="\t", index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def _names(organisms: FrozenSet[str]) -> str:
    return ", ".join(sorted(organisms)) if organisms else "none"


def format_summary(result: EvalResult) -> str:
    lines = ["Evaluation summary", "=" * 18]
    for e in result.per_organism.values():
        lines.append(
            f"  {e.organism:<24} reads {e.truth_reads:>7}  TP {e.true_positive:>7}  FP {e.false_positive:>6}"
            f"  FN {e.false_negative:>6}  recall {e.recall:.4f}  precision {e.precision:.4f}"
        )
    lines.append(f"Detected organisms:  {_names(result.detected_set)}")
    lines.append(f"False positive organisms: {_names(result.fp_organisms)}")
    lines.append(f"Unclassified reads:  {result.unclassified_count}")
    lines.append(f"Truth digest:        {result.truth_digest}")
    return "\n".join(lines) + "\n"


def format_comparison(comparison: RunComparison) -> str:
    lines = ["Filtered vs full run", "=" * 20]
    delta = comparison.recall_delta
    for organism, recall in comparison.recall_full.items():
        lines.append(
            f"  {organism:<24} recall {recall:.4f} -> {comparison.recall_filtered[organism]:.4f}  ({delta[organism]:+.4f})"
        )
    lines.append(
        f"Comparisons: {comparison.full_comparisons} -> {comparison.filtered_comparisons}"
        f"  (ratio {comparison.counter_ratio:.4f})"
    )
    lines.append(f"Detections gained: {_names(comparison.gained)}")
    lines.append(f"Detections lost:   {_names(comparison.lost)}")
    return "\n".join(lines) + "\n"
