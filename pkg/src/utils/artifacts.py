"""
Artifact utilities for the identification flows.
Publishes reports, evaluations and degree histograms as Prefect artifacts.
The TSV outputs stay authoritative; artifacts are a view of them in the UI.
"""

from typing import Any, Dict, List, Optional, Sequence, Tuple

from prefect.artifacts import create_markdown_artifact, create_table_artifact


def _key(*parts: str) -> str:
    """Prefect artifact keys allow lowercase letters, digits and dashes only."""
    text = "-".join(p for p in parts if p).lower()
    cleaned = "".join(c if c.isalnum() and c.isascii() else "-" for c in text)
    return "-".join(filter(None, cleaned.split("-")))


def create_report_artifact(reports: Sequence[Any], run_name: str) -> Optional[str]:
    """
    Create a table artifact for an organism report.

    Args:
        reports: OrganismReport rows, most reads first
        run_name: Name of the identification run (usually the output prefix)

    Returns:
        The artifact ID, or None when nothing was classified
    """
    if not reports:
        return None

    table = [
        {
            "Organism": r.organism,
            "Reads": str(r.reads_assigned),
            "Fraction": f"{r.fraction_of_classified:.4f}",
            "Detected": "✅" if r.detected else "❌",
        }
        for r in reports
    ]
    return create_table_artifact(
        key=_key("organism-report", run_name),
        table=table,
        description=f"Organism report for {run_name}",
    )


def create_eval_artifact(result: Any, run_name: str) -> str:
    """
    Create a markdown artifact summarising an evaluation against ground truth.

    Args:
        result: EvalResult of the run
        run_name: Name of the evaluated run

    Returns:
        The artifact ID
    """
    md = f"# 🎯 Evaluation: {run_name}\n\n"
    md += "| Organism | Truth reads | TP | FP | FN | Recall | Precision |\n"
    md += "|---|---:|---:|---:|---:|---:|---:|\n"
    for e in result.per_organism.values():
        md += (
            f"| {e.organism} | {e.truth_reads} | {e.true_positive} | {e.false_positive} "
            f"| {e.false_negative} | {e.recall:.4f} | {e.precision:.4f} |\n"
        )

    md += "\n## Detections\n\n"
    md += f"- **Detected**: {', '.join(sorted(result.detected_set)) or 'none'}\n"
    if result.fp_organisms:
        md += f"- 🚨 **False positive organisms**: {', '.join(sorted(result.fp_organisms))}\n"
    else:
        md += "- ✅ **No false positive organisms**\n"
    md += f"- **Unclassified reads**: {result.unclassified_count}\n"

    return create_markdown_artifact(
        key=_key("evaluation", run_name),
        markdown=md,
        description=f"Evaluation of {run_name}",
    )


def create_comparison_artifact(comparison: Any, run_name: str) -> str:
    """Markdown artifact for a filtered-versus-full comparison."""
    md = f"# ⚖️ Filtered vs Full: {run_name}\n\n"
    md += f"**Comparisons**: {comparison.full_comparisons:,} → {comparison.filtered_comparisons:,} "
    md += f"(ratio {comparison.counter_ratio:.4f})\n\n"

    md += "| Organism | Recall (full) | Recall (filtered) | Δ |\n"
    md += "|---|---:|---:|---:|\n"
    delta = comparison.recall_delta
    for organism, recall in comparison.recall_full.items():
        md += f"| {organism} | {recall:.4f} | {comparison.recall_filtered[organism]:.4f} | {delta[organism]:+.4f} |\n"

    if comparison.lost:
        md += f"\n⚠️ **Detections lost**: {', '.join(sorted(comparison.lost))}\n"
    if comparison.gained:
        md += f"\n🟡 **Detections gained**: {', '.join(sorted(comparison.gained))}\n"

    return create_markdown_artifact(
        key=_key("comparison", run_name),
        markdown=md,
        description=f"Filtered versus full comparison for {run_name}",
    )


def create_histogram_artifact(
    hist: List[Tuple[int, int]], db_name: str, bins: str = "log2", axis: str = "kmers"
) -> Optional[str]:
    if not hist:
        return None
    unit = "K-mers" if axis == "kmers" else "Rows"
    table = [{"Degree bin": str(lower), unit: str(count)} for lower, count in hist]
    return create_table_artifact(
        key=_key(f"degree-histogram-{axis}", db_name),
        table=table,
        description=f"{unit} per degree bin of {db_name} ({bins} bins)",
    )


def create_sweep_artifact(rows: List[Dict[str, Any]], run_name: str) -> Optional[str]:
    """Table artifact with one row per filter setting of a threshold sweep."""
    if not rows:
        return None
    table = [{column: str(value) for column, value in row.items()} for row in rows]
    return create_table_artifact(
        key=_key("threshold-sweep", run_name),
        table=table,
        description=f"Threshold sweep for {run_name}",
    )
