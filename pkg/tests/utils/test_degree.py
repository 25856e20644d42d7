"""
Tests for degree.py module.
"""

import io
import math

import numpy as np
import pytest

from utils.degree import (
    KEEP_ALL,
    DegreeTable,
    FilterSpec,
    cutoff_degree,
    histogram,
    histogram_values,
    keep_set,
    write_histogram,
)
from utils.errors import FilterError, InputError


@pytest.fixture
def twenty_kmers():
    """Ids 0..19 with degrees 1..20."""
    return DegreeTable.from_mapping({i: i + 1 for i in range(20)})


@pytest.fixture
def skewed():
    """Most k-mers rare, a few supernodes."""
    degrees = {i: 1 for i in range(10)}
    degrees.update({10: 2, 11: 2, 12: 3, 13: 50, 14: 100})
    return DegreeTable.from_mapping(degrees)


def test_from_mapping_sorts_ids():
    table = DegreeTable.from_mapping({7: 1, 3: 2})
    assert table.kmer_ids.tolist() == [3, 7]
    assert table.as_dict() == {3: 2, 7: 1}


def test_cutoff_bottom_and_top(twenty_kmers):
    assert cutoff_degree(twenty_kmers, 0.10, "bottom") == 2
    assert cutoff_degree(twenty_kmers, 0.15, "bottom") == 3
    assert cutoff_degree(twenty_kmers, 0.15, "top") == 18


def test_bottom_ten_percent(twenty_kmers):
    assert keep_set(twenty_kmers, FilterSpec(0.10, 0.0)) == {0, 1}


def test_two_sided_is_union_of_halves(twenty_kmers):
    both = keep_set(twenty_kmers, FilterSpec(0.15, 0.15))
    bottom = keep_set(twenty_kmers, FilterSpec(0.15, 0.0))
    top = keep_set(twenty_kmers, FilterSpec(0.0, 0.15))
    assert both == bottom | top
    assert both == {0, 1, 2, 17, 18, 19}


def test_keep_all(twenty_kmers):
    assert keep_set(twenty_kmers, KEEP_ALL) == set(range(20))
    assert KEEP_ALL.keeps_all


def test_ties_at_cutoff_are_kept_whole(skewed):
    # 10% of 15 k-mers is position 2, degree 1; all ten degree-1 k-mers are kept
    assert keep_set(skewed, FilterSpec(0.10, 0.0)) == set(range(10))


def test_mass_basis_counts_occurrences(skewed):
    # total mass 167; 10% = 16.7 reached within degree <= 3 from the bottom
    assert cutoff_degree(skewed, 0.10, "bottom", basis="mass") == 3
    assert cutoff_degree(skewed, 0.10, "top", basis="mass") == 100


def test_keep_set_is_monotone_in_fraction(skewed):
    previous = set()
    for fraction in (0.05, 0.1, 0.3, 0.6, 1.0):
        current = keep_set(skewed, FilterSpec(fraction, 0.0))
        assert previous <= current
        previous = current


@pytest.mark.parametrize(
    "kwargs",
    [
        {"bottom_fraction": -0.1},
        {"top_fraction": 1.5},
        {"bottom_fraction": 0.6, "top_fraction": 0.6},
        {"basis": "weight"},
        {"degree_mode": "mixed"},
    ],
)
def test_invalid_filter_specs(kwargs):
    with pytest.raises(FilterError):
        FilterSpec(**kwargs)


def test_cutoff_of_empty_table():
    with pytest.raises(FilterError):
        cutoff_degree(DegreeTable.from_mapping({}), 0.1, "bottom")


def test_describe():
    assert KEEP_ALL.describe() == "keep-all"
    assert FilterSpec(0.15, 0.15).describe() == "bottom 0.15 + top 0.15 (types, presence)"


def test_histogram_log2_bins(skewed):
    assert histogram(skewed) == [(1, 10), (2, 3), (32, 1), (64, 1)]


def test_histogram_unit_bins(skewed):
    assert histogram(skewed, bins="unit") == [(1, 10), (2, 2), (3, 1), (50, 1), (100, 1)]


def test_histogram_counts_sum_to_distinct_kmers(skewed):
    assert sum(count for _, count in histogram(skewed)) == len(skewed)


def test_write_histogram_tsv():
    out = io.StringIO()
    write_histogram([(1, 2)], out)
    assert out.getvalue() == "degree_bin\tcount\n1\t2\n"


def test_restrict(twenty_kmers):
    restricted = twenty_kmers.restrict(np.array([5, 1]))
    assert restricted.as_dict() == {1: 2, 5: 6}


@pytest.fixture
def five_kmers():
    """a..e as ids 0..4 with degrees 1, 1, 2, 5, 100."""
    return DegreeTable.from_mapping({0: 1, 1: 1, 2: 2, 3: 5, 4: 100})


def test_five_kmer_cutoffs(five_kmers):
    assert cutoff_degree(five_kmers, 0.40, "bottom") == 1
    assert cutoff_degree(five_kmers, 0.20, "top") == 100
    assert cutoff_degree(five_kmers, 1.0, "bottom") == 100


def test_five_kmer_keep_sets(five_kmers):
    assert keep_set(five_kmers, FilterSpec(0.40, 0.0)) == {0, 1}
    assert keep_set(five_kmers, FilterSpec(0.0, 0.20)) == {4}
    assert keep_set(five_kmers, FilterSpec(1.0, 0.0)) == {0, 1, 2, 3, 4}
    assert keep_set(five_kmers, KEEP_ALL) == {0, 1, 2, 3, 4}


@pytest.mark.parametrize("side", ["bottom", "top"])
def test_one_sided_keep_set_covers_requested_fraction(side):
    rng = np.random.default_rng(31)
    for _ in range(200):
        m = int(rng.integers(1, 300))
        table = DegreeTable(np.arange(m, dtype=np.int64), rng.geometric(0.3, size=m).astype(np.int64))
        fraction = float(rng.uniform(0.01, 1.0))
        spec = FilterSpec(fraction, 0.0) if side == "bottom" else FilterSpec(0.0, fraction)
        assert len(keep_set(table, spec)) >= math.ceil(fraction * m - 1e-9)


def test_histogram_of_empty_table():
    assert histogram(DegreeTable.from_mapping({})) == []
    assert histogram(DegreeTable.from_mapping({}), bins="unit") == []


def test_log2_histogram_matches_recount():
    rng = np.random.default_rng(37)
    for _ in range(100):
        m = int(rng.integers(1, 500))
        degrees = rng.integers(1, 10_000, size=m)
        hist = histogram(DegreeTable(np.arange(m, dtype=np.int64), degrees.astype(np.int64)))
        assert sum(count for _, count in hist) == m
        for lower, count in hist:
            assert lower & (lower - 1) == 0
            assert count == int(np.count_nonzero((degrees >= lower) & (degrees < 2 * lower)))


def test_histogram_values_bins_zero_separately():
    assert histogram_values(np.array([0, 0, 1, 3, 4])) == [(0, 2), (1, 1), (2, 1), (4, 1)]
    assert histogram_values(np.array([0, 3, 3]), bins="unit") == [(0, 1), (3, 2)]
    with pytest.raises(InputError):
        histogram_values(np.array([-1]))
