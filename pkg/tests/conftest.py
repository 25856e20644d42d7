"""
Pytest configuration and shared fixtures for all tests.
"""

import pytest
import sys
from pathlib import Path

# Add src directory to Python path
src_dir = Path(__file__).parent.parent / "src"
sys.path.insert(0, str(src_dir))

from prefect.testing.utilities import prefect_test_harness  # noqa: E402

from tasks.refdb import build  # noqa: E402
from utils.seqio import Read  # noqa: E402


@pytest.fixture(autouse=True, scope="session")
def prefect_backend():
    """Run every flow and task against a temporary Prefect database."""
    with prefect_test_harness():
        yield


@pytest.fixture(autouse=True)
def fixed_build_time(monkeypatch):
    """Pin reference-db timestamps so saved files are byte-comparable."""
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")


@pytest.fixture
def plgtk_db():
    """The two-k-mer protein toy db: PLGTK -> {PLGT, LGTK}."""
    return build([Read("toy", "PLGTK")], {"toy": "toyorg"}, input_kind="protein", built_at=0)


@pytest.fixture
def protein_db():
    """Small protein db with shared and private k-mers over three organisms."""
    references = [
        Read("a1", "MKTAYIAKQRQISFVKSHFSRQ"),
        Read("a2", "MKTAYIAKQRQWWLLPPGG"),
        Read("b1", "MKTAYDEHHGGCCNNPLGTK"),
        Read("c1", "WYVRTSQPNMLKIHGFEDCA"),
    ]
    organisms = {"a1": "alpha", "a2": "alpha", "b1": "beta", "c1": "gamma"}
    return build(references, organisms, input_kind="protein", built_at=0)
