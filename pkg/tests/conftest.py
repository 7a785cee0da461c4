import hashlib
import json

import pytest

from fourier_bounds.heston import HestonParams, MarketContext, OptionSpec
from fourier_bounds.pipeline import read_dataset, write_dataset

# Worked example: put, K=90, S0=100, r=0.1, T=0.7
WORKED_PARAMS = HestonParams(0.6067, 0.0707, 0.2928, -0.7571, 0.0654)
WORKED_MKT = MarketContext(100.0, 0.1)
WORKED_PUT = OptionSpec(90.0, 0.7, "put")
WORKED_PRICE = 2.773954


_ACCEPTANCE_LINES = []


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running desk-scale checks")


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def verdict(capsys):
    """Print one PASS/FAIL line for an acceptance criterion, then assert it."""

    def report(number, title, ok, detail=""):
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title}" + (f" ({detail})" if detail else "")
        _ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return report


@pytest.fixture(scope="session")
def dataset_cache(request):
    """Datasets that take minutes to build are stored in the pytest cache,
    keyed by the generating arguments, and rebuilt when missing."""
    root = request.config.cache.mkdir("fourier_bounds_datasets")

    def get(name, builder, **key):
        digest = hashlib.sha1(json.dumps(key, sort_keys=True).encode()).hexdigest()[:12]
        path = root / f"{name}-{digest}.csv"
        if path.exists():
            return read_dataset(path)
        samples = builder()
        write_dataset(samples, path)
        # read back so the cached and fresh paths see identical values
        return read_dataset(path)

    return get
