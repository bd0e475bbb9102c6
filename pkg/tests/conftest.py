import sys

import numpy as np
import pytest

from tvpfx import dataio, synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_synthetic():
    """Synthetic raw panel ending 1996Q4 (short, for fast harness tests)."""
    return synthetic.generate(synthetic.SyntheticConfig(seed=7, end="1996Q4"))


@pytest.fixture(scope="session")
def small_panel(small_synthetic):
    return dataio.build_panel(small_synthetic.raw, small_synthetic.base_country)



def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, title, detail = results[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {title}  ({detail})")
