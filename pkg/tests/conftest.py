import numpy as np
import pytest
from hypothesis import settings

from pdecast.series import TimeSeries

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def make_series(t, y, *xs, names=None):
    xs = np.vstack(xs) if xs else np.zeros((0, len(t)))
    if names is None:
        names = ("y",) + (("x",) if len(xs) == 1 else tuple(f"x{j + 1}" for j in range(len(xs))))
    return TimeSeries(np.asarray(t, float), np.asarray(y, float), xs, names)


@pytest.fixture
def write_csv(tmp_path):
    def _write(text, name="s.csv"):
        p = tmp_path / name
        p.write_text(text)
        return p
    return _write


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
