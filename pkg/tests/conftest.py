import numpy as np
import pytest
from scipy import stats

from interchange_lab.rng import StreamKey


def chi2_pvalue(observed, expected_probs, min_expected=5.0):
    """Pearson chi-square p-value, pooling bins in order until each expects at least ``min_expected``."""
    obs = np.asarray(observed, dtype=float)
    p = np.asarray(expected_probs, dtype=float)
    p = p / p.sum()
    exp = p * obs.sum()
    o_bins, e_bins = [], []
    o_acc = e_acc = 0.0
    for o, e in zip(obs, exp):
        o_acc += o
        e_acc += e
        if e_acc >= min_expected:
            o_bins.append(o_acc)
            e_bins.append(e_acc)
            o_acc = e_acc = 0.0
    if e_acc > 0 or o_acc > 0:
        o_bins[-1] += o_acc
        e_bins[-1] += e_acc
    return float(stats.chisquare(o_bins, e_bins).pvalue)


@pytest.fixture
def key():
    return StreamKey(12345, "tests")


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
