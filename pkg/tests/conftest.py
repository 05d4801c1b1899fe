import numpy as np
import pytest

from nnlsm import network as nn
from nnlsm.lsm import LsmConfig


def constant_net(values, n_inputs=1):
    """Network whose output is ``values`` for every input."""
    values = np.atleast_1d(np.asarray(values, dtype=float))
    sizes = (n_inputs, values.size)
    params = np.concatenate([np.zeros(n_inputs * values.size), values])
    return nn.Network(sizes, params)


@pytest.fixture
def quick_lsm():
    return LsmConfig(n_outer_paths=10_000, m_inner=8, seed=3)




def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)
