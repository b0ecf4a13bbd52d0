import logging

import numpy as np
import pytest

from obx.model.benchmarks import builtin_system
from obx.model.dae import LinearDae, SinusoidalSource

# Small circuits with a resistive path to ground from every node.
NETLIST_CORPUS = {
    "divider": "V1 1 0 SIN 1 0 1\nR1 1 2 1k\nR2 2 0 1k\n",
    "rc_series": "V1 1 0 SIN 1 0.5 1\nR1 1 2 1\nC1 2 0 1\n",
    "v_across_c": "V1 1 0 SIN 1 0 1\nC1 1 0 1\n",
    "rlc": "V1 1 0 SIN 1 0 1\nR1 1 2 1\nL1 2 3 0.1\nC1 3 0 0.5\nR2 3 0 2\n",
    "current_driven_rc": "I1 0 1 SIN 0.5 0.25 2\nR1 1 0 2\nC1 1 0 0.1\n",
}


def make_dae(C, G, b_c=None, b_s=None, omega=0.0) -> LinearDae:
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n = C.shape[0]
    b_c = np.zeros(n) if b_c is None else b_c
    b_s = np.zeros(n) if b_s is None else b_s
    return LinearDae(C=C, G=np.atleast_2d(np.asarray(G, dtype=float)), source=SinusoidalSource(b_c, b_s, omega))


@pytest.fixture
def scalar_decay():
    """x' = -x with no source."""
    return make_dae([[1.0]], [[1.0]])


@pytest.fixture(params=["ode", "index1", "index2", "index3", "algebraic"])
def benchmark(request):
    return builtin_system(request.param, seed=42)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _drop_cli_log_handlers():
    """configure_logging installs a stderr handler bound to the captured stream."""
    yield
    root = logging.getLogger()
    for handler in root.handlers[:]:
        if type(handler) is logging.StreamHandler:
            root.removeHandler(handler)
