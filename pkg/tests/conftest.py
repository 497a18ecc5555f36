import numpy as np
import pytest

from reslstm.network import NetworkConfig, build_network
from reslstm.numerics import SeededStream


def make_net(kind="plain", layers=1, N=3, K=2, M=2, C=3, seed=0, scale=0.5, shortcut="auto"):
    cfg = NetworkConfig(cell_kind=kind, layers=layers, cell_size=N, output_size=M, input_dim=K,
                        num_classes=C, seed=seed, init_scale=scale, forget_bias=0.0, shortcut=shortcut)
    return build_network(cfg)


def random_sequence(T, K, C, seed=0):
    rng = SeededStream(seed, 99)
    return rng.normal((T, K)), rng.integers(C, T)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed after the run whether or not output is captured
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
