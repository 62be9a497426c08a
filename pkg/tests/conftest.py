import numpy as np
import pytest

from tofdepth.model import NetworkConfig
from tofdepth.synthetic import SceneSpec, generate_synthetic_scene


def pytest_configure(config):
    config._criterion_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the acceptance verdicts after capture ends so they always show."""
    lines = getattr(config, "_criterion_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def tiny_config():
    """Two residual blocks (one per group), small widths, full 15x15 input."""
    return NetworkConfig(groups=((1, 4, False), (1, 6, True)), seed=3)


@pytest.fixture
def plane_scene():
    return generate_synthetic_scene(SceneSpec(shape="plane"), seed=5)


@pytest.fixture
def sphere_scene():
    return generate_synthetic_scene(SceneSpec(shape="sphere"), seed=6)
