"""Shared fixtures for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from wsn_detect.model import ChannelConfig, EnergyMatrix, ModelConfig


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator so every test is reproducible."""
    return np.random.default_rng(42)


@pytest.fixture
def channel_config() -> ChannelConfig:
    return ChannelConfig()


@pytest.fixture
def model_config() -> ModelConfig:
    return ModelConfig(
        num_nodes=4,
        samples_per_window=50,
        num_windows=20,
        noise_power=2.0e-14,
        symbol_energy=1.0e-12,
        seed=7,
    )


def energy_matrix(values, m: int = 50) -> EnergyMatrix:
    """Wrap a plain array as measurement data."""
    return EnergyMatrix(values=np.asarray(values, dtype=float), samples_per_window=m)


_SCOREBOARD: list[str] = []


@pytest.fixture(scope="session")
def scoreboard():
    """Sink for one-line verdicts echoed after the terminal summary."""
    return _SCOREBOARD.append


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _SCOREBOARD:
        terminalreporter.section("acceptance scoreboard")
        for line in _SCOREBOARD:
            terminalreporter.write_line(line)
