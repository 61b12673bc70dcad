"""
Pytest configuration and fixtures for the nonlocality certification tests.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Generator
from unittest.mock import patch

import pytest

from src.bell_core import BellInequality, GDecomposition, chsh_game_inequality, decompose
from src.certification import CertificationConfig
from src.config import reset_config
from src.programs import Periodic
from src.quantum_sim import DensityMatrix, IIDQuantum, PeriodicQuantum, SettingsSampler


@pytest.fixture(autouse=True)
def mock_env() -> Generator[None, None, None]:
    """Set up test environment variables and a clean global config."""
    env_vars = {
        "LOG_LEVEL": "WARNING",
        "LOG_FORMAT": "console",
    }
    reset_config()
    with patch.dict(os.environ, env_vars, clear=False):
        yield
    reset_config()


@pytest.fixture
def chsh() -> BellInequality:
    """CHSH game inequality, uniform settings, R = 3/4."""
    return chsh_game_inequality()


@pytest.fixture
def chsh_decomposition(chsh: BellInequality) -> GDecomposition:
    return decompose(chsh)


@pytest.fixture
def uniform_sampler() -> SettingsSampler:
    return SettingsSampler.uniform()


@pytest.fixture
def alternating_source() -> PeriodicQuantum:
    """Ψ+ on odd rounds, (I − |Ψ+⟩⟨Ψ+|)/3 on even rounds."""
    return PeriodicQuantum(states=(DensityMatrix.psi_plus(), DensityMatrix.psi_plus_complement()))


@pytest.fixture
def mixed_source() -> IIDQuantum:
    return IIDQuantum.of(DensityMatrix.maximally_mixed())


@pytest.fixture
def odd_rounds() -> Periodic:
    return Periodic(period=2, phase=1)


@pytest.fixture
def simple_config() -> CertificationConfig:
    """Parameters of the alternating-source example."""
    return CertificationConfig(
        block_length_N=1000,
        total_blocks_K=100,
        sampled_blocks_k=10,
        violation_threshold_r0=0.05,
        epsilon=0.02,
        master_seed=20240101,
    )


SCENARIO_YAML = """\
master_seed: 20240101

scenario:
  name: "test_scenario"

inequality:
  file: "inequalities/chsh_game.yaml"

source:
  variant: "periodic_quantum"
  states: ["psi_plus", "psi_plus_complement"]
  measurements: "tsirelson"

program:
  variant: "periodic"
  period: 2
  phase: 1

certification:
  N: 200
  K: 16
  k: 4
  r0: 0.02
  epsilon: 0.01

output:
  records: "records.txt"
"""

CHSH_GAME_YAML = """\
name: chsh_game
scenario: {settings_a: 2, settings_b: 2, outcomes_a: 2, outcomes_b: 2}
terms:
  - [0, 0, 0, 0, 0.25]
  - [0, 0, 1, 1, 0.25]
  - [0, 1, 0, 0, 0.25]
  - [0, 1, 1, 1, 0.25]
  - [1, 0, 0, 0, 0.25]
  - [1, 0, 1, 1, 0.25]
  - [1, 1, 0, 1, 0.25]
  - [1, 1, 1, 0, 0.25]
bound: 0.75
"""


@pytest.fixture
def scenario_dir(tmp_path: Path) -> Path:
    """Directorio con scenario.yaml e inequalities/chsh_game.yaml."""
    (tmp_path / "inequalities").mkdir()
    (tmp_path / "inequalities" / "chsh_game.yaml").write_text(CHSH_GAME_YAML, encoding="utf-8")
    (tmp_path / "scenario.yaml").write_text(SCENARIO_YAML, encoding="utf-8")
    return tmp_path


@pytest.fixture
def scenario_path(scenario_dir: Path) -> Path:
    return scenario_dir / "scenario.yaml"
