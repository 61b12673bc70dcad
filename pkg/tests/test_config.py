"""Tests de carga de escenarios YAML."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
import yaml

from src.bell_core import chsh_game_inequality
from src.config import (
    ConfigError,
    get_config,
    inequality_to_dict,
    load_config,
    parse_inequality,
    reset_config,
    set_config,
)
from src.programs import Periodic
from src.quantum_sim import PeriodicQuantum, StateError

REPO_CONFIG = Path(__file__).resolve().parent.parent / "config"


class TestLoadConfig:
    def test_loads_scenario(self, scenario_path: Path) -> None:
        config = load_config(scenario_path)
        assert config.master_seed == 20240101
        assert config.scenario.name == "test_scenario"
        assert config.inequality.bound_R == pytest.approx(0.75)
        assert isinstance(config.source, PeriodicQuantum)
        assert config.program == Periodic(2, 1)
        assert config.certification.block_length_N == 200
        assert config.output.records == scenario_path.parent / "records.txt"
        assert config.output.report is None
        assert not config.allow_unsafe

    def test_seed_override(self, scenario_path: Path) -> None:
        assert load_config(scenario_path, seed_override=7).master_seed == 7

    def test_missing_file(self, tmp_path: Path) -> None:
        with pytest.raises(ConfigError, match="no encontrado"):
            load_config(tmp_path / "missing.yaml")

    def test_master_seed_is_required(self, scenario_path: Path) -> None:
        data = yaml.safe_load(scenario_path.read_text())
        del data["master_seed"]
        scenario_path.write_text(yaml.safe_dump(data))
        with pytest.raises(ConfigError, match="master_seed"):
            load_config(scenario_path)

    def test_missing_certification_field(self, scenario_path: Path) -> None:
        data = yaml.safe_load(scenario_path.read_text())
        del data["certification"]["r0"]
        scenario_path.write_text(yaml.safe_dump(data))
        with pytest.raises(ConfigError, match="certification"):
            load_config(scenario_path)

    def test_default_k_is_recommended(self, scenario_path: Path) -> None:
        data = yaml.safe_load(scenario_path.read_text())
        del data["certification"]["k"]
        scenario_path.write_text(yaml.safe_dump(data))
        assert load_config(scenario_path).certification.sampled_blocks_k == 4

    def test_invalid_yaml(self, tmp_path: Path) -> None:
        path = tmp_path / "broken.yaml"
        path.write_text("master_seed: [1, 2\n")
        with pytest.raises(ConfigError, match="YAML"):
            load_config(path)

    def test_missing_state_file(self, scenario_path: Path) -> None:
        data = yaml.safe_load(scenario_path.read_text())
        data["source"]["states"] = [{"file": "states/nope.yaml"}]
        scenario_path.write_text(yaml.safe_dump(data))
        with pytest.raises(StateError, match="no encontrado"):
            load_config(scenario_path)

    def test_unsafe_flag(self, scenario_path: Path) -> None:
        data = yaml.safe_load(scenario_path.read_text())
        data["program"] = {"variant": "cheating_echo", "unsafe": True}
        scenario_path.write_text(yaml.safe_dump(data))
        assert load_config(scenario_path).allow_unsafe

    @pytest.mark.parametrize("name", ["simple_example.yaml", "mixed_iid.yaml", "scenario.example.yaml"])
    def test_shipped_configs_load(self, name: str) -> None:
        config = load_config(REPO_CONFIG / name)
        assert config.inequality.bound_R == pytest.approx(0.75)


class TestInequalitySection:
    def test_presets(self) -> None:
        assert parse_inequality({"preset": "chsh_game"}).bound_R == pytest.approx(0.75)
        assert parse_inequality({"preset": "chsh_correlator"}).bound_R == pytest.approx(10.0)
        with pytest.raises(ConfigError, match="preset"):
            parse_inequality({"preset": "i3322"})

    def test_inline_round_trip(self) -> None:
        original = chsh_game_inequality()
        parsed = parse_inequality(inequality_to_dict(original))
        assert np.allclose(parsed.alpha, original.alpha)
        assert parsed.bound_R == original.bound_R

    def test_inline_negative_terms_are_canonicalized(self) -> None:
        data = {"terms": [[0, 0, 0, 0, -1.0], [0, 0, 1, 1, 1.0]], "bound": 0.0}
        ineq = parse_inequality(data)
        assert ineq.is_canonical
        assert ineq.bound_R == pytest.approx(1.0)

    def test_inline_errors(self) -> None:
        with pytest.raises(ConfigError, match="bound"):
            parse_inequality({"terms": []})
        with pytest.raises(ConfigError, match="fuera del escenario"):
            parse_inequality({"terms": [[2, 0, 0, 0, 1.0]], "bound": 1.0})
        with pytest.raises(ConfigError, match="término"):
            parse_inequality({"terms": [[0, 0, 0, 1.0]], "bound": 1.0})


class TestGlobalConfig:
    def test_set_and_reset(self, scenario_path: Path) -> None:
        config = load_config(scenario_path)
        set_config(config)
        assert get_config() is config
        reset_config()
        with pytest.raises(ConfigError):
            get_config()
