"""
Módulo de configuración de escenarios.

Carga la configuración desde un único archivo YAML (ver
config/scenario.example.yaml) con las secciones:

1. scenario      - Nombre y descripción
2. inequality    - Preset, archivo o tabla inline
3. source        - Modelo de fuente (inline o `file:`)
4. program       - Programa de filtrado (inline o `file:`)
5. certification - N, K, k, r0, ε, workers, audit_runs
6. output        - Rutas de registros y reporte

`master_seed` es obligatoria (no hay semilla por reloj); `--seed` la
sobreescribe. Las rutas se resuelven relativas al archivo de
configuración. No hay sobreescritura por variables de entorno.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .bell_core import (
    BellInequality,
    Scenario,
    canonicalize,
    chsh_correlator_inequality,
    chsh_game_inequality,
)
from .certification import CertificationConfig
from .programs import FilterProgram, Periodic, program_from_dict
from .quantum_sim import SourceModel, source_model_from_dict

DEFAULT_CONFIG_PATH = Path("config/scenario.yaml")


@dataclass
class ConfigError(Exception):
    """Error al cargar o interpretar la configuración."""

    message: str
    details: Optional[str] = None

    def __str__(self) -> str:
        if self.details:
            return f"Config Error: {self.message} ({self.details})"
        return f"Config Error: {self.message}"


@dataclass
class ScenarioInfo:
    """Información del escenario."""
    name: str = "scenario"
    description: str = ""


@dataclass
class OutputConfig:
    """Rutas de salida (None = no escribir)."""
    records: Optional[Path] = None
    report: Optional[Path] = None


@dataclass
class ScenarioConfig:
    """Configuración completa de un escenario."""
    inequality: BellInequality
    source: SourceModel
    program: FilterProgram
    certification: CertificationConfig
    scenario: ScenarioInfo = field(default_factory=ScenarioInfo)
    output: OutputConfig = field(default_factory=OutputConfig)
    allow_unsafe: bool = False
    base_dir: Path = field(default_factory=lambda: Path("."))

    @property
    def master_seed(self) -> int:
        return self.certification.master_seed


def _load_yaml_config(config_path: Path) -> dict[str, Any]:
    """Carga configuración desde archivo YAML."""
    if not config_path.exists():
        raise ConfigError(message="archivo de configuración no encontrado", details=str(config_path))

    with open(config_path, "r", encoding="utf-8") as f:
        try:
            data = yaml.safe_load(f) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(message="YAML inválido", details=f"{config_path}: {exc}")
    if not isinstance(data, dict):
        raise ConfigError(message="la raíz del archivo debe ser un mapa", details=str(config_path))
    return data


def _resolve_file_ref(section: dict[str, Any], base_dir: Path) -> tuple[dict[str, Any], Path]:
    """Sigue una referencia `file:` y devuelve (contenido, directorio base del archivo)."""
    if "file" not in section:
        return section, base_dir
    path = base_dir / section["file"]
    if not path.exists():
        raise ConfigError(message="archivo referenciado no encontrado", details=str(path))
    return _load_yaml_config(path), path.parent


# =============================================================================
# Desigualdades
# =============================================================================

def parse_inequality(data: dict[str, Any], base_dir: Path = Path(".")) -> BellInequality:
    """
    Construye una desigualdad canónica desde la sección `inequality`.

    Formas aceptadas:
    - preset: chsh_game | chsh_correlator (settings_dist opcional para chsh_game)
    - file: archivo YAML con cualquiera de estas formas
    - inline: scenario {settings_a, settings_b, outcomes_a, outcomes_b},
      terms [[x, y, a, b, valor], ...], bound, settings_dist opcional

    Raises:
        ConfigError: Si faltan campos o los índices están fuera de rango
    """
    data, base_dir = _resolve_file_ref(data, base_dir)
    preset = data.get("preset")
    settings_dist = data.get("settings_dist")

    if preset == "chsh_game":
        return chsh_game_inequality(np.array(settings_dist, dtype=float) if settings_dist is not None else None)
    if preset == "chsh_correlator":
        raw = chsh_correlator_inequality()
        return canonicalize(raw.alpha, raw.bound_R, raw.settings_dist, raw.scenario, name=raw.name)
    if preset is not None:
        raise ConfigError(message=f"preset de desigualdad desconocido: {preset}", details="chsh_game | chsh_correlator")

    if "bound" not in data:
        raise ConfigError(message="la desigualdad inline necesita 'bound'")
    sc = data.get("scenario", {})
    scenario = Scenario(
        int(sc.get("settings_a", 2)),
        int(sc.get("settings_b", 2)),
        int(sc.get("outcomes_a", 2)),
        int(sc.get("outcomes_b", 2)),
    )
    alpha = np.zeros(scenario.shape)
    for term in data.get("terms", []):
        if len(term) != 5:
            raise ConfigError(message="cada término debe ser [x, y, a, b, valor]", details=repr(term)[:100])
        x, y, a, b = (int(v) for v in term[:4])
        if not all(0 <= i < limit for i, limit in zip((x, y, a, b), scenario.shape)):
            raise ConfigError(message="índice de término fuera del escenario", details=repr(term)[:100])
        alpha[x, y, a, b] += float(term[4])

    dist = np.array(settings_dist, dtype=float) if settings_dist is not None else None
    return canonicalize(alpha, float(data["bound"]), dist, scenario, name=str(data.get("name", "custom")))


def inequality_to_dict(ineq: BellInequality) -> dict[str, Any]:
    """Forma inline (terms no nulos) de una desigualdad, para escribir archivos."""
    terms = [
        [x, y, a, b, float(ineq.alpha[x, y, a, b])]
        for x, y, a, b in itertools.product(*(range(n) for n in ineq.scenario.shape))
        if ineq.alpha[x, y, a, b] != 0.0
    ]
    sc = ineq.scenario
    return {
        "name": ineq.name or "custom",
        "scenario": {
            "settings_a": sc.num_settings_a,
            "settings_b": sc.num_settings_b,
            "outcomes_a": sc.num_outcomes_a,
            "outcomes_b": sc.num_outcomes_b,
        },
        "terms": terms,
        "bound": ineq.bound_R,
        "settings_dist": ineq.settings_dist.tolist(),
    }


# =============================================================================
# Carga
# =============================================================================

def _parse_certification(section: dict[str, Any], master_seed: int) -> CertificationConfig:
    try:
        total = int(section["K"])
        return CertificationConfig(
            block_length_N=int(section["N"]),
            total_blocks_K=total,
            sampled_blocks_k=int(section.get("k", CertificationConfig.recommended_k(total))),
            violation_threshold_r0=float(section["r0"]),
            epsilon=float(section["epsilon"]),
            master_seed=master_seed,
            workers=int(section.get("workers", 1)),
            audit_runs=int(section.get("audit_runs", 0)),
        )
    except KeyError as exc:
        raise ConfigError(message="falta un campo en certification", details=str(exc))


def load_config(config_path: Optional[Path] = None, seed_override: Optional[int] = None) -> ScenarioConfig:
    """
    Carga la configuración de un escenario.

    Args:
        config_path: Ruta al YAML. Si no se especifica, config/scenario.yaml
        seed_override: Valor de --seed; reemplaza master_seed

    Returns:
        ScenarioConfig con todas las secciones construidas y validadas

    Raises:
        ConfigError: Archivo ausente, YAML inválido o campos obligatorios ausentes
        ValidationError / StateError / InequalityError: Parámetros inválidos
    """
    config_path = Path(config_path) if config_path is not None else DEFAULT_CONFIG_PATH
    yaml_config = _load_yaml_config(config_path)
    base_dir = config_path.parent

    # Semilla
    master_seed = seed_override if seed_override is not None else yaml_config.get("master_seed")
    if master_seed is None:
        raise ConfigError(message="master_seed es obligatoria", details="añádela al YAML o usa --seed")

    # Escenario
    scenario_yaml = yaml_config.get("scenario", {})
    scenario = ScenarioInfo(
        name=scenario_yaml.get("name", config_path.stem),
        description=scenario_yaml.get("description", ""),
    )

    # Desigualdad
    inequality = parse_inequality(yaml_config.get("inequality", {"preset": "chsh_game"}), base_dir)

    # Fuente
    if "source" not in yaml_config:
        raise ConfigError(message="falta la sección source")
    source_yaml, source_dir = _resolve_file_ref(yaml_config["source"], base_dir)
    source = source_model_from_dict(source_yaml, source_dir)

    # Programa
    program_yaml, _ = _resolve_file_ref(yaml_config.get("program", {"variant": Periodic.variant}), base_dir)
    program = program_from_dict(program_yaml)

    # Certificación
    if "certification" not in yaml_config:
        raise ConfigError(message="falta la sección certification")
    certification = _parse_certification(yaml_config["certification"], int(master_seed))

    # Salidas
    output_yaml = yaml_config.get("output", {})
    output = OutputConfig(
        records=base_dir / output_yaml["records"] if output_yaml.get("records") else None,
        report=base_dir / output_yaml["report"] if output_yaml.get("report") else None,
    )

    return ScenarioConfig(
        inequality=inequality,
        source=source,
        program=program,
        certification=certification,
        scenario=scenario,
        output=output,
        allow_unsafe=bool(program_yaml.get("unsafe", False)),
        base_dir=base_dir,
    )


# Instancia global de configuración (lazy loading)
_config: Optional[ScenarioConfig] = None


def get_config() -> ScenarioConfig:
    """Obtiene la configuración global (carga config/scenario.yaml la primera vez)."""
    global _config
    if _config is None:
        _config = load_config()
    return _config


def set_config(config: ScenarioConfig) -> None:
    """Fija la configuración global (la usa el CLI tras cargar --config)."""
    global _config
    _config = config


def reset_config() -> None:
    """Resetea la configuración (útil para testing)."""
    global _config
    _config = None
