"""
Políticas de programas de filtrado.

Este módulo decide qué programas pueden seleccionar rondas para una
certificación, cuáles se permiten solo para demostraciones y cuáles
quedan bloqueados.

Dependencia respecto de los settings:
- STRUCTURAL: la salida depende solo de N y del índice de ronda
- DECLARED: declarado independiente, pero lee el g-string
- DEPENDENT: puede depender de los settings a través de g (CheatingEcho)
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, Optional

import structlog

logger = structlog.get_logger(__name__)


class SettingsDependence(Enum):
    """Grado de dependencia de un programa respecto de los settings."""
    STRUCTURAL = "structural"
    DECLARED = "declared"
    DEPENDENT = "dependent"


class ProgramAction(Enum):
    """Acciones posibles para un programa."""
    ALLOW = "allow"
    ALLOW_WITH_AUDIT = "audit"
    BLOCK = "block"


@dataclass
class ProgramPolicyError(Exception):
    """Programa rechazado por la política de settings-blindness."""

    message: str
    program: Optional[str] = None

    def __str__(self) -> str:
        if self.program:
            return f"{self.message} ({self.program})"
        return self.message


# =============================================================================
# Funciones de política
# =============================================================================

def get_settings_dependence(prog: Any) -> SettingsDependence:
    """
    Clasifica un programa.

    Args:
        prog: FilterProgram (se usan `declared_settings_blind` y `reads_g`)

    Returns:
        Dependencia respecto de los settings
    """
    if not prog.declared_settings_blind:
        return SettingsDependence.DEPENDENT
    if prog.reads_g:
        return SettingsDependence.DECLARED
    return SettingsDependence.STRUCTURAL


def get_program_policy(prog: Any) -> tuple[SettingsDependence, ProgramAction]:
    """
    Obtiene la política para un programa.

    Returns:
        Tupla (dependencia, acción)
    """
    dependence = get_settings_dependence(prog)

    # Los programas no declarados independientes nunca certifican
    if dependence is SettingsDependence.DEPENDENT:
        return (dependence, ProgramAction.BLOCK)

    # Declarados pero leyendo g: se exige la auditoría estadística
    if dependence is SettingsDependence.DECLARED:
        return (dependence, ProgramAction.ALLOW_WITH_AUDIT)

    return (dependence, ProgramAction.ALLOW)


def is_program_blocked(prog: Any, allow_unsafe: bool = False) -> bool:
    """
    Verifica si un programa está bloqueado para su ejecución.

    Un programa dependiente solo puede ejecutarse (p. ej. para una
    demostración negativa o una auditoría) con el flag unsafe explícito.

    Args:
        prog: Programa a evaluar
        allow_unsafe: Flag unsafe de la configuración

    Returns:
        True si el programa está bloqueado
    """
    _, action = get_program_policy(prog)
    if action is not ProgramAction.BLOCK:
        return False
    return not allow_unsafe


def require_runnable(prog: Any, allow_unsafe: bool = False) -> None:
    """
    Raises:
        ProgramPolicyError: Si el programa está bloqueado
    """
    if is_program_blocked(prog, allow_unsafe):
        logger.warning("program_blocked", program=prog.variant, stage="run")
        raise ProgramPolicyError(message="program not settings-blind", program=prog.variant)


def require_certifiable(prog: Any) -> None:
    """
    Verifica que un programa pueda usarse en una certificación.

    El flag unsafe no tiene efecto aquí: un programa dependiente queda
    excluido de la certificación en cualquier caso.

    Raises:
        ProgramPolicyError: Si el programa no es settings-blind
    """
    dependence, action = get_program_policy(prog)
    if action is ProgramAction.BLOCK:
        logger.warning("program_blocked", program=prog.variant, stage="certify", dependence=dependence.value)
        raise ProgramPolicyError(message="program not settings-blind", program=prog.variant)


def requires_audit(prog: Any) -> bool:
    """True si la certificación debe auditar el programa antes de usarlo."""
    _, action = get_program_policy(prog)
    return action is ProgramAction.ALLOW_WITH_AUDIT


def log_program_use(
    prog: Any,
    stage: str,
    *,
    params: Optional[dict] = None,
    result_summary: Optional[str] = None,
    error: Optional[str] = None,
) -> None:
    """
    Registra el uso de un programa para auditoría.

    Args:
        prog: Programa utilizado
        stage: Etapa del pipeline (simulate, certify, audit, ...)
        params: Parámetros (los strings largos se truncan)
        result_summary: Resumen del resultado
        error: Error si ocurrió
    """
    dependence, action = get_program_policy(prog)

    log_data: dict[str, Any] = {
        "program": prog.variant,
        "stage": stage,
        "dependence": dependence.value,
        "action": action.value,
        "params": _truncate_params(params) if params else {},
    }

    if result_summary:
        log_data["result"] = result_summary

    if error:
        log_data["error"] = error
        logger.warning("program_use_failed", **log_data)
    else:
        logger.info("program_used", **log_data)


def _truncate_params(params: dict) -> dict:
    """Trunca valores largos (p. ej. d-strings completos) para el log."""
    MAX_VALUE_LENGTH = 100

    filtered = {}
    for key, value in params.items():
        if isinstance(value, str) and len(value) > MAX_VALUE_LENGTH:
            filtered[key] = value[:MAX_VALUE_LENGTH] + "..."
        else:
            filtered[key] = value
    return filtered
