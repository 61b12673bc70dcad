"""
Procedimiento de certificación de no localidad con fuentes no i.i.d.

Pasos:
1. Se genera un bloque inicial de N rondas con settings i.i.d.
2. El programa de filtrado calcula d a partir de g (sin ver los settings)
3. Se exige que el substring viole la desigualdad por r0:
   LHS >= (R + r0)·N′; si no, se aborta (reporte rechazado)
4. Se generan K bloques más y se eligen k al azar sin reemplazo
5. Se acepta si k_good/k >= R/(R + r0) + ε

El bound de los K − k bloques no testeados sale del lema de muestreo:
(k_good/k − ε)(K − k)(R + r0)·N′ >= (K − k)·N′·R, peor caso LHS = 0
para los bloques que no son buenos.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Optional, Sequence

import structlog
import yaml

from .bell_core import (
    VIOLATION_MARGIN,
    BellInequality,
    EmptySelectionError,
    RunBlock,
    canonicalize,
    decompose,
    is_uniform_chsh_game,
    subset_lhs,
)
from .bounds import corrected_bound
from .program_policies import log_program_use, require_certifiable, requires_audit
from .programs import (
    MIN_AUDIT_SAMPLES,
    AuditError,
    AuditReport,
    FilterProgram,
    apply_program,
    audit_program,
    description_length,
)
from .quantum_sim import (
    SettingsSampler,
    SourceModel,
    audit_seed,
    sample_indexed_block,
    sampling_rng,
)
from .validation import (
    ValidationError,
    validate_open_unit_interval,
    validate_positive_int,
    validate_positive_real,
    validate_seed,
)

logger = structlog.get_logger(__name__)

# Tolerancia relativa de las comparaciones de umbral (k_good/k vs umbral)
THRESHOLD_REL_TOL = 1e-12

COMPLEXITY_CAVEAT = (
    "M es la longitud del codec fijo: cota superior de la complejidad de d, "
    "el bound corregido solo es válido si M no subestima la información de d"
)


# =============================================================================
# Excepciones
# =============================================================================

@dataclass
class InfeasibleConfigurationError(Exception):
    """Configuración con la que la aceptación es imposible o el muestreo degenera."""

    message: str
    details: Optional[str] = None

    def __str__(self) -> str:
        if self.details:
            return f"Infeasible Configuration: {self.message} ({self.details})"
        return f"Infeasible Configuration: {self.message}"


# =============================================================================
# Configuración
# =============================================================================

@dataclass(frozen=True)
class CertificationConfig:
    """Parámetros del procedimiento; se recomienda k ≈ ⌈√K⌉."""

    block_length_N: int
    total_blocks_K: int
    sampled_blocks_k: int
    violation_threshold_r0: float
    epsilon: float
    master_seed: int
    workers: int = 1
    audit_runs: int = 0

    def __post_init__(self) -> None:
        validate_positive_int(self.block_length_N, "block_length_N")
        validate_positive_int(self.total_blocks_K, "total_blocks_K")
        validate_positive_int(self.sampled_blocks_k, "sampled_blocks_k")
        validate_positive_real(self.violation_threshold_r0, "violation_threshold_r0")
        validate_open_unit_interval(self.epsilon, "epsilon")
        validate_seed(self.master_seed, "master_seed")
        validate_positive_int(self.workers, "workers")
        validate_positive_int(self.audit_runs, "audit_runs", minimum=0)
        if self.sampled_blocks_k >= self.total_blocks_K:
            raise InfeasibleConfigurationError(
                message="k debe ser menor que K (no quedarían bloques sin testear)",
                details=f"k = {self.sampled_blocks_k}, K = {self.total_blocks_K}",
            )

    @staticmethod
    def recommended_k(total_blocks: int) -> int:
        return math.ceil(math.sqrt(total_blocks))

    def with_seed(self, master_seed: int) -> "CertificationConfig":
        values = dict(self.__dict__)
        values["master_seed"] = master_seed
        return CertificationConfig(**values)

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


# =============================================================================
# Veredictos
# =============================================================================

@dataclass(frozen=True)
class BlockVerdict:
    """Resultado del test de un bloque."""

    index: int
    lhs: float
    n_prime: int
    violated: bool
    degenerate: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "lhs": self.lhs,
            "n_prime": self.n_prime,
            "violated": self.violated,
            "degenerate": self.degenerate,
        }


@dataclass(frozen=True)
class UntestedBound:
    """Bound del lema de muestreo sobre los K − k bloques no testeados."""

    lower_bound_lhs: float
    required_lhs: float
    holds: bool


@dataclass(frozen=True)
class ComplexityCheck:
    """Bound LHV corregido por la complejidad M del d-string del bloque inicial."""

    description_length: int
    codec: str
    corrected_bound: float
    initial_lhs: float
    exceeds_corrected_bound: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "M": self.description_length,
            "codec": self.codec,
            "corrected_bound": self.corrected_bound,
            "initial_lhs": self.initial_lhs,
            "exceeds_corrected_bound": self.exceeds_corrected_bound,
            "caveat": COMPLEXITY_CAVEAT,
        }


@dataclass(frozen=True)
class CertificationReport:
    """Reporte completo de una ejecución del procedimiento."""

    config: CertificationConfig
    inequality: str
    bound_R: float
    program: dict[str, Any]
    initial: BlockVerdict
    sampled: tuple[BlockVerdict, ...]
    k_good: int
    threshold: float
    untested: Optional[UntestedBound]
    accepted: bool
    confidence: float
    aborted: bool = False
    complexity: Optional[ComplexityCheck] = None
    audit: Optional[dict[str, Any]] = None

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "config": self.config.to_dict(),
            "inequality": self.inequality,
            "bound_R": self.bound_R,
            "program": self.program,
            "initial_block": self.initial.to_dict(),
            "aborted": self.aborted,
            "sampled_blocks": [v.to_dict() for v in self.sampled],
            "k_good": self.k_good,
            "threshold": self.threshold,
        }
        if self.untested is not None:
            data["untested_bound"] = {
                "lower_bound_lhs": self.untested.lower_bound_lhs,
                "required_lhs": self.untested.required_lhs,
                "holds": self.untested.holds,
            }
        if self.complexity is not None:
            data["complexity"] = self.complexity.to_dict()
        if self.audit is not None:
            data["audit"] = self.audit
        data["accepted"] = self.accepted
        data["confidence"] = self.confidence
        return data

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, allow_unicode=True)

    @property
    def exit_code(self) -> int:
        return 0 if self.accepted else 2


# =============================================================================
# Operaciones
# =============================================================================

def _at_least(value: float, target: float) -> bool:
    return value >= target or math.isclose(value, target, rel_tol=THRESHOLD_REL_TOL, abs_tol=THRESHOLD_REL_TOL)


def acceptance_threshold(bound_R: float, r0: float, epsilon: float) -> float:
    """
    Umbral de aceptación R/(R + r0) + ε.

    Raises:
        ValidationError: Si R <= 0, r0 <= 0 o ε < 0
        InfeasibleConfigurationError: Si el umbral es >= 1
    """
    bound_R = validate_positive_real(bound_R, "R")
    r0 = validate_positive_real(r0, "r0")
    if epsilon < 0:
        raise ValidationError(param="epsilon", message="epsilon no puede ser negativo", expected=">= 0", received=epsilon)

    threshold = bound_R / (bound_R + r0) + epsilon
    if threshold >= 1.0:
        raise InfeasibleConfigurationError(
            message="umbral de aceptación >= 1, la aceptación es imposible",
            details=f"R = {bound_R}, r0 = {r0}, ε = {epsilon}, umbral = {threshold:.6f}",
        )
    return threshold


def untested_bound(
    k_good: int,
    k: int,
    epsilon: float,
    total_blocks: int,
    bound_R: float,
    r0: float,
    n_prime: int,
) -> UntestedBound:
    """
    Bound inferior del LHS total sobre los bloques no testeados.

    lower = (k_good/k − ε)(K − k)(R + r0)·N′, required = (K − k)·N′·R.
    """
    if not 0 <= k_good <= k:
        raise ValidationError(param="k_good", message="k_good fuera de rango", expected=f"0 <= k_good <= {k}", received=k_good)
    untested = total_blocks - k
    lower = (k_good / k - epsilon) * untested * (bound_R + r0) * n_prime
    required = untested * n_prime * bound_R
    return UntestedBound(lower_bound_lhs=lower, required_lhs=required, holds=_at_least(lower, required))


def test_block(
    block: RunBlock,
    prog: FilterProgram,
    ineq: BellInequality,
    r0: float,
    index: int = 0,
) -> BlockVerdict:
    """
    Aplica el programa y marca el bloque como violado si LHS >= (R + r0)·N′.

    Un d vacío (N′ = 0) produce un veredicto degenerado, no violado.

    Raises:
        ProgramPolicyError: Si el programa no es settings-blind
    """
    require_certifiable(prog)
    d = apply_program(prog, block.g_string)
    try:
        lhs, n_prime = subset_lhs(block, d)
    except EmptySelectionError:
        logger.debug("block_tested", index=index, degenerate=True)
        return BlockVerdict(index=index, lhs=0.0, n_prime=0, violated=False, degenerate=True)

    violated = lhs >= (ineq.bound_R + r0) * n_prime - VIOLATION_MARGIN
    logger.debug("block_tested", index=index, lhs=lhs, n_prime=n_prime, violated=violated)
    return BlockVerdict(index=index, lhs=lhs, n_prime=n_prime, violated=bool(violated))


def confidence_level(k: int, epsilon: float) -> float:
    """1 − exp(−2kε²): cola del muestreo sin reemplazo (conservadora)."""
    return 1.0 - math.exp(-2.0 * k * epsilon**2)


def sample_block_indices(config: CertificationConfig) -> list[int]:
    """Índices (1..K) de los k bloques a testear, elegidos sin reemplazo."""
    permutation = sampling_rng(config.master_seed).permutation(config.total_blocks_K)
    return sorted(int(i) + 1 for i in permutation[: config.sampled_blocks_k])


def _canonical(ineq: BellInequality) -> BellInequality:
    if ineq.is_canonical:
        return ineq
    return canonicalize(ineq.alpha, ineq.bound_R, ineq.settings_dist, ineq.scenario, name=ineq.name)


def _complexity_check(prog: FilterProgram, initial_block: RunBlock, verdict: BlockVerdict, ineq: BellInequality) -> Optional[ComplexityCheck]:
    # B(I) solo está derivado para el juego CHSH con settings uniformes
    if not is_uniform_chsh_game(ineq) or verdict.n_prime == 0:
        return None
    d = apply_program(prog, initial_block.g_string)
    length = description_length(d)
    bound = corrected_bound(length.bits, verdict.n_prime)
    return ComplexityCheck(
        description_length=length.bits,
        codec=length.codec,
        corrected_bound=bound,
        initial_lhs=verdict.lhs,
        exceeds_corrected_bound=verdict.lhs > bound + VIOLATION_MARGIN,
    )


def _evaluate(
    indices: Sequence[int],
    make_block: Callable[[int], RunBlock],
    prog: FilterProgram,
    ineq: BellInequality,
    r0: float,
    workers: int,
) -> list[BlockVerdict]:
    def evaluate(index: int) -> BlockVerdict:
        return test_block(make_block(index), prog, ineq, r0, index=index)

    if workers <= 1:
        return [evaluate(i) for i in indices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(evaluate, indices))


def _certify(
    initial_block: RunBlock,
    make_block: Callable[[int], RunBlock],
    prog: FilterProgram,
    ineq: BellInequality,
    config: CertificationConfig,
    audit: Optional[AuditReport] = None,
) -> CertificationReport:
    """Pasos 2–5 comunes a la ejecución en memoria y a la importación de registros."""
    threshold = acceptance_threshold(ineq.bound_R, config.violation_threshold_r0, config.epsilon)
    initial = test_block(initial_block, prog, ineq, config.violation_threshold_r0, index=0)
    common: dict[str, Any] = {
        "config": config,
        "inequality": ineq.name or "custom",
        "bound_R": ineq.bound_R,
        "program": prog.describe(),
        "initial": initial,
        "threshold": threshold,
        "complexity": _complexity_check(prog, initial_block, initial, ineq),
        "audit": audit.to_dict() if audit is not None else None,
    }

    if not initial.violated:
        logger.info("certification_aborted", lhs=initial.lhs, n_prime=initial.n_prime, degenerate=initial.degenerate)
        return CertificationReport(
            sampled=(), k_good=0, untested=None, accepted=False, confidence=0.0, aborted=True, **common
        )

    indices = sample_block_indices(config)
    sampled = _evaluate(indices, make_block, prog, ineq, config.violation_threshold_r0, config.workers)
    k_good = sum(1 for v in sampled if v.violated)
    k = config.sampled_blocks_k

    untested = untested_bound(
        k_good, k, config.epsilon, config.total_blocks_K, ineq.bound_R, config.violation_threshold_r0, initial.n_prime
    )
    accepted = _at_least(k_good / k, threshold)
    report = CertificationReport(
        sampled=tuple(sampled),
        k_good=k_good,
        untested=untested,
        accepted=accepted,
        confidence=confidence_level(k, config.epsilon),
        **common,
    )
    logger.info(
        "certification_finished",
        accepted=accepted,
        k_good=k_good,
        k=k,
        threshold=threshold,
        master_seed=config.master_seed,
    )
    return report


def run_certification(
    source: SourceModel,
    prog: FilterProgram,
    ineq: BellInequality,
    config: CertificationConfig,
    sampler: Optional[SettingsSampler] = None,
) -> CertificationReport:
    """
    Ejecuta el procedimiento completo contra un modelo de fuente.

    El bloque inicial usa las semillas del índice 0 y el bloque j (1..K)
    las del índice j; solo se generan los k bloques muestreados.

    Raises:
        ProgramPolicyError: Programa no settings-blind
        InfeasibleConfigurationError: Umbral >= 1
        AuditError: El programa no pasa la auditoría de independencia
    """
    require_certifiable(prog)
    ineq = _canonical(ineq)
    acceptance_threshold(ineq.bound_R, config.violation_threshold_r0, config.epsilon)
    decomposition = decompose(ineq)
    sampler = sampler or SettingsSampler(ineq.settings_dist)
    n = config.block_length_N

    audit: Optional[AuditReport] = None
    if config.audit_runs > 0 or requires_audit(prog):
        runs = max(config.audit_runs, MIN_AUDIT_SAMPLES)
        audit = audit_program(prog, source, sampler, n, runs, audit_seed(config.master_seed), decomposition)
        if not audit.passed:
            log_program_use(prog, "certify", error="audit failed")
            raise AuditError(
                message="el programa no pasa la auditoría de independencia",
                details=f"max MI {audit.max_mi:.4f} bits > {audit.threshold}",
            )

    def make_block(index: int) -> RunBlock:
        return sample_indexed_block(source, sampler, n, config.master_seed, index, decomposition)

    log_program_use(prog, "certify", params={"N": n, "K": config.total_blocks_K, "k": config.sampled_blocks_k})
    return _certify(make_block(0), make_block, prog, ineq, config, audit)


def certify_blocks(
    initial_block: RunBlock,
    blocks: Sequence[RunBlock],
    prog: FilterProgram,
    ineq: BellInequality,
    config: CertificationConfig,
) -> CertificationReport:
    """
    Certifica bloques ya registrados (p. ej. importados de un archivo).

    El muestreo es idéntico al de run_certification con la misma semilla
    maestra, de modo que un registro generado por `simulate` reproduce el
    mismo reporte.

    Raises:
        ValidationError: Si el número o la longitud de los bloques no coincide con la configuración
    """
    require_certifiable(prog)
    ineq = _canonical(ineq)
    if len(blocks) != config.total_blocks_K:
        raise ValidationError(
            param="blocks",
            message="el número de bloques no coincide con K",
            expected=f"{config.total_blocks_K} bloques",
            received=f"{len(blocks)} bloques",
        )
    for block in (initial_block, *blocks):
        if block.n != config.block_length_N:
            raise ValidationError(
                param="blocks",
                message="longitud de bloque distinta de N",
                expected=f"N = {config.block_length_N}",
                received=f"N = {block.n}",
            )

    log_program_use(prog, "certify", params={"N": config.block_length_N, "K": len(blocks), "source": "records"})
    return _certify(initial_block, lambda index: blocks[index - 1], prog, ineq, config)


# Evita que pytest recolecte test_block como un test al importarlo
test_block.__test__ = False  # type: ignore[attr-defined]
