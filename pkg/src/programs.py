"""
Programas de filtrado: seleccionan rondas sin mirar los settings.

Un programa recibe el g-string de un bloque (y su longitud N) y devuelve un
d-string binario; las posiciones con dᵢ = 1 forman el substring g′ sobre
el que se evalúa la desigualdad.

Incluye:
- Programas SimpleFixed, Periodic y CheatingEcho (solo demostraciones)
- Extracción del substring g → g′
- Auditoría empírica de independencia (información mutua por ronda)
- Longitud de descripción de d con un codec fijo (proxy de la complejidad M)

Convención: las posiciones del d-string se numeran desde 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, ClassVar, Optional, Sequence

import numpy as np
import structlog

from .bell_core import GDecomposition
from .program_policies import log_program_use, require_runnable
from .quantum_sim import SettingsSampler, SourceModel, sample_indexed_block
from .validation import (
    ValidationError,
    require_same_length,
    validate_binary_string,
    validate_positive_int,
    validate_seed,
)

logger = structlog.get_logger(__name__)

# Umbral de información mutua por ronda (bits)
DEFAULT_MI_THRESHOLD = 0.01

# Muestras mínimas para el estimador plug-in
MIN_AUDIT_SAMPLES = 100

# Etiquetas de modo del codec (2 bits)
CODEC_TAGS = {"verbatim": "00", "run_length": "01", "periodic": "10"}


# =============================================================================
# Excepciones
# =============================================================================

@dataclass
class AuditError(Exception):
    """Error en la auditoría de independencia."""

    message: str
    details: Optional[str] = None

    def __str__(self) -> str:
        if self.details:
            return f"Audit Error: {self.message} ({self.details})"
        return f"Audit Error: {self.message}"


# =============================================================================
# Tipos
# =============================================================================

@dataclass(frozen=True, eq=False)
class SelectionString:
    """d-string binario de longitud N; N′ = número de unos."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "bits", validate_binary_string(self.bits, "d", allow_empty=True))

    @classmethod
    def from_ascii(cls, text: str) -> "SelectionString":
        return cls(validate_binary_string(text, "d"))

    @property
    def n(self) -> int:
        return int(self.bits.size)

    def __len__(self) -> int:
        return self.n

    @property
    def cardinality(self) -> int:
        return int(self.bits.sum())

    @property
    def ascii(self) -> str:
        return (self.bits + ord("0")).tobytes().decode("ascii")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SelectionString):
            return NotImplemented
        return self.bits.tobytes() == other.bits.tobytes()

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class Substring:
    """Substring g′ extraído; degenerate si d no seleccionó ninguna ronda."""

    bits: np.ndarray

    @property
    def degenerate(self) -> bool:
        return self.bits.size == 0

    @property
    def ascii(self) -> str:
        return (self.bits + ord("0")).tobytes().decode("ascii")

    def __len__(self) -> int:
        return int(self.bits.size)


@dataclass(frozen=True)
class DescriptionLength:
    """Longitud M (bits) de la mejor codificación de d y el codec que la logra."""

    bits: int
    codec: str


# =============================================================================
# Programas
# =============================================================================

@dataclass(frozen=True, eq=False)
class FilterProgram:
    """Base de los programas de filtrado."""

    variant: ClassVar[str] = ""
    declared_settings_blind: ClassVar[bool] = True
    reads_g: ClassVar[bool] = False

    @property
    def unsafe(self) -> bool:
        return False

    def select(self, g: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict[str, Any]:
        return {"variant": self.variant}


@dataclass(frozen=True, eq=False)
class SimpleFixed(FilterProgram):
    """Emite siempre el mismo d, fijado para una longitud N concreta."""

    bits: np.ndarray = field(default=None)  # type: ignore[assignment]

    variant: ClassVar[str] = "simple_fixed"

    def __post_init__(self) -> None:
        object.__setattr__(self, "bits", validate_binary_string(self.bits, "simple_fixed.bits"))

    @classmethod
    def random(cls, n: int, seed: int, density: float = 0.5) -> "SimpleFixed":
        """d aleatorio fijado de antemano (independiente de cualquier bloque)."""
        n = validate_positive_int(n, "N")
        if not 0.0 < density <= 1.0:
            raise ValidationError(param="density", message="density fuera de rango", expected="(0, 1]", received=density)
        rng = np.random.default_rng(validate_seed(seed))
        bits = (rng.random(n) < density).astype(np.uint8)
        return cls(bits)

    @classmethod
    def all_ones(cls, n: int) -> "SimpleFixed":
        return cls(np.ones(validate_positive_int(n, "N"), dtype=np.uint8))

    def select(self, g):
        if g.size != self.bits.size:
            raise ValidationError(
                param="g",
                message="SimpleFixed está parametrizado para otra longitud N",
                expected=f"N = {self.bits.size}",
                received=f"N = {g.size}",
            )
        return self.bits

    def describe(self) -> dict[str, Any]:
        return {"variant": self.variant, "N": int(self.bits.size), "ones": int(self.bits.sum())}


@dataclass(frozen=True)
class Periodic(FilterProgram):
    """dᵢ = 1 si i mod period == phase (i desde 1); Periodic(2, 1) selecciona las rondas impares."""

    period: int = 2
    phase: int = 1

    variant: ClassVar[str] = "periodic"

    def __post_init__(self) -> None:
        validate_positive_int(self.period, "period")
        if not 0 <= self.phase < self.period:
            raise ValidationError(
                param="phase",
                message="phase debe estar en [0, period)",
                expected=f"0 <= phase < {self.period}",
                received=self.phase,
            )

    def pattern(self, n: int) -> np.ndarray:
        return (np.arange(1, n + 1) % self.period == self.phase).astype(np.uint8)

    def select(self, g):
        return self.pattern(g.size)

    def describe(self) -> dict[str, Any]:
        return {"variant": self.variant, "period": self.period, "phase": self.phase}


@dataclass(frozen=True)
class CheatingEcho(FilterProgram):
    """Devuelve d = g. Solo para demostraciones negativas; requiere unsafe=True."""

    allow_unsafe: bool = False

    variant: ClassVar[str] = "cheating_echo"
    declared_settings_blind: ClassVar[bool] = False
    reads_g: ClassVar[bool] = True

    @property
    def unsafe(self) -> bool:
        return self.allow_unsafe

    def select(self, g):
        return g

    def describe(self) -> dict[str, Any]:
        return {"variant": self.variant, "unsafe": self.allow_unsafe}


def program_from_dict(data: dict[str, Any]) -> FilterProgram:
    """
    Construye un programa desde su descripción (sección `program` del YAML).

    Raises:
        ValidationError: Variante o parámetros inválidos
    """
    variant = data.get("variant")
    if variant == SimpleFixed.variant:
        if "bits" in data:
            return SimpleFixed(validate_binary_string(str(data["bits"]), "simple_fixed.bits"))
        if "random" in data:
            spec = data["random"]
            return SimpleFixed.random(int(spec["N"]), int(spec["seed"]), float(spec.get("density", 0.5)))
        return SimpleFixed.all_ones(int(data["N"]))
    if variant == Periodic.variant:
        return Periodic(period=int(data.get("period", 2)), phase=int(data.get("phase", 1)))
    if variant == CheatingEcho.variant:
        return CheatingEcho(allow_unsafe=bool(data.get("unsafe", False)))
    raise ValidationError(
        param="program.variant",
        message=f"programa desconocido: {variant}",
        expected="simple_fixed | periodic | cheating_echo",
        received=variant,
    )


# =============================================================================
# Aplicación y extracción
# =============================================================================

def apply_program(prog: FilterProgram, g: Any) -> SelectionString:
    """
    Aplica un programa a un g-string.

    Raises:
        ValidationError: Si g está vacío o SimpleFixed no coincide con N
        ProgramPolicyError: CheatingEcho sin flag unsafe
    """
    require_runnable(prog, prog.unsafe)
    bits = validate_binary_string(g, "g")
    return SelectionString(prog.select(bits))


def extract_substring(g: Any, d: Any) -> Substring:
    """
    Entradas de g en las posiciones con d = 1, en orden.

    Raises:
        ValidationError: Si las longitudes no coinciden
    """
    g_bits = validate_binary_string(g, "g", allow_empty=True)
    d_bits = validate_binary_string(getattr(d, "bits", d), "d", allow_empty=True)
    require_same_length(g_bits, d_bits, ("g", "d"))
    selected = g_bits[d_bits.astype(bool)]
    selected.setflags(write=False)
    return Substring(selected)


# =============================================================================
# Auditoría de independencia
# =============================================================================

@dataclass(frozen=True, eq=False)
class AuditReport:
    """Información mutua por ronda entre dᵢ y (xᵢ, yᵢ)."""

    per_round_mi: np.ndarray
    max_mi: float
    threshold: float
    passed: bool
    samples: int
    structural: bool = False

    @property
    def status(self) -> str:
        if self.structural:
            return "structurally independent"
        return "pass" if self.passed else "fail"

    def to_dict(self) -> dict[str, Any]:
        return {
            "status": self.status,
            "max_mi_bits": self.max_mi,
            "threshold_bits": self.threshold,
            "samples": self.samples,
            "rounds": int(self.per_round_mi.size),
        }


def independence_audit(
    d_samples: Sequence[Any],
    settings_samples: Sequence[Any],
    threshold: float = DEFAULT_MI_THRESHOLD,
    *,
    structural: bool = False,
) -> AuditReport:
    """
    Estima I(dᵢ ; xᵢyᵢ) por posición de ronda sobre ejecuciones repetidas.

    Estimador plug-in en bits con corrección de Miller-Madow,
    [(m_D − 1) + (m_S − 1) − (m_DS − 1)] / (2n·ln 2), recortado a >= 0
    (m = soporte observado). Los programas estructurales pasan por
    construcción con MI exactamente 0.

    Args:
        d_samples: d-strings (SelectionString o secuencias 0/1), uno por ejecución
        settings_samples: Índices conjuntos de settings x·|Y| + y por ronda
        threshold: Umbral τ en bits
        structural: Si el programa es independiente por construcción

    Raises:
        AuditError: Menos de MIN_AUDIT_SAMPLES pares o longitudes inconsistentes
    """
    n_samples = len(d_samples)
    if n_samples < MIN_AUDIT_SAMPLES or len(settings_samples) != n_samples:
        raise AuditError(
            message="muestras insuficientes para el estimador",
            details=f"{n_samples} d-strings, {len(settings_samples)} settings; mínimo {MIN_AUDIT_SAMPLES}",
        )

    d_matrix = np.array([validate_binary_string(getattr(d, "bits", d), "d") for d in d_samples], dtype=np.int64)
    s_matrix = np.array([np.asarray(s, dtype=np.int64) for s in settings_samples])
    if d_matrix.ndim != 2 or s_matrix.shape != d_matrix.shape:
        raise AuditError(message="d y settings deben tener la misma longitud en todas las ejecuciones")

    rounds = d_matrix.shape[1]
    if structural:
        mi = np.zeros(rounds)
        report = AuditReport(mi, 0.0, threshold, True, n_samples, structural=True)
        logger.info("independence_audit", **report.to_dict())
        return report

    num_settings = int(s_matrix.max()) + 1
    joint = d_matrix * num_settings + s_matrix  # (runs, rounds)
    counts = np.zeros((rounds, 2 * num_settings))
    np.add.at(counts, (np.broadcast_to(np.arange(rounds), joint.shape), joint), 1.0)

    # Conteos enteros: un dᵢ constante da log2(1) = 0 exacto
    c_joint = counts.reshape(rounds, 2, num_settings)
    c_d = c_joint.sum(axis=2, keepdims=True)
    c_s = c_joint.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = (c_joint * n_samples) / (c_d * c_s)
        terms = np.where(c_joint > 0, (c_joint / n_samples) * np.log2(ratio), 0.0)
    plug_in = terms.sum(axis=(1, 2))

    support_d = (c_d > 0).sum(axis=(1, 2))
    support_s = (c_s > 0).sum(axis=(1, 2))
    support_ds = (c_joint > 0).sum(axis=(1, 2))
    correction = ((support_d - 1) + (support_s - 1) - (support_ds - 1)) / (2 * n_samples * math.log(2))
    mi = np.clip(plug_in + correction, 0.0, None)

    max_mi = float(mi.max(initial=0.0))
    report = AuditReport(mi, max_mi, threshold, max_mi <= threshold, n_samples)
    logger.info("independence_audit", **report.to_dict())
    return report


def audit_program(
    prog: FilterProgram,
    model: SourceModel,
    sampler: SettingsSampler,
    n: int,
    runs: int,
    seed: int,
    decomposition: GDecomposition,
    threshold: float = DEFAULT_MI_THRESHOLD,
) -> AuditReport:
    """
    Ejecuta `runs` bloques independientes de la fuente, aplica el programa a
    cada g-string y audita la independencia de los d-strings resultantes.
    """
    runs = validate_positive_int(runs, "runs")
    d_samples = []
    settings_samples = []
    for index in range(runs):
        block = sample_indexed_block(model, sampler, n, seed, index, decomposition)
        d_samples.append(apply_program(prog, block.g_string))
        settings_samples.append(block.settings_index(model.num_settings_b))

    structural = prog.declared_settings_blind and not prog.reads_g
    report = independence_audit(d_samples, settings_samples, threshold, structural=structural)
    log_program_use(prog, "audit", params={"N": n, "runs": runs}, result_summary=report.status)
    return report


# =============================================================================
# Longitud de descripción
# =============================================================================

@lru_cache(maxsize=None)
def _omega_prefix(n: int) -> str:
    if n <= 1:
        return ""
    binary = bin(n)[2:]
    return _omega_prefix(len(binary) - 1) + binary


def elias_omega_encode(n: int) -> str:
    """Código Elias omega de un entero n >= 1 (p. ej. 1 → "0", 1000 → 17 bits)."""
    if n < 1:
        raise ValidationError(param="n", message="Elias omega solo codifica enteros >= 1", expected=">= 1", received=n)
    return _omega_prefix(n) + "0"


def elias_omega_decode(code: str, pos: int = 0) -> tuple[int, int]:
    """
    Decodifica un entero a partir de `pos`.

    Returns:
        (valor, posición siguiente)
    """
    n = 1
    while True:
        if pos >= len(code):
            raise ValidationError(param="code", message="código Elias omega truncado", received=code)
        if code[pos] == "0":
            return n, pos + 1
        chunk = code[pos:pos + n + 1]
        if len(chunk) != n + 1:
            raise ValidationError(param="code", message="código Elias omega truncado", received=code)
        pos += n + 1
        n = int(chunk, 2)


def _runs(bits: np.ndarray) -> list[int]:
    """Longitudes de las rachas consecutivas."""
    if bits.size == 0:
        return []
    boundaries = np.flatnonzero(np.diff(bits)) + 1
    edges = np.concatenate([[0], boundaries, [bits.size]])
    return [int(v) for v in np.diff(edges)]


def _periodic_parameters(bits: np.ndarray) -> Optional[tuple[int, int]]:
    """(period, phase) si d coincide exactamente con Periodic(period, phase)."""
    ones = np.flatnonzero(bits) + 1
    n = bits.size
    if ones.size == 0:
        return None
    if ones.size == 1:
        period = n
    else:
        gaps = np.diff(ones)
        period = int(gaps[0])
        if np.any(gaps != period):
            return None
    phase = int(ones[0] % period)
    if np.array_equal(Periodic(period, phase).pattern(n), bits):
        return period, phase
    return None


def _candidate_codes(bits: np.ndarray) -> dict[str, str]:
    # Todos los códigos empiezan por modo + ω(N + 1): son autodelimitados
    header = elias_omega_encode(bits.size + 1)
    codes = {"verbatim": CODEC_TAGS["verbatim"] + header + (bits + ord("0")).tobytes().decode("ascii")}

    runs = _runs(bits)
    if runs:
        # La última racha se deduce de N
        body = str(int(bits[0])) + "".join(elias_omega_encode(r) for r in runs[:-1])
        codes["run_length"] = CODEC_TAGS["run_length"] + header + body

    params = _periodic_parameters(bits)
    if params is not None:
        period, phase = params
        codes["periodic"] = (
            CODEC_TAGS["periodic"] + header + elias_omega_encode(period) + elias_omega_encode(phase + 1)
        )
    return codes


def encode_selection(d: Any) -> tuple[str, str]:
    """
    Codifica d con el codec más corto de los tres.

    Formatos (2 bits de modo + Elias omega de N + 1 + cuerpo):
    - 00 verbatim: los N bits tal cual
    - 01 run_length: primer bit + Elias omega de cada racha salvo la última
    - 10 periodic: Elias omega de period y de phase + 1

    Returns:
        (código, nombre del codec)
    """
    bits = validate_binary_string(getattr(d, "bits", d), "d", allow_empty=True)
    codes = _candidate_codes(bits)
    order = ("periodic", "run_length", "verbatim")
    codec = min(codes, key=lambda name: (len(codes[name]), order.index(name)))
    return codes[codec], codec


def decode_selection(code: str) -> SelectionString:
    """
    Decodifica un código producido por encode_selection; N se lee del propio código.

    Raises:
        ValidationError: Código malformado
    """
    tag = code[:2]
    if tag not in CODEC_TAGS.values():
        raise ValidationError(param="code", message="modo de codec desconocido", expected="00 | 01 | 10", received=code[:16])
    n_plus_one, pos = elias_omega_decode(code, 2)
    n = n_plus_one - 1

    if tag == CODEC_TAGS["verbatim"]:
        body = code[pos:]
        if len(body) != n:
            raise ValidationError(param="code", message="longitud verbatim distinta de N", expected=str(n), received=len(body))
        return SelectionString(validate_binary_string(body, "code", allow_empty=True))

    if tag == CODEC_TAGS["periodic"]:
        period, pos = elias_omega_decode(code, pos)
        phase_plus_one, _ = elias_omega_decode(code, pos)
        return SelectionString(Periodic(period, phase_plus_one - 1).pattern(n))

    if pos >= len(code):
        raise ValidationError(param="code", message="código run_length sin primer bit", received=code[:16])
    value = int(code[pos])
    pos, out = pos + 1, []
    while pos < len(code):
        run, pos = elias_omega_decode(code, pos)
        out.append(np.full(run, value, dtype=np.uint8))
        value ^= 1
    used = sum(part.size for part in out)
    if used > n:
        raise ValidationError(param="code", message="las rachas exceden N", expected=f"<= {n}", received=used)
    out.append(np.full(n - used, value, dtype=np.uint8))
    return SelectionString(np.concatenate(out))


def description_length(d: Any) -> DescriptionLength:
    """
    Longitud de descripción M de d con el codec fijo.

    Cota superior de la complejidad de Kolmogorov de d salvo la constante
    del codec; nunca excede N + 2 + |ω(N + 1)| bits.
    """
    code, codec = encode_selection(d)
    return DescriptionLength(bits=len(code), codec=codec)
