"""
Simulación exacta de dos qubits y fuentes no i.i.d.

Incluye:
- Estados (matrices densidad 4×4) y medidas proyectivas de un qubit
- Regla de Born para P(a,b|x,y)
- Modelos de fuente: cuánticos (i.i.d., periódico, Markov) y LHV
  (memoria determinista, settings correlacionados con λ)
- Muestreo de bloques reproducible a partir de semillas

Convenciones:
- |Ψ+⟩ = (|01⟩ + |10⟩)/√2
- Las rondas se numeran desde 1; la ronda 1 ("impar") recibe el primer
  estado de una fuente periódica.
- La fuente fija su estado/estrategia de cada ronda antes de conocer los
  settings: `commit()` nunca recibe x, y.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, ClassVar, Optional, Sequence

import numpy as np
import structlog
import yaml

from .bell_core import GDecomposition, LocalStrategy, RunBlock
from .validation import (
    ValidationError,
    uniform_table,
    validate_positive_int,
    validate_probability_table,
    validate_seed,
)

logger = structlog.get_logger(__name__)

# Tolerancias de los invariantes de estados y medidas
HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10
PROJECTOR_TOL = 1e-12
BORN_NEG_TOL = 1e-12
BORN_SUM_TOL = 1e-10
STOCHASTIC_TOL = 1e-12

# Claves de spawn reservadas (tuplas de dos elementos: nunca coinciden con las
# claves (index,) de los bloques)
SAMPLING_SPAWN_KEY = (1 << 31, 0)
AUDIT_SPAWN_KEY = (1 << 31, 1)

_I2 = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)


# =============================================================================
# Excepciones
# =============================================================================

@dataclass
class StateError(Exception):
    """Estado, medida o modelo de fuente inválido."""

    message: str
    details: Optional[str] = None

    def __str__(self) -> str:
        if self.details:
            return f"State Error: {self.message} ({self.details})"
        return f"State Error: {self.message}"


# =============================================================================
# Estados y medidas
# =============================================================================

@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Matriz densidad de dos qubits (4×4, hermítica, traza 1, semidefinida positiva)."""

    matrix: np.ndarray
    label: str = ""

    def __post_init__(self) -> None:
        rho = np.array(self.matrix, dtype=complex)
        if rho.shape != (4, 4):
            raise StateError(message="la matriz densidad debe ser 4×4", details=f"forma {rho.shape}")
        if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL:
            raise StateError(message="la matriz densidad no es hermítica", details=self.label or None)
        trace = complex(np.trace(rho))
        if abs(trace - 1.0) > TRACE_TOL:
            raise StateError(message="la traza no es 1", details=f"traza {trace:.6g}")
        min_eig = float(np.linalg.eigvalsh(rho).min())
        if min_eig < -PSD_TOL:
            raise StateError(message="la matriz densidad no es semidefinida positiva", details=f"λ_min {min_eig:.3e}")
        rho.setflags(write=False)
        object.__setattr__(self, "matrix", rho)

    @classmethod
    def from_vector(cls, vector: Sequence[complex], label: str = "") -> "DensityMatrix":
        """Estado puro |ψ⟩⟨ψ| (se normaliza el vector)."""
        psi = np.array(vector, dtype=complex)
        norm = np.linalg.norm(psi)
        if psi.shape != (4,) or norm == 0:
            raise StateError(message="el vector de estado debe tener 4 componentes no nulas")
        psi = psi / norm
        return cls(np.outer(psi, psi.conj()), label=label)

    @classmethod
    def from_entries(cls, entries: Sequence[Any], label: str = "") -> "DensityMatrix":
        """16 entradas complejas en orden row-major (número, "a+bj" o [re, im])."""
        if len(entries) != 16:
            raise StateError(message="se esperan 16 entradas complejas", details=f"recibidas {len(entries)}")
        values = [_parse_complex(entry) for entry in entries]
        return cls(np.array(values, dtype=complex).reshape(4, 4), label=label)

    @classmethod
    def psi_plus(cls) -> "DensityMatrix":
        return cls.from_vector([0, 1, 1, 0], label="psi_plus")

    @classmethod
    def psi_plus_complement(cls) -> "DensityMatrix":
        """Estado separable (I − |Ψ+⟩⟨Ψ+|)/3."""
        projector = cls.psi_plus().matrix
        return cls((np.eye(4) - projector) / 3.0, label="psi_plus_complement")

    @classmethod
    def maximally_mixed(cls) -> "DensityMatrix":
        return cls(np.eye(4, dtype=complex) / 4.0, label="maximally_mixed")

    @classmethod
    def werner(cls, visibility: float) -> "DensityMatrix":
        """w·|Ψ+⟩⟨Ψ+| + (1 − w)·I/4; viola CHSH solo para w > 1/√2."""
        if not 0.0 <= visibility <= 1.0:
            raise StateError(message="la visibilidad debe estar en [0, 1]", details=f"w = {visibility}")
        return cls.psi_plus().mix(cls.maximally_mixed(), visibility, label=f"werner({visibility:g})")

    def mix(self, other: "DensityMatrix", weight: float, label: str = "") -> "DensityMatrix":
        """weight·self + (1 − weight)·other."""
        if not 0.0 <= weight <= 1.0:
            raise StateError(message="el peso de la mezcla debe estar en [0, 1]", details=f"peso = {weight}")
        return DensityMatrix(weight * self.matrix + (1.0 - weight) * other.matrix, label=label)


@dataclass(frozen=True, eq=False)
class MeasurementSetting:
    """Medida proyectiva de un qubit: un proyector 2×2 por resultado."""

    projectors: tuple[np.ndarray, ...]
    label: str = ""

    def __post_init__(self) -> None:
        projectors = tuple(np.array(p, dtype=complex) for p in self.projectors)
        if not projectors:
            raise StateError(message="una medida necesita al menos un proyector")
        for proj in projectors:
            if proj.shape != (2, 2):
                raise StateError(message="los proyectores deben ser 2×2", details=f"forma {proj.shape}")
            if np.max(np.abs(proj - proj.conj().T)) > PROJECTOR_TOL:
                raise StateError(message="proyector no hermítico", details=self.label or None)
            if np.max(np.abs(proj @ proj - proj)) > PROJECTOR_TOL:
                raise StateError(message="proyector no idempotente", details=self.label or None)
            proj.setflags(write=False)
        if np.max(np.abs(sum(projectors) - _I2)) > PROJECTOR_TOL:
            raise StateError(message="los proyectores no suman la identidad", details=self.label or None)
        object.__setattr__(self, "projectors", projectors)

    @property
    def num_outcomes(self) -> int:
        return len(self.projectors)

    @classmethod
    def from_angle(cls, theta: float) -> "MeasurementSetting":
        """Observable cos θ·σz + sin θ·σx; el resultado 0 corresponde al autovalor +1."""
        observable = math.cos(theta) * _Z + math.sin(theta) * _X
        plus = (_I2 + observable) / 2.0
        return cls((plus, _I2 - plus), label=f"angle({theta:.6g})")

    @classmethod
    def computational(cls) -> "MeasurementSetting":
        return cls.from_angle(0.0)


def tsirelson_measurements() -> tuple[tuple[MeasurementSetting, ...], tuple[MeasurementSetting, ...]]:
    """
    Settings óptimos de CHSH para |Ψ+⟩ (default del escenario).

    Alice mide σz y σx; Bob mide a 3π/4 y −3π/4 en el plano X–Z. Para Ψ+,
    ⟨A(α)⊗B(β)⟩ = −cos(α + β), lo que da éxito 1/2 + 1/(2√2) en cada par.
    """
    alice = (MeasurementSetting.from_angle(0.0), MeasurementSetting.from_angle(math.pi / 2))
    bob = (MeasurementSetting.from_angle(3 * math.pi / 4), MeasurementSetting.from_angle(-3 * math.pi / 4))
    return alice, bob


def computational_measurements() -> tuple[tuple[MeasurementSetting, ...], tuple[MeasurementSetting, ...]]:
    """Ambas partes miden σz para todos los settings."""
    z = MeasurementSetting.computational()
    return (z, z), (z, z)


# =============================================================================
# Regla de Born
# =============================================================================

def born_probability(
    state: DensityMatrix,
    ma: MeasurementSetting,
    mb: MeasurementSetting,
) -> np.ndarray:
    """
    Tabla P(a,b) = Tr[(Πa ⊗ Πb)·ρ].

    Raises:
        StateError: Si el resultado no es una distribución válida
    """
    rho = state.matrix
    table = np.empty((ma.num_outcomes, mb.num_outcomes))
    for a, proj_a in enumerate(ma.projectors):
        for b, proj_b in enumerate(mb.projectors):
            table[a, b] = float(np.real(np.trace(np.kron(proj_a, proj_b) @ rho)))

    if table.min() < -BORN_NEG_TOL or abs(table.sum() - 1.0) > BORN_SUM_TOL:
        raise StateError(
            message="la regla de Born no produjo una distribución válida",
            details=f"min {table.min():.3e}, suma {table.sum():.12f}",
        )
    return np.clip(table, 0.0, None)


def behavior_table(
    state: DensityMatrix,
    measurements_a: Sequence[MeasurementSetting],
    measurements_b: Sequence[MeasurementSetting],
) -> np.ndarray:
    """Comportamiento completo P(a,b|x,y) indexado [x, y, a, b]."""
    return np.array([
        [born_probability(state, ma, mb) for mb in measurements_b]
        for ma in measurements_a
    ])


def chsh_success_probability(
    state: DensityMatrix,
    measurements_a: Optional[Sequence[MeasurementSetting]] = None,
    measurements_b: Optional[Sequence[MeasurementSetting]] = None,
    settings_dist: Optional[np.ndarray] = None,
) -> float:
    """Probabilidad de ganar a ⊕ b = x·y (settings Tsirelson y uniformes por defecto)."""
    if measurements_a is None or measurements_b is None:
        measurements_a, measurements_b = tsirelson_measurements()
    dist = uniform_table((2, 2)) if settings_dist is None else np.asarray(settings_dist)
    table = behavior_table(state, measurements_a, measurements_b)
    total = 0.0
    for x, y, a, b in itertools.product(range(2), repeat=4):
        if (a ^ b) == (x & y):
            total += dist[x, y] * table[x, y, a, b]
    return float(total)


# =============================================================================
# Settings y semillas
# =============================================================================

@dataclass(frozen=True, eq=False)
class SettingsSampler:
    """Settings (x, y) i.i.d. según P(x,y), reproducibles a partir de la semilla."""

    distribution: np.ndarray
    seed: int = 0

    def __post_init__(self) -> None:
        dist = validate_probability_table(self.distribution, "settings_dist")
        if dist.ndim != 2:
            raise ValidationError(
                param="settings_dist",
                message="settings_dist debe ser una tabla P(x,y)",
                expected="array 2D",
                received=f"forma {dist.shape}",
            )
        object.__setattr__(self, "distribution", dist)
        object.__setattr__(self, "seed", validate_seed(self.seed))

    @classmethod
    def uniform(cls, num_settings_a: int = 2, num_settings_b: int = 2, seed: int = 0) -> "SettingsSampler":
        return cls(uniform_table((num_settings_a, num_settings_b)), seed)

    def with_seed(self, seed: int) -> "SettingsSampler":
        return SettingsSampler(self.distribution, seed)

    @property
    def shape(self) -> tuple[int, int]:
        return self.distribution.shape  # type: ignore[return-value]

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    def draw(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Primeros n pares (x, y) del stream de esta semilla."""
        joint = _sample_categorical(self.rng(), np.broadcast_to(self.distribution.reshape(-1), (n, self.distribution.size)))
        return np.divmod(joint, self.shape[1])


@dataclass(frozen=True)
class BlockSeeds:
    """Semillas de un bloque: stream de settings y stream de la fuente."""

    settings_seed: int
    source_seed: int


def block_seeds(master_seed: int, index: int) -> BlockSeeds:
    """
    Semillas del bloque `index` derivadas de la semilla maestra.

    Regla fija: SeedSequence(master_seed, spawn_key=(index,)).generate_state(2),
    idéntica al hijo `index` de SeedSequence(master_seed).spawn(...). Es
    estable entre ejecuciones y permite generar bloques en cualquier orden.
    """
    state = np.random.SeedSequence(validate_seed(master_seed, "master_seed"), spawn_key=(index,)).generate_state(
        2, dtype=np.uint64
    )
    return BlockSeeds(settings_seed=int(state[0]), source_seed=int(state[1]))


def derive_block_seeds(master_seed: int, count: int) -> list[BlockSeeds]:
    """Semillas de los bloques 0..count-1."""
    return [block_seeds(master_seed, index) for index in range(count)]


def sampling_rng(master_seed: int) -> np.random.Generator:
    """Generador reservado para elegir los bloques a testear."""
    return np.random.default_rng(
        np.random.SeedSequence(validate_seed(master_seed, "master_seed"), spawn_key=SAMPLING_SPAWN_KEY)
    )


def audit_seed(master_seed: int) -> int:
    """Semilla maestra del stream de auditoría, independiente de los bloques."""
    sequence = np.random.SeedSequence(validate_seed(master_seed, "master_seed"), spawn_key=AUDIT_SPAWN_KEY)
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def _sample_categorical(rng: np.random.Generator, probs: np.ndarray) -> np.ndarray:
    """Una muestra por fila de `probs` (n, k) por inversión de la CDF."""
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0])
    idx = (u[:, None] >= cdf).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


# =============================================================================
# Modelos de fuente
# =============================================================================

@dataclass(frozen=True, eq=False)
class Rounds:
    """Arrays crudos de un bloque: settings y resultados por ronda."""

    x: np.ndarray
    y: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def to_block(self, decomposition: GDecomposition) -> RunBlock:
        return RunBlock.from_arrays(self.x, self.y, self.a, self.b, decomposition)


class SourceModel:
    """
    Fuente que emite N objetos por bloque.

    Subclases implementan:
    - commit(n, rng): etiqueta interna por ronda, sin acceso a los settings
    - respond(schedule, x, y, rng): resultados (a, b) dados los settings
    """

    variant: ClassVar[str] = ""
    is_quantum: ClassVar[bool] = False
    draws_settings: ClassVar[bool] = False

    num_settings_a: int = 2
    num_settings_b: int = 2

    def commit(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def respond(
        self, schedule: np.ndarray, x: np.ndarray, y: np.ndarray, rng: np.random.Generator
    ) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def describe(self) -> dict[str, Any]:
        return {"variant": self.variant}


@dataclass(frozen=True, eq=False)
class _QuantumSource(SourceModel):
    """Base de las fuentes cuánticas: estados + medidas fijas por setting."""

    states: tuple[DensityMatrix, ...] = ()
    measurements_a: tuple[MeasurementSetting, ...] = field(default_factory=lambda: tsirelson_measurements()[0])
    measurements_b: tuple[MeasurementSetting, ...] = field(default_factory=lambda: tsirelson_measurements()[1])

    is_quantum: ClassVar[bool] = True

    def __post_init__(self) -> None:
        if not self.states:
            raise StateError(message=f"{self.variant} necesita al menos un estado")
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "measurements_a", tuple(self.measurements_a))
        object.__setattr__(self, "measurements_b", tuple(self.measurements_b))
        # probs[s, x, y, a·|B| + b]
        tables = np.array([behavior_table(s, self.measurements_a, self.measurements_b) for s in self.states])
        num_b = self.measurements_b[0].num_outcomes
        probs = tables.reshape(tables.shape[0], tables.shape[1], tables.shape[2], -1)
        probs.setflags(write=False)
        object.__setattr__(self, "_probs", probs)
        object.__setattr__(self, "_num_outcomes_b", num_b)

    @property
    def num_settings_a(self) -> int:  # type: ignore[override]
        return len(self.measurements_a)

    @property
    def num_settings_b(self) -> int:  # type: ignore[override]
        return len(self.measurements_b)

    def respond(self, schedule, x, y, rng):
        probs = self._probs[schedule, x, y]  # type: ignore[attr-defined]
        joint = _sample_categorical(rng, probs)
        return np.divmod(joint, self._num_outcomes_b)  # type: ignore[attr-defined]

    def describe(self) -> dict[str, Any]:
        return {"variant": self.variant, "states": [s.label or "custom" for s in self.states]}


@dataclass(frozen=True, eq=False)
class IIDQuantum(_QuantumSource):
    """El mismo estado en todas las rondas."""

    variant: ClassVar[str] = "iid_quantum"

    @classmethod
    def of(cls, state: DensityMatrix, **kwargs: Any) -> "IIDQuantum":
        return cls(states=(state,), **kwargs)

    def commit(self, n, rng):
        return np.zeros(n, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class PeriodicQuantum(_QuantumSource):
    """Estados en ciclo por índice de ronda: la ronda i (desde 1) recibe states[(i − 1) mod p]."""

    variant: ClassVar[str] = "periodic_quantum"

    def commit(self, n, rng):
        return np.arange(n, dtype=np.int64) % len(self.states)


@dataclass(frozen=True, eq=False)
class MarkovQuantum(_QuantumSource):
    """Estado elegido por una cadena de Markov oculta."""

    transition: np.ndarray = field(default=None)  # type: ignore[assignment]
    initial: np.ndarray = field(default=None)  # type: ignore[assignment]

    variant: ClassVar[str] = "markov_quantum"

    def __post_init__(self) -> None:
        super().__post_init__()
        size = len(self.states)
        transition = np.array(self.transition, dtype=float)
        if transition.shape != (size, size):
            raise StateError(message="la matriz de transición debe ser cuadrada del tamaño de states", details=f"forma {transition.shape}")
        if np.any(transition < 0) or np.max(np.abs(transition.sum(axis=1) - 1.0)) > STOCHASTIC_TOL:
            raise StateError(message="las filas de la matriz de transición deben sumar 1")
        initial = uniform_table((size,)) if self.initial is None else validate_probability_table(
            self.initial, "initial", shape=(size,)
        )
        transition.setflags(write=False)
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "initial", initial)

    def commit(self, n, rng):
        schedule = np.empty(n, dtype=np.int64)
        u = rng.random(n)
        cdf_initial = np.cumsum(self.initial)
        cdf_rows = np.cumsum(self.transition, axis=1)
        last = len(self.states) - 1
        schedule[0] = min(int(np.searchsorted(cdf_initial, u[0], side="right")), last)
        for i in range(1, n):
            schedule[i] = min(int(np.searchsorted(cdf_rows[schedule[i - 1]], u[i], side="right")), last)
        return schedule


@dataclass(frozen=True, eq=False)
class LHVMemory(SourceModel):
    """
    Fuente local determinista con memoria interna.

    En el estado s la fuente responde a = outputs_a[s][x], b = outputs_b[s][y]
    y pasa al estado next_state[s]. La actualización no depende de los
    settings de la ronda.
    """

    outputs_a: np.ndarray = field(default=None)  # type: ignore[assignment]
    outputs_b: np.ndarray = field(default=None)  # type: ignore[assignment]
    next_state: tuple[int, ...] = (0,)
    initial_state: int = 0

    variant: ClassVar[str] = "lhv_memory"

    def __post_init__(self) -> None:
        outputs_a = np.array(self.outputs_a, dtype=np.int64, ndmin=2)
        outputs_b = np.array(self.outputs_b, dtype=np.int64, ndmin=2)
        num_states = outputs_a.shape[0]
        if outputs_b.shape[0] != num_states or len(self.next_state) != num_states:
            raise StateError(
                message="outputs_a, outputs_b y next_state deben tener una fila por estado interno",
                details=f"{outputs_a.shape[0]}, {outputs_b.shape[0]}, {len(self.next_state)}",
            )
        if np.any(outputs_a < 0) or np.any(outputs_b < 0):
            raise StateError(message="los resultados deben ser índices >= 0")
        if not all(0 <= s < num_states for s in self.next_state) or not 0 <= self.initial_state < num_states:
            raise StateError(message="next_state/initial_state fuera de rango")
        for array in (outputs_a, outputs_b):
            array.setflags(write=False)
        object.__setattr__(self, "outputs_a", outputs_a)
        object.__setattr__(self, "outputs_b", outputs_b)
        object.__setattr__(self, "next_state", tuple(int(s) for s in self.next_state))

    @classmethod
    def constant(cls, strategy: LocalStrategy) -> "LHVMemory":
        """Fuente LHV i.i.d. con una única estrategia determinista."""
        return cls(outputs_a=[strategy.a_of_x], outputs_b=[strategy.b_of_y], next_state=(0,))

    @classmethod
    def random(cls, num_states: int, seed: int, num_settings: int = 2, num_outcomes: int = 2) -> "LHVMemory":
        """Estrategia con memoria aleatoria (tablas y transiciones uniformes)."""
        rng = np.random.default_rng(seed)
        return cls(
            outputs_a=rng.integers(0, num_outcomes, size=(num_states, num_settings)),
            outputs_b=rng.integers(0, num_outcomes, size=(num_states, num_settings)),
            next_state=tuple(int(s) for s in rng.integers(0, num_states, size=num_states)),
        )

    @property
    def num_settings_a(self) -> int:  # type: ignore[override]
        return int(self.outputs_a.shape[1])

    @property
    def num_settings_b(self) -> int:  # type: ignore[override]
        return int(self.outputs_b.shape[1])

    def commit(self, n, rng):
        # La trayectoria es periódica a partir de algún punto; se recorre directamente.
        schedule = np.empty(n, dtype=np.int64)
        state = self.initial_state
        for i in range(n):
            schedule[i] = state
            state = self.next_state[state]
        return schedule

    def respond(self, schedule, x, y, rng):
        return self.outputs_a[schedule, x], self.outputs_b[schedule, y]

    def describe(self) -> dict[str, Any]:
        return {"variant": self.variant, "internal_states": int(self.outputs_a.shape[0])}


@dataclass(frozen=True, eq=False)
class CorrelatedSettingsLHV(SourceModel):
    """
    Fuente LHV cuyo λ está correlacionado con los settings (modo de estudio).

    Por ronda: λ ~ lambda_dist, (x, y) ~ P(x,y|λ), a = strategies_a[λ][x],
    b = strategies_b[λ][y]. El marginal Σ_λ Pr(λ)·P(x,y|λ) debe coincidir con
    la distribución de settings del sampler.
    """

    lambda_dist: np.ndarray = field(default=None)  # type: ignore[assignment]
    settings_given_lambda: np.ndarray = field(default=None)  # type: ignore[assignment]
    strategies_a: np.ndarray = field(default=None)  # type: ignore[assignment]
    strategies_b: np.ndarray = field(default=None)  # type: ignore[assignment]

    variant: ClassVar[str] = "correlated_settings_lhv"
    draws_settings: ClassVar[bool] = True

    def __post_init__(self) -> None:
        lambda_dist = validate_probability_table(self.lambda_dist, "lambda_dist")
        num_lambda = lambda_dist.shape[0]
        per_lambda = np.array(self.settings_given_lambda, dtype=float)
        if per_lambda.ndim != 3 or per_lambda.shape[0] != num_lambda:
            raise StateError(
                message="settings_given_lambda debe tener forma (|λ|, |X|, |Y|)",
                details=f"forma {per_lambda.shape}",
            )
        for lam in range(num_lambda):
            validate_probability_table(per_lambda[lam], f"settings_given_lambda[{lam}]")
        strategies_a = np.array(self.strategies_a, dtype=np.int64)
        strategies_b = np.array(self.strategies_b, dtype=np.int64)
        if strategies_a.shape != (num_lambda, per_lambda.shape[1]) or strategies_b.shape != (num_lambda, per_lambda.shape[2]):
            raise StateError(message="las estrategias deben tener una fila por λ y una columna por setting")
        for array in (per_lambda, strategies_a, strategies_b):
            array.setflags(write=False)
        object.__setattr__(self, "lambda_dist", lambda_dist)
        object.__setattr__(self, "settings_given_lambda", per_lambda)
        object.__setattr__(self, "strategies_a", strategies_a)
        object.__setattr__(self, "strategies_b", strategies_b)

    @classmethod
    def optimal(cls, lambda_dist: Sequence[float], settings_given_lambda: np.ndarray) -> "CorrelatedSettingsLHV":
        """Modelo con la estrategia CHSH óptima para cada λ."""
        choices = optimal_correlated_strategy(settings_given_lambda)
        return cls(
            lambda_dist=np.asarray(lambda_dist, dtype=float),
            settings_given_lambda=np.asarray(settings_given_lambda, dtype=float),
            strategies_a=np.array([c.strategy.a_of_x for c in choices]),
            strategies_b=np.array([c.strategy.b_of_y for c in choices]),
        )

    @property
    def num_settings_a(self) -> int:  # type: ignore[override]
        return int(self.settings_given_lambda.shape[1])

    @property
    def num_settings_b(self) -> int:  # type: ignore[override]
        return int(self.settings_given_lambda.shape[2])

    @property
    def settings_marginal(self) -> np.ndarray:
        return np.tensordot(self.lambda_dist, self.settings_given_lambda, axes=1)

    @property
    def min_settings_probability(self) -> float:
        """r = min_{x,y,λ} P(x,y|λ) sobre los λ con probabilidad > 0."""
        support = self.lambda_dist > 0
        return float(self.settings_given_lambda[support].min())

    def check_marginal(self, distribution: np.ndarray) -> None:
        """
        Raises:
            StateError: Si Σ_λ Pr(λ)·P(x,y|λ) difiere de P(x,y) en más de 1e-12
        """
        diff = float(np.max(np.abs(self.settings_marginal - distribution)))
        if diff > 1e-12:
            raise StateError(
                message="el marginal de settings de la fuente no coincide con P(x,y)",
                details=f"diferencia máxima {diff:.3e}",
            )

    def commit(self, n, rng):
        return _sample_categorical(rng, np.broadcast_to(self.lambda_dist, (n, self.lambda_dist.size)))

    def draw_settings(self, schedule: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        flat = self.settings_given_lambda.reshape(self.settings_given_lambda.shape[0], -1)
        joint = _sample_categorical(rng, flat[schedule])
        return np.divmod(joint, self.num_settings_b)

    def respond(self, schedule, x, y, rng):
        return self.strategies_a[schedule, x], self.strategies_b[schedule, y]

    def describe(self) -> dict[str, Any]:
        return {
            "variant": self.variant,
            "lambdas": int(self.lambda_dist.size),
            "min_settings_probability": self.min_settings_probability,
        }


# =============================================================================
# Estrategias CHSH
# =============================================================================

@dataclass(frozen=True)
class StrategyChoice:
    """Estrategia elegida para un λ y su valor CHSH-L."""

    strategy: LocalStrategy
    value: float
    losing_pair: tuple[int, int]


def chsh_strategies() -> list[LocalStrategy]:
    """Las 16 estrategias deterministas de CHSH (a0, a1, b0, b1)."""
    return [
        LocalStrategy(a_of_x=(a0, a1), b_of_y=(b0, b1))
        for a0, a1, b0, b1 in itertools.product(range(2), repeat=4)
    ]


def chsh_win_table(strategy: LocalStrategy) -> np.ndarray:
    """wins[x, y] = 1 si la estrategia gana a ⊕ b = x·y en (x, y)."""
    wins = np.zeros((2, 2))
    for x, y in itertools.product(range(2), repeat=2):
        wins[x, y] = float((strategy.a_of_x[x] ^ strategy.b_of_y[y]) == (x & y))
    return wins


def optimal_correlated_strategy(per_lambda_settings: np.ndarray) -> list[StrategyChoice]:
    """
    Mejor estrategia determinista por λ para CHSH-L.

    Se enumeran las 16 estrategias; la óptima pierde solo en el par de
    settings de menor probabilidad, con valor 1 − min_{x,y} P(x,y|λ).

    Args:
        per_lambda_settings: Array (|λ|, 2, 2) o (2, 2) de distribuciones P(x,y|λ)
    """
    per_lambda = np.array(per_lambda_settings, dtype=float)
    if per_lambda.ndim == 2:
        per_lambda = per_lambda[None]
    for lam in range(per_lambda.shape[0]):
        validate_probability_table(per_lambda[lam], f"settings_given_lambda[{lam}]", shape=(2, 2))

    strategies = chsh_strategies()
    wins = np.array([chsh_win_table(s) for s in strategies])  # (16, 2, 2)
    values = np.einsum("sxy,lxy->ls", wins, per_lambda)

    choices = []
    for lam in range(per_lambda.shape[0]):
        best = int(np.argmax(values[lam]))
        losing = np.argwhere(wins[best] == 0.0)
        losing_pair = tuple(int(v) for v in losing[0]) if losing.size else (-1, -1)
        choices.append(StrategyChoice(strategies[best], float(values[lam, best]), losing_pair))  # type: ignore[arg-type]
    return choices


# =============================================================================
# Muestreo
# =============================================================================

def sample_rounds(model: SourceModel, sampler: SettingsSampler, n: int, seed: int) -> Rounds:
    """
    Genera n rondas de la fuente.

    Los settings salen del sampler (o de P(x,y|λ) en el modo de settings
    correlacionados). El modelo fija su etiqueta de ronda con `commit()`
    antes de ver los settings. Determinista dados sampler.seed y seed.
    """
    n = validate_positive_int(n, "N")
    seed = validate_seed(seed)
    if sampler.shape != (model.num_settings_a, model.num_settings_b):
        raise StateError(
            message="los settings del sampler no coinciden con los de la fuente",
            details=f"{sampler.shape} vs {(model.num_settings_a, model.num_settings_b)}",
        )

    source_rng = np.random.default_rng(seed)
    schedule = model.commit(n, source_rng)

    if model.draws_settings:
        assert isinstance(model, CorrelatedSettingsLHV)
        model.check_marginal(sampler.distribution)
        x, y = model.draw_settings(schedule, sampler.rng())
    else:
        x, y = sampler.draw(n)

    a, b = model.respond(schedule, x, y, source_rng)
    return Rounds(*(np.asarray(col, dtype=np.int64) for col in (x, y, a, b)))


def sample_block(
    model: SourceModel,
    sampler: SettingsSampler,
    n: int,
    seed: int,
    decomposition: GDecomposition,
) -> RunBlock:
    """Genera un bloque de n rondas con sus strings g y c."""
    return sample_rounds(model, sampler, n, seed).to_block(decomposition)


def sample_indexed_block(
    model: SourceModel,
    sampler: SettingsSampler,
    n: int,
    master_seed: int,
    index: int,
    decomposition: GDecomposition,
) -> RunBlock:
    """Bloque `index` del stream de la semilla maestra (0 = bloque inicial)."""
    seeds = block_seeds(master_seed, index)
    return sample_block(model, sampler.with_seed(seeds.settings_seed), n, seeds.source_seed, decomposition)


# =============================================================================
# Descripción de fuentes (archivos)
# =============================================================================

_NAMED_STATES = {
    "psi_plus": DensityMatrix.psi_plus,
    "psi_plus_complement": DensityMatrix.psi_plus_complement,
    "maximally_mixed": DensityMatrix.maximally_mixed,
}


def _parse_complex(entry: Any) -> complex:
    if isinstance(entry, (list, tuple)) and len(entry) == 2:
        return complex(float(entry[0]), float(entry[1]))
    if isinstance(entry, str):
        return complex(entry.replace(" ", ""))
    return complex(entry)


def parse_state(spec: Any) -> DensityMatrix:
    """
    Estado desde un archivo de fuente.

    Acepta un nombre ("psi_plus", "psi_plus_complement", "maximally_mixed"),
    {"werner": w} o una lista de 16 entradas complejas row-major.
    """
    if isinstance(spec, str):
        if spec not in _NAMED_STATES:
            raise StateError(message=f"estado desconocido: {spec}", details=f"válidos: {sorted(_NAMED_STATES)}")
        return _NAMED_STATES[spec]()
    if isinstance(spec, dict) and "werner" in spec:
        return DensityMatrix.werner(float(spec["werner"]))
    if isinstance(spec, (list, tuple)):
        return DensityMatrix.from_entries(list(spec))
    raise StateError(message="formato de estado no reconocido", details=repr(spec)[:100])


def parse_measurements(spec: Any) -> tuple[tuple[MeasurementSetting, ...], tuple[MeasurementSetting, ...]]:
    """"tsirelson", "computational" o {"alice": [θ...], "bob": [θ...]} en radianes."""
    if spec is None or spec == "tsirelson":
        return tsirelson_measurements()
    if spec == "computational":
        return computational_measurements()
    if isinstance(spec, dict) and "alice" in spec and "bob" in spec:
        alice = tuple(MeasurementSetting.from_angle(float(t)) for t in spec["alice"])
        bob = tuple(MeasurementSetting.from_angle(float(t)) for t in spec["bob"])
        return alice, bob
    raise StateError(message="formato de medidas no reconocido", details=repr(spec)[:100])


def source_model_from_dict(data: dict[str, Any], base_dir: Optional[Path] = None) -> SourceModel:
    """
    Construye un SourceModel desde su descripción (sección `source` del YAML).

    Si contiene `file`, la descripción se lee de ese archivo (relativo a base_dir).
    Los estados pueden darse como nombres o como archivos YAML con 16 entradas.

    Raises:
        StateError: Variante o parámetros inválidos, o archivo referenciado ausente
    """
    base_dir = base_dir or Path(".")
    if "file" in data:
        path = base_dir / data["file"]
        if not path.exists():
            raise StateError(message="archivo de fuente no encontrado", details=str(path))
        loaded = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        return source_model_from_dict(loaded, path.parent)

    variant = data.get("variant")
    if variant in (IIDQuantum.variant, PeriodicQuantum.variant, MarkovQuantum.variant):
        states = [_load_state(entry, base_dir) for entry in data.get("states", [data.get("state")])]
        meas_a, meas_b = parse_measurements(data.get("measurements"))
        kwargs: dict[str, Any] = {"states": tuple(states), "measurements_a": meas_a, "measurements_b": meas_b}
        if variant == IIDQuantum.variant:
            return IIDQuantum(**kwargs)
        if variant == PeriodicQuantum.variant:
            return PeriodicQuantum(**kwargs)
        return MarkovQuantum(transition=data.get("transition"), initial=data.get("initial"), **kwargs)

    if variant == LHVMemory.variant:
        return LHVMemory(
            outputs_a=data["outputs_a"],
            outputs_b=data["outputs_b"],
            next_state=tuple(data.get("next_state", [0])),
            initial_state=int(data.get("initial_state", 0)),
        )

    if variant == CorrelatedSettingsLHV.variant:
        strategies = data.get("strategies", "optimal")
        if strategies == "optimal":
            return CorrelatedSettingsLHV.optimal(data["lambda_dist"], np.array(data["settings_given_lambda"]))
        return CorrelatedSettingsLHV(
            lambda_dist=data["lambda_dist"],
            settings_given_lambda=data["settings_given_lambda"],
            strategies_a=strategies["a"],
            strategies_b=strategies["b"],
        )

    raise StateError(message=f"variante de fuente desconocida: {variant}")


def _load_state(entry: Any, base_dir: Path) -> DensityMatrix:
    if isinstance(entry, dict) and "file" in entry:
        path = base_dir / entry["file"]
        if not path.exists():
            raise StateError(message="archivo de estado no encontrado", details=str(path))
        loaded = yaml.safe_load(path.read_text(encoding="utf-8"))
        return parse_state(loaded.get("entries", loaded) if isinstance(loaded, dict) else loaded)
    return parse_state(entry)
