"""
Desigualdades de Bell lineales bipartitas en forma de G-string.

Una desigualdad Σ α(x,y,a,b)·P(a,b|x,y) ≤ R se guarda como tabla numpy
indexada [x, y, a, b]. El flujo típico es:

1. canonicalize(): lleva los coeficientes negativos a forma no negativa
2. decompose(): factoriza α = P(x,y)·C·G con G binaria
3. RunBlock.from_arrays(): deriva los strings g y c de N rondas
4. empirical_lhs() / subset_lhs(): evalúan Σ CᵢGᵢ sobre el bloque o un subconjunto

Normalización: siempre en forma de probabilidades (CHSH como juego, R = 3/4).
La forma de correladores (R = 2, máximo cuántico 2√2) solo existe como preset
de entrada y se canonicaliza igual que cualquier otra tabla.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np
import structlog

from .validation import (
    ValidationError,
    require_same_length,
    uniform_table,
    validate_binary_string,
    validate_positive_int,
    validate_probability_table,
)

logger = structlog.get_logger(__name__)

# Tolerancia de la reconstrucción α = P·C·G
RECONSTRUCTION_TOL = 1e-12

# Margen de las comparaciones de violación (LHS > R·N + VIOLATION_MARGIN)
VIOLATION_MARGIN = 1e-9

# Límite de estrategias deterministas enumerables (Alice × Bob)
MAX_STRATEGY_COMBINATIONS = 10**7

# Estrategias de Alice evaluadas por lote en el oráculo
_STRATEGY_CHUNK = 4096


# =============================================================================
# Excepciones
# =============================================================================

@dataclass
class InequalityError(Exception):
    """Error en la definición o factorización de una desigualdad."""

    message: str
    details: Optional[str] = None

    def __str__(self) -> str:
        if self.details:
            return f"Inequality Error: {self.message} ({self.details})"
        return f"Inequality Error: {self.message}"


@dataclass
class EmptySelectionError(Exception):
    """La selección d no contiene ninguna ronda (N' = 0)."""

    message: str = "empty selection: d no selecciona ninguna ronda"

    def __str__(self) -> str:
        return self.message


@dataclass
class EnumerationTooLarge(Exception):
    """El escenario es demasiado grande para enumerar estrategias deterministas."""

    combinations: int
    limit: int = MAX_STRATEGY_COMBINATIONS

    def __str__(self) -> str:
        return (
            f"Enumeración demasiado grande: {self.combinations} combinaciones "
            f"de estrategias (límite {self.limit})"
        )


# =============================================================================
# Tipos de dominio
# =============================================================================

@dataclass(frozen=True)
class Scenario:
    """Número de settings y resultados de cada parte."""

    num_settings_a: int = 2
    num_settings_b: int = 2
    num_outcomes_a: int = 2
    num_outcomes_b: int = 2

    def __post_init__(self) -> None:
        validate_positive_int(self.num_settings_a, "num_settings_a")
        validate_positive_int(self.num_settings_b, "num_settings_b")
        validate_positive_int(self.num_outcomes_a, "num_outcomes_a")
        validate_positive_int(self.num_outcomes_b, "num_outcomes_b")

    @property
    def shape(self) -> tuple[int, int, int, int]:
        """Forma de las tablas α, C y G: (x, y, a, b)."""
        return (self.num_settings_a, self.num_settings_b, self.num_outcomes_a, self.num_outcomes_b)

    @property
    def settings_shape(self) -> tuple[int, int]:
        return (self.num_settings_a, self.num_settings_b)

    @property
    def is_nontrivial(self) -> bool:
        return min(self.shape) >= 2


CHSH_SCENARIO = Scenario(2, 2, 2, 2)


@dataclass(frozen=True, eq=False)
class BellInequality:
    """
    Desigualdad Σ α(x,y,a,b)·P(a,b|x,y) ≤ R con distribución de settings P(x,y).

    `alpha` y `settings_dist` se guardan como arrays de solo lectura.
    """

    scenario: Scenario
    alpha: np.ndarray
    bound_R: float
    settings_dist: np.ndarray = field(default=None)  # type: ignore[assignment]
    name: str = ""

    def __post_init__(self) -> None:
        alpha = np.array(self.alpha, dtype=float)
        if alpha.shape != self.scenario.shape:
            raise InequalityError(
                message="dimensiones de α no coinciden con el escenario",
                details=f"esperado {self.scenario.shape}, recibido {alpha.shape}",
            )
        if not np.all(np.isfinite(alpha)):
            raise InequalityError(message="α contiene valores no finitos")
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)

        if self.settings_dist is None:
            dist = uniform_table(self.scenario.settings_shape)
        else:
            dist = validate_probability_table(
                self.settings_dist, "settings_dist", shape=self.scenario.settings_shape
            )
        object.__setattr__(self, "settings_dist", dist)
        object.__setattr__(self, "bound_R", float(self.bound_R))

    @property
    def is_canonical(self) -> bool:
        """True si todos los coeficientes son no negativos."""
        return bool(np.all(self.alpha >= 0.0))

    def lhs(self, behavior: np.ndarray) -> float:
        """Evalúa Σ α(x,y,a,b)·P(a,b|x,y) para un comportamiento indexado [x,y,a,b]."""
        return float(np.sum(self.alpha * np.asarray(behavior, dtype=float)))

    def gap(self, behavior: np.ndarray) -> float:
        """LHS − R para un comportamiento dado."""
        return self.lhs(behavior) - self.bound_R


@dataclass(frozen=True, eq=False)
class GDecomposition:
    """Par de factores (C, G) de α = P(x,y)·C(x,y,a,b)·G(x,y,a,b)."""

    c_table: np.ndarray
    g_table: np.ndarray

    def reconstruct(self, settings_dist: np.ndarray) -> np.ndarray:
        """Recompone α a partir de la factorización."""
        return settings_dist[:, :, None, None] * self.c_table * self.g_table


@dataclass(frozen=True)
class RoundRecord:
    """Settings y resultados de una ronda."""

    x: int
    y: int
    a: int
    b: int


@dataclass(frozen=True, eq=False)
class RunBlock:
    """
    Bloque ordenado de N rondas con sus strings g y c derivados.

    Los arrays internos son de solo lectura; `rounds` reconstruye los
    RoundRecord bajo demanda.
    """

    x: np.ndarray
    y: np.ndarray
    a: np.ndarray
    b: np.ndarray
    g_string: np.ndarray
    c_string: np.ndarray

    @classmethod
    def from_arrays(
        cls,
        x: Sequence[int],
        y: Sequence[int],
        a: Sequence[int],
        b: Sequence[int],
        decomposition: GDecomposition,
    ) -> "RunBlock":
        """
        Construye un bloque derivando gᵢ = G(xᵢ,yᵢ,aᵢ,bᵢ) y cᵢ = C(xᵢ,yᵢ,aᵢ,bᵢ).

        Raises:
            ValidationError: Si las longitudes difieren, N = 0 o hay índices fuera de rango
        """
        columns = [np.array(col, dtype=np.int64) for col in (x, y, a, b)]
        for name, col in zip(("y", "a", "b"), columns[1:]):
            require_same_length(columns[0], col, ("x", name))
        if columns[0].size == 0:
            raise ValidationError(
                param="rounds",
                message="un bloque necesita al menos una ronda",
                expected="N >= 1",
                received=0,
            )

        shape = decomposition.g_table.shape
        for name, col, limit in zip(("x", "y", "a", "b"), columns, shape):
            if col.min() < 0 or col.max() >= limit:
                raise ValidationError(
                    param=name,
                    message=f"índice {name} fuera del rango del escenario",
                    expected=f"0 <= {name} < {limit}",
                    received=f"[{col.min()}, {col.max()}]",
                )

        g = decomposition.g_table[tuple(columns)].astype(np.uint8)
        c = decomposition.c_table[tuple(columns)].astype(float)
        for array in (*columns, g, c):
            array.setflags(write=False)
        return cls(*columns, g_string=g, c_string=c)

    @property
    def n(self) -> int:
        return int(self.x.size)

    def __len__(self) -> int:
        return self.n

    @property
    def rounds(self) -> list[RoundRecord]:
        return list(self.iter_rounds())

    def iter_rounds(self) -> Iterator[RoundRecord]:
        for xi, yi, ai, bi in zip(self.x, self.y, self.a, self.b):
            yield RoundRecord(int(xi), int(yi), int(ai), int(bi))

    def settings_index(self, num_settings_b: int) -> np.ndarray:
        """Índice conjunto de settings x·|Y| + y por ronda."""
        return self.x * num_settings_b + self.y

    @staticmethod
    def concatenate(blocks: Sequence["RunBlock"]) -> "RunBlock":
        """Concatena bloques en orden, conservando g y c."""
        if not blocks:
            raise ValidationError(
                param="blocks",
                message="no hay bloques para concatenar",
                expected="al menos un bloque",
            )
        parts = [
            np.concatenate([getattr(block, attr) for block in blocks])
            for attr in ("x", "y", "a", "b", "g_string", "c_string")
        ]
        for array in parts:
            array.setflags(write=False)
        return RunBlock(*parts)


@dataclass(frozen=True)
class LocalStrategy:
    """Estrategia local determinista: a = a_of_x[x], b = b_of_y[y]."""

    a_of_x: tuple[int, ...]
    b_of_y: tuple[int, ...]


# =============================================================================
# Presets
# =============================================================================

def chsh_game_inequality(settings_dist: Optional[np.ndarray] = None) -> BellInequality:
    """
    CHSH en forma de juego: α(x,y,a,b) = P(x,y)·[a ⊕ b = x·y], R = 3/4.

    Con settings no uniformes el bound local es 1 − min P(x,y); se calcula
    con el oráculo para mantener R ajustado.
    """
    dist = uniform_table((2, 2)) if settings_dist is None else validate_probability_table(
        settings_dist, "settings_dist", shape=(2, 2)
    )
    alpha = np.zeros(CHSH_SCENARIO.shape)
    for x, y, a, b in itertools.product(range(2), repeat=4):
        if (a ^ b) == (x & y):
            alpha[x, y, a, b] = dist[x, y]
    ineq = BellInequality(CHSH_SCENARIO, alpha, 0.75, dist, name="chsh_game")
    if settings_dist is None:
        return ineq
    return BellInequality(CHSH_SCENARIO, alpha, lhv_bound_bruteforce(ineq), dist, name="chsh_game")


def chsh_correlator_inequality() -> BellInequality:
    """
    CHSH en forma de correladores: E00 + E01 + E10 − E11 ≤ 2.

    Los coeficientes son ±1 sobre P(a,b|x,y); la tabla no es canónica.
    """
    alpha = np.zeros(CHSH_SCENARIO.shape)
    for x, y, a, b in itertools.product(range(2), repeat=4):
        sign = -1.0 if (x & y) else 1.0
        alpha[x, y, a, b] = sign * (1.0 if a == b else -1.0)
    return BellInequality(CHSH_SCENARIO, alpha, 2.0, name="chsh_correlator")


def is_uniform_chsh_game(ineq: BellInequality) -> bool:
    """True si α es la tabla del juego CHSH con P(x,y) uniforme y R = 3/4."""
    if ineq.scenario != CHSH_SCENARIO:
        return False
    reference = chsh_game_inequality()
    return (
        np.allclose(ineq.alpha, reference.alpha, rtol=0.0, atol=1e-12)
        and np.allclose(ineq.settings_dist, reference.settings_dist, rtol=0.0, atol=1e-12)
        and abs(ineq.bound_R - reference.bound_R) <= 1e-12
    )


# =============================================================================
# Operaciones
# =============================================================================

def canonicalize(
    raw_alpha: np.ndarray,
    raw_R: float,
    settings_dist: Optional[np.ndarray] = None,
    scenario: Optional[Scenario] = None,
    *,
    name: str = "",
) -> BellInequality:
    """
    Lleva una desigualdad con coeficientes negativos a forma no negativa.

    Cada término −|α|·P(a,b|x,y) se reescribe como |α|·P(¬(a,b)|x,y) − |α|,
    donde ¬(a,b) es cualquier otro par de resultados con el mismo setting
    (x,y). La constante |α| pasa a R. Para todo comportamiento se conserva
    LHS − R.

    Args:
        raw_alpha: Tabla con signo indexada [x, y, a, b]
        raw_R: Bound local de la tabla original
        settings_dist: P(x,y); uniforme si no se indica
        scenario: Escenario declarado; se infiere de la tabla si no se indica

    Returns:
        BellInequality canónica

    Raises:
        InequalityError: Si las dimensiones no coinciden con el escenario
        ValidationError: Si settings_dist no es una distribución
    """
    alpha = np.array(raw_alpha, dtype=float)
    if scenario is None:
        if alpha.ndim != 4:
            raise InequalityError(
                message="α debe tener cuatro índices (x, y, a, b)",
                details=f"recibido ndim={alpha.ndim}",
            )
        scenario = Scenario(*alpha.shape)
    if alpha.shape != scenario.shape:
        raise InequalityError(
            message="dimensiones de α no coinciden con el escenario",
            details=f"esperado {scenario.shape}, recibido {alpha.shape}",
        )

    negative = np.clip(-alpha, 0.0, None)
    if not negative.any():
        return BellInequality(scenario, alpha, raw_R, settings_dist, name=name)

    per_setting = negative.sum(axis=(2, 3), keepdims=True)
    canonical = np.clip(alpha, 0.0, None) + (per_setting - negative)
    bound = float(raw_R) + float(negative.sum())

    logger.debug(
        "inequality_canonicalized",
        name=name,
        negative_terms=int(np.count_nonzero(negative)),
        raw_R=float(raw_R),
        canonical_R=bound,
    )
    return BellInequality(scenario, canonical, bound, settings_dist, name=name)


def decompose(ineq: BellInequality) -> GDecomposition:
    """
    Factoriza α = P(x,y)·C·G.

    G = 1 exactamente donde α > 0; C = α/P(x,y) ahí y 0 en el resto.

    Raises:
        InequalityError: Si la desigualdad no es canónica o α > 0 con P(x,y) = 0
    """
    if not ineq.is_canonical:
        raise InequalityError(
            message="la desigualdad debe ser canónica (α >= 0) antes de factorizar",
            details="usa canonicalize() primero",
        )

    alpha = ineq.alpha
    dist = ineq.settings_dist[:, :, None, None]
    positive = alpha > 0.0

    orphan = positive & (dist == 0.0)
    if orphan.any():
        x, y, _, _ = np.argwhere(orphan)[0]
        raise InequalityError(
            message="α > 0 en un par de settings con P(x,y) = 0",
            details=f"(x, y) = ({x}, {y})",
        )

    g_table = positive.astype(np.uint8)
    safe_dist = np.where(dist > 0.0, dist, 1.0)
    c_table = np.where(positive, alpha / safe_dist, 0.0)

    g_table.setflags(write=False)
    c_table.setflags(write=False)
    decomposition = GDecomposition(c_table=c_table, g_table=g_table)

    error = float(np.max(np.abs(decomposition.reconstruct(ineq.settings_dist) - alpha), initial=0.0))
    if error > RECONSTRUCTION_TOL:
        raise InequalityError(
            message="la factorización no reproduce α",
            details=f"error máximo {error:.3e}",
        )
    return decomposition


def violates(lhs: float, bound_R: float, n_rounds: int) -> bool:
    """Comparación estricta LHS > R·N + margen."""
    return lhs > bound_R * n_rounds + VIOLATION_MARGIN


def empirical_lhs(block: RunBlock) -> float:
    """Σᵢ CᵢGᵢ sobre todo el bloque."""
    return float(np.dot(block.c_string, block.g_string))


def subset_lhs(block: RunBlock, d: np.ndarray) -> tuple[float, int]:
    """
    Σ_{i∈I} CᵢGᵢ con I = posiciones donde d = 1.

    Args:
        block: Bloque de rondas
        d: String de selección (SelectionString o secuencia 0/1) de longitud N

    Returns:
        (valor, N')

    Raises:
        ValidationError: Si d no tiene longitud N
        EmptySelectionError: Si d no selecciona ninguna ronda
    """
    bits = validate_binary_string(getattr(d, "bits", d), "d")
    require_same_length(block.g_string, bits, ("g", "d"))

    mask = bits.astype(bool)
    n_prime = int(mask.sum())
    if n_prime == 0:
        raise EmptySelectionError()

    value = float(np.dot(block.c_string[mask], block.g_string[mask]))
    return value, n_prime


def strategy_value(ineq: BellInequality, strategy: LocalStrategy) -> float:
    """LHS de la desigualdad para una estrategia local determinista."""
    xs = np.arange(ineq.scenario.num_settings_a)[:, None]
    ys = np.arange(ineq.scenario.num_settings_b)[None, :]
    a = np.asarray(strategy.a_of_x)[:, None]
    b = np.asarray(strategy.b_of_y)[None, :]
    return float(ineq.alpha[xs, ys, a, b].sum())


def best_deterministic_strategy(ineq: BellInequality) -> tuple[float, LocalStrategy]:
    """
    Maximiza el LHS sobre todas las estrategias locales deterministas.

    Se enumeran las funciones a(x) de Alice; para cada una la mejor
    respuesta de Bob se elige setting a setting (b(y) = argmax), lo que da
    el máximo exacto sobre todos los pares (a(x), b(y)).

    Raises:
        EnumerationTooLarge: Si |A|^|X| · |B|^|Y| supera MAX_STRATEGY_COMBINATIONS
    """
    sc = ineq.scenario
    combinations = sc.num_outcomes_a**sc.num_settings_a * sc.num_outcomes_b**sc.num_settings_b
    if combinations > MAX_STRATEGY_COMBINATIONS:
        raise EnumerationTooLarge(combinations=combinations)

    xs = np.arange(sc.num_settings_a)
    best_value = -np.inf
    best_strategy: Optional[LocalStrategy] = None

    alice_strategies = itertools.product(range(sc.num_outcomes_a), repeat=sc.num_settings_a)
    while True:
        chunk = np.array(list(itertools.islice(alice_strategies, _STRATEGY_CHUNK)), dtype=np.int64)
        if chunk.size == 0:
            break
        # tabla[s, x, y, b] = α(x, y, a_s(x), b)
        table = ineq.alpha[xs[None, :], :, chunk, :]
        per_bob = table.sum(axis=1)  # (s, y, b)
        values = per_bob.max(axis=2).sum(axis=1)
        idx = int(np.argmax(values))
        if values[idx] > best_value:
            best_value = float(values[idx])
            best_strategy = LocalStrategy(
                a_of_x=tuple(int(v) for v in chunk[idx]),
                b_of_y=tuple(int(v) for v in per_bob[idx].argmax(axis=1)),
            )

    assert best_strategy is not None
    return best_value, best_strategy


def lhv_bound_bruteforce(ineq: BellInequality) -> float:
    """Bound local ajustado: máximo del LHS sobre estrategias deterministas."""
    value, strategy = best_deterministic_strategy(ineq)
    logger.debug(
        "lhv_bound_computed",
        name=ineq.name,
        bound=value,
        a_of_x=strategy.a_of_x,
        b_of_y=strategy.b_of_y,
    )
    return value
