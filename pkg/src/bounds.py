"""
Cálculo de bounds con settings correlacionados (CHSH, cuatro pares de settings).

Si la variable oculta λ de una fuente LHV está correlacionada con los
settings, el mínimo r = min P(x,y|λ) limita la entropía H(XY|λ) ≤ f(r), y
por tanto la información I(λ : XY) ≥ 2 − f(r). Invirtiendo f se obtiene el
valor máximo de CHSH (en forma de juego) alcanzable con información I:

    B(I) = 1 − f⁻¹(2 − I)

Para un d-string de complejidad M sobre N′ rondas seleccionadas, la
concavidad de B da el bound corregido Σ CᵢGᵢ ≤ B(M/N′)·N′.

Todos los logaritmos son en base 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import structlog

from .validation import ValidationError, validate_positive_int

logger = structlog.get_logger(__name__)

LOG2_3 = math.log2(3.0)

# Máximo de I con bound no trivial: f(0⁺) = log₂3
I_MAX_NONTRIVIAL = 2.0 - LOG2_3

# Bisección de f⁻¹
BISECTION_TOL = 1e-12
BISECTION_MAX_ITER = 60

# Tolerancia de la comprobación de concavidad
CONCAVITY_TOL = 1e-9

R_MAX = 0.25


def quantum_value() -> float:
    """Máximo cuántico de CHSH en forma de juego: 1/2 + 1/(2√2)."""
    return 0.5 + 1.0 / (2.0 * math.sqrt(2.0))


def tsirelson_min_probability() -> float:
    """r para el que 1 − r alcanza el máximo cuántico: 1/2 − 1/(2√2)."""
    return 0.5 - 1.0 / (2.0 * math.sqrt(2.0))


# =============================================================================
# f(r) y su inversa
# =============================================================================

def f_of_r(r: float) -> float:
    """
    f(r) = −r·log₂r − (1 − r)·log₂((1 − r)/3), con f(0) = log₂3.

    Máxima entropía de (x, y) cuando un par tiene probabilidad r y los
    otros tres se reparten 1 − r.

    Raises:
        ValidationError: Si r no está en [0, 1/4]
    """
    r = float(r)
    if not 0.0 <= r <= R_MAX:
        raise ValidationError(param="r", message="r fuera de dominio", expected="0 <= r <= 1/4", received=r)
    if r == 0.0:
        return LOG2_3
    if r == R_MAX:
        return 2.0
    return -r * math.log2(r) - (1.0 - r) * math.log2((1.0 - r) / 3.0)


def f_inverse_clamped(y: float) -> tuple[float, bool]:
    """
    Inversa de f por bisección en [0, 1/4].

    Returns:
        (r, clamped): clamped es True si y estaba fuera de [log₂3, 2]
    """
    y = float(y)
    clamped = y < LOG2_3 or y > 2.0
    if clamped:
        logger.warning("f_inverse_clamped", y=y, domain=f"[{LOG2_3}, 2]")
    if y >= 2.0:
        return R_MAX, clamped
    if y <= LOG2_3:
        return 0.0, clamped

    lower, upper = 0.0, R_MAX
    mid = (lower + upper) / 2.0
    for _ in range(BISECTION_MAX_ITER):
        mid = (lower + upper) / 2.0
        value = f_of_r(mid)
        if abs(value - y) <= BISECTION_TOL:
            break
        if value > y:
            upper = mid
        else:
            lower = mid
    return mid, False


def f_inverse(y: float) -> float:
    """f⁻¹(y); fuera de [log₂3, 2] se recorta al extremo correspondiente."""
    r, _ = f_inverse_clamped(y)
    return r


# =============================================================================
# B(I), I_crit y bound corregido
# =============================================================================

def B_of_I(information: float) -> float:
    """
    Valor CHSH máximo de una fuente LHV con información I (bits) sobre los settings.

    Para I >= 2 − log₂3 el bound es trivial (1).

    Raises:
        ValidationError: Si I es negativa
    """
    information = float(information)
    if information < 0.0 or math.isnan(information):
        raise ValidationError(param="I", message="I debe ser no negativa", expected="I >= 0", received=information)
    if information >= I_MAX_NONTRIVIAL:
        return 1.0
    return 1.0 - f_inverse(2.0 - information)


def i_crit() -> float:
    """Información mínima por ronda con la que una fuente LHV alcanza el máximo cuántico (≈ 0.046)."""
    return 2.0 - f_of_r(tsirelson_min_probability())


def mutual_info_lower_bound(r: float) -> float:
    """I(λ : XY) >= 2 − f(r)."""
    return 2.0 - f_of_r(r)


def corrected_bound(m_bits: float, n_prime: int) -> float:
    """
    Bound LHV B(M/N′)·N′ para un d-string de complejidad M.

    Raises:
        ValidationError: Si M < 0 o N′ < 1
    """
    n_prime = validate_positive_int(n_prime, "N_prime")
    if float(m_bits) < 0:
        raise ValidationError(param="M", message="M debe ser no negativo", expected="M >= 0", received=m_bits)
    return B_of_I(float(m_bits) / n_prime) * n_prime


def concavity_check(grid: Sequence[float]) -> bool:
    """
    Concavidad discreta de B: B((I₁+I₂)/2) >= (B(I₁)+B(I₂))/2 − 1e-9 para pares adyacentes.

    Returns:
        True si todos los pares pasan
    """
    values = [float(v) for v in grid]
    for left, right in zip(values, values[1:]):
        midpoint = B_of_I((left + right) / 2.0)
        chord = (B_of_I(left) + B_of_I(right)) / 2.0
        if midpoint < chord - CONCAVITY_TOL:
            logger.info("concavity_violated", left=left, right=right, midpoint=midpoint, chord=chord)
            return False
    return True


# =============================================================================
# Ledger
# =============================================================================

@dataclass(frozen=True)
class CorrelationBoundLedger:
    """Resumen de un cálculo de bound; los campos ausentes quedan en None."""

    r: float
    f_of_r: float
    I: float
    B_of_I: float
    M: Optional[float] = None
    N_prime: Optional[int] = None
    corrected_bound: Optional[float] = None
    clamped: bool = False

    def items(self) -> list[tuple[str, object]]:
        rows: list[tuple[str, object]] = [
            ("r", self.r),
            ("f_of_r", self.f_of_r),
            ("I", self.I),
            ("B_of_I", self.B_of_I),
            ("I_crit", i_crit()),
            ("quantum_value", quantum_value()),
        ]
        if self.M is not None:
            rows.append(("M", self.M))
        if self.N_prime is not None:
            rows.append(("N_prime", self.N_prime))
        if self.corrected_bound is not None:
            rows.append(("corrected_bound", self.corrected_bound))
        rows.append(("clamped", self.clamped))
        return rows

    def render_text(self) -> str:
        """Tabla alineada para lectura humana."""
        rows = self.items()
        width = max(len(key) for key, _ in rows)
        return "\n".join(f"{key.ljust(width)}  {_format_value(value)}" for key, value in rows)

    def render_key_values(self) -> str:
        """Líneas key=value legibles por máquina."""
        return "\n".join(f"{key}={_format_value(value)}" for key, value in self.items())


def _format_value(value: object) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def ledger_from_r(r: float) -> CorrelationBoundLedger:
    f_value = f_of_r(r)
    information = 2.0 - f_value
    return CorrelationBoundLedger(r=float(r), f_of_r=f_value, I=information, B_of_I=B_of_I(information))


def ledger_from_I(information: float) -> CorrelationBoundLedger:
    bound = B_of_I(information)
    r, clamped = f_inverse_clamped(2.0 - float(information))
    return CorrelationBoundLedger(
        r=r,
        f_of_r=f_of_r(r),
        I=float(information),
        B_of_I=bound,
        clamped=clamped or information >= I_MAX_NONTRIVIAL,
    )


def ledger_from_M(m_bits: float, n_prime: int) -> CorrelationBoundLedger:
    n_prime = validate_positive_int(n_prime, "N_prime")
    base = ledger_from_I(float(m_bits) / n_prime)
    return CorrelationBoundLedger(
        r=base.r,
        f_of_r=base.f_of_r,
        I=base.I,
        B_of_I=base.B_of_I,
        M=float(m_bits),
        N_prime=n_prime,
        corrected_bound=corrected_bound(m_bits, n_prime),
        clamped=base.clamped,
    )


def b_curve(points: int = 100, upper: float = 0.41) -> np.ndarray:
    """Tabla (I, B(I)) en una malla uniforme de [0, upper]."""
    grid = np.linspace(0.0, upper, validate_positive_int(points, "points", minimum=2))
    return np.column_stack([grid, [B_of_I(v) for v in grid]])
