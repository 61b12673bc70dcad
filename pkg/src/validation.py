"""
Módulo de validación centralizado.

Provee funciones de validación para:
- Tablas de probabilidad (distribución de settings, Born, P(x,y|λ))
- Strings binarios (g-strings y d-strings)
- Enteros positivos, semillas de 64 bits e intervalos

Todas las funciones lanzan ValidationError con el parámetro afectado,
lo esperado y lo recibido, igual en todo el paquete.
"""

from __future__ import annotations

from collections.abc import Sequence, Sized
from typing import Any, Optional, Union

import numpy as np

# =============================================================================
# Constantes de Validación
# =============================================================================

# Tolerancia para normalización de distribuciones
PROBABILITY_SUM_TOL = 1e-12

# Tolerancia para entradas ligeramente negativas por redondeo
PROBABILITY_NEG_TOL = 1e-12

# Las semillas se tratan como enteros sin signo de 64 bits
MAX_SEED = 2**64


# =============================================================================
# Excepciones Personalizadas
# =============================================================================

class ValidationError(ValueError):
    """Excepción para errores de validación con contexto adicional."""

    def __init__(
        self,
        param: str,
        message: str,
        expected: Optional[str] = None,
        received: Optional[Any] = None,
    ):
        detail: dict[str, str] = {
            "error": "validation_error",
            "param": param,
            "message": message,
        }
        if expected:
            detail["expected"] = expected
        if received is not None:
            str_received = str(received)
            detail["received"] = str_received[:100] + "..." if len(str_received) > 100 else str_received

        self.param = param
        self.message = message
        self.detail = detail
        super().__init__(message)


# =============================================================================
# Tablas de probabilidad
# =============================================================================

def validate_probability_table(
    values: Any,
    param: str,
    *,
    shape: Optional[tuple[int, ...]] = None,
) -> np.ndarray:
    """
    Valida que un array sea una distribución de probabilidad.

    Args:
        values: Array o lista anidada
        param: Nombre del parámetro para mensajes de error
        shape: Forma esperada (opcional)

    Returns:
        Copia float64 de solo lectura, con ruido negativo recortado a 0

    Raises:
        ValidationError: Si hay entradas negativas o la suma no es 1
    """
    try:
        table = np.array(values, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError(
            param=param,
            message=f"{param} debe ser una tabla numérica",
            expected="array de números reales",
            received=values,
        )

    if shape is not None and table.shape != shape:
        raise ValidationError(
            param=param,
            message=f"{param} tiene dimensiones incorrectas",
            expected=f"forma {shape}",
            received=f"forma {table.shape}",
        )

    if not np.all(np.isfinite(table)):
        raise ValidationError(
            param=param,
            message=f"{param} contiene valores no finitos",
            expected="números finitos",
            received=table.tolist(),
        )

    if np.any(table < -PROBABILITY_NEG_TOL):
        raise ValidationError(
            param=param,
            message=f"{param} contiene probabilidades negativas",
            expected="entradas >= 0",
            received=float(table.min()),
        )

    total = float(table.sum())
    if abs(total - 1.0) > PROBABILITY_SUM_TOL:
        raise ValidationError(
            param=param,
            message=f"{param} no suma 1",
            expected=f"suma 1 (tolerancia {PROBABILITY_SUM_TOL})",
            received=total,
        )

    table = np.clip(table, 0.0, None)
    table.setflags(write=False)
    return table


def uniform_table(shape: tuple[int, ...]) -> np.ndarray:
    """Distribución uniforme de solo lectura con la forma dada."""
    table = np.full(shape, 1.0 / int(np.prod(shape)))
    table.setflags(write=False)
    return table


# =============================================================================
# Strings binarios
# =============================================================================

def validate_binary_string(
    bits: Union[str, Sequence[int], np.ndarray],
    param: str,
    *,
    allow_empty: bool = False,
) -> np.ndarray:
    """
    Valida un string binario (ASCII "0101" o secuencia de enteros 0/1).

    Returns:
        Array uint8 de solo lectura

    Raises:
        ValidationError: Si contiene símbolos distintos de 0 y 1
    """
    if isinstance(bits, str):
        cleaned = bits.strip()
        if cleaned and set(cleaned) - {"0", "1"}:
            raise ValidationError(
                param=param,
                message=f"{param} solo puede contener 0 y 1",
                expected="string ASCII de 0/1",
                received=cleaned,
            )
        array = np.frombuffer(cleaned.encode("ascii"), dtype=np.uint8) - ord("0")
    else:
        array = np.asarray(bits)
        if array.ndim != 1:
            raise ValidationError(
                param=param,
                message=f"{param} debe ser unidimensional",
                expected="secuencia de 0/1",
                received=f"forma {array.shape}",
            )
        if array.size and not np.all((array == 0) | (array == 1)):
            raise ValidationError(
                param=param,
                message=f"{param} solo puede contener 0 y 1",
                expected="secuencia de 0/1",
                received=array.tolist(),
            )

    array = np.array(array, dtype=np.uint8)
    if array.size == 0 and not allow_empty:
        raise ValidationError(
            param=param,
            message=f"{param} no puede estar vacío",
            expected="longitud >= 1",
            received="(vacío)",
        )
    array.setflags(write=False)
    return array


def require_same_length(first: Sized, second: Sized, params: tuple[str, str]) -> int:
    """
    Valida que dos secuencias tengan la misma longitud.

    Returns:
        La longitud común

    Raises:
        ValidationError: Si las longitudes difieren
    """
    if len(first) != len(second):
        raise ValidationError(
            param=params[1],
            message=f"{params[1]} debe tener la misma longitud que {params[0]}",
            expected=f"longitud {len(first)}",
            received=f"longitud {len(second)}",
        )
    return len(first)


# =============================================================================
# Escalares
# =============================================================================

def validate_positive_int(value: Any, param: str, *, minimum: int = 1) -> int:
    """
    Valida que un valor sea un entero >= minimum.

    Raises:
        ValidationError: Si no es entero o es menor que minimum
    """
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ValidationError(
            param=param,
            message=f"{param} debe ser un entero",
            expected=f"entero >= {minimum}",
            received=type(value).__name__,
        )
    if value < minimum:
        raise ValidationError(
            param=param,
            message=f"{param} es demasiado pequeño",
            expected=f"entero >= {minimum}",
            received=value,
        )
    return int(value)


def validate_seed(value: Any, param: str = "seed") -> int:
    """Valida una semilla entera de 64 bits sin signo."""
    seed = validate_positive_int(value, param, minimum=0)
    if seed >= MAX_SEED:
        raise ValidationError(
            param=param,
            message=f"{param} excede 64 bits",
            expected="0 <= seed < 2**64",
            received=seed,
        )
    return seed


def validate_open_unit_interval(value: Any, param: str) -> float:
    """Valida un real en el intervalo abierto (0, 1)."""
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise ValidationError(
            param=param,
            message=f"{param} debe ser un número real",
            expected="real en (0, 1)",
            received=value,
        )
    if not 0.0 < number < 1.0:
        raise ValidationError(
            param=param,
            message=f"{param} fuera de rango",
            expected="real en (0, 1)",
            received=number,
        )
    return number


def validate_positive_real(value: Any, param: str) -> float:
    """Valida un real estrictamente positivo y finito."""
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise ValidationError(
            param=param,
            message=f"{param} debe ser un número real",
            expected="real > 0",
            received=value,
        )
    if not np.isfinite(number) or number <= 0.0:
        raise ValidationError(
            param=param,
            message=f"{param} debe ser positivo",
            expected="real > 0",
            received=number,
        )
    return number
