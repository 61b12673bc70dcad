"""
Archivos de registros de rondas y de strings binarios.

Formato de registros (texto plano, una ronda por línea):

    #nonloc-records v1
    1 0 1 0 0
    2 1 1 1 0

Campos `index x y a b` separados por un espacio; el índice es global y
empieza en 1. Los d-strings y g-strings se guardan como líneas ASCII 0/1.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np
import structlog

from .bell_core import GDecomposition, RunBlock
from .validation import validate_binary_string, validate_positive_int

logger = structlog.get_logger(__name__)

RECORDS_HEADER = "#nonloc-records v1"

PathLike = Union[str, Path]


@dataclass
class RecordFormatError(Exception):
    """Archivo de registros mal formado."""

    message: str
    line: Optional[int] = None
    path: Optional[str] = None

    def __str__(self) -> str:
        location = self.path or "<records>"
        if self.line is not None:
            location = f"{location}:{self.line}"
        return f"Record Format Error: {location}: {self.message}"


@dataclass(frozen=True, eq=False)
class RecordTable:
    """Columnas x, y, a, b de todas las rondas de un archivo, en orden."""

    x: np.ndarray
    y: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def __len__(self) -> int:
        return int(self.x.size)


# =============================================================================
# Registros de rondas
# =============================================================================

def format_records(blocks: Iterable[RunBlock]) -> str:
    """Texto del archivo de registros para los bloques dados, en orden."""
    lines = [RECORDS_HEADER]
    index = 1
    for block in blocks:
        for xi, yi, ai, bi in zip(block.x, block.y, block.a, block.b):
            lines.append(f"{index} {xi} {yi} {ai} {bi}")
            index += 1
    return "\n".join(lines) + "\n"


def write_records(path: PathLike, blocks: Iterable[RunBlock]) -> int:
    """
    Escribe los bloques en un archivo de registros.

    Returns:
        Número de rondas escritas
    """
    text = format_records(blocks)
    Path(path).write_text(text, encoding="ascii")
    rounds = text.count("\n") - 1
    logger.info("records_written", path=str(path), rounds=rounds)
    return rounds


def parse_records(text: str, path: Optional[str] = None) -> RecordTable:
    """
    Parsea el texto de un archivo de registros.

    Raises:
        RecordFormatError: Cabecera ausente, campos inválidos o índices no consecutivos
    """
    lines = text.splitlines()
    if not lines or lines[0].strip() != RECORDS_HEADER:
        raise RecordFormatError(message=f"cabecera esperada '{RECORDS_HEADER}'", line=1, path=path)

    rows: list[tuple[int, int, int, int]] = []
    for line_number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split(" ")
        if len(fields) != 5:
            raise RecordFormatError(message="se esperan 5 campos 'index x y a b'", line=line_number, path=path)
        try:
            index, x, y, a, b = (int(f) for f in fields)
        except ValueError:
            raise RecordFormatError(message="campo no entero", line=line_number, path=path)
        if index != len(rows) + 1:
            raise RecordFormatError(
                message=f"índice {index} fuera de secuencia (esperado {len(rows) + 1})",
                line=line_number,
                path=path,
            )
        if min(x, y, a, b) < 0:
            raise RecordFormatError(message="settings y resultados deben ser >= 0", line=line_number, path=path)
        rows.append((x, y, a, b))

    if not rows:
        raise RecordFormatError(message="el archivo no contiene rondas", path=path)

    columns = np.array(rows, dtype=np.int64).T
    return RecordTable(*columns)


def _read_ascii(path: PathLike) -> str:
    """
    Raises:
        RecordFormatError: Si el archivo contiene bytes no ASCII
    """
    raw = Path(path).read_bytes()
    try:
        return raw.decode("ascii")
    except UnicodeDecodeError as exc:
        line = raw.count(b"\n", 0, exc.start) + 1
        raise RecordFormatError(message="carácter no ASCII", line=line, path=str(path)) from exc


def read_records(path: PathLike) -> RecordTable:
    """Lee un archivo de registros."""
    text = _read_ascii(path)
    table = parse_records(text, str(path))
    logger.info("records_read", path=str(path), rounds=len(table))
    return table


def split_blocks(
    table: RecordTable,
    block_length: int,
    decomposition: GDecomposition,
) -> tuple[RunBlock, list[RunBlock]]:
    """
    Divide los registros en el bloque inicial y los K bloques siguientes.

    Raises:
        RecordFormatError: Si el número de rondas no es múltiplo de N o hay menos de dos bloques
    """
    block_length = validate_positive_int(block_length, "block_length_N")
    total = len(table)
    if total % block_length != 0 or total // block_length < 2:
        raise RecordFormatError(
            message=f"{total} rondas no forman un bloque inicial más K bloques de N = {block_length}"
        )
    blocks = []
    for start in range(0, total, block_length):
        stop = start + block_length
        blocks.append(
            RunBlock.from_arrays(
                table.x[start:stop], table.y[start:stop], table.a[start:stop], table.b[start:stop], decomposition
            )
        )
    return blocks[0], blocks[1:]


# =============================================================================
# Strings binarios
# =============================================================================

def write_bits(path: PathLike, strings: Sequence[object]) -> None:
    """Escribe una línea ASCII 0/1 por string (SelectionString, arrays o str)."""
    lines = []
    for item in strings:
        bits = validate_binary_string(getattr(item, "bits", item), "bits", allow_empty=True)
        lines.append((bits + ord("0")).tobytes().decode("ascii"))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_bits(path: PathLike) -> list[np.ndarray]:
    """Lee un archivo de strings binarios, una línea por string."""
    result = []
    for line_number, line in enumerate(_read_ascii(path).splitlines(), start=1):
        if not line.strip():
            continue
        try:
            result.append(validate_binary_string(line, "bits"))
        except ValueError as exc:
            raise RecordFormatError(message=str(exc), line=line_number, path=str(path))
    return result
