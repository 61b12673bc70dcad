"""Tests del formato de registros y de strings binarios."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from src.bell_core import RunBlock
from src.programs import SelectionString
from src.records import (
    RECORDS_HEADER,
    RecordFormatError,
    format_records,
    parse_records,
    read_bits,
    read_records,
    split_blocks,
    write_bits,
    write_records,
)
from src.quantum_sim import sample_indexed_block


class TestRecords:
    def test_format_uses_global_one_based_index(self, chsh_decomposition) -> None:
        first = RunBlock.from_arrays([0, 1], [1, 0], [0, 0], [1, 1], chsh_decomposition)
        second = RunBlock.from_arrays([1], [1], [1], [0], chsh_decomposition)
        text = format_records([first, second])
        assert text.splitlines() == [RECORDS_HEADER, "1 0 1 0 1", "2 1 0 0 1", "3 1 1 1 0"]

    def test_write_and_read(self, tmp_path: Path, alternating_source, uniform_sampler, chsh_decomposition) -> None:
        blocks = [
            sample_indexed_block(alternating_source, uniform_sampler, 30, 5, index, chsh_decomposition)
            for index in range(3)
        ]
        path = tmp_path / "records.txt"
        assert write_records(path, blocks) == 90

        table = read_records(path)
        assert len(table) == 90
        initial, rest = split_blocks(table, 30, chsh_decomposition)
        assert len(rest) == 2
        assert np.array_equal(initial.g_string, blocks[0].g_string)
        assert np.array_equal(rest[1].a, blocks[2].a)

    @pytest.mark.parametrize(
        ("text", "message"),
        [
            ("1 0 0 0 0\n", "cabecera"),
            (f"{RECORDS_HEADER}\n1 0 0 0\n", "5 campos"),
            (f"{RECORDS_HEADER}\n1 0 0 x 0\n", "no entero"),
            (f"{RECORDS_HEADER}\n2 0 0 0 0\n", "fuera de secuencia"),
            (f"{RECORDS_HEADER}\n1 0 -1 0 0\n", ">= 0"),
            (f"{RECORDS_HEADER}\n", "no contiene rondas"),
        ],
    )
    def test_malformed(self, text: str, message: str) -> None:
        with pytest.raises(RecordFormatError, match=message):
            parse_records(text, "bad.txt")

    def test_error_reports_line(self) -> None:
        with pytest.raises(RecordFormatError) as exc_info:
            parse_records(f"{RECORDS_HEADER}\n1 0 0 0 0\n3 0 0 0 0\n", "bad.txt")
        assert "bad.txt:3" in str(exc_info.value)

    def test_split_requires_whole_blocks(self, chsh_decomposition) -> None:
        table = parse_records(f"{RECORDS_HEADER}\n" + "".join(f"{i} 0 0 0 0\n" for i in range(1, 6)))
        with pytest.raises(RecordFormatError):
            split_blocks(table, 2, chsh_decomposition)
        with pytest.raises(RecordFormatError):
            split_blocks(table, 5, chsh_decomposition)


class TestBits:
    def test_write_and_read_bits(self, tmp_path: Path) -> None:
        path = tmp_path / "d.txt"
        write_bits(path, [SelectionString.from_ascii("1010"), "0011", np.array([1, 1, 0])])
        assert path.read_text() == "1010\n0011\n110\n"
        assert [bits.tolist() for bits in read_bits(path)] == [[1, 0, 1, 0], [0, 0, 1, 1], [1, 1, 0]]

    def test_rejects_non_binary_line(self, tmp_path: Path) -> None:
        path = tmp_path / "d.txt"
        path.write_text("1010\n10a1\n")
        with pytest.raises(RecordFormatError) as exc_info:
            read_bits(path)
        assert exc_info.value.line == 2


class TestEncoding:
    def test_non_ascii_records(self, tmp_path: Path) -> None:
        path = tmp_path / "records.txt"
        path.write_bytes(f"{RECORDS_HEADER}\n1 0 0 0 0\n2 0 0 1 \xc3\xa9\n".encode("latin-1"))
        with pytest.raises(RecordFormatError, match="no ASCII") as exc_info:
            read_records(path)
        assert exc_info.value.line == 3

    def test_non_ascii_bits(self, tmp_path: Path) -> None:
        path = tmp_path / "d.txt"
        path.write_bytes("0101\n01ñ\n".encode("utf-8"))
        with pytest.raises(RecordFormatError) as exc_info:
            read_bits(path)
        assert exc_info.value.line == 2
