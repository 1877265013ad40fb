import re

import pytest

from app.utils.helpers import (
    format_bytes,
    format_duration,
    format_ms,
    generate_run_id,
    safe_filename,
)


class TestSafeFilename:
    """Testes para normalização de nomes de arquivo"""

    def test_removes_special_characters(self):
        """Deve remover caracteres especiais"""
        result = safe_filename("convergencia @#$% M=51!")
        assert "@" not in result
        assert "=" not in result
        assert "!" not in result

    def test_replaces_spaces_with_underscores(self):
        """Deve substituir espaços por underscores"""
        assert safe_filename("system size sweep") == "system_size_sweep"

    def test_preserves_hyphens_and_dots(self):
        """Deve preservar hífens e pontos"""
        assert safe_filename("dag-0001-003.json") == "dag-0001-003.json"

    def test_removes_multiple_underscores(self):
        """Não deve deixar underscores consecutivos"""
        assert "__" not in safe_filename("speedup    por    atores")

    def test_strips_leading_trailing_dots_underscores(self):
        """Deve remover pontos e underscores no início e fim"""
        assert safe_filename("__dto.__") == "dto"

    def test_empty_string_falls_back(self):
        """String vazia ou só símbolos vira 'unnamed'"""
        assert safe_filename("") == "unnamed"
        assert safe_filename("@#$%&*()") == "unnamed"


class TestFormatDuration:
    """Testes para formatação de duração"""

    def test_zero_seconds(self):
        assert format_duration(0) == "0:00"
        assert format_duration(None) == "0:00"

    def test_minutes_and_seconds(self):
        assert format_duration(125) == "2:05"

    def test_hours_minutes_seconds(self):
        assert format_duration(3665) == "1:01:05"

    def test_truncates_fractional_seconds(self):
        """Tempos de treino em float são truncados"""
        assert format_duration(59.9) == "0:59"


class TestFormatBytes:
    """Testes para formatação de tamanhos (unidades decimais)"""

    def test_none_and_zero(self):
        assert format_bytes(None) is None
        assert format_bytes(0) is None

    def test_bytes(self):
        assert format_bytes(500) == "500B"

    def test_kilobytes_are_decimal(self):
        """1 KB = 1000 bytes, como nas faixas de dados das arestas"""
        assert format_bytes(1000) == "1.0KB"
        assert format_bytes(1500) == "1.5KB"

    def test_megabytes(self):
        assert format_bytes(50e6) == "50.0MB"

    def test_gigabytes(self):
        assert format_bytes(24e9) == "24.0GB"


class TestFormatMs:
    """Testes para formatação de tempos de decisão"""

    @pytest.mark.parametrize("ms,expected", [
        (0.5, "0.500"),
        (5, "5.00"),
        (12.345, "12.3"),
        (250.0, "250.0"),
    ])
    def test_three_significant_digits(self, ms, expected):
        assert format_ms(ms) == expected


class TestGenerateRunId:
    """Testes para geração de IDs de execução"""

    def test_generates_valid_format(self):
        """Deve gerar ID com formato timestamp_hash"""
        run_id = generate_run_id({"seed": 42})
        assert re.match(r"^\d+_[a-f0-9]{8}$", run_id), f"ID não segue formato: {run_id}"

    def test_different_payloads_different_hashes(self):
        a = generate_run_id({"seed": 1}).split("_")[1]
        b = generate_run_id({"seed": 2}).split("_")[1]
        assert a != b

    def test_hash_consistent_for_same_payload(self):
        """Hash independe da ordem das chaves"""
        hashes = {generate_run_id({"a": 1, "b": 2}).split("_")[1], generate_run_id({"b": 2, "a": 1}).split("_")[1]}
        assert len(hashes) == 1

    def test_accepts_no_payload(self):
        assert re.match(r"^\d+_[a-f0-9]{8}$", generate_run_id())
