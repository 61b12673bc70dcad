"""Tests de f(r), su inversa, B(I) y el ledger de bounds."""

from __future__ import annotations

import math

import numpy as np
import pytest

from src.bounds import (
    I_MAX_NONTRIVIAL,
    LOG2_3,
    B_of_I,
    b_curve,
    concavity_check,
    corrected_bound,
    f_inverse,
    f_inverse_clamped,
    f_of_r,
    i_crit,
    ledger_from_I,
    ledger_from_M,
    ledger_from_r,
    mutual_info_lower_bound,
    quantum_value,
    tsirelson_min_probability,
)
from src.validation import ValidationError


class TestEntropyFunction:
    def test_endpoints(self) -> None:
        assert f_of_r(0.0) == LOG2_3
        assert f_of_r(0.25) == 2.0

    def test_monotone_increasing(self) -> None:
        grid = np.linspace(0.0, 0.25, 200)
        values = [f_of_r(r) for r in grid]
        assert all(b > a for a, b in zip(values, values[1:]))

    @pytest.mark.parametrize("r", [-0.01, 0.26, 1.0])
    def test_domain(self, r: float) -> None:
        with pytest.raises(ValidationError):
            f_of_r(r)

    def test_inverse_round_trip(self) -> None:
        for r in np.linspace(0.01, 0.24, 47):
            assert f_inverse(f_of_r(r)) == pytest.approx(r, abs=1e-9)

    def test_inverse_clamps_outside_range(self) -> None:
        assert f_inverse_clamped(2.5) == (0.25, True)
        assert f_inverse_clamped(1.0) == (0.0, True)
        r, clamped = f_inverse_clamped(1.9)
        assert not clamped
        assert f_of_r(r) == pytest.approx(1.9, abs=1e-10)


class TestCorrelationBound:
    def test_i_crit(self) -> None:
        assert 0.045 <= i_crit() <= 0.047

    def test_b_at_i_crit_is_quantum_value(self) -> None:
        assert B_of_I(i_crit()) == pytest.approx(quantum_value(), abs=1e-9)

    def test_b_endpoints(self) -> None:
        assert B_of_I(0.0) == pytest.approx(0.75, abs=1e-12)
        assert B_of_I(I_MAX_NONTRIVIAL) == 1.0
        assert B_of_I(1.5) == 1.0
        with pytest.raises(ValidationError):
            B_of_I(-0.1)

    def test_b_monotone_and_concave(self) -> None:
        curve = b_curve(points=200, upper=I_MAX_NONTRIVIAL)
        values = curve[:, 1]
        assert np.all(np.diff(values) >= -1e-12)
        assert concavity_check(curve[:, 0])

    def test_b_inverts_information_bound(self) -> None:
        for r in (0.05, 0.1, 0.15, 0.2):
            assert B_of_I(mutual_info_lower_bound(r)) == pytest.approx(1.0 - r, abs=1e-9)

    def test_corrected_bound(self) -> None:
        assert corrected_bound(0, 1000) == pytest.approx(750.0, abs=1e-9)
        assert corrected_bound(46, 1000) == pytest.approx(853.6, abs=1.0)
        assert corrected_bound(10_000, 1000) == 1000.0
        with pytest.raises(ValidationError):
            corrected_bound(10, 0)
        with pytest.raises(ValidationError):
            corrected_bound(-1, 10)

    def test_concavity_across_saturation(self) -> None:
        # B es constante a partir de I_MAX y sigue siendo cóncava
        assert concavity_check([0.0, 0.2, I_MAX_NONTRIVIAL, 0.5])


class TestLedger:
    def test_from_r(self) -> None:
        ledger = ledger_from_r(tsirelson_min_probability())
        assert ledger.B_of_I == pytest.approx(quantum_value(), abs=1e-9)
        assert ledger.I == pytest.approx(i_crit())
        assert not ledger.clamped

    def test_from_i_clamped(self) -> None:
        ledger = ledger_from_I(0.5)
        assert ledger.B_of_I == 1.0
        assert ledger.clamped
        assert ledger.r == 0.0

    def test_from_m(self) -> None:
        ledger = ledger_from_M(46, 1000)
        assert ledger.N_prime == 1000
        assert ledger.I == pytest.approx(0.046)
        assert ledger.corrected_bound == pytest.approx(853.6, abs=1.0)

    def test_render(self) -> None:
        ledger = ledger_from_M(46, 1000)
        text = ledger.render_text()
        assert "corrected_bound" in text
        lines = dict(line.split("=", 1) for line in ledger.render_key_values().splitlines())
        assert lines["N_prime"] == "1000"
        assert lines["clamped"] == "false"
        assert math.isclose(float(lines["corrected_bound"]), ledger.corrected_bound, rel_tol=1e-11)

    def test_r_only_ledger_has_no_m(self) -> None:
        keys = [key for key, _ in ledger_from_r(0.1).items()]
        assert "M" not in keys
        assert "I_crit" in keys
