"""Tests de estados, regla de Born, modelos de fuente y muestreo reproducible."""

from __future__ import annotations

import math

import numpy as np
import pytest

from src.bell_core import LocalStrategy, empirical_lhs, subset_lhs
from src.bounds import B_of_I, mutual_info_lower_bound, quantum_value
from src.programs import apply_program
from src.quantum_sim import (
    CorrelatedSettingsLHV,
    DensityMatrix,
    IIDQuantum,
    LHVMemory,
    MarkovQuantum,
    MeasurementSetting,
    PeriodicQuantum,
    SettingsSampler,
    StateError,
    block_seeds,
    born_probability,
    chsh_strategies,
    chsh_success_probability,
    chsh_win_table,
    computational_measurements,
    derive_block_seeds,
    optimal_correlated_strategy,
    parse_state,
    sample_block,
    sample_indexed_block,
    sample_rounds,
    source_model_from_dict,
    tsirelson_measurements,
)
from src.validation import ValidationError

# Distribuciones P(x,y|λ) con r = 0.15 y marginal uniforme
CORRELATED_SETTINGS = np.array([
    [[0.15, 0.35], [0.25, 0.25]],
    [[0.35, 0.15], [0.25, 0.25]],
])


class TestStates:
    def test_psi_plus_is_pure(self) -> None:
        rho = DensityMatrix.psi_plus().matrix
        assert np.trace(rho @ rho).real == pytest.approx(1.0)
        assert rho[1, 2].real == pytest.approx(0.5)

    def test_complement_is_valid_state(self) -> None:
        rho = DensityMatrix.psi_plus_complement().matrix
        assert np.trace(rho).real == pytest.approx(1.0)
        assert np.linalg.eigvalsh(rho).min() >= -1e-12

    @pytest.mark.parametrize(
        "matrix",
        [
            np.eye(3) / 3,
            np.diag([1.0, 0.0, 0.0, 0.5]),
            np.diag([1.5, -0.5, 0.0, 0.0]),
            np.array([[0.5, 1.0, 0, 0], [0, 0.5, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]]),
        ],
    )
    def test_rejects_invalid_matrices(self, matrix) -> None:
        with pytest.raises(StateError):
            DensityMatrix(matrix)

    def test_werner_range(self) -> None:
        assert np.allclose(DensityMatrix.werner(0.0).matrix, np.eye(4) / 4)
        with pytest.raises(StateError):
            DensityMatrix.werner(1.5)

    def test_alternating_mixture_is_werner(self) -> None:
        mixture = DensityMatrix.psi_plus().mix(DensityMatrix.psi_plus_complement(), 0.5, label="alternating")
        assert mixture.label == "alternating"
        assert np.allclose(mixture.matrix, DensityMatrix.werner(1.0 / 3.0).matrix)
        assert chsh_success_probability(mixture) == pytest.approx(0.5 + math.sqrt(2.0) / 12.0, abs=1e-12)
        with pytest.raises(StateError, match="peso"):
            DensityMatrix.psi_plus().mix(DensityMatrix.maximally_mixed(), -0.1)

    def test_parse_state_entries(self) -> None:
        entries = [0] * 16
        entries[5] = entries[6] = entries[9] = entries[10] = 0.5
        state = parse_state(entries)
        assert np.allclose(state.matrix, DensityMatrix.psi_plus().matrix)
        with pytest.raises(StateError):
            parse_state("phi_minus")
        with pytest.raises(StateError, match="16"):
            parse_state([1, 0, 0])

    def test_parse_state_complex_formats(self) -> None:
        entries = ["0.25"] + ["0"] * 4 + ["0.25+0j"] + ["0"] * 4 + [[0.25, 0.0]] + ["0"] * 4 + [0.25]
        assert np.allclose(parse_state(entries).matrix, np.eye(4) / 4)


class TestBorn:
    def test_measurement_projectors(self) -> None:
        setting = MeasurementSetting.from_angle(math.pi / 3)
        assert setting.num_outcomes == 2
        with pytest.raises(StateError):
            MeasurementSetting((np.eye(2), np.eye(2)))

    def test_tsirelson_success(self) -> None:
        assert chsh_success_probability(DensityMatrix.psi_plus()) == pytest.approx(quantum_value(), abs=1e-12)

    def test_complement_and_mixed_success(self) -> None:
        complement = chsh_success_probability(DensityMatrix.psi_plus_complement())
        assert complement == pytest.approx((2.0 - quantum_value()) / 3.0, abs=1e-12)
        assert chsh_success_probability(DensityMatrix.maximally_mixed()) == pytest.approx(0.5, abs=1e-12)
        alternating = (quantum_value() + complement) / 2.0
        assert alternating == pytest.approx(0.6179, abs=1e-4)

    def test_werner_threshold(self) -> None:
        visibility = 1.0 / math.sqrt(2.0)
        assert chsh_success_probability(DensityMatrix.werner(visibility)) == pytest.approx(0.75, abs=1e-12)

    def test_random_states_give_valid_tables(self) -> None:
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            raw = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
            rho = raw @ raw.conj().T
            state = DensityMatrix(rho / np.trace(rho).real)
            theta_a, theta_b = rng.uniform(0.0, 2.0 * math.pi, size=2)
            table = born_probability(state, MeasurementSetting.from_angle(theta_a), MeasurementSetting.from_angle(theta_b))
            assert table.min() >= -1e-12
            assert abs(table.sum() - 1.0) <= 1e-10

    def test_psi_plus_anticorrelated_in_z(self) -> None:
        z = MeasurementSetting.computational()
        table = born_probability(DensityMatrix.psi_plus(), z, z)
        assert table == pytest.approx(np.array([[0.0, 0.5], [0.5, 0.0]]))

    def test_computational_success(self) -> None:
        meas_a, meas_b = computational_measurements()
        # a ⊕ b = 1 siempre: gana solo en (1, 1)
        assert chsh_success_probability(DensityMatrix.psi_plus(), meas_a, meas_b) == pytest.approx(0.25)


class TestSeeds:
    def test_block_seeds_are_stable_and_distinct(self) -> None:
        assert block_seeds(42, 3) == block_seeds(42, 3)
        seeds = derive_block_seeds(42, 50)
        values = {s.settings_seed for s in seeds} | {s.source_seed for s in seeds}
        assert len(values) == 100

    def test_block_seeds_match_spawn(self) -> None:
        child = np.random.SeedSequence(42).spawn(4)[3]
        state = child.generate_state(2, dtype=np.uint64)
        seeds = block_seeds(42, 3)
        assert (seeds.settings_seed, seeds.source_seed) == (int(state[0]), int(state[1]))

    def test_sampler_is_reproducible(self, uniform_sampler: SettingsSampler) -> None:
        x1, y1 = uniform_sampler.with_seed(9).draw(1000)
        x2, y2 = uniform_sampler.with_seed(9).draw(1000)
        assert np.array_equal(x1, x2) and np.array_equal(y1, y2)
        counts = np.bincount(x1 * 2 + y1, minlength=4)
        assert counts.min() > 180

    def test_sampler_validates_distribution(self) -> None:
        with pytest.raises(ValidationError):
            SettingsSampler(np.array([[0.5, 0.6], [0.0, 0.0]]))


class TestSources:
    def test_periodic_schedule_is_one_based(self, alternating_source: PeriodicQuantum) -> None:
        schedule = alternating_source.commit(5, np.random.default_rng(0))
        # Ronda 1 (índice 0) recibe el primer estado
        assert schedule.tolist() == [0, 1, 0, 1, 0]

    def test_alternating_rates(self, alternating_source, uniform_sampler, chsh_decomposition, odd_rounds) -> None:
        n = 40_000
        block = sample_block(alternating_source, uniform_sampler.with_seed(1), n, 2, chsh_decomposition)
        assert empirical_lhs(block) / n == pytest.approx(0.6179, abs=0.015)
        value, n_prime = subset_lhs(block, apply_program(odd_rounds, block.g_string))
        assert n_prime == n // 2
        assert value / n_prime == pytest.approx(0.8536, abs=0.015)

    def test_same_seed_same_block(self, alternating_source, uniform_sampler, chsh_decomposition) -> None:
        first = sample_indexed_block(alternating_source, uniform_sampler, 200, 77, 4, chsh_decomposition)
        second = sample_indexed_block(alternating_source, uniform_sampler, 200, 77, 4, chsh_decomposition)
        other = sample_indexed_block(alternating_source, uniform_sampler, 200, 77, 5, chsh_decomposition)
        assert np.array_equal(first.a, second.a) and np.array_equal(first.x, second.x)
        assert not (np.array_equal(first.a, other.a) and np.array_equal(first.x, other.x))

    def test_markov_source(self, chsh_decomposition, uniform_sampler) -> None:
        model = MarkovQuantum(
            states=(DensityMatrix.psi_plus(), DensityMatrix.maximally_mixed()),
            transition=[[0.0, 1.0], [1.0, 0.0]],
            initial=[1.0, 0.0],
        )
        assert model.commit(4, np.random.default_rng(0)).tolist() == [0, 1, 0, 1]
        with pytest.raises(StateError):
            MarkovQuantum(states=(DensityMatrix.psi_plus(),), transition=[[0.5]])

    def test_iid_source_respects_born(self, chsh_decomposition) -> None:
        meas_a, meas_b = computational_measurements()
        model = IIDQuantum.of(DensityMatrix.psi_plus(), measurements_a=meas_a, measurements_b=meas_b)
        rounds = sample_rounds(model, SettingsSampler.uniform(seed=3), 500, 4)
        assert np.all(rounds.a != rounds.b)

    def test_constant_lhv_strategy(self, chsh_decomposition) -> None:
        strategy = LocalStrategy(a_of_x=(0, 0), b_of_y=(0, 0))
        model = LHVMemory.constant(strategy)
        block = sample_block(model, SettingsSampler.uniform(seed=1), 400, 1, chsh_decomposition)
        assert np.array_equal(block.g_string, (block.x * block.y == 0).astype(np.uint8))

    def test_lhv_memory_cycles(self) -> None:
        model = LHVMemory(outputs_a=[[0, 0], [1, 1]], outputs_b=[[0, 1], [1, 0]], next_state=(1, 0))
        assert model.commit(3, np.random.default_rng(0)).tolist() == [0, 1, 0]
        with pytest.raises(StateError):
            LHVMemory(outputs_a=[[0, 0]], outputs_b=[[0, 0]], next_state=(1,))

    def test_settings_shape_mismatch(self, alternating_source) -> None:
        with pytest.raises(StateError, match="sampler"):
            sample_rounds(alternating_source, SettingsSampler.uniform(3, 2), 10, 0)


class TestCorrelatedSettings:
    def test_optimal_strategy_loses_least_likely_pair(self) -> None:
        choices = optimal_correlated_strategy(CORRELATED_SETTINGS)
        assert [c.losing_pair for c in choices] == [(0, 0), (0, 1)]
        assert [c.value for c in choices] == pytest.approx([0.85, 0.85])

    @pytest.mark.parametrize("seed", range(10))
    def test_saturates_random_tilt(self, seed: int, uniform_sampler, chsh_decomposition) -> None:
        rng = np.random.default_rng(seed)
        r = rng.uniform(0.05, 0.2)
        s = rng.uniform(r, 0.5 - r)
        tilt = rng.permutation([r, 0.5 - r, s, 0.5 - s]).reshape(2, 2)
        # λ = 1 es el espejo de λ = 0: marginal uniforme y el mismo mínimo r
        per_lambda = np.stack([tilt, 0.5 - tilt])
        model = CorrelatedSettingsLHV.optimal([0.5, 0.5], per_lambda)
        assert model.min_settings_probability == pytest.approx(r, abs=1e-15)

        n = 100_000
        block = sample_block(model, uniform_sampler.with_seed(100 + seed), n, 200 + seed, chsh_decomposition)
        assert abs(empirical_lhs(block) / n - (1.0 - r)) <= 0.01

    @pytest.mark.parametrize("seed", range(10))
    def test_no_strategy_beats_least_likely_pair(self, seed: int) -> None:
        per_lambda = np.random.default_rng(seed).dirichlet(np.ones(4), size=3).reshape(3, 2, 2)
        choices = optimal_correlated_strategy(per_lambda)
        for lam, settings in enumerate(per_lambda):
            ceiling = 1.0 - settings.min()
            values = [float(np.sum(chsh_win_table(s) * settings)) for s in chsh_strategies()]
            assert max(values) <= ceiling + 1e-12
            assert choices[lam].value == pytest.approx(ceiling, abs=1e-12)

    def test_sixteen_strategies(self) -> None:
        assert len({(s.a_of_x, s.b_of_y) for s in chsh_strategies()}) == 16

    def test_marginal_must_match(self, uniform_sampler) -> None:
        model = CorrelatedSettingsLHV.optimal([0.8, 0.2], CORRELATED_SETTINGS)
        with pytest.raises(StateError, match="marginal"):
            sample_rounds(model, uniform_sampler, 10, 0)

    def test_saturates_bound(self, uniform_sampler, chsh_decomposition) -> None:
        model = CorrelatedSettingsLHV.optimal([0.5, 0.5], CORRELATED_SETTINGS)
        r = model.min_settings_probability
        assert r == pytest.approx(0.15)

        n = 100_000
        block = sample_block(model, uniform_sampler.with_seed(12), n, 13, chsh_decomposition)
        rate = empirical_lhs(block) / n
        bound = B_of_I(mutual_info_lower_bound(r))
        assert bound == pytest.approx(0.85, abs=1e-9)
        assert 0.84 <= rate <= 0.86
        assert rate <= bound + 3 * math.sqrt(bound * (1 - bound) / n)

        # Marginal de settings uniforme aunque cada λ los sesgue
        counts = np.bincount(block.settings_index(2), minlength=4) / n
        assert counts == pytest.approx([0.25] * 4, abs=0.01)


class TestSourceParsing:
    def test_inline_variants(self) -> None:
        model = source_model_from_dict({"variant": "iid_quantum", "state": {"werner": 0.9}})
        assert isinstance(model, IIDQuantum)
        model = source_model_from_dict({"variant": "periodic_quantum", "states": ["psi_plus", "maximally_mixed"]})
        assert isinstance(model, PeriodicQuantum) and len(model.states) == 2
        model = source_model_from_dict({
            "variant": "correlated_settings_lhv",
            "lambda_dist": [0.5, 0.5],
            "settings_given_lambda": CORRELATED_SETTINGS.tolist(),
        })
        assert isinstance(model, CorrelatedSettingsLHV)

    def test_custom_angles(self) -> None:
        model = source_model_from_dict({
            "variant": "iid_quantum",
            "state": "psi_plus",
            "measurements": {"alice": [0.0, math.pi / 2], "bob": [3 * math.pi / 4, -3 * math.pi / 4]},
        })
        default_a, _ = tsirelson_measurements()
        assert np.allclose(model.measurements_a[1].projectors[0], default_a[1].projectors[0])

    def test_state_file(self, tmp_path) -> None:
        (tmp_path / "rho.yaml").write_text("entries: [0.25, 0, 0, 0, 0, 0.25, 0, 0, 0, 0, 0.25, 0, 0, 0, 0, 0.25]\n")
        model = source_model_from_dict({"variant": "iid_quantum", "states": [{"file": "rho.yaml"}]}, tmp_path)
        assert np.allclose(model.states[0].matrix, np.eye(4) / 4)

    def test_missing_state_file(self, tmp_path) -> None:
        with pytest.raises(StateError, match="no encontrado"):
            source_model_from_dict({"variant": "iid_quantum", "states": [{"file": "missing.yaml"}]}, tmp_path)

    def test_unknown_variant(self) -> None:
        with pytest.raises(StateError, match="desconocida"):
            source_model_from_dict({"variant": "teleporter"})
