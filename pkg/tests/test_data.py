import numpy as np
import pandas as pd
import pytest

from src.data.dataset import DatasetFormatError, LongitudinalDataset, RegimeMismatchError, RegimeSpec, validate_regime
from src.data.dgp import DgpError, DgpVariable, DiscreteDgp, load_dgp, paper_dgp
from src.data.oracle import (EnumerationError, enumerate_joint, exact_counterfactual_mean, exact_f_functional,
                             exact_g_formula, exact_observed_mean)
from src.data.simulate import simulate_dgp, simulate_ground_truth
from tests.conftest import TOY_REGIMES


class TestRegimeSpec:
    def test_parse_and_key(self):
        regime = RegimeSpec.parse("1,0")
        assert regime.values == (1, 0)
        assert regime.key == "10"
        assert str(regime) == "1,0"
        assert regime.prefix(0) == (1,)
        assert regime.prefix(-1) == ()

    def test_rejects_non_binary(self):
        with pytest.raises(ValueError):
            RegimeSpec.parse("1,2")

    def test_length_mismatch(self, paper_sample):
        with pytest.raises(RegimeMismatchError, match="T=1"):
            validate_regime(paper_sample, "1,1,1")


class TestDataset:
    def test_layout_inferred(self, paper_sample):
        assert paper_sample.horizon == 1
        assert paper_sample.baseline == ('L0_1', 'L0_2')
        assert paper_sample.n_rows == 1000
        assert 'U' not in paper_sample.frame.columns
        assert np.all(paper_sample.weights == 1.0)

    def test_unexpected_column(self):
        frame = pd.DataFrame({'L0_1': [0], 'A0': [1], 'M0': [0], 'Y': [1], 'Z': [3]})
        with pytest.raises(DatasetFormatError, match="unexpected column"):
            LongitudinalDataset.from_frame(frame)

    def test_non_binary_treatment(self):
        frame = pd.DataFrame({'L0_1': [0, 1], 'A0': [1, 2], 'M0': [0, 1], 'Y': [1, 0]})
        with pytest.raises(DatasetFormatError, match="A0"):
            LongitudinalDataset.from_frame(frame)

    def test_csv_reports_line(self, tmp_path):
        path = tmp_path / 'bad.csv'
        path.write_text("L0_1,A0,M0,Y\n0,1,0,1\n1,x,0,0\n")
        with pytest.raises(DatasetFormatError) as info:
            LongitudinalDataset.read_csv(str(path))
        assert info.value.line == 3
        assert info.value.path == str(path)

    def test_csv_write_read(self, tmp_path, paper_sample):
        path = tmp_path / 'data.csv'
        paper_sample.to_csv(str(path))
        loaded = LongitudinalDataset.read_csv(str(path))
        assert loaded.columns == paper_sample.columns
        np.testing.assert_allclose(loaded.outcome, paper_sample.outcome)

    def test_regime_match(self, paper_sample):
        regime = RegimeSpec((1, 0))
        match = paper_sample.regime_match(regime, 1)
        expected = (paper_sample.treatment(0) == 1) & (paper_sample.treatment(1) == 0)
        assert np.array_equal(match, expected)


class TestDgp:
    def test_builtins(self):
        assert load_dgp('builtin:paper').horizon == 1
        assert load_dgp('builtin:toy-v1').is_all_binary()
        with pytest.raises(DgpError):
            load_dgp('builtin:nope')

    def test_outcome_cannot_depend_on_treatment(self):
        variables = (
            DgpVariable('L0_1'),
            DgpVariable('A0', ('L0_1',)),
            DgpVariable('M0', ('A0',)),
            DgpVariable('Y', ('A0', 'M0'), 0.0, {'A0': 1.0}),
        )
        with pytest.raises(DgpError):
            DiscreteDgp(variables)

    def test_dict_round_trip(self, toy):
        assert DiscreteDgp.from_dict(toy.to_dict(), name=toy.name) == toy

    def test_longer_horizon(self):
        dgp = paper_dgp(horizon=2)
        assert dgp.horizon == 2
        data = simulate_dgp(dgp, 20, seed=3)
        assert data.treatments == ('A0', 'A1', 'A2')


class TestSimulation:
    def test_deterministic(self):
        first = simulate_dgp(paper_dgp(), 200, seed=42)
        second = simulate_dgp(paper_dgp(), 200, seed=42)
        pd.testing.assert_frame_equal(first.frame, second.frame)

    def test_seed_changes_draws(self):
        first = simulate_dgp(paper_dgp(), 200, seed=1)
        second = simulate_dgp(paper_dgp(), 200, seed=2)
        assert not first.frame.equals(second.frame)

    def test_intervened_draws_follow_regime(self):
        data = simulate_dgp(paper_dgp(), 100, seed=5, regime=(1, 0))
        assert np.all(data.treatment(0) == 1)
        assert np.all(data.treatment(1) == 0)

    def test_ground_truth_matches_exact_on_toy(self, toy):
        exact = exact_counterfactual_mean(toy, (1, 1))
        approx = simulate_ground_truth(200_000, 9, (1, 1), dgp=toy, chunk=50_000)
        assert approx == pytest.approx(exact, abs=0.01)

    @pytest.mark.slow
    @pytest.mark.parametrize('regime, truth', [((1, 1), 0.45), ((0, 0), 0.57)])
    def test_paper_truths(self, regime, truth):
        assert simulate_ground_truth(10 ** 6, 20240607, regime) == pytest.approx(truth, abs=0.005)


class TestOracle:
    def test_joint_is_a_distribution(self, toy_joint):
        assert toy_joint.size == 256
        assert toy_joint.probabilities.sum() == pytest.approx(1.0, abs=1e-12)
        observed = toy_joint.observed()
        assert observed.size == 128
        assert 'U' not in observed.names

    @pytest.mark.parametrize('regime', TOY_REGIMES)
    def test_front_door_identifies_counterfactual_mean(self, toy, toy_joint, regime):
        assert exact_f_functional(toy_joint, regime) == pytest.approx(
            exact_counterfactual_mean(toy, regime), abs=1e-10)

    def test_g_formula_is_confounded(self, toy_joint, toy):
        # U confounds treatment and outcome, so plain adjustment is off
        assert abs(exact_g_formula(toy_joint, (1, 1)) - exact_counterfactual_mean(toy, (1, 1))) > 1e-4

    def test_continuous_variables_rejected(self):
        with pytest.raises(EnumerationError):
            enumerate_joint(paper_dgp())

    def test_cap(self, toy):
        with pytest.raises(EnumerationError, match="cap"):
            enumerate_joint(toy, cap=100)

    def test_population_weights(self, toy_population, toy_joint):
        assert toy_population.n_rows == 128
        assert toy_population.weights.sum() == pytest.approx(1.0, abs=1e-12)
        mean_y = float(np.sum(toy_population.weights * toy_population.outcome))
        assert mean_y == pytest.approx(exact_observed_mean(toy_joint), abs=1e-12)

    def test_mediators_ignoring_treatment_carry_no_effect(self, null_toy):
        joint = enumerate_joint(null_toy)
        mean_y = exact_observed_mean(joint.observed())
        for regime in TOY_REGIMES:
            assert exact_f_functional(joint, regime) == pytest.approx(mean_y, abs=1e-12)

    def test_zero_confounding_factors_out_u(self, unconfounded_toy):
        joint = enumerate_joint(unconfounded_toy)
        observed = joint.observed()
        idx = [joint.names.index(name) for name in observed.names]
        codes = joint.configs[:, idx] @ (1 << np.arange(len(idx))[::-1])
        p_u = joint.marginal({'U': 1})
        expected = observed.probabilities[codes] * np.where(joint.column('U') == 1, p_u, 1.0 - p_u)
        np.testing.assert_allclose(joint.probabilities, expected, atol=1e-12)

    @pytest.mark.parametrize('regime', TOY_REGIMES)
    def test_without_confounding_all_formulas_agree(self, unconfounded_toy, regime):
        joint = enumerate_joint(unconfounded_toy)
        truth = exact_counterfactual_mean(unconfounded_toy, regime)
        assert exact_f_functional(joint, regime) == pytest.approx(truth, abs=1e-10)
        assert exact_g_formula(joint, regime) == pytest.approx(truth, abs=1e-10)


@pytest.mark.slow
@pytest.mark.parametrize('regime', TOY_REGIMES)
def test_ground_truth_within_monte_carlo_error(toy, regime):
    exact = exact_counterfactual_mean(toy, regime)
    approx = simulate_ground_truth(10 ** 6, 20240607, regime, dgp=toy)
    assert abs(approx - exact) <= 4 * np.sqrt(0.25 / 10 ** 6)
