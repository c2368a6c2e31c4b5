from dataclasses import replace

import numpy as np
import pytest

from src.data.oracle import exact_conditional_rows, exact_f_functional
from src.formula.parser import parse_formula, saturated_formula
from src.nuisance.models import NuisanceFitError, NuisancePredictor, bernoulli_mass, fit_nuisance_set
from src.nuisance.sequential import evaluate_nuisance, sequential_Q, sequential_R
from src.nuisance.spec import NuisanceSpec, NuisanceSpecError, saturated_spec
from src.nuisance.weights import compute_H, compute_W, truncate_h, truncate_w
from src.utils.helpers import weighted_mean
from tests.conftest import TOY_REGIMES


@pytest.fixture(scope='module')
def fitted(toy_population, saturated):
    return {regime: fit_nuisance_set(toy_population, saturated, regime) for regime in TOY_REGIMES}


class TestSpec:
    def test_round_trip(self, saturated):
        again = NuisanceSpec.from_dict(saturated.to_dict())
        assert [f.labels for f in again.pi] == [f.labels for f in saturated.pi]
        assert again.qy.labels == saturated.qy.labels
        assert again.h_mode == 'direct'
        assert again.truncate is None

    def test_json_file(self, tmp_path, saturated):
        path = tmp_path / 'spec.json'
        saturated.to_json(str(path))
        assert NuisanceSpec.from_json(str(path)).horizon == 1

    def test_invalid_json_names_line(self, tmp_path):
        path = tmp_path / 'broken.json'
        path.write_text('{\n"pi": [\n')
        with pytest.raises(NuisanceSpecError, match="invalid JSON"):
            NuisanceSpec.from_json(str(path))

    @pytest.mark.parametrize('payload, message', [
        ({'pi': ['1'], 'qy': '1', 'extra': 1}, "unknown spec keys"),
        ({'qy': '1'}, "missing 'pi'"),
        ({'pi': ['1', '1'], 'qy': '1', 'qm': ['1']}, "'qm' has 1 formulas"),
        ({'pi': ['1'], 'qy': '1', 'h_mode': 'gamma'}, "requires gamma1"),
        ({'pi': ['1'], 'qy': '1', 'truncate': 0.5}, "truncate"),
        ({'pi': ['1'], 'qy': '1', 'seq_family': 'poisson'}, "seq_family"),
        ({'pi': ['L1 +'], 'qy': '1'}, r"pi\[0\]"),
        ({'pi': [3], 'qy': '1'}, "must be a string"),
    ])
    def test_rejects(self, payload, message):
        with pytest.raises(NuisanceSpecError, match=message):
            NuisanceSpec.from_dict(payload)

    def test_gamma_rows_need_growing_length(self):
        with pytest.raises(NuisanceSpecError, match=r"gamma1\[1\]"):
            NuisanceSpec.from_dict({'pi': ['1', '1'], 'qy': '1',
                                    'gamma1': [['1'], ['1']], 'gamma2': [['1'], ['1', '1']]})

    def test_horizon_check(self, saturated):
        with pytest.raises(NuisanceSpecError, match="T=1"):
            saturated.check_horizon(2)

    def test_saturated_shapes(self):
        spec = saturated_spec(2, ['L0_1'])
        assert spec.horizon == 2
        assert [len(row) for row in spec.gamma1] == [1, 2, 3]
        assert len(spec.qy) == 2 ** 7


class TestFitting:
    def test_component_counts(self, fitted):
        assert fitted[(1, 1)].component_counts() == {'pi': 2, 'qy': 1, 'g': 2, 'gamma1': 3, 'gamma2': 3}

    def test_saturated_propensity_is_exact(self, fitted, toy_population, toy_joint):
        predictor = NuisancePredictor(fitted[(1, 1)], toy_population)
        expected = exact_conditional_rows(toy_joint, 'A1', ['L0_1', 'L0_2', 'A0', 'M0'], toy_population.frame)
        np.testing.assert_allclose(predictor.pi_one(1), expected, atol=1e-7)

    def test_saturated_mediator_density_under_override(self, fitted, toy_population, toy_joint):
        predictor = NuisancePredictor(fitted[(0, 1)], toy_population)
        expected = exact_conditional_rows(toy_joint, 'M1', ['L0_1', 'L0_2', 'A0', 'A1', 'M0'],
                                          toy_population.frame, overrides={'A0': 0, 'A1': 1})
        np.testing.assert_allclose(predictor.g_one(1, (0, 1)), expected, atol=1e-7)

    def test_unbound_variable_names_component(self, toy_population):
        spec = NuisanceSpec.from_dict({'pi': ['L0_1 + Z9', '1'], 'qy': '1'})
        with pytest.raises(NuisanceFitError) as info:
            fit_nuisance_set(toy_population, spec, (1, 1))
        assert info.value.component == 'pi_0'

    def test_horizon_mismatch(self, paper_sample):
        with pytest.raises(NuisanceSpecError):
            fit_nuisance_set(paper_sample, saturated_spec(2, paper_sample.baseline), (1, 1))

    def test_bernoulli_mass(self):
        np.testing.assert_allclose(bernoulli_mass(np.array([0.2, 0.7]), np.array([1, 0])), [0.2, 0.3])


class TestWeights:
    @pytest.mark.parametrize('regime', TOY_REGIMES)
    def test_weights_average_to_one(self, fitted, toy_population, regime):
        nuisance = fitted[regime]
        w = toy_population.weights
        for t in (0, 1):
            assert weighted_mean(compute_W(nuisance, toy_population, t), w) == pytest.approx(1.0, abs=1e-8)
            assert weighted_mean(compute_H(nuisance, toy_population, t), w) == pytest.approx(1.0, abs=1e-8)

    @pytest.mark.parametrize('regime', TOY_REGIMES)
    def test_direct_and_gamma_agree(self, fitted, toy_population, regime):
        nuisance = fitted[regime]
        for t in (0, 1):
            direct = compute_H(nuisance, toy_population, t, mode='direct')
            gamma = compute_H(nuisance, toy_population, t, mode='gamma')
            np.testing.assert_allclose(direct, gamma, rtol=1e-8, atol=1e-8)

    def test_rows_following_regime(self, fitted, toy_population):
        nuisance = fitted[(1, 0)]
        h = compute_H(nuisance, toy_population, 1)
        w = compute_W(nuisance, toy_population, 1)
        match = toy_population.regime_match(nuisance.regime, 1)
        np.testing.assert_allclose(h[match], 1.0)
        assert np.all(w[~match] == 0.0)
        assert np.all(w[match] > 1.0)

    def test_negative_time_is_one(self, fitted, toy_population):
        assert np.all(compute_H(fitted[(1, 1)], toy_population, -1) == 1.0)
        assert np.all(compute_W(fitted[(1, 1)], toy_population, -1) == 1.0)

    def test_beyond_horizon(self, fitted, toy_population):
        with pytest.raises(ValueError, match="horizon"):
            compute_H(fitted[(1, 1)], toy_population, 2)

    def test_truncation_records_diagnostic(self):
        diagnostics = []
        clipped = truncate_h(np.array([0.1, 1.0, 30.0]), 20.0, 1, diagnostics)
        np.testing.assert_allclose(clipped, [0.1, 1.0, 20.0])
        assert diagnostics == ["H_1 truncated to [0.05, 20] on 1 rows"]
        capped = truncate_w(np.array([0.0, 50.0]), 10.0, 0, diagnostics)
        np.testing.assert_allclose(capped, [0.0, 10.0])
        assert len(diagnostics) == 2

    def test_no_bound_is_identity(self):
        h = np.array([0.001, 1000.0])
        assert truncate_h(h, None, 0, None) is h


class TestSequential:
    @pytest.mark.parametrize('regime', TOY_REGIMES)
    def test_both_recursions_reach_the_functional(self, fitted, toy_population, toy_joint, regime):
        nuisance = fitted[regime]
        w = toy_population.weights
        expected = exact_f_functional(toy_joint, regime)
        seq_q = sequential_Q(nuisance, toy_population)
        seq_r = sequential_R(nuisance, toy_population)
        assert weighted_mean(seq_q.plug_in, w) == pytest.approx(expected, abs=1e-8)
        assert weighted_mean(seq_r.plug_in, w) == pytest.approx(expected, abs=1e-8)

    def test_constant_outcome_propagates(self, saturated, toy_population):
        nuisance = fit_nuisance_set(toy_population, replace(saturated, qy=parse_formula('1')), (1, 0))
        c = weighted_mean(toy_population.outcome, toy_population.weights)
        seq_q = sequential_Q(nuisance, toy_population)
        seq_r = sequential_R(nuisance, toy_population)
        for values in seq_q.values + seq_r.r_m_observed + seq_r.r_a_observed:
            np.testing.assert_allclose(values, c, atol=1e-8)
        for table in seq_r.kappa + seq_r.r_a:
            for values in table.values():
                np.testing.assert_allclose(values, c, atol=1e-8)

    def test_regression_counts(self, fitted, toy_population):
        seq_r = sequential_R(fitted[(1, 1)], toy_population)
        assert seq_r.regressions == [2, 4]

    def test_cache_shapes(self, fitted, toy_population):
        cache = evaluate_nuisance(fitted[(0, 0)], toy_population).cache
        assert cache.horizon == 1
        assert len(cache.q_m) == 3
        assert len(cache.r_m) == len(cache.r_a) == 2
        np.testing.assert_allclose(cache.h_prev(0), 1.0)
        assert len(cache.qy_observed) == toy_population.n_rows

    def test_missing_formulas(self, toy_population):
        spec = NuisanceSpec.from_dict({'pi': ['1', '1'], 'qy': '1'})
        nuisance = fit_nuisance_set(toy_population, spec, (1, 1))
        with pytest.raises(NuisanceFitError, match="qm"):
            sequential_Q(nuisance, toy_population)
        with pytest.raises(NuisanceFitError, match="formulas"):
            sequential_R(nuisance, toy_population)

    def test_pooled_regression_with_treatment_terms(self, saturated, toy_population, toy_joint):
        spec = replace(saturated, qm=(saturated_formula(['L0_1', 'L0_2', 'A0']),
                                      saturated_formula(['L0_1', 'L0_2', 'A0', 'A1', 'M0'])))
        nuisance = fit_nuisance_set(toy_population, spec, (1, 1))
        seq_q = sequential_Q(nuisance, toy_population)
        assert weighted_mean(seq_q.plug_in, toy_population.weights) == pytest.approx(
            exact_f_functional(toy_joint, (1, 1)), abs=1e-8)
