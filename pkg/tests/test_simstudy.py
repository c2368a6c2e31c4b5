import json
import os

import numpy as np
import pandas as pd
import pytest

from src.data.dataset import RegimeSpec
from src.data.dgp import paper_dgp
from src.nuisance.spec import NuisanceSpec, NuisanceSpecError
from src.simstudy.config import MonteCarloConfig, StudyConfigError
from src.simstudy.harness import replication_seed, run_study
from src.simstudy.plots import plot_metrics
from src.data.simulate import simulate_dgp
from src.estimators.tmle import estimate_tmle
from src.simstudy.report import METRICS_COLUMNS, MetricsRow, StudyReport, emit_report, read_metrics, summarize_cell
from src.simstudy.scenarios import SCENARIOS, ScenarioSpec, load_scenario


@pytest.fixture(scope='module')
def small_config():
    return MonteCarloConfig.from_dict({
        'dgp': 'builtin:paper',
        'scenarios': ['a'],
        'n': [100],
        'reps': 2,
        'estimators': ['ipw1', 'sr1', 'onestep'],
        'regimes': [[1, 1]],
        'seed': 7,
        'truth': {'11': 0.45},
    })


@pytest.fixture(scope='module')
def small_report(small_config):
    return run_study(small_config, [SCENARIOS['a']], paper_dgp(), progress=False)


class TestStudyConfig:
    def test_defaults(self):
        config = MonteCarloConfig()
        assert config.sample_sizes == (500, 1000, 2000, 3000, 4000, 5000)
        assert config.replications == 1000
        assert config.truth == 'auto'
        assert [r.key for r in config.regimes] == ['11', '00']

    def test_dict_round_trip(self, small_config):
        assert MonteCarloConfig.from_dict(small_config.to_dict()) == small_config

    def test_truth_lookup(self, small_config):
        assert small_config.truth_for(RegimeSpec((1, 1))) == 0.45
        assert MonteCarloConfig().truth_for(RegimeSpec((1, 1))) is None

    @pytest.mark.parametrize('payload, message', [
        ({'nn': [100]}, "unknown study config keys"),
        ({'n': [10]}, "at least 50"),
        ({'reps': 0}, "reps"),
        ({'estimators': ['aipw']}, "unknown estimators"),
        ({'truth': 'exact'}, "truth"),
        ({'regimes': [[1, 1]], 'truth': {'00': 0.5}}, "missing regimes: 11"),
        ({'alpha': 1.5}, "alpha"),
        ({'n': 'many'}, "malformed"),
    ])
    def test_rejects(self, payload, message):
        with pytest.raises(StudyConfigError, match=message):
            MonteCarloConfig.from_dict(payload)

    def test_invalid_json(self, tmp_path):
        path = tmp_path / 'study.json'
        path.write_text('{"n": [100],}')
        with pytest.raises(StudyConfigError, match="invalid JSON"):
            MonteCarloConfig.from_json(str(path))


class TestScenarios:
    def test_builtins_cover_one_period(self):
        assert sorted(SCENARIOS) == ['a', 'b', 'c', 'd', 'e']
        assert all(s.spec.horizon == 1 for s in SCENARIOS.values())

    def test_misspecified_formulas_differ(self):
        assert SCENARIOS['a'].spec.qy.labels != SCENARIOS['b'].spec.qy.labels
        assert SCENARIOS['a'].spec.pi == SCENARIOS['b'].spec.pi

    def test_load_from_file(self, spec_file):
        scenario = load_scenario(spec_file)
        assert scenario.id == 'spec'
        assert scenario.spec.qy.labels == SCENARIOS['a'].spec.qy.labels

    def test_unknown(self):
        with pytest.raises(NuisanceSpecError, match="unknown scenario"):
            load_scenario('z')


class TestSeeds:
    def test_depends_only_on_keys(self):
        assert replication_seed(7, 100, 3) == replication_seed(7, 100, 3)
        seeds = {replication_seed(7, n, rep) for n in (100, 200) for rep in range(50)}
        assert len(seeds) == 100
        assert replication_seed(8, 100, 3) != replication_seed(7, 100, 3)


class TestSummarizeCell:
    def test_metrics(self):
        cell = pd.DataFrame({
            'rep': [0, 1, 2, 3],
            'psi': [0.4, 0.6, 0.5, np.nan],
            'se': [0.1, 0.1, 0.04, np.nan],
            'lo': [0.3, 0.55, 0.45, np.nan],
            'hi': [0.55, 0.7, 0.55, np.nan],
            'failed': [False, False, False, True],
        })
        row = summarize_cell('a', 'onestep', '11', 100, cell, truth=0.5)
        assert row.reps == 3
        assert row.failures == 1
        assert row.mean_psi == pytest.approx(0.5)
        assert row.scaled_abs_bias == pytest.approx(0.0, abs=1e-12)
        assert row.scaled_sd == pytest.approx(1.0)
        assert row.coverage == pytest.approx(2.0 / 3.0)
        assert row.mean_se == pytest.approx(0.08)

    def test_without_intervals(self):
        cell = pd.DataFrame({'rep': [0], 'psi': [0.3], 'se': [None], 'lo': [None], 'hi': [None],
                             'failed': [False]})
        row = summarize_cell('a', 'ipw1', '11', 400, cell, truth=0.5)
        assert row.scaled_abs_bias == pytest.approx(20 * 0.2)
        assert row.scaled_sd is None
        assert row.coverage is None and row.mean_se is None


class TestRunStudy:
    def test_cells(self, small_report):
        frame = small_report.frame()
        assert tuple(frame.columns) == METRICS_COLUMNS
        assert len(frame) == 3
        assert list(frame['estimator']) == ['ipw1', 'sr1', 'onestep']
        assert all(frame['reps'] + frame['failures'] == 2)
        assert len(small_report.replications) == 6
        assert small_report.metadata['truth']['source'] == 'supplied'

    def test_only_onestep_has_coverage(self, small_report):
        rows = {r.estimator: r for r in small_report.rows}
        assert rows['ipw1'].coverage is None
        if rows['onestep'].reps == 2:
            assert rows['onestep'].coverage in (0.0, 0.5, 1.0)

    def test_subset_of_replications_matches(self, small_config, small_report):
        again = run_study(small_config, [SCENARIOS['a']], paper_dgp(), progress=False, reps=[1])
        full = small_report.replications
        part = again.replications
        expected = full[full['rep'] == 1].reset_index(drop=True)
        pd.testing.assert_series_equal(part['psi'], expected['psi'])
        assert list(part['seed'].unique()) == [replication_seed(7, 100, 1)]

    def test_parallel_matches_serial(self, small_config, small_report):
        parallel = run_study(small_config, [SCENARIOS['a']], paper_dgp(), jobs=2, progress=False)
        pd.testing.assert_frame_equal(parallel.replications, small_report.replications)
        pd.testing.assert_frame_equal(parallel.frame(), small_report.frame())

    def test_failed_nuisance_fit_is_recorded(self, small_config):
        broken = ScenarioSpec('bad', NuisanceSpec.from_dict({'pi': ['Z9', '1'], 'qy': '1'}), 'unbound variable')
        report = run_study(small_config, [broken], paper_dgp(), progress=False)
        assert all(r.failures == 2 and r.reps == 0 and r.mean_psi is None for r in report.rows)
        assert report.replications['message'].str.startswith('nuisance fit failed').all()
        assert report.metadata['failures'] == 6

    def test_horizon_mismatch(self, small_config):
        config = MonteCarloConfig.from_dict({**small_config.to_dict(), 'regimes': [[1, 1, 1]],
                                             'truth': {'111': 0.5}})
        with pytest.raises(StudyConfigError, match="horizon"):
            run_study(config, [SCENARIOS['a']], paper_dgp(), progress=False)


class TestReportFiles:
    def test_emit_and_read_back(self, tmp_path, small_report):
        out = str(tmp_path / 'study')
        written = emit_report(small_report, out)
        names = sorted(os.path.basename(p) for p in written)
        assert names == ['coverage.svg', 'metadata.json', 'metrics.csv', 'replications.csv',
                         'scaled_bias.svg', 'scaled_sd.svg']
        rows = read_metrics(os.path.join(out, 'metrics.csv')).rows
        assert [r.regime for r in rows] == ['11', '11', '11']
        for got, expected in zip(rows, small_report.rows):
            assert got.reps == expected.reps
            if expected.mean_psi is not None:
                assert got.mean_psi == pytest.approx(expected.mean_psi, rel=1e-12)
            assert (got.coverage is None) == (expected.coverage is None)
        with open(os.path.join(out, 'metadata.json')) as fh:
            assert json.load(fh)['config']['seed'] == 7

    def test_metrics_to_stdout(self, capsys, small_report):
        assert emit_report(small_report, '-') == []
        header = capsys.readouterr().out.splitlines()[0]
        assert header == ','.join(METRICS_COLUMNS)

    def test_svg_is_byte_stable(self, tmp_path, small_report):
        first = plot_metrics(small_report.rows, str(tmp_path / 'one'))
        second = plot_metrics(small_report.rows, str(tmp_path / 'two'))
        for a, b in zip(first, second):
            with open(a, 'rb') as fa, open(b, 'rb') as fb:
                assert fa.read() == fb.read()

    def test_no_rows_no_figures(self, tmp_path):
        assert plot_metrics([], str(tmp_path)) == []

    def test_empty_report_is_header_only(self, tmp_path):
        out = str(tmp_path / 'empty')
        written = emit_report(StudyReport(), out)
        assert [os.path.basename(p) for p in written] == ['metrics.csv']
        with open(written[0]) as fh:
            assert fh.read().splitlines() == [','.join(METRICS_COLUMNS)]

    def test_one_row_per_cell_and_a_panel_per_scenario(self, tmp_path):
        rows = [
            MetricsRow(scenario, estimator, '11', n, 10, 0.45, 0.1, 1.0, 0.9, 0.02, 0)
            for scenario in ('a', 'e')
            for estimator in ('sr1', 'onestep', 'tmle')
            for n in (500, 1000, 2000, 3000, 4000, 5000)
        ]
        out = str(tmp_path / 'grid')
        written = emit_report(StudyReport(rows=rows), out)
        assert len(pd.read_csv(os.path.join(out, 'metrics.csv'))) == 36
        figures = sorted(p for p in written if p.endswith('.svg'))
        assert [os.path.basename(p) for p in figures] == ['coverage.svg', 'scaled_bias.svg', 'scaled_sd.svg']
        for path in figures:
            with open(path) as fh:
                assert fh.read().count('<g id="axes_') == 2


def _run(scenarios, sample_sizes, estimators, truth=0.45, regime=(1, 1), reps=500):
    config = MonteCarloConfig.from_dict({
        'scenarios': list(scenarios),
        'n': list(sample_sizes),
        'reps': reps,
        'estimators': list(estimators),
        'regimes': [list(regime)],
        'seed': 20240607,
        'truth': {''.join(map(str, regime)): truth},
    })
    report = run_study(config, [SCENARIOS[s] for s in scenarios], paper_dgp(), jobs=os.cpu_count() or 1,
                       progress=False)
    return {(r.scenario, r.estimator, r.n): r for r in report.rows}


def _bias(row):
    return row.mean_psi - 0.45


@pytest.mark.slow
def test_efficient_estimators_are_doubly_robust():
    rows = _run('abcd', [5000], ['ipw1', 'sr1', 'onestep', 'tmle'])
    for scenario in 'abcd':
        for estimator in ('onestep', 'tmle'):
            assert abs(_bias(rows[(scenario, estimator, 5000)])) <= 0.02
    assert abs(_bias(rows[('d', 'ipw1', 5000)])) >= 0.03
    assert abs(_bias(rows[('b', 'sr1', 5000)])) >= 0.03


@pytest.mark.slow
def test_coverage_near_nominal_when_models_are_right():
    rows = _run('a', [2000], ['onestep', 'tmle'])
    for estimator in ('onestep', 'tmle'):
        assert 0.90 <= rows[('a', estimator, 2000)].coverage <= 0.98


@pytest.mark.slow
def test_coverage_collapses_when_every_model_is_wrong():
    rows = _run('e', [500, 5000], ['onestep', 'tmle'])
    for estimator in ('onestep', 'tmle'):
        large = rows[('e', estimator, 5000)].coverage
        assert large <= 0.6
        assert large < rows[('e', estimator, 500)].coverage


@pytest.mark.slow
def test_targeted_fits_solve_the_score_equation():
    spec = SCENARIOS['a'].spec
    solved = 0
    for rep in range(100):
        data = simulate_dgp(paper_dgp(), 1000, seed=replication_seed(20240607, 1000, rep))
        result = estimate_tmle(data, spec, (1, 1))
        bound = max(1e-3, 0.01 * float(np.std(result.eif_values, ddof=1)) / np.sqrt(data.n_rows))
        solved += abs(result.eif_mean) <= bound
    assert solved >= 95
