import json
import os

import pytest

from src.app import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, run_cli


@pytest.fixture
def data_file(tmp_path):
    path = str(tmp_path / 'data.csv')
    assert run_cli(['simulate', '--dgp', 'builtin:paper', '--n', '300', '--seed', '5', '--out', path]) == EXIT_OK
    return path


@pytest.fixture
def study_file(tmp_path):
    path = tmp_path / 'study.json'
    path.write_text(json.dumps({
        'scenarios': ['a'], 'n': [60], 'reps': 1, 'estimators': ['sr1', 'onestep'],
        'regimes': [[0, 0]], 'seed': 3, 'truth': {'00': 0.57},
    }))
    return str(path)


class TestSimulate:
    def test_to_stdout(self, capsys):
        assert run_cli(['simulate', '--dgp', 'builtin:toy-v1', '--n', '5', '--seed', '1', '--out', '-']) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == 'L0_1,L0_2,A0,M0,A1,M1,Y'
        assert len(lines) == 6

    def test_same_seed_same_file(self, tmp_path, data_file):
        other = str(tmp_path / 'again.csv')
        run_cli(['simulate', '--dgp', 'builtin:paper', '--n', '300', '--seed', '5', '--out', other])
        with open(data_file) as a, open(other) as b:
            assert a.read() == b.read()

    def test_bad_regime_is_usage_error(self, tmp_path):
        code = run_cli(['simulate', '--dgp', 'builtin:paper', '--n', '5', '--seed', '1',
                        '--regime', '1,2', '--out', str(tmp_path / 'x.csv')])
        assert code == EXIT_USAGE

    def test_unknown_dgp(self, tmp_path):
        code = run_cli(['simulate', '--dgp', 'builtin:nope', '--n', '5', '--seed', '1',
                        '--out', str(tmp_path / 'x.csv')])
        assert code == EXIT_RUNTIME


class TestEstimate:
    def test_result_file(self, tmp_path, capsys, data_file, spec_file):
        out = str(tmp_path / 'result.json')
        code = run_cli(['estimate', '--data', data_file, '--spec', spec_file, '--estimator', 'onestep',
                        '--regime', '1,1', '--out', out])
        assert code == EXIT_OK
        assert capsys.readouterr().out.startswith('psi=')
        with open(out) as fh:
            payload = json.load(fh)
        assert payload['estimator'] == 'onestep'
        assert payload['regime'] == '11'
        assert payload['n'] == 300
        assert payload['ci'][0] <= payload['psi'] <= payload['ci'][1]

    def test_json_to_stdout(self, capsys, data_file, spec_file):
        code = run_cli(['estimate', '--data', data_file, '--spec', spec_file, '--estimator', 'sr2',
                        '--regime', '0,0', '--out', '-'])
        assert code == EXIT_OK
        captured = capsys.readouterr()
        payload = json.loads(captured.out)
        assert payload['se'] is None
        assert 'psi=' in captured.err

    def test_mediator_targeting_flags(self, capsys, data_file, spec_file):
        code = run_cli(['estimate', '--data', data_file, '--spec', spec_file, '--estimator', 'tmle_med',
                        '--regime', '1,1', '--max-iters', '0', '--out', '-'])
        assert code == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert "no targeting iterations run; un-fluctuated plug-in returned" in payload['diagnostics']

    def test_saturated_spec(self, capsys, tmp_path):
        path = str(tmp_path / 'toy.csv')
        run_cli(['simulate', '--dgp', 'builtin:toy-v1', '--n', '2000', '--seed', '2', '--out', path])
        code = run_cli(['estimate', '--data', path, '--spec', 'saturated', '--estimator', 'ipw2a',
                        '--regime', '1,0', '--out', '-'])
        assert code == EXIT_OK
        assert json.loads(capsys.readouterr().out)['estimator'] == 'ipw2a'

    def test_regime_length_mismatch(self, data_file, spec_file):
        code = run_cli(['estimate', '--data', data_file, '--spec', spec_file, '--estimator', 'sr1',
                        '--regime', '1,1,1', '--out', '-'])
        assert code == EXIT_USAGE

    def test_unknown_estimator(self, data_file, spec_file):
        code = run_cli(['estimate', '--data', data_file, '--spec', spec_file, '--estimator', 'aipw',
                        '--regime', '1,1', '--out', '-'])
        assert code == EXIT_USAGE

    def test_missing_data_file(self, tmp_path, spec_file):
        code = run_cli(['estimate', '--data', str(tmp_path / 'none.csv'), '--spec', spec_file,
                        '--estimator', 'sr1', '--regime', '1,1', '--out', '-'])
        assert code == EXIT_RUNTIME

    def test_malformed_data(self, tmp_path, spec_file):
        path = tmp_path / 'bad.csv'
        path.write_text("L0_1,L0_2,A0,M0,A1,M1,Y\n0,1,1,0,1,x,1\n")
        code = run_cli(['estimate', '--data', str(path), '--spec', spec_file, '--estimator', 'sr1',
                        '--regime', '1,1', '--out', '-'])
        assert code == EXIT_RUNTIME

    def test_spec_with_invalid_json(self, tmp_path, data_file):
        path = tmp_path / 'spec.json'
        path.write_text('{"pi": ')
        code = run_cli(['estimate', '--data', data_file, '--spec', str(path), '--estimator', 'sr1',
                        '--regime', '1,1', '--out', '-'])
        assert code == EXIT_RUNTIME

    def test_inconsistent_spec(self, tmp_path, data_file):
        path = tmp_path / 'spec.json'
        path.write_text(json.dumps({'pi': ['1', '1'], 'qy': '1', 'qm': ['1']}))
        code = run_cli(['estimate', '--data', data_file, '--spec', str(path), '--estimator', 'sr1',
                        '--regime', '1,1', '--out', '-'])
        assert code == EXIT_USAGE


class TestOracle:
    def test_exact_identification(self, capsys):
        assert run_cli(['oracle', '--dgp', 'builtin:toy-v1', '--regime', '1,1']) == EXIT_OK
        lines = dict(line.split('=', 1) for line in capsys.readouterr().out.splitlines())
        assert set(lines) == {'f_functional', 'counterfactual_mean', 'difference'}
        assert float(lines['f_functional']) == pytest.approx(float(lines['counterfactual_mean']), abs=1e-10)

    def test_exact_needs_binary_dgp(self):
        assert run_cli(['oracle', '--dgp', 'builtin:paper', '--regime', '1,1']) == EXIT_RUNTIME

    def test_monte_carlo(self, capsys):
        code = run_cli(['oracle', '--dgp', 'builtin:toy-v1', '--regime', '0,0', '--mode', 'mc',
                        '--n', '20000', '--seed', '4'])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert out.startswith('f_functional=')
        assert 'n=20000' in out


class TestStudyAndPlot:
    def test_study_then_plot(self, tmp_path, capsys, study_file):
        out = str(tmp_path / 'study')
        assert run_cli(['study', '--config', study_file, '--out', out, '--no-plots']) == EXIT_OK
        assert os.path.exists(os.path.join(out, 'metrics.csv'))
        assert not os.path.exists(os.path.join(out, 'coverage.svg'))
        capsys.readouterr()
        figures = str(tmp_path / 'figures')
        assert run_cli(['plot', '--in', os.path.join(out, 'metrics.csv'), '--out', figures]) == EXIT_OK
        printed = capsys.readouterr().out.split()
        assert sorted(os.path.basename(p) for p in printed) == ['coverage.svg', 'scaled_bias.svg', 'scaled_sd.svg']

    def test_invalid_study_config(self, tmp_path):
        path = tmp_path / 'study.json'
        path.write_text(json.dumps({'estimators': ['nope']}))
        assert run_cli(['study', '--config', str(path), '--out', '-']) == EXIT_USAGE

    def test_zero_jobs(self, study_file):
        assert run_cli(['study', '--config', study_file, '--out', '-', '--jobs', '0']) == EXIT_USAGE


def test_missing_subcommand():
    assert run_cli([]) == EXIT_USAGE
