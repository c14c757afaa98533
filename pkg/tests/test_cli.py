#!/usr/bin/env python3
# -*- coding: utf-8, vim: expandtab:ts=4 -*-

import os

import pytest

from shallowdiffusion.__main__ import cli
from shallowdiffusion.selftest import SUITES, run_selftest
from shallowdiffusion.storage import read_metric_csv, read_samples_csv
from shallowdiffusion.utils import SEED_OVERRIDE_ENV


@pytest.fixture(autouse=True)
def no_seed_override(monkeypatch):
    monkeypatch.delenv(SEED_OVERRIDE_ENV, raising=False)


def test_selftest_passes():
    passed, failed = run_selftest(seed=3)
    assert failed == []
    assert passed == len(SUITES)


def test_selftest_command(capsys):
    assert cli(['selftest']) == 0
    assert '{0} passed, 0 failed'.format(len(SUITES)) in capsys.readouterr().out


@pytest.mark.parametrize('argv', [[], ['bogus'], ['train'], ['train', '--config'], ['report'],
                                  ['sample', '--config', 'x.yaml', '--n-samples', 'many']])
def test_usage_errors(argv):
    assert cli(argv) == 2


def test_version():
    assert cli(['--version']) == 0


def test_invalid_config_exit_code(write_config):
    bad = write_config('"target":\n  "kind": "spiral"\n"schedule":\n  "T": 2.0\n"sweep":\n  "D": [2]\n'
                       '  "n": [10]\n  "seeds": [0]\n')
    assert cli(['train', '--config', bad]) == 3


def test_missing_config_file(tmp_path):
    assert cli(['train', '--config', str(tmp_path / 'nope.yaml')]) == 1


def test_unparsable_config_exit_code(write_config):
    broken = write_config('"target": {"kind": "gaussian"\n"schedule": [1, 2\n', 'broken.yaml')
    assert cli(['train', '--config', broken]) == 3


@pytest.mark.parametrize('error', [KeyError('eval_t'), RuntimeError('pool died')])
def test_unexpected_errors_exit_with_failure(monkeypatch, error):
    def failing_selftest(*_, **__):
        raise error

    monkeypatch.setattr('shallowdiffusion.__main__.run_selftest', failing_selftest)
    assert cli(['selftest']) == 1


def test_generate(tiny_gaussian_config, tmp_path):
    out = tmp_path / 'run'
    assert cli(['generate', '--config', tiny_gaussian_config, '--out', str(out), '--n', '32']) == 0
    assert sorted(os.listdir(out / 'data')) == ['train_{0:04d}.bin{1}'.format(k, ext) for k in range(4)
                                                for ext in ('', '.json')]
    assert cli(['generate', '--config', tiny_gaussian_config, '--out', str(out), '--csv']) == 0
    assert (out / 'data' / 'train_0003.csv').exists()


@pytest.mark.slow
def test_train_sample_evaluate(tiny_gaussian_config, tmp_path):
    out = str(tmp_path / 'run')
    common = ['--config', tiny_gaussian_config, '--out', out, '--n', '64']
    assert cli(['train'] + common) == 0
    assert os.path.exists(os.path.join(out, 'models', 'manifest.json'))
    assert cli(['sample'] + common + ['--n-samples', '50']) == 0
    assert read_samples_csv(os.path.join(out, 'samples.csv')).shape == (50, 2)
    assert cli(['evaluate'] + common + ['--samples', os.path.join(out, 'samples.csv')]) == 0
    rows = read_metric_csv(os.path.join(out, 'metrics.csv'))
    metrics = [row[0] for row in rows]
    assert metrics.count('score_risk') == 4
    assert 'weighted_score_error' in metrics and 'gaussian_fit_kl' in metrics
    # A model set trained under another configuration is refused
    assert cli(['sample', '--config', tiny_gaussian_config, '--out', out, '--n-mc', '7']) == 1


@pytest.mark.slow
def test_sweep_and_report_commands(tiny_gaussian_config, tmp_path):
    out = str(tmp_path / 'sweep')
    assert cli(['sweep', '--config', tiny_gaussian_config, '--out', out, '--seed', '4']) == 0
    assert cli(['report', '--out', out]) == 0
    assert os.path.exists(os.path.join(out, 'rates.csv'))
