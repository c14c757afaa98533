#!/usr/bin/env python3
# -*- coding: utf-8, vim: expandtab:ts=4 -*-

import os

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from shallowdiffusion.exceptions import ConfigurationError, InsufficientGridError
from shallowdiffusion.harness import RECORDS_FILE, build_target, fit_rate_exponent, power_law_regime, prepare_cell, \
    record_key, report, run_cell, sweep
from shallowdiffusion.logger import NullLogger
from shallowdiffusion.storage import read_jsonl
from shallowdiffusion.targets import IndependentModel, MixedModel, SubspaceModel
from shallowdiffusion.utils import SEED_OVERRIDE_ENV, TARGET_DEFAULTS, wrap_input_constants

from conftest import TINY_GAUSSIAN


@pytest.fixture(autouse=True)
def no_seed_override(monkeypatch):
    monkeypatch.delenv(SEED_OVERRIDE_ENV, raising=False)


def _target(**kwargs):
    return {**TARGET_DEFAULTS, **kwargs}


def test_build_target_kinds():
    model, kind, embedding, shape = build_target(_target(kind='subspace', d=2), 5)
    assert isinstance(model, SubspaceModel) and (model.D, model.d) == (5, 2)
    assert kind is None and embedding.shape == (5, 2)
    assert shape == {'d_latent': 2, 'group_dims': None}

    model, kind, embedding, shape = build_target(_target(kind='gaussian', scale=2.0), 3)
    assert kind == 'exact-gaussian-ambient' and embedding is None
    assert np.allclose(model.latent.covs[0], 2.0 * np.eye(3))

    model, _, _, shape = build_target(_target(kind='independent', group_dims=[1, 2]), 3)
    assert isinstance(model, IndependentModel) and shape['group_dims'] == (1, 2)

    model, _, _, _ = build_target(_target(kind='mixed', group_dims=[2, 2], condition_number=5.0), 4)
    assert isinstance(model, MixedModel)
    assert model.condition_number == pytest.approx(5.0, rel=1e-8)


def test_build_target_depends_on_seed_and_D_only():
    a = build_target(_target(kind='subspace', d=1, latent='random-mixture', seed=4), 3)[0]
    b = build_target(_target(kind='subspace', d=1, latent='random-mixture', seed=4), 3)[0]
    c = build_target(_target(kind='subspace', d=1, latent='random-mixture', seed=5), 3)[0]
    assert_array_equal(a.U, b.U)
    assert_array_equal(a.latent.means, b.latent.means)
    assert not np.array_equal(a.U, c.U)


def _planted_records(slope, n_values=(100, 400, 1600, 6400), seeds=5, noise=0.02, rng=None):
    rng = np.random.default_rng(1) if rng is None else rng
    records = []
    for n in n_values:
        for seed in range(seeds):
            risk = 3.0 * n ** slope * np.exp(noise * rng.standard_normal())
            records.append({'fingerprint': 'fp', 'seed': seed, 'n': n, 'D': 4, 'eval': {'risk': float(risk)}})
    return records


@pytest.mark.parametrize('slope', [-1.0, -2.0 / 7.0, 0.0])
def test_fit_rate_exponent_recovers_planted_slope(slope):
    fit = fit_rate_exponent(_planted_records(slope), n_boot=200, rng=np.random.default_rng(2))
    assert abs(fit.slope - slope) <= 0.03
    assert 0.0 < fit.se < 0.05
    assert fit.n_values == [100, 400, 1600, 6400]
    assert fit.intercept == pytest.approx(np.log(3.0), abs=0.1)


def test_fit_rate_exponent_needs_enough_data():
    with pytest.raises(InsufficientGridError, match='distinct n'):
        fit_rate_exponent(_planted_records(-1.0, n_values=(100, 400)))
    with pytest.raises(InsufficientGridError, match='seeds per n'):
        fit_rate_exponent(_planted_records(-1.0, seeds=2))
    records = _planted_records(-1.0)
    records[0]['eval']['risk'] = 0.0
    with pytest.raises(InsufficientGridError, match='positive'):
        fit_rate_exponent(records)


def test_power_law_regime():
    assert power_law_regime([100, 400, 1600], [1.0, 0.5, 0.25])
    assert not power_law_regime([100, 400, 1600], [1.0, 1.1, 0.25])


def test_record_key():
    assert record_key({'fingerprint': 'fp', 'seed': 1, 'n': 64, 'D': 2, 'eval': {}}) == ('fp', 1, 64, 2)


def test_prepare_cell_is_deterministic(tiny_subspace_config):
    settings = wrap_input_constants(tiny_subspace_config)
    a = prepare_cell(settings, 0, 64, 3)
    b = prepare_cell(settings, 0, 64, 3)
    assert_array_equal(a.x0, b.x0)
    assert a.cfg.seed == b.cfg.seed
    assert a.cfg.seed != prepare_cell(settings, 1, 64, 3).cfg.seed
    assert a.grid.N == 4 and a.x0.shape == (64, 3)
    assert a.oracle.kind == 'closed-form-subspace'


def test_structured_init_needs_subspace(write_config):
    settings = wrap_input_constants(write_config(TINY_GAUSSIAN.replace('"radius": 10.0',
                                                                      '"radius": 10.0\n  "init": "structured"')))
    with pytest.raises(ConfigurationError, match='subspace'):
        prepare_cell(settings, 0, 64, 2)


def test_mixed_cell_is_whitened(write_config):
    text = TINY_GAUSSIAN.replace('"kind": "gaussian"', '"kind": "mixed"\n  "group_dims": [1, 1]')
    cell = prepare_cell(wrap_input_constants(write_config(text)), 0, 256, 2)
    assert cell.whitener is not None
    assert np.allclose(np.cov(cell.x0, rowvar=False), np.eye(2), atol=1e-8)
    assert cell.oracle.kind == 'ambient-mixture'


@pytest.mark.slow
def test_run_cell_record(tiny_subspace_config):
    settings = wrap_input_constants(tiny_subspace_config)
    record = run_cell((settings, 0, 64, 3, NullLogger()))
    assert record_key(record) == (settings['FINGERPRINT'], 0, 64, 3)
    assert len(record['timesteps']) == 4
    assert [ts['t'] for ts in record['timesteps']] == [2.0, 1.5, 1.0, 0.5]
    assert record['eval']['risk'] >= 0.0 and record['eval']['se'] >= 0.0
    assert {'subspace_residual', 'energy_distance', 'energy_p_value', 'empirical_lipschitz',
            'lipschitz_variation'} <= set(record['sampler'])
    again = run_cell((settings, 0, 64, 3, NullLogger()))
    assert again['eval'] == record['eval']
    assert again['sampler'] == record['sampler']


@pytest.mark.slow
def test_sweep_resume_and_report(tiny_gaussian_config, tmp_path):
    settings = wrap_input_constants(tiny_gaussian_config, out_dir=str(tmp_path / 'results'))
    records = sweep(settings)
    assert len(records) == 9
    assert all('weighted_score_error' in r['sampler'] and 'gaussian_fit_kl' in r['sampler'] for r in records)
    # A second run finds every cell done and appends nothing
    assert len(sweep(settings)) == 9
    assert len(read_jsonl(os.path.join(settings['OUTPUT_DIR'], RECORDS_FILE))) == 9

    result = report(settings['OUTPUT_DIR'])
    assert len(result.summary) == 3
    assert len(result.rates) == 1 and result.rates[0][5] == 3
    for name in ('summary.csv', 'rates.csv', 'risk_{0}.svg'.format(settings['FINGERPRINT'])):
        assert os.path.exists(os.path.join(settings['OUTPUT_DIR'], name))
    with open(os.path.join(settings['OUTPUT_DIR'], 'summary.csv'), encoding='UTF-8') as fh:
        assert fh.readline().strip() == '# fingerprint: {0}'.format(settings['FINGERPRINT'])


def test_report_without_records(tmp_path):
    with pytest.raises(InsufficientGridError):
        report(str(tmp_path))


ADAPTIVITY = """
"target":
  "kind": "subspace"
  "d": 2
  "latent": "two-component"
  "separation": 2.0
  "bandwidth": 0.5
  "seed": 7
"schedule":
  "T": 3.0
  "N": 16
  "zeta": 0.05
"train":
  "width": 64
  "epochs": 80
  "step_size": 0.02
  "step_schedule": "cosine"
  "radius_mode": "fixed"
  "radius": 400.0
  "init": "structured"
"sweep":
  "D": [4, 16]
  "n": [250, 1000, 4000]
  "seeds": [0, 1, 2]
  "eval_t": 0.5
  "n_samples": 1000
"metrics":
  "n_mc": 4000
  "energy": false
"""


@pytest.mark.slow
def test_risk_rate_is_governed_by_intrinsic_dimension(write_config, tmp_path):
    settings = wrap_input_constants(write_config(ADAPTIVITY, 'adaptivity.yaml'), out_dir=str(tmp_path / 'results'))
    records = sweep(settings)
    assert len(records) == 18
    slopes = {}
    for D in (4, 16):
        fit = fit_rate_exponent([r for r in records if r['D'] == D])
        assert fit.n_values == [250, 1000, 4000]
        assert fit.slope < 0.0
        assert power_law_regime(fit.n_values, fit.medians), 'median risk not decreasing for D={0}'.format(D)
        slopes[D] = fit.slope
    assert abs(slopes[4] - slopes[16]) <= 0.15
    for rec in records:
        sampler = rec['sampler']
        assert sampler['subspace_residual'] <= 3.0 * sampler['subspace_residual_expected']
