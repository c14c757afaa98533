#!/usr/bin/env python3
# -*- coding: utf-8, vim: expandtab:ts=4 -*-

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from shallowdiffusion.dsm_train import ScoreModelEntry, ScoreModelSet
from shallowdiffusion.shallow_net import ShallowScoreNet, path_norm
from shallowdiffusion.storage import append_jsonl, load_model_set, read_checkpoint, read_jsonl, read_metric_csv, \
    read_samples, read_samples_csv, read_sidecar, read_training_set, save_model_set, write_checkpoint, write_csv, \
    write_metric_csv, write_samples, write_samples_csv, write_training_set, write_training_set_csv
from shallowdiffusion.targets import forward_corrupt


def test_training_set_binary_layout(tmp_path, rng):
    dataset = forward_corrupt(rng.standard_normal((7, 3)), 0.25, rng)
    fname = str(tmp_path / 'train.bin')
    write_training_set(fname, dataset, 'abcdef0123456789')
    raw = (tmp_path / 'train.bin').read_bytes()
    assert len(raw) == 2 * 8 + 8 + 3 * 7 * 3 * 8
    assert np.frombuffer(raw[:16], dtype='<u8').tolist() == [7, 3]
    assert np.frombuffer(raw[16:24], dtype='<f8')[0] == 0.25

    back = read_training_set(fname)
    assert back.t == 0.25
    for name in ('x0', 'w', 'xt'):
        assert_array_equal(getattr(back, name), getattr(dataset, name))
    assert read_sidecar(fname)['fingerprint'] == 'abcdef0123456789'


def test_truncated_training_set_is_rejected(tmp_path, rng):
    fname = str(tmp_path / 'train.bin')
    write_training_set(fname, forward_corrupt(rng.standard_normal((4, 2)), 0.5, rng))
    raw = (tmp_path / 'train.bin').read_bytes()
    (tmp_path / 'train.bin').write_bytes(raw[:-8])
    with pytest.raises(ValueError, match='expected'):
        read_training_set(fname)


def test_samples_binary_and_csv(tmp_path, rng):
    samples = rng.standard_normal((5, 2))
    write_samples(str(tmp_path / 's.bin'), samples, 0.05)
    back, t = read_samples(str(tmp_path / 's.bin'))
    assert t == 0.05
    assert_array_equal(back, samples)

    write_samples_csv(str(tmp_path / 's.csv'), samples, 'feedfacefeedface')
    lines = (tmp_path / 's.csv').read_text(encoding='UTF-8').splitlines()
    assert lines[0] == '# fingerprint: feedfacefeedface'
    assert lines[1] == 'x0,x1'
    assert_array_equal(read_samples_csv(str(tmp_path / 's.csv')), samples)


def test_training_set_csv_header(tmp_path, rng):
    dataset = forward_corrupt(rng.standard_normal((3, 2)), 0.5, rng)
    write_training_set_csv(str(tmp_path / 'train.csv'), dataset)
    header = (tmp_path / 'train.csv').read_text(encoding='UTF-8').splitlines()[0]
    assert header == 't,x0_0,x0_1,w_0,w_1,xt_0,xt_1'


def test_checkpoint(tmp_path, rng):
    net = ShallowScoreNet.random(6, 3, rng, t=0.75)
    fname = str(tmp_path / 'ckpt.bin')
    write_checkpoint(fname, net, 'fp')
    back = read_checkpoint(fname)
    assert back.t == 0.75
    assert_array_equal(back.u, net.u)
    assert_array_equal(back.v, net.v)
    sidecar = read_sidecar(fname)
    assert (sidecar['width'], sidecar['D'], sidecar['fingerprint']) == (6, 3, 'fp')
    assert sidecar['path_norm'] == pytest.approx(path_norm(net))

    write_checkpoint(fname, ShallowScoreNet.zeros(2, 2))
    assert read_checkpoint(fname).t is None


def test_model_set_directory(tmp_path, rng):
    entries = [ScoreModelEntry(t, ShallowScoreNet.random(4, 2, rng, t=t), 0.1 * t, 2.0,
                               [{'epoch': 0, 'loss': 1.0}, {'epoch': 1, 'loss': 0.5}]) for t in (1.5, 1.0, 0.5)]
    out = str(tmp_path / 'models')
    save_model_set(out, ScoreModelSet(entries), 'fp16')
    models, fingerprint = load_model_set(out)
    assert fingerprint == 'fp16'
    assert_array_equal(models.times, [1.5, 1.0, 0.5])
    for a, b in zip(entries, models):
        assert (a.loss, a.radius, a.trace) == (b.loss, b.radius, b.trace)
        assert_array_equal(a.net.u, b.net.u)
    assert (tmp_path / 'models' / 'ckpt_0002.bin').exists()
    on_disk = read_jsonl(str(tmp_path / 'models' / 'trace_0000.jsonl'))
    assert [rec['epoch'] for rec in on_disk] == [0, 1]
    assert all(rec['fingerprint'] == 'fp16' for rec in on_disk)
    assert read_sidecar(str(tmp_path / 'models' / 'ckpt_0000.bin'))['fingerprint'] == 'fp16'


def test_jsonl_append(tmp_path):
    fname = str(tmp_path / 'records.jsonl')
    assert read_jsonl(fname) == []
    append_jsonl(fname, {'b': 1, 'a': 'é'})
    append_jsonl(fname, {'c': [1.5, None]})
    assert read_jsonl(fname) == [{'a': 'é', 'b': 1}, {'c': [1.5, None]}]
    assert (tmp_path / 'records.jsonl').read_text(encoding='UTF-8').splitlines()[0] == '{"a": "é", "b": 1}'


def test_metric_csv(tmp_path):
    rows = [('score_risk', 0.5, 0.125, 0.01, 1000), ('weighted_score_error', None, 1.5, 0.2, 1000)]
    fname = str(tmp_path / 'metrics.csv')
    write_metric_csv(fname, rows, 'fp')
    lines = (tmp_path / 'metrics.csv').read_text(encoding='UTF-8').splitlines()
    assert lines[:2] == ['# fingerprint: fp', 'metric,t,estimate,se,n_mc']
    assert read_metric_csv(fname) == rows


def test_plain_csv(tmp_path):
    fname = str(tmp_path / 'table.csv')
    write_csv(fname, ['a', 'b'], [[1, 'x'], [2, 'y']])
    assert (tmp_path / 'table.csv').read_text(encoding='UTF-8') == 'a,b\n1,x\n2,y\n'
