#!/usr/bin/env python3
# -*- coding: utf-8, vim: expandtab:ts=4 -*-

"""
    On-disk formats. Binary files are little-endian: u64 header fields, then f64 payload in row-major order.
     TrainingSet    n, D | t | x0 | w | xt
     samples        n, D | t | x
     checkpoint     m, D | t, path_norm | u | v         (+ <name>.json sidecar)
    CSV files start with a '# fingerprint: ...' comment line, then a header row.
    JSON-lines: one UTF-8 object per line, append-only.
"""

import csv
import json
import os

import numpy as np

from shallowdiffusion.dsm_train import ScoreModelEntry, ScoreModelSet
from shallowdiffusion.shallow_net import ShallowScoreNet, path_norm
from shallowdiffusion.targets import TrainingSet

U64 = np.dtype('<u8')
F64 = np.dtype('<f8')
METRIC_COLUMNS = ('metric', 't', 'estimate', 'se', 'n_mc')
MANIFEST = 'manifest.json'


def _write_arrays(fname, header_ints, header_floats, arrays):
    with open(fname, 'wb') as fh:
        fh.write(np.asarray(header_ints, dtype=U64).tobytes())
        fh.write(np.asarray(header_floats, dtype=F64).tobytes())
        for arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype=F64).tobytes())


def _read_arrays(fname, n_ints, n_floats):
    with open(fname, 'rb') as fh:
        raw = fh.read()
    ints = np.frombuffer(raw, dtype=U64, count=n_ints)
    floats = np.frombuffer(raw, dtype=F64, count=n_floats, offset=n_ints * U64.itemsize)
    payload = np.frombuffer(raw, dtype=F64, offset=n_ints * U64.itemsize + n_floats * F64.itemsize)
    return [int(i) for i in ints], [float(f) for f in floats], payload


def write_sidecar(fname, fingerprint, **fields):
    with open('{0}.json'.format(fname), 'w', encoding='UTF-8') as fh:
        json.dump(dict(fields, fingerprint=fingerprint), fh, sort_keys=True, indent=1)


def read_sidecar(fname):
    with open('{0}.json'.format(fname), encoding='UTF-8') as fh:
        return json.load(fh)


def write_training_set(fname, dataset, fingerprint=None):
    _write_arrays(fname, (dataset.n, dataset.D), (dataset.t,), (dataset.x0, dataset.w, dataset.xt))
    if fingerprint is not None:
        write_sidecar(fname, fingerprint, kind='training-set', n=dataset.n, D=dataset.D, t=dataset.t)


def read_training_set(fname):
    (n, D), (t,), payload = _read_arrays(fname, 2, 1)
    if payload.size != 3 * n * D:
        raise ValueError('{0}: expected {1} values after the header, found {2}'.format(fname, 3 * n * D, payload.size))
    x0, w, xt = (payload[i * n * D:(i + 1) * n * D].reshape(n, D).copy() for i in range(3))
    return TrainingSet(t, x0, w, xt)


def write_samples(fname, samples, t, fingerprint=None):
    samples = np.atleast_2d(samples)
    _write_arrays(fname, samples.shape, (t,), (samples,))
    if fingerprint is not None:
        write_sidecar(fname, fingerprint, kind='samples', n=samples.shape[0], D=samples.shape[1], t=t)


def read_samples(fname):
    (n, D), (t,), payload = _read_arrays(fname, 2, 1)
    return payload.reshape(n, D).copy(), t


def _commented_writer(fh, fingerprint):
    if fingerprint is not None:
        fh.write('# fingerprint: {0}\n'.format(fingerprint))
    return csv.writer(fh, lineterminator='\n')


def _data_lines(fh):
    return (line for line in fh if not line.startswith('#'))


def write_samples_csv(fname, samples, fingerprint=None):
    samples = np.atleast_2d(samples)
    with open(fname, 'w', encoding='UTF-8', newline='') as fh:
        writer = _commented_writer(fh, fingerprint)
        writer.writerow(['x{0}'.format(j) for j in range(samples.shape[1])])
        writer.writerows([repr(float(v)) for v in row] for row in samples)


def read_samples_csv(fname):
    with open(fname, encoding='UTF-8', newline='') as fh:
        reader = csv.reader(_data_lines(fh))
        next(reader)
        return np.array([[float(v) for v in row] for row in reader], dtype=np.float64)


def write_training_set_csv(fname, dataset, fingerprint=None):
    D = dataset.D
    with open(fname, 'w', encoding='UTF-8', newline='') as fh:
        writer = _commented_writer(fh, fingerprint)
        writer.writerow(['t'] + ['{0}{1}'.format(p, j) for p in ('x0_', 'w_', 'xt_') for j in range(D)])
        for row in np.hstack([dataset.x0, dataset.w, dataset.xt]):
            writer.writerow([repr(dataset.t)] + [repr(float(v)) for v in row])


def write_checkpoint(fname, net, fingerprint=None):
    t = float('nan') if net.t is None else float(net.t)
    pn = path_norm(net)
    _write_arrays(fname, (net.width, net.D), (t, pn), (net.u, net.v))
    write_sidecar(fname, fingerprint, kind='checkpoint', width=net.width, D=net.D, t=net.t, path_norm=pn)


def read_checkpoint(fname):
    (m, D), (t, _), payload = _read_arrays(fname, 2, 2)
    if payload.size != 2 * m * D:
        raise ValueError('{0}: expected {1} weights, found {2}'.format(fname, 2 * m * D, payload.size))
    u = payload[:m * D].reshape(m, D).copy()
    v = payload[m * D:].reshape(m, D).copy()
    return ShallowScoreNet(u, v, None if np.isnan(t) else t)


def write_jsonl(fname, records, mode='w'):
    with open(fname, mode, encoding='UTF-8') as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False))
            fh.write('\n')


def append_jsonl(fname, record):
    write_jsonl(fname, [record], mode='a')


def read_jsonl(fname):
    if not os.path.exists(fname):
        return []
    with open(fname, encoding='UTF-8') as fh:
        return [json.loads(line) for line in fh if len(line.strip()) > 0]


def save_model_set(out_dir, model_set, fingerprint=None):
    """Checkpoints, per-timestep JSON-lines traces and manifest.json, each carrying the fingerprint"""
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for k, entry in enumerate(model_set):
        ckpt = 'ckpt_{0:04d}.bin'.format(k)
        trace = 'trace_{0:04d}.jsonl'.format(k)
        write_checkpoint(os.path.join(out_dir, ckpt), entry.net, fingerprint)
        write_jsonl(os.path.join(out_dir, trace), (dict(rec, fingerprint=fingerprint) for rec in entry.trace))
        entries.append({'k': k, 't': entry.t, 'loss': entry.loss, 'radius': entry.radius, 'checkpoint': ckpt,
                        'trace': trace})
    with open(os.path.join(out_dir, MANIFEST), 'w', encoding='UTF-8') as fh:
        json.dump({'fingerprint': fingerprint, 'entries': entries}, fh, sort_keys=True, indent=1)


def load_model_set(in_dir):
    with open(os.path.join(in_dir, MANIFEST), encoding='UTF-8') as fh:
        manifest = json.load(fh)
    entries = []
    for e in manifest['entries']:
        net = read_checkpoint(os.path.join(in_dir, e['checkpoint']))
        net.t = e['t']
        trace = [{k: v for k, v in rec.items() if k != 'fingerprint'}
                 for rec in read_jsonl(os.path.join(in_dir, e['trace']))]
        entries.append(ScoreModelEntry(e['t'], net, e['loss'], e['radius'], trace))
    return ScoreModelSet(entries), manifest.get('fingerprint')


def write_metric_csv(fname, rows, fingerprint=None):
    """rows: (metric, t, estimate, se, n_mc) tuples; t may be None for time-free metrics"""
    with open(fname, 'w', encoding='UTF-8', newline='') as fh:
        writer = _commented_writer(fh, fingerprint)
        writer.writerow(METRIC_COLUMNS)
        for metric, t, estimate, se, n_mc in rows:
            writer.writerow([metric, '' if t is None else repr(float(t)), repr(float(estimate)), repr(float(se)),
                             int(n_mc)])


def read_metric_csv(fname):
    with open(fname, encoding='UTF-8', newline='') as fh:
        rows = []
        for row in csv.DictReader(_data_lines(fh)):
            rows.append((row['metric'], None if row['t'] == '' else float(row['t']), float(row['estimate']),
                         float(row['se']), int(row['n_mc'])))
        return rows


def write_csv(fname, header, rows, fingerprint=None):
    with open(fname, 'w', encoding='UTF-8', newline='') as fh:
        writer = _commented_writer(fh, fingerprint)
        writer.writerow(header)
        writer.writerows(rows)
