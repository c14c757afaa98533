#!/usr/bin/env python3
# -*- coding: utf-8, vim: expandtab:ts=4 -*-

"""
    Experiment plumbing: target construction from the configuration, one (seed, n, D) cell end to end
     (data, per-timestep training, risk, reverse sampling, sample metrics), the sweep over the grid with an
     append-only record file, rate fitting and the summary report.
"""

import os
import time
from argparse import Namespace
from collections import defaultdict, namedtuple
from dataclasses import replace
from itertools import repeat
from multiprocessing import Manager, Pool

import numpy as np
import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402

from shallowdiffusion.dsm_train import train_all_timesteps, train_one_timestep
from shallowdiffusion.exceptions import ConfigurationError, InsufficientGridError
from shallowdiffusion.logger import Logger, NullLogger
from shallowdiffusion.metrics import empirical_lipschitz, energy_distance, energy_permutation_test, lipschitz_probe, \
    score_risk, subspace_residual, weighted_score_error, whitening_error
from shallowdiffusion.oracle import ScoreOracle
from shallowdiffusion.sampler import ScoreProvider, gaussian_fit_kl, run_reverse
from shallowdiffusion.schedule import RadiusSchedule, make_time_grid, ou_coefficients, radius_at, \
    schedule_from_accuracy
from shallowdiffusion.storage import append_jsonl, read_jsonl, write_csv
from shallowdiffusion.targets import IndependentModel, MixedModel, SubspaceModel, estimate_whitener, forward_corrupt, \
    gaussian, mixing_matrix, random_mixture, random_orthonormal, sample_marginal, sample_x0, standard_normal, \
    stream_rng, two_component, whiten_model

RECORDS_FILE = 'records.jsonl'
SUMMARY_FILE = 'summary.csv'
RATES_FILE = 'rates.csv'

# Stream keys below (seed, n, D)
DATA_STREAM, EVAL_STREAM, SAMPLE_STREAM, HOLDOUT_STREAM, HEADLINE_STREAM, LIPSCHITZ_STREAM = range(6)
LIPSCHITZ_POINTS = 64


def _latent(target, d, rng):
    latent = target['latent']
    if latent == 'two-component':
        return two_component(d, target['separation'], target['bandwidth'], target['weight'])
    if latent == 'standard-normal':
        return standard_normal(d)
    return random_mixture(d, target['n_components'], rng, spread=target['separation'],
                          bandwidth=target['bandwidth'], degenerate=latent == 'point-masses')


def build_target(target, D):
    """
        (model, oracle kind, embedding U or None, radius schedule shape) for ambient dimension D.
        The target depends on (target.seed, D) only, so all replicate seeds face the same distribution.
    """
    rng = stream_rng(target['seed'], D)
    kind = target['kind']
    if kind == 'gaussian':
        model = SubspaceModel(np.eye(D), gaussian(np.zeros(D), target['scale'] * np.eye(D)))
        return model, 'exact-gaussian-ambient', None, {'d_latent': D, 'group_dims': None}
    if kind == 'subspace':
        d = target['d']
        latent = _latent(target, d, rng)
        model = SubspaceModel(random_orthonormal(D, d, rng), latent)
        return model, None, model.U, {'d_latent': d, 'group_dims': None}
    groups = [_latent(target, d_i, rng) for d_i in target['group_dims']]
    shape = {'d_latent': max(target['group_dims']), 'group_dims': tuple(target['group_dims'])}
    if kind == 'independent':
        return IndependentModel(random_orthonormal(D, D, rng), groups), None, None, shape
    return MixedModel(mixing_matrix(D, target['condition_number'], rng), groups), None, None, shape


def resolve_schedule(schedule, model):
    if schedule['mode'] == 'explicit':
        return schedule['params']
    return schedule_from_accuracy(schedule['epsilon'], schedule['zeta'], model.D, model.second_moment_root,
                                  schedule['c0'], schedule['c1'])


def _cell_train_seed(seed, n, D):
    return int(np.random.SeedSequence([int(seed), int(n), int(D)]).generate_state(1)[0])


def prepare_cell(settings, seed, n, D):
    """Everything a (seed, n, D) cell needs before training; deterministic in (config, seed, n, D)"""
    model, oracle_kind, embedding, shape = build_target(settings['TARGET'], D)
    x0 = sample_x0(model, n, stream_rng(seed, n, D, DATA_STREAM))
    whitener = None
    if isinstance(model, MixedModel):
        # Non-orthogonal components are handled in whitened coordinates, with the exact whitened model as truth
        whitener = estimate_whitener(x0)
        x0 = x0 @ whitener.T
        model = whiten_model(model, whitener)
    oracle = ScoreOracle(model, oracle_kind)
    grid = make_time_grid(resolve_schedule(settings['SCHEDULE'], model))
    cfg = replace(settings['TRAIN_CONFIG'], seed=_cell_train_seed(seed, n, D))
    if cfg.init == 'structured' and embedding is None:
        raise ConfigurationError('train.init = structured needs a subspace target')
    radius_schedule = RadiusSchedule(cfg.r_bar, shape['d_latent'], D, shape['group_dims'])
    return Namespace(seed=seed, n=n, D=D, model=model, oracle=oracle, embedding=embedding, grid=grid, x0=x0,
                     cfg=cfg, radius_schedule=radius_schedule, whitener=whitener, shape=shape)


def _d_label(cell):
    if cell.shape['group_dims'] is not None:
        return '+'.join(str(d) for d in cell.shape['group_dims'])
    return str(cell.shape['d_latent'])


def train_headline_net(cell, eval_t, logger=NullLogger()):
    """A separate net at the reporting time eval_t (generally not a grid time), from its own stream"""
    rng = stream_rng(cell.seed, cell.n, cell.D, HEADLINE_STREAM)
    dataset = forward_corrupt(cell.x0, eval_t, rng)
    radius = cell.cfg.radius if cell.cfg.radius_mode == 'fixed' else radius_at(cell.radius_schedule, eval_t, cell.n)
    return train_one_timestep(dataset, cell.cfg, radius, rng, logger, cell.embedding)


def sample_metrics(cell, samples, metrics, rng):
    """Distances of sampler output to p_zeta (in the model's own, possibly whitened, coordinates)"""
    zeta = cell.grid.zeta
    out = {'n_samples': int(samples.shape[0])}
    model = cell.model
    if isinstance(model, SubspaceModel) and model.d < model.D:
        res = subspace_residual(samples, model.U)
        out.update(subspace_residual=res.value, subspace_residual_se=res.se,
                   subspace_residual_expected=ou_coefficients(zeta).sigma2 * (model.D - model.d))
    if cell.oracle.kind == 'exact-gaussian-ambient':
        marginal = cell.oracle.marginal(zeta)
        out['gaussian_fit_kl'] = gaussian_fit_kl(marginal.means[0], marginal.covs[0], samples)
    if metrics['energy']:
        reference = sample_marginal(model, zeta, samples.shape[0], rng)
        test = energy_permutation_test(samples, reference, rng, metrics['n_permutations'])
        out.update(energy_distance=max(0.0, test.statistic), energy_null_q95=test.null_quantile_95,
                   energy_p_value=test.p_value)
    return out


def lipschitz_metrics(cell, eval_t, rng):
    """Empirical score Lipschitz constant at eval_t and the growth-ratio variation over the grid, worst latent group"""
    model = cell.model
    latents = [model.latent] if hasattr(model, 'latent') else model.groups
    if not all(latent.is_positive_definite for latent in latents):
        return {}  # Point masses: the latent score is undefined at t = 0 and explodes near it
    constants, variations = [], []
    for latent in latents:
        z = latent.sample(LIPSCHITZ_POINTS, rng)
        constants.append(empirical_lipschitz(latent, eval_t, z))
        variations.append(lipschitz_probe(latent, cell.grid.forward_times, z).variation)
    return {'empirical_lipschitz': max(constants), 'lipschitz_variation': max(variations)}


def run_cell(args):
    """One ExperimentRecord (a JSON-able dict) for a (seed, n, D) cell"""
    settings, seed, n, D, logger = args
    start = time.perf_counter()
    cell = prepare_cell(settings, seed, n, D)
    metrics = settings['METRICS']
    sweep = settings['SWEEP']
    logger.log_fields('INFO', 'cell_start', seed=seed, n=n, D=D, T=cell.grid.T, N=cell.grid.N)

    models = train_all_timesteps(cell.grid, cell.x0, cell.cfg, cell.radius_schedule, logger, cell.embedding,
                                 workers=1)
    eval_rng = stream_rng(seed, n, D, EVAL_STREAM)
    timesteps = []
    for entry in models:
        risk = score_risk(entry.net, cell.oracle, entry.t, metrics['n_mc'], eval_rng)
        timesteps.append({'t': entry.t, 'loss': entry.loss, 'risk': risk.estimate, 'se': risk.se,
                          'radius': entry.radius, 'path_norm': entry.trace[-1]['path_norm']})

    headline = train_headline_net(cell, sweep['eval_t'], logger)
    eval_risk = score_risk(headline.net, cell.oracle, sweep['eval_t'], metrics['n_mc'], eval_rng)

    sample_rng = stream_rng(seed, n, D, SAMPLE_STREAM)
    samples = run_reverse(ScoreProvider.from_models(models), cell.grid, sweep['n_samples'], D, sample_rng)
    sampler = sample_metrics(cell, samples, metrics, sample_rng)
    if metrics['weighted_error']:
        wse = weighted_score_error(models, cell.oracle, cell.grid, metrics['n_mc_weighted'], eval_rng)
        sampler.update(weighted_score_error=wse.total, weighted_score_error_se=wse.se)
    if cell.whitener is not None:
        holdout = build_target(settings['TARGET'], D)[0].sample(metrics['n_mc'],
                                                                  stream_rng(seed, n, D, HOLDOUT_STREAM))
        sampler['whitening_error'] = whitening_error(cell.whitener, holdout)
    sampler.update(lipschitz_metrics(cell, sweep['eval_t'], stream_rng(seed, n, D, LIPSCHITZ_STREAM)))

    record = {'fingerprint': settings['FINGERPRINT'], 'seed': seed, 'n': n, 'D': D, 'd': _d_label(cell),
              'kind': settings['TARGET']['kind'], 'T': cell.grid.T, 'N': cell.grid.N, 'zeta': cell.grid.zeta,
              'timesteps': timesteps,
              'eval': {'t': sweep['eval_t'], 'risk': eval_risk.estimate, 'se': eval_risk.se, 'loss': headline.loss,
                       'radius': headline.radius, 'n_mc': eval_risk.n_mc},
              'sampler': sampler, 'wall_time': time.perf_counter() - start}
    logger.log_fields('INFO', 'cell_done', seed=seed, n=n, D=D, eval_risk=eval_risk.estimate,
                      wall_time=record['wall_time'])
    return record


def record_key(record):
    return record['fingerprint'], int(record['seed']), int(record['n']), int(record['D'])


def sweep(settings, logger=NullLogger()):
    """
        Run every (seed, n, D) cell not yet in <out>/records.jsonl for this fingerprint and append its record.
        Returns all records of this fingerprint (old and new).
    """
    out_dir = settings['OUTPUT_DIR']
    os.makedirs(out_dir, exist_ok=True)
    records_fname = os.path.join(out_dir, RECORDS_FILE)
    fingerprint = settings['FINGERPRINT']
    done = {record_key(r) for r in read_jsonl(records_fname)}
    cells = [(seed, n, D) for D in settings['SWEEP']['D'] for n in settings['SWEEP']['n'] for seed in settings['SEEDS']
             if (fingerprint, seed, n, D) not in done]
    logger.log_fields('INFO', 'sweep', fingerprint=fingerprint, cells=len(cells), skipped=len(done),
                      workers=settings['WORKERS'])

    workers = settings['WORKERS']
    if workers <= 1 or len(cells) <= 1:
        for seed, n, D in cells:
            append_jsonl(records_fname, run_cell((settings, seed, n, D, logger)))
    elif isinstance(logger, Logger):
        with Manager() as man:
            with logger.init_mp_logging_context(man.Queue()) as mp_logger, Pool(workers) as pool:
                jobs = ((settings, s, n, D, lg) for (s, n, D), lg in zip(cells, repeat(mp_logger)))
                for rec in pool.imap(run_cell, jobs):
                    append_jsonl(records_fname, rec)  # Single writer: records are appended in the parent only
    else:
        with Pool(workers) as pool:
            for rec in pool.imap(run_cell, ((settings, s, n, D, NullLogger()) for s, n, D in cells)):
                append_jsonl(records_fname, rec)
    return [r for r in read_jsonl(records_fname) if r['fingerprint'] == fingerprint]


def _field(record, field):
    value = record
    for part in field.split('.'):
        value = value[part]
    return float(value)


RateFit = namedtuple('RateFit', ['slope', 'se', 'intercept', 'n_values', 'medians'])


def _slope(log_n, values_by_n):
    log_med = np.log([np.median(v) for v in values_by_n])
    slope, intercept = np.polyfit(log_n, log_med, 1)
    return slope, intercept


def fit_rate_exponent(records, field='eval.risk', n_boot=500, rng=None):
    """
        Least-squares slope of log(median over seeds) against log n, SE from a bootstrap over seeds.
        Needs at least 3 distinct n values with at least 3 seeds each.
    """
    by_n = defaultdict(list)
    for rec in records:
        by_n[int(rec['n'])].append(_field(rec, field))
    n_values = sorted(by_n)
    if len(n_values) < 3:
        raise InsufficientGridError('Rate fit needs >= 3 distinct n values, got {0}'.format(n_values))
    few = {n: len(by_n[n]) for n in n_values if len(by_n[n]) < 3}
    if len(few) > 0:
        raise InsufficientGridError('Rate fit needs >= 3 seeds per n, got {0}'.format(few))
    values = [np.asarray(by_n[n]) for n in n_values]
    if any(np.any(v <= 0.0) for v in values):
        raise InsufficientGridError('Rate fit needs positive values of {0}'.format(field))
    log_n = np.log(n_values)
    slope, intercept = _slope(log_n, values)

    rng = np.random.default_rng(0) if rng is None else rng
    boot = np.empty(n_boot)
    for b in range(n_boot):
        boot[b] = _slope(log_n, [v[rng.integers(0, v.size, v.size)] for v in values])[0]
    return RateFit(float(slope), float(np.std(boot, ddof=1)), float(intercept), n_values,
                   [float(np.median(v)) for v in values])


def power_law_regime(n_values, medians):
    """True when every successive local log-log slope is negative (the curve has started to decay)"""
    log_n = np.log(np.asarray(n_values, dtype=np.float64))
    log_m = np.log(np.asarray(medians, dtype=np.float64))
    return bool(np.all(np.diff(log_m) / np.diff(log_n) < 0.0))


def _plot(fname, fingerprint, groups):
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for (D, d), fit in sorted(groups.items()):
        label = 'D={0}, d={1}'.format(D, d)
        if fit.se is not None:
            label += ' (slope {0:.3f} +/- {1:.3f})'.format(fit.slope, fit.se)
        ax.loglog(fit.n_values, fit.medians, marker='o', label=label)
    ax.set_xlabel('n')
    ax.set_ylabel('median score risk')
    ax.set_title('score risk vs n [{0}]'.format(fingerprint))
    ax.legend()
    fig.tight_layout()
    fig.savefig(fname, format='svg', metadata={'Title': 'score risk vs n', 'Description': fingerprint})
    plt.close(fig)


def report(out_dir, logger=NullLogger(), field='eval.risk'):
    """
        summary.csv (one row per fingerprint, D, d, n), rates.csv (one row per fingerprint, D, d) and
         risk_<fingerprint>.svg, computed from records.jsonl alone
    """
    records = read_jsonl(os.path.join(out_dir, RECORDS_FILE))
    if len(records) == 0:
        raise InsufficientGridError('No records in {0}'.format(os.path.join(out_dir, RECORDS_FILE)))
    grouped = defaultdict(list)
    for rec in records:
        grouped[(rec['fingerprint'], int(rec['D']), str(rec['d']))].append(rec)

    summary_rows, rate_rows = [], []
    fits_by_fp = defaultdict(dict)
    for (fp, D, d), recs in sorted(grouped.items()):
        by_n = defaultdict(list)
        for rec in recs:
            by_n[int(rec['n'])].append(_field(rec, field))
        for n in sorted(by_n):
            residuals = [r['sampler'].get('subspace_residual') for r in recs if int(r['n']) == n]
            residuals = [v for v in residuals if v is not None]
            summary_rows.append([fp, D, d, n, float(np.median(by_n[n])), len(by_n[n]),
                                 float(np.median(residuals)) if len(residuals) > 0 else ''])
        try:
            fit = fit_rate_exponent(recs, field)
            regime = power_law_regime(fit.n_values, fit.medians)
            rate_rows.append([fp, D, d, fit.slope, fit.se, len(fit.n_values), regime])
        except InsufficientGridError as e:
            logger.log('WARNING', 'No rate fit for fingerprint', fp, 'D =', D, 'd =', d, ':', e)
            n_values = sorted(by_n)
            fit = RateFit(float('nan'), None, float('nan'), n_values, [float(np.median(by_n[n])) for n in n_values])
            rate_rows.append([fp, D, d, '', '', len(n_values), ''])
        fits_by_fp[fp][(D, d)] = fit

    fingerprints = sorted(fits_by_fp)
    tag = fingerprints[0] if len(fingerprints) == 1 else 'multiple'
    write_csv(os.path.join(out_dir, SUMMARY_FILE),
              ['fingerprint', 'D', 'd', 'n', 'median_risk', 'n_seeds', 'median_subspace_residual'], summary_rows, tag)
    write_csv(os.path.join(out_dir, RATES_FILE),
              ['fingerprint', 'D', 'd', 'slope', 'slope_se', 'n_values', 'power_law_regime'], rate_rows, tag)
    plots = []
    for fp in fingerprints:
        fname = os.path.join(out_dir, 'risk_{0}.svg'.format(fp))
        _plot(fname, fp, fits_by_fp[fp])
        plots.append(fname)
    logger.log_fields('INFO', 'report', records=len(records), groups=len(grouped), plots=len(plots))
    return Namespace(summary=summary_rows, rates=rate_rows, plots=plots)
