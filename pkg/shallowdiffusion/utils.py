#!/usr/bin/env python3
# -*- coding: utf-8, vim: expandtab:ts=4 -*-

import os
import json
import hashlib

import yaml
import yamale

from shallowdiffusion.dsm_train import TrainConfig
from shallowdiffusion.exceptions import ConfigurationError
from shallowdiffusion.schedule import ScheduleParams

experiment_schema = yamale.make_schema(os.path.join(os.path.dirname(os.path.abspath(__file__)),
                                                    'experiment_schema.yaml'))

SEED_OVERRIDE_ENV = 'SEED_OVERRIDE'

TARGET_DEFAULTS = {'latent': 'two-component', 'n_components': 2, 'separation': 2.0, 'bandwidth': 0.5, 'weight': 0.5,
                   'condition_number': 10.0, 'scale': 1.0, 'seed': 0}
METRICS_DEFAULTS = {'n_mc': 10000, 'energy': True, 'n_permutations': 200, 'weighted_error': False,
                    'n_mc_weighted': 2000}
SWEEP_DEFAULTS = {'workers': 1, 'eval_t': 0.5, 'n_samples': 2000}
ACCURACY_DEFAULTS = {'c0': 2.0, 'c1': 1.0}


def load_and_validate(schema, fname):
    try:
        data = yamale.make_data(fname)
    except yaml.YAMLError as e:
        raise ConfigurationError('Could not parse {0}: {1}'.format(fname, e))
    try:
        yamale.validate(schema, data)  # strict=True
    except yamale.YamaleError as e:
        messages = []
        for result in e.results:
            messages.append('Error validating data {0} with {1}:'.format(result.data, result.schema))
            messages.extend('\t{0}'.format(error) for error in result.errors)
        raise ConfigurationError('\n'.join(messages))
    return data[0][0]


def canonical_json(settings):
    """Lowercase (file-given) keys only, sorted, compact: the serialization the fingerprint is taken of"""
    lower = {k: v for k, v in settings.items() if k == k.lower()}
    return json.dumps(lower, sort_keys=True, separators=(',', ':'), ensure_ascii=False)


def config_fingerprint(settings):
    return hashlib.sha256(canonical_json(settings).encode('UTF-8')).hexdigest()[:16]


def seed_override(cli_seed=None):
    """--seed wins over the SEED_OVERRIDE environment variable; None when neither is set"""
    if cli_seed is not None:
        return int(cli_seed)
    env = os.environ.get(SEED_OVERRIDE_ENV)
    if env is None or len(env.strip()) == 0:
        return None
    try:
        return int(env)
    except ValueError:
        raise ConfigurationError('{0} must be an integer, got {1!r}'.format(SEED_OVERRIDE_ENV, env))


def _check_target(target, dims):
    kind = target['kind']
    if kind == 'subspace':
        if 'd' not in target:
            raise ConfigurationError('target.d is required for subspace targets')
        if any(target['d'] > D for D in dims):
            raise ConfigurationError('target.d = {0} must not exceed any sweep D {1}'.format(target['d'], dims))
        if target['latent'] == 'point-masses' and target['n_components'] < 1:
            raise ConfigurationError('point-mass latents need n_components >= 1')
    elif kind in {'independent', 'mixed'}:
        if 'group_dims' not in target:
            raise ConfigurationError('target.group_dims is required for {0} targets'.format(kind))
        total = sum(target['group_dims'])
        if any(D != total for D in dims):
            raise ConfigurationError('{0} targets have D = sum(group_dims) = {1}, but the sweep lists D = {2}'.
                                     format(kind, total, dims))


def _schedule_settings(schedule):
    explicit = [k for k in ('T', 'N', 'zeta') if k in schedule]
    if 'accuracy' in schedule:
        if len(explicit) > 0:
            raise ConfigurationError('schedule: give either T, N, zeta or an accuracy block, not both')
        return {'mode': 'accuracy', **ACCURACY_DEFAULTS, **schedule['accuracy']}
    if len(explicit) != 3:
        raise ConfigurationError('schedule: T, N and zeta are all required without an accuracy block')
    params = ScheduleParams(float(schedule['T']), int(schedule['N']), float(schedule['zeta'])).validate()
    return {'mode': 'explicit', 'params': params}


def wrap_input_constants(current_task_config_filename, seed=None, n_mc=None, workers=None, out_dir=None):
    """
        Helper to store and process input data so that main function does not contain so many
         codelines of variable initialization
        Fields should be handled as constants after initialization
         CAPITALIZED KEYS are derived at runtime (defaults filled, overrides applied),
         lowercase keys are present in the config and form the canonical serialization
    """
    settings = load_and_validate(experiment_schema, current_task_config_filename)

    settings['CONFIG_DIR'] = os.path.dirname(os.path.abspath(current_task_config_filename))

    # --n-mc changes results, so it is part of the identity of the run; --workers is not
    if n_mc is not None:
        settings.setdefault('metrics', {})['n_mc'] = int(n_mc)
    settings['FINGERPRINT'] = config_fingerprint(settings)

    sweep = {**SWEEP_DEFAULTS, **settings['sweep']}
    override = seed_override(seed)
    settings['SEEDS'] = [override] if override is not None else list(sweep['seeds'])
    settings['SWEEP'] = sweep
    if not sweep['eval_t'] > 0.0:
        raise ConfigurationError('sweep.eval_t must be a positive forward time, got {0!r}'.format(sweep['eval_t']))

    settings['TARGET'] = {**TARGET_DEFAULTS, **settings['target']}
    _check_target(settings['TARGET'], sweep['D'])

    settings['SCHEDULE'] = _schedule_settings(settings['schedule'])
    settings['METRICS'] = {**METRICS_DEFAULTS, **settings.get('metrics', {})}

    train = dict(settings.get('train', {}))
    if workers is not None:
        train['workers'] = int(workers)
    try:
        settings['TRAIN_CONFIG'] = TrainConfig(**train).validate()
    except TypeError as e:
        raise ConfigurationError('Invalid train section: {0}'.format(e))

    settings['WORKERS'] = int(workers) if workers is not None else sweep['workers']
    if out_dir is not None:
        settings['OUTPUT_DIR'] = os.path.abspath(out_dir)
    else:
        settings['OUTPUT_DIR'] = os.path.join(settings['CONFIG_DIR'], settings.get('output_dir', 'results'))
    return settings
