#!/usr/bin/env python3
# -*- coding: utf-8, vim: expandtab:ts=4 -*-

"""
    Per-timestep denoising score matching: the empirical loss (1/n) sum_i ||s(x_t^i) + w^i / sigma_t||^2,
     projected first-order ERM over a path-norm ball, and the loss <-> risk offset C_t.
    Each forward time of the grid gets its own time-independent net trained on its own noised dataset.
"""

import math
from collections import namedtuple
from dataclasses import dataclass, asdict
from itertools import repeat
from multiprocessing import Manager, Pool
from typing import Optional

import numpy as np

from shallowdiffusion.exceptions import ConfigurationError, DomainError, ProviderError, ShallowDiffusionError, \
    TrainingError
from shallowdiffusion.logger import Logger, NullLogger
from shallowdiffusion.metrics import mc_estimate
from shallowdiffusion.schedule import ou_coefficients, radius_at
from shallowdiffusion.shallow_net import ShallowScoreNet, complement_projector_net, concatenate_nets, \
    dsm_gradient, lift_net, path_norm, project_to_ball
from shallowdiffusion.targets import forward_corrupt, sample_x0, stream_rng

OPTIMIZERS = ('projected-adam', 'projected-gd')
STEP_SCHEDULES = ('constant', 'cosine')
RADIUS_MODES = ('schedule', 'fixed')
INITS = ('random', 'structured')

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    width: int = 256
    epochs: int = 200
    batch_size: Optional[int] = None  # None: full batch
    step_size: float = 1e-2
    step_schedule: str = 'constant'
    optimizer: str = 'projected-adam'
    radius_mode: str = 'schedule'
    radius: Optional[float] = None
    r_bar: float = 1.0
    r_init: float = 1.0
    resample_noise: bool = False  # Departure from fixed per-t datasets, for variance-reduction runs only
    init: str = 'random'
    seed: int = 0
    workers: int = 1

    def validate(self):
        for name in ('width', 'epochs', 'workers'):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError('train.{0} must be a positive integer, got {1!r}'.
                                         format(name, getattr(self, name)))
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigurationError('train.batch_size must be positive, got {0!r}'.format(self.batch_size))
        if not self.step_size >= 0.0:
            raise ConfigurationError('train.step_size must be non-negative, got {0!r}'.format(self.step_size))
        for name, choices in (('optimizer', OPTIMIZERS), ('step_schedule', STEP_SCHEDULES),
                              ('radius_mode', RADIUS_MODES), ('init', INITS)):
            if getattr(self, name) not in choices:
                raise ConfigurationError('train.{0} must be one of {1}, got {2!r}'.
                                         format(name, ', '.join(choices), getattr(self, name)))
        if self.radius_mode == 'fixed' and (self.radius is None or not self.radius > 0.0):
            raise ConfigurationError('train.radius must be positive when radius_mode is fixed, got {0!r}'.
                                     format(self.radius))
        if not self.r_bar > 0.0 or not self.r_init > 0.0:
            raise ConfigurationError('train.r_bar and train.r_init must be positive')
        return self

    def to_dict(self):
        return asdict(self)


def _check_sigma(batch):
    sigma = ou_coefficients(batch.t).sigma
    if sigma == 0.0:
        raise DomainError('The DSM loss needs sigma_t > 0 (t = 0 given)')
    return sigma


def dsm_loss_terms(model, batch):
    """Per-sample ||s(x_t^i) + w^i / sigma_t||^2 for any x -> score callable"""
    sigma = _check_sigma(batch)
    res = model(batch.xt) + batch.w / sigma
    return np.sum(res * res, axis=1)


def dsm_loss(model, batch):
    return math.fsum(dsm_loss_terms(model, batch)) / batch.n


def risk_from_loss(loss_value, c_t):
    """L_t(s) = R_t(s) + C_t"""
    return loss_value - c_t


def estimate_Ct(oracle, t, n_mc, rng):
    """MC estimate of E||w / sigma_t||^2 - E||grad log p_t(x_t)||^2 (an MCEstimate with its SE)"""
    coeffs = ou_coefficients(t)
    if coeffs.t == 0.0:
        raise DomainError('C_t needs t > 0')
    batch = forward_corrupt(sample_x0(oracle.model, n_mc, rng), coeffs.t, rng)
    score = oracle.score(batch.xt, coeffs.t)
    return mc_estimate(np.sum(batch.w * batch.w, axis=1) / coeffs.sigma2 - np.sum(score * score, axis=1))


TrainResult = namedtuple('TrainResult', ['net', 'trace', 'loss', 'radius'])


def _initial_net(dataset, cfg, rng, embedding):
    if cfg.init == 'random':
        return ShallowScoreNet.random(cfg.width, dataset.D, rng, cfg.r_init, dataset.t)
    if embedding is None:
        raise ConfigurationError('train.init = structured needs the target embedding U')
    normal = complement_projector_net(embedding, dataset.t)
    latent = ShallowScoreNet.random(max(cfg.width - normal.width, 1), embedding.shape[1], rng, cfg.r_init, dataset.t)
    return concatenate_nets([normal, lift_net(latent, embedding)])


def _step_size(cfg, epoch):
    if cfg.step_schedule == 'cosine':
        return cfg.step_size * 0.5 * (1.0 + math.cos(math.pi * epoch / cfg.epochs))
    return cfg.step_size


class _Adam:
    """Adam moments for the (u, v) pair; step returns a new net"""
    def __init__(self, net):
        self.k = 0
        self.m = [np.zeros_like(net.u), np.zeros_like(net.v)]
        self.s = [np.zeros_like(net.u), np.zeros_like(net.v)]

    def step(self, net, grad, lr):
        self.k += 1
        params = []
        for i, (p, g) in enumerate(zip((net.u, net.v), grad)):
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g
            self.s[i] = ADAM_BETA2 * self.s[i] + (1.0 - ADAM_BETA2) * g * g
            m_hat = self.m[i] / (1.0 - ADAM_BETA1 ** self.k)
            s_hat = self.s[i] / (1.0 - ADAM_BETA2 ** self.k)
            params.append(p - lr * m_hat / (np.sqrt(s_hat) + ADAM_EPS))
        return ShallowScoreNet(params[0], params[1], net.t)


def _gd_step(net, grad, lr):
    return ShallowScoreNet(net.u - lr * grad.du, net.v - lr * grad.dv, net.t)


def _minibatches(data, batch_size, rng):
    if batch_size is None or batch_size >= data.n:
        yield data
        return
    perm = rng.permutation(data.n)
    for start in range(0, data.n, batch_size):
        idx = perm[start:start + batch_size]
        yield type(data)(data.t, data.x0[idx], data.w[idx], data.xt[idx], data.stream)


def _trace_record(epoch, net, dataset):
    grad = dsm_gradient(net, dataset)
    return {'epoch': epoch, 'loss': dsm_loss(net, dataset), 'path_norm': path_norm(net),
            'grad_norm': float(math.sqrt(np.sum(grad.du ** 2) + np.sum(grad.dv ** 2)))}


def train_one_timestep(dataset, cfg, radius, rng, logger=NullLogger(), embedding=None):
    """
        Projected Adam/GD on the empirical DSM loss inside {path_norm <= radius}.
        The trace holds one full-batch record per epoch (epoch 0 is the projected initial net);
         the returned net is the best iterate, so its loss never exceeds the initial one.
    """
    if dataset.n < 1:
        raise DomainError('Training needs a non-empty dataset')
    if not radius > 0.0:
        raise DomainError('Radius must be positive, got {0!r}'.format(radius))
    _check_sigma(dataset)

    net = project_to_ball(_initial_net(dataset, cfg, rng, embedding), radius)
    adam = _Adam(net) if cfg.optimizer == 'projected-adam' else None
    trace = [_trace_record(0, net, dataset)]
    best_net, best_loss = net, trace[0]['loss']
    data = dataset
    for epoch in range(1, cfg.epochs + 1):
        lr = _step_size(cfg, epoch - 1)
        if cfg.resample_noise:
            data = dataset.with_fresh_noise(rng)
        for batch in _minibatches(data, cfg.batch_size, rng):
            grad = dsm_gradient(net, batch)
            net = adam.step(net, grad, lr) if adam is not None else _gd_step(net, grad, lr)
            net = project_to_ball(net, radius)
        record = _trace_record(epoch, net, dataset)
        trace.append(record)
        if not math.isfinite(record['loss']):
            raise TrainingError('non-finite loss at epoch {0} (step size {1!r} too large?)'.format(epoch, lr),
                                t=dataset.t, trace=trace)
        if logger.is_enabled_for('DEBUG'):
            logger.log_fields('DEBUG', 'epoch', t=dataset.t, **record)
        if record['loss'] < best_loss:
            best_net, best_loss = net, record['loss']

    logger.log_fields('INFO', 'trained', t=dataset.t, loss=best_loss, path_norm=path_norm(best_net), radius=radius,
                      epochs=cfg.epochs)
    return TrainResult(best_net, trace, best_loss, radius)


@dataclass(frozen=True)
class ScoreModelEntry:
    t: float
    net: ShallowScoreNet
    loss: float
    radius: float
    trace: list


class ScoreModelSet:
    """One trained net per forward time, looked up by exact time match (no interpolation)"""
    def __init__(self, entries):
        self.entries = list(entries)
        self._by_t = {float(e.t): e for e in self.entries}

    @property
    def times(self):
        return np.array([e.t for e in self.entries], dtype=np.float64)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def net_at(self, t):
        try:
            return self._by_t[float(t)].net
        except KeyError:
            raise ProviderError([t])

    def score(self, x, t):
        return self.net_at(t)(x)


def timestep_radius(cfg, radius_schedule, t, n):
    if cfg.radius_mode == 'fixed':
        return cfg.radius
    return radius_at(radius_schedule, t, n)


def _train_job(args):
    k, t, x0, cfg, radius, embedding, logger = args
    rng = stream_rng(cfg.seed, k)
    dataset = forward_corrupt(x0, t, rng, stream=k)
    try:
        res = train_one_timestep(dataset, cfg, radius, rng, logger, embedding)
    except TrainingError:
        raise
    except (ShallowDiffusionError, ArithmeticError, np.linalg.LinAlgError) as e:
        raise TrainingError(str(e), t=t) from e
    return ScoreModelEntry(float(t), res.net, res.loss, radius, res.trace)


def train_all_timesteps(grid, x0, cfg, radius_schedule=None, logger=NullLogger(), embedding=None, workers=None):
    """
        Independent ERM per forward time of the grid on the shared x_0 draws, fresh w per timestep.
        Timestep k draws from stream (cfg.seed, k), so serial and parallel runs give identical nets.
    """
    cfg.validate()
    if cfg.radius_mode == 'schedule' and radius_schedule is None:
        raise ConfigurationError('radius_mode = schedule needs a radius schedule')
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    n = x0.shape[0]
    workers = cfg.workers if workers is None else workers
    jobs = [(k, float(t), x0, cfg, timestep_radius(cfg, radius_schedule, t, n), embedding)
            for k, t in enumerate(grid.forward_times)]
    logger.log_fields('INFO', 'train_all', N=len(jobs), n=n, D=x0.shape[1], workers=workers)

    if workers <= 1:
        entries = [_train_job(job + (logger,)) for job in jobs]
    elif isinstance(logger, Logger):
        with Manager() as man:
            with logger.init_mp_logging_context(man.Queue()) as mp_logger, Pool(workers) as pool:
                entries = list(pool.imap(_train_job, (job + (lg,) for job, lg in zip(jobs, repeat(mp_logger)))))
    else:
        with Pool(workers) as pool:
            entries = list(pool.imap(_train_job, (job + (NullLogger(),) for job in jobs)))
    return ScoreModelSet(entries)
