#!/usr/bin/env python3
# -*- coding: utf-8, vim: expandtab:ts=4 -*-

"""
    Reverse-time generation with the exponential integrator on the two-phase grid.
    Over one step of length gamma the score is frozen at the step's forward time and
     dy = (y + 2 s) dt + sqrt(2) dB is solved exactly:
         y' = e^gamma y + 2 (e^gamma - 1) s + xi,    xi ~ N(0, (e^(2 gamma) - 1) I)
"""

import math

import numpy as np
from scipy import linalg

from shallowdiffusion.exceptions import DomainError, ProviderError


def ei_step(y, s_val, gamma, rng):
    if not gamma > 0.0:
        raise DomainError('Step length must be positive, got {0!r}'.format(gamma))
    y = np.asarray(y, dtype=np.float64)
    noise = math.sqrt(math.expm1(2.0 * gamma)) * rng.standard_normal(y.shape)
    return math.exp(gamma) * y + 2.0 * math.expm1(gamma) * np.asarray(s_val) + noise


def euler_maruyama_reference(y, s_val, gamma, rng, substeps=10000):
    """Fine Euler-Maruyama simulation of the same frozen-score SDE (reference for ei_step)"""
    if not gamma > 0.0:
        raise DomainError('Step length must be positive, got {0!r}'.format(gamma))
    y = np.array(y, dtype=np.float64)
    drift_shift = 2.0 * np.asarray(s_val, dtype=np.float64)
    dt = gamma / substeps
    noise_scale = math.sqrt(2.0 * dt)
    for _ in range(substeps):
        y += (y + drift_shift) * dt + noise_scale * rng.standard_normal(y.shape)
    return y


class ScoreProvider:
    """
        Scores for the sampler: a trained ScoreModelSet (fixed set of times) or an exact oracle (any t > 0).
        Every queried time is appended to `queried`.
    """
    def __init__(self, score_fn, times=None, source=''):
        self._score_fn = score_fn
        self.times = None if times is None else np.asarray(times, dtype=np.float64)
        self.source = source
        self.queried = []

    @classmethod
    def from_models(cls, model_set):
        return cls(model_set.score, model_set.times, 'models')

    @classmethod
    def from_oracle(cls, oracle):
        return cls(oracle.score, None, 'oracle:{0}'.format(oracle.kind))

    def missing(self, times):
        if self.times is None:
            return []
        available = set(self.times.tolist())
        return [t for t in np.asarray(times).tolist() if t not in available]

    def require(self, grid):
        missing = self.missing(grid.forward_times)
        if len(missing) > 0:
            raise ProviderError(missing)

    def score(self, x, t):
        self.queried.append(float(t))
        return self._score_fn(x, t)


def run_reverse(provider, grid, n_samples, D, rng, logger=None):
    """y_0 ~ N(0, I_D), then N exponential integrator steps with the score at forward time T - tau_k"""
    provider.require(grid)
    y = rng.standard_normal((n_samples, D))
    for k in range(grid.N):
        t = grid.forward_times[k]
        y = ei_step(y, provider.score(y, t), grid.gaps[k], rng)
        if logger is not None and logger.is_enabled_for('DEBUG'):
            logger.log_fields('DEBUG', 'reverse_step', k=k, t=float(t), gamma=float(grid.gaps[k]),
                              mean_norm=float(np.mean(np.linalg.norm(y, axis=1))))
    return y


def _cholesky(cov, name):
    try:
        return linalg.cho_factor(cov, lower=True)
    except linalg.LinAlgError:
        raise DomainError('{0} covariance must be positive definite'.format(name))


def kl_gaussian(mean1, cov1, mean2, cov2):
    """KL(N(mean1, cov1) || N(mean2, cov2)) = 1/2 (tr(C2^-1 C1) + dm^T C2^-1 dm - k + log det C2 - log det C1)"""
    mean1 = np.atleast_1d(np.asarray(mean1, dtype=np.float64))
    mean2 = np.atleast_1d(np.asarray(mean2, dtype=np.float64))
    cov1 = np.atleast_2d(np.asarray(cov1, dtype=np.float64))
    cov2 = np.atleast_2d(np.asarray(cov2, dtype=np.float64))
    k = mean1.shape[0]
    cf1 = _cholesky(cov1, 'First')
    cf2 = _cholesky(cov2, 'Second')
    dm = mean2 - mean1
    trace = np.trace(linalg.cho_solve(cf2, cov1))
    quad = dm @ linalg.cho_solve(cf2, dm)
    logdet = 2.0 * (np.sum(np.log(np.diag(cf2[0]))) - np.sum(np.log(np.diag(cf1[0]))))
    return max(0.0, 0.5 * float(trace + quad - k + logdet))


def gaussian_fit_kl(target_mean, target_cov, samples):
    """KL(target || N(sample mean, sample covariance)), exact when both laws are Gaussian"""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    fit_cov = np.atleast_2d(np.cov(samples, rowvar=False))
    return kl_gaussian(target_mean, target_cov, samples.mean(axis=0), fit_cov)
