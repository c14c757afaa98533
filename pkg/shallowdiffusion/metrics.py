#!/usr/bin/env python3
# -*- coding: utf-8, vim: expandtab:ts=4 -*-

"""
    Monte Carlo evaluation: L2(p_t) score risk against an exact oracle, the step-weighted score error the sampler
     accumulates, distances between sample sets and structural diagnostics.
    Every estimator reports a standard error; reductions use math.fsum so they do not depend on point order.
"""

import math
from dataclasses import dataclass, field
from typing import List

import numpy as np
from scipy.spatial.distance import cdist

from shallowdiffusion.exceptions import AlignmentError, DomainError
from shallowdiffusion.oracle import mixture_at_time, mixture_score
from shallowdiffusion.targets import sample_marginal

ENERGY_SUBSAMPLE_CAP = 2000
LIPSCHITZ_VARIATION_LIMIT = 10.0


@dataclass(frozen=True)
class MCEstimate:
    value: float
    se: float
    n: int


def mc_estimate(values):
    """Sample mean with standard error s / sqrt(n) (SE is 0 for a single value)"""
    values = np.asarray(values, dtype=np.float64).ravel()
    n = values.size
    if n == 0:
        raise DomainError('Cannot estimate a mean from zero samples')
    mean = math.fsum(values) / n
    if n == 1:
        return MCEstimate(mean, 0.0, 1)
    var = math.fsum((values - mean) ** 2) / (n - 1)
    return MCEstimate(mean, math.sqrt(var / n), n)


@dataclass(frozen=True)
class RiskEstimate:
    t: float
    estimate: float
    se: float
    n_mc: int


def _score_callable(model, t):
    """A trained net, a plain x -> score function or anything with score(x, t)"""
    if hasattr(model, 'score'):
        return lambda x: model.score(x, t)
    return model


def score_risk(model, oracle, t, n_mc, rng):
    """E_{x_t ~ p_t} ||model(x_t) - grad log p_t(x_t)||^2 over n_mc fresh draws"""
    if n_mc < 2:
        raise DomainError('score_risk needs n_mc >= 2 for a standard error, got {0}'.format(n_mc))
    xt = sample_marginal(oracle.model, t, n_mc, rng)
    diff = _score_callable(model, t)(xt) - oracle.score(xt, t)
    est = mc_estimate(np.sum(diff * diff, axis=1))
    return RiskEstimate(float(t), est.value, est.se, n_mc)


@dataclass(frozen=True)
class WeightedScoreError:
    """Rows (k, t_k, gamma_k, risk, se, gamma_k * risk); total is the fsum of the contributions"""
    rows: List[tuple] = field(repr=False)
    total: float
    se: float

    @property
    def contributions(self):
        return [row[-1] for row in self.rows]


def check_alignment(times, grid):
    times = np.asarray(times, dtype=np.float64)
    expected = grid.forward_times
    if times.shape != expected.shape or np.any(times != expected):
        missing = sorted(set(expected.tolist()) - set(times.tolist()))
        extra = sorted(set(times.tolist()) - set(expected.tolist()))
        raise AlignmentError('Model set is not aligned with the grid: missing times {0}, unexpected times {1}'.
                             format(missing, extra))


def weighted_score_error(model_set, oracle, grid, n_mc, rng):
    """sum_k gamma_k R_{T - tau_k}(s_hat) with the per-step table"""
    check_alignment(model_set.times, grid)
    rows = []
    for k, (t, gamma) in enumerate(zip(grid.forward_times, grid.gaps)):
        risk = score_risk(lambda x, t=t: model_set.score(x, t), oracle, t, n_mc, rng)
        rows.append((k, float(t), float(gamma), risk.estimate, risk.se, float(gamma) * risk.estimate))
    total = math.fsum(row[-1] for row in rows)
    se = math.sqrt(math.fsum((row[2] * row[4]) ** 2 for row in rows))
    return WeightedScoreError(rows, total, se)


def subspace_residual(samples, U):
    """Mean squared norm of the component orthogonal to range(U)"""
    x = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    normal = x - (x @ U) @ U.T
    return mc_estimate(np.sum(normal * normal, axis=1))


def _subsample(x, rng, cap):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[0] > cap:
        x = x[rng.choice(x.shape[0], cap, replace=False)]
    return x


def _within_mean(x):
    n = x.shape[0]
    if n < 2:
        return 0.0
    return np.sum(cdist(x, x)) / (n * (n - 1))


def _energy_statistic(a, b):
    return 2.0 * np.mean(cdist(a, b)) - _within_mean(a) - _within_mean(b)


def energy_distance(samples_a, samples_b, rng, cap=ENERGY_SUBSAMPLE_CAP):
    """U-statistic 2E||a-b|| - E||a-a'|| - E||b-b'||, clipped at 0, each set subsampled to at most cap rows"""
    a = _subsample(samples_a, rng, cap)
    b = _subsample(samples_b, rng, cap)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise DomainError('Energy distance needs non-empty sample sets')
    return max(0.0, float(_energy_statistic(a, b)))


@dataclass(frozen=True)
class PermutationTest:
    statistic: float
    null_quantile_95: float
    p_value: float
    null: np.ndarray = field(repr=False)


def energy_permutation_test(samples_a, samples_b, rng, n_permutations=200, cap=ENERGY_SUBSAMPLE_CAP):
    """Null distribution of the (unclipped) energy statistic under random relabelling of the pooled samples"""
    a = _subsample(samples_a, rng, cap)
    b = _subsample(samples_b, rng, cap)
    stat = float(_energy_statistic(a, b))
    pooled = np.concatenate([a, b])
    n_a = a.shape[0]
    null = np.empty(n_permutations)
    for i in range(n_permutations):
        perm = rng.permutation(pooled.shape[0])
        null[i] = _energy_statistic(pooled[perm[:n_a]], pooled[perm[n_a:]])
    p_value = (1.0 + np.sum(null >= stat)) / (1.0 + n_permutations)
    return PermutationTest(stat, float(np.quantile(null, 0.95)), float(p_value), null)


@dataclass(frozen=True)
class LipschitzTable:
    times: np.ndarray
    ratios: np.ndarray
    variation: float

    @property
    def within_limit(self):
        return self.variation <= LIPSCHITZ_VARIATION_LIMIT


def lipschitz_probe(latent, times, z):
    """Per t: max over the sample points z of ||grad log pi_t(z)|| / (1 + ||z||). variation = max ratio / min ratio"""
    if not latent.is_positive_definite:
        raise DomainError('lipschitz_probe needs a latent mixture with positive definite components')
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    denom = 1.0 + np.linalg.norm(z, axis=1)
    ratios = np.array([np.max(np.linalg.norm(mixture_score(mixture_at_time(latent, t), z), axis=1) / denom)
                       for t in times])
    variation = float(np.max(ratios) / np.min(ratios)) if np.min(ratios) > 0.0 else math.inf
    return LipschitzTable(np.asarray(times, dtype=np.float64), ratios, variation)


def empirical_lipschitz(latent, t, z, h=1e-5):
    """Max spectral norm of the central finite-difference Jacobian of grad log pi_t over the sample points"""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    mix = mixture_at_time(latent, t)
    n, d = z.shape
    jac = np.empty((n, d, d))
    for j in range(d):
        step = np.zeros(d)
        step[j] = h
        jac[:, :, j] = (mixture_score(mix, z + step) - mixture_score(mix, z - step)) / (2.0 * h)
    return float(np.max(np.linalg.norm(jac, ord=2, axis=(1, 2))))


def whitening_error(W, x):
    """||W Cov(x) W^T - I||_F on (holdout) samples x"""
    x = np.asarray(x, dtype=np.float64)
    cov = np.atleast_2d(np.cov(x, rowvar=False))
    return float(np.linalg.norm(W @ cov @ W.T - np.eye(cov.shape[0]), 'fro'))
