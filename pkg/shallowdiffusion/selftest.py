#!/usr/bin/env python3
# -*- coding: utf-8, vim: expandtab:ts=4 -*-

"""
    Fast numerical checks shipped with the package (run by the `selftest` command, no pytest needed).
    Every check raises AssertionError on failure.
"""

import math
import time

import numpy as np
from numpy.testing import assert_allclose

from shallowdiffusion.logger import NullLogger
from shallowdiffusion.oracle import ScoreOracle, ambient_score_independent, ambient_score_subspace, latent_score_fn, \
    mixture_at_time, mixture_score, tweedie_score
from shallowdiffusion.schedule import ScheduleParams, make_time_grid, ou_coefficients
from shallowdiffusion.shallow_net import ShallowScoreNet, complement_projector_net, dsm_gradient, path_norm
from shallowdiffusion.dsm_train import dsm_loss, dsm_loss_terms
from shallowdiffusion.metrics import mc_estimate
from shallowdiffusion.sampler import ScoreProvider, gaussian_fit_kl, run_reverse
from shallowdiffusion.targets import IndependentModel, SubspaceModel, TrainingSet, forward_corrupt, point_masses, \
    random_mixture, random_orthonormal, standard_normal


def check_schedule(rng, trials=100):
    for _ in range(trials):
        zeta = rng.uniform(0.001, 0.5)
        T = rng.uniform(1.1, 10.0)
        N = 2 * int(rng.integers(int(math.ceil(math.log(1.0 / zeta))), 200))
        grid = make_time_grid(ScheduleParams(T, N, zeta))
        problems = grid.check_invariants()
        assert len(problems) == 0, 'T={0} N={1} zeta={2}: {3}'.format(T, N, zeta, problems)


def _rel_err(a, b):
    return np.max(np.linalg.norm(a - b, axis=1) / np.maximum(np.linalg.norm(b, axis=1), 1.0))


def check_subspace_oracle(rng, configs=20, points=100, tol=1e-8):
    for _ in range(configs):
        d = int(rng.integers(1, 4))
        D = int(rng.integers(d, 9))
        latent = point_masses(rng.standard_normal((int(rng.integers(1, 6)), d)))
        model = SubspaceModel(random_orthonormal(D, d, rng), latent)
        ambient = model.ambient_mixture()
        x = 2.0 * rng.standard_normal((points, D))
        for t in rng.uniform(0.01, 5.0, 5):
            structural = ambient_score_subspace(model.U, latent_score_fn(latent), x, t)
            brute = tweedie_score((ambient.weights, ambient.means), x, t)
            direct = mixture_score(mixture_at_time(ambient, t), x)
            assert _rel_err(structural, brute) <= tol, 'subspace vs tweedie at t={0}'.format(t)
            assert _rel_err(direct, brute) <= tol, 'ambient mixture vs tweedie at t={0}'.format(t)


def check_independent_oracle(rng, configs=10, points=100, tol=1e-8):
    """Blockwise scores against the joint ambient mixture, and against brute-force Tweedie when groups are atomic"""
    for c in range(configs):
        dims = [int(v) for v in rng.integers(1, 3, int(rng.integers(2, 4)))]
        atomic = c % 2 == 1
        if atomic:
            groups = [point_masses(rng.standard_normal((int(rng.integers(2, 4)), d_i))) for d_i in dims]
        else:
            groups = [random_mixture(d_i, int(rng.integers(1, 3)), rng) for d_i in dims]
        model = IndependentModel(random_orthonormal(sum(dims), sum(dims), rng), groups)
        x = rng.standard_normal((points, model.D))
        oracle = ScoreOracle(model, 'ambient-mixture')
        ambient = model.ambient_mixture()
        for t in rng.uniform(0.01, 5.0, 3):
            structural = ambient_score_independent(model.U, [latent_score_fn(g) for g in groups], model.selectors,
                                                   x, t)
            assert _rel_err(structural, oracle.score(x, t)) <= tol, 'independent decomposition at t={0}'.format(t)
            if atomic:
                brute = tweedie_score((ambient.weights, ambient.means), x, t)
                assert _rel_err(structural, brute) <= tol, 'independent vs tweedie at t={0}'.format(t)


def _fd_check(net, batch, rng, h=1e-6, tol=1e-5):
    grad = dsm_gradient(net, batch)
    for param, analytic in (('u', grad.du), ('v', grad.dv)):
        i, j = int(rng.integers(net.width)), int(rng.integers(net.D))
        plus, minus = net.copy(), net.copy()
        getattr(plus, param)[i, j] += h
        getattr(minus, param)[i, j] -= h
        pre = batch.xt @ net.v.T
        if param == 'v' and np.any(np.abs(pre[:, i]) <= h * np.abs(batch.xt[:, j]) + 1e-12):
            continue  # the perturbation crosses a kink
        numeric = (dsm_loss(plus, batch) - dsm_loss(minus, batch)) / (2.0 * h)
        scale = max(abs(numeric), abs(analytic[i, j]), 1e-3)
        assert abs(numeric - analytic[i, j]) / scale <= tol, \
            'd/d{0}[{1},{2}]: analytic {3!r} numeric {4!r}'.format(param, i, j, analytic[i, j], numeric)


def check_gradient(rng, configs=100):
    for _ in range(configs):
        m, D, n = int(rng.integers(2, 9)), int(rng.integers(1, 4)), int(rng.integers(4, 17))
        net = ShallowScoreNet(rng.standard_normal((m, D)), rng.standard_normal((m, D)))
        batch = forward_corrupt(rng.standard_normal((n, D)), rng.uniform(0.1, 2.0), rng)
        _fd_check(net, batch, rng)


def check_exact_linear(rng, cases=((4, 2), (8, 3), (16, 1))):
    for D, d in cases:
        U = random_orthonormal(D, d, rng)
        t = rng.uniform(0.05, 3.0)
        sigma2 = ou_coefficients(t).sigma2
        net = complement_projector_net(U, t)
        x = rng.standard_normal((50, D))
        expected = -(x - (x @ U) @ U.T) / sigma2
        err = np.linalg.norm(net(x) - expected, axis=1)
        assert np.all(err <= 1e-12 * np.maximum(np.linalg.norm(x, axis=1), 1.0) / sigma2), \
            'exact linear net off for D={0} d={1}'.format(D, d)
        assert_allclose(path_norm(net), 2.0 * (D - d) / sigma2, rtol=1e-12)


def check_dsm_identity(rng, D=8, t=0.5, n=100000):
    """On N(0, I_D): L_t(0) = D / sigma_t^2, L_t(exact) = C_t = D m_t^2 / sigma_t^2, L_t(0) - C_t = R_t(0) = D"""
    assert dsm_loss(ShallowScoreNet.zeros(4, 3), TrainingSet(t, np.zeros((1, 3)), np.zeros((1, 3)),
                                                             np.zeros((1, 3)))) == 0.0
    coeffs = ou_coefficients(t)
    batch = forward_corrupt(rng.standard_normal((n, D)), t, rng)
    zero_terms = dsm_loss_terms(lambda x: np.zeros_like(x), batch)
    exact_terms = dsm_loss_terms(lambda x: -x, batch)
    for name, terms, expected in (('L_t(0)', zero_terms, D / coeffs.sigma2),
                                  ('L_t(exact)', exact_terms, D * coeffs.m ** 2 / coeffs.sigma2),
                                  ('L_t(0) - C_t', zero_terms - exact_terms, float(D))):
        est = mc_estimate(terms)
        assert abs(est.value - expected) <= 3.0 * est.se, '{0} = {1} +/- {2}, expected {3}'.format(
            name, est.value, est.se, expected)


def check_sampler(rng, D=4, n_samples=10000):
    """Exact scores of N(0, I_D) driven through the exponential integrator land on p_zeta = N(0, I_D)"""
    grid = make_time_grid(ScheduleParams(5.0, 200, 0.01))
    provider = ScoreProvider.from_oracle(ScoreOracle(SubspaceModel(np.eye(D), standard_normal(D))))
    y = run_reverse(provider, grid, n_samples, D, rng)
    assert np.max(np.abs(y.mean(axis=0))) <= 0.05, 'sample mean {0}'.format(y.mean(axis=0))
    assert np.max(np.abs(np.cov(y, rowvar=False) - np.eye(D))) <= 0.1, 'sample covariance off identity'
    kl = gaussian_fit_kl(np.zeros(D), np.eye(D), y)
    assert kl <= 0.05, 'Gaussian-fit KL {0}'.format(kl)


SUITES = (('schedule', check_schedule), ('subspace-oracle', check_subspace_oracle),
          ('independent-oracle', check_independent_oracle), ('gradient', check_gradient),
          ('exact-linear', check_exact_linear), ('dsm-identity', check_dsm_identity),
          ('sampler', check_sampler))


def run_selftest(logger=NullLogger(), seed=0):
    """Returns (number passed, [(suite name, failure message), ...])"""
    passed, failed = 0, []
    for name, fun in SUITES:
        start = time.perf_counter()
        try:
            fun(np.random.default_rng(seed))
        except AssertionError as e:
            failed.append((name, str(e)))
            logger.log('ERROR', 'FAIL', name, e)
            continue
        passed += 1
        logger.log_fields('INFO', 'pass', suite=name, seconds=time.perf_counter() - start)
    return passed, failed
