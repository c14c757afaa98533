#!/usr/bin/env python3
# -*- coding: utf-8, vim: expandtab:ts=4 -*-

import math

import numpy as np
import pytest

from shallowdiffusion.dsm_train import ScoreModelEntry, ScoreModelSet
from shallowdiffusion.exceptions import AlignmentError, DomainError
from shallowdiffusion.metrics import empirical_lipschitz, energy_distance, energy_permutation_test, lipschitz_probe, \
    mc_estimate, score_risk, subspace_residual, weighted_score_error, whitening_error
from shallowdiffusion.oracle import ScoreOracle
from shallowdiffusion.schedule import ScheduleParams, make_time_grid
from shallowdiffusion.shallow_net import ShallowScoreNet, exact_linear_net
from shallowdiffusion.targets import SubspaceModel, point_masses, random_orthonormal, standard_normal, two_component


@pytest.fixture
def normal_oracle():
    return ScoreOracle(SubspaceModel(np.eye(2), standard_normal(2)))


def test_mc_estimate():
    est = mc_estimate([1.0, 2.0, 3.0, 4.0])
    assert est.value == 2.5
    assert est.se == pytest.approx(math.sqrt(5.0 / 3.0) / 2.0, rel=1e-14)
    assert est.n == 4
    assert mc_estimate([7.0]).se == 0.0
    with pytest.raises(DomainError):
        mc_estimate([])


def test_mc_estimate_is_order_independent(rng):
    values = rng.standard_normal(1000) * 1e8 + 1.0
    assert mc_estimate(values).value == mc_estimate(values[::-1]).value


def test_risk_of_the_oracle_is_zero(normal_oracle, rng):
    risk = score_risk(normal_oracle, normal_oracle, 0.5, 100, rng)
    assert (risk.estimate, risk.se, risk.n_mc, risk.t) == (0.0, 0.0, 100, 0.5)
    exact = exact_linear_net(-np.ones(2), np.eye(2))
    assert score_risk(exact, normal_oracle, 0.5, 100, rng).estimate <= 1e-24


def test_risk_of_zero_net(normal_oracle, rng):
    # E||grad log p_t||^2 = E||x||^2 = D for N(0, I)
    risk = score_risk(ShallowScoreNet.zeros(2, 2), normal_oracle, 0.3, 50000, rng)
    assert abs(risk.estimate - 2.0) <= 4.0 * risk.se
    with pytest.raises(DomainError):
        score_risk(ShallowScoreNet.zeros(2, 2), normal_oracle, 0.3, 1, rng)


def _model_set(grid, net_for_t):
    return ScoreModelSet([ScoreModelEntry(float(t), net_for_t(t), 0.0, 1.0, []) for t in grid.forward_times])


def test_weighted_score_error(normal_oracle, rng):
    grid = make_time_grid(ScheduleParams(2.0, 4, 0.25))
    exact = weighted_score_error(_model_set(grid, lambda t: exact_linear_net(-np.ones(2), np.eye(2), t)),
                                 normal_oracle, grid, 100, rng)
    assert len(exact.rows) == grid.N
    assert exact.total <= 1e-20
    assert [row[0] for row in exact.rows] == list(range(grid.N))

    zero = weighted_score_error(_model_set(grid, lambda t: ShallowScoreNet.zeros(2, 2, t)), normal_oracle, grid,
                                5000, rng)
    # Each step contributes gamma_k * D, so the total is D (T - zeta)
    assert abs(zero.total - 2.0 * (2.0 - 0.25)) <= 4.0 * zero.se
    assert zero.total == pytest.approx(math.fsum(zero.contributions))


def test_weighted_score_error_needs_aligned_models(normal_oracle, rng):
    grid = make_time_grid(ScheduleParams(2.0, 4, 0.25))
    other = make_time_grid(ScheduleParams(3.0, 4, 0.25))
    with pytest.raises(AlignmentError, match='missing'):
        weighted_score_error(_model_set(other, lambda t: ShallowScoreNet.zeros(2, 2, t)), normal_oracle, grid, 10,
                             rng)


def test_subspace_residual(rng):
    U = random_orthonormal(4, 2, rng)
    inside = SubspaceModel(U, two_component(2)).sample(100, rng)
    assert subspace_residual(inside, U).value <= 1e-24
    noisy = inside + rng.standard_normal(inside.shape)
    res = subspace_residual(noisy, U)
    assert abs(res.value - 2.0) <= 4.0 * res.se


def test_energy_distance(rng):
    a = rng.standard_normal((500, 2))
    b = rng.standard_normal((500, 2))
    same = energy_distance(a, b, rng)
    shifted = energy_distance(a, b + 2.0, rng)
    assert same >= 0.0
    assert shifted > 10.0 * max(same, 1e-3)
    with pytest.raises(DomainError):
        energy_distance(np.empty((0, 2)), b, rng)


def test_energy_subsample_cap(rng):
    a = rng.standard_normal((300, 2))
    b = rng.standard_normal((300, 2)) + 3.0
    assert energy_distance(a, b, rng, cap=50) > 1.0


def test_energy_permutation_test_detects_shift(rng):
    a = rng.standard_normal((200, 2))
    b = rng.standard_normal((200, 2)) + 1.0
    test = energy_permutation_test(a, b, rng, n_permutations=99)
    assert test.null.shape == (99,)
    assert test.statistic > test.null_quantile_95
    assert test.p_value == pytest.approx(0.01)


def test_lipschitz_probe_of_standard_normal(rng):
    z = rng.standard_normal((50, 2))
    table = lipschitz_probe(standard_normal(2), [0.01, 0.5, 2.0], z)
    assert table.variation == pytest.approx(1.0, rel=1e-10)
    assert table.within_limit
    assert table.ratios.shape == (3,)
    with pytest.raises(DomainError):
        lipschitz_probe(point_masses([[0.0, 1.0]]), [0.5], z)


def test_empirical_lipschitz(rng):
    z = rng.standard_normal((10, 2))
    assert empirical_lipschitz(standard_normal(2), 0.5, z) == pytest.approx(1.0, rel=1e-6)
    # A sharply bimodal latent has a much larger Jacobian near the origin at small t
    sharp = two_component(1, separation=4.0, bandwidth=0.1)
    assert empirical_lipschitz(sharp, 0.01, np.zeros((1, 1))) > 10.0


def test_whitening_error_of_identity(rng):
    x = rng.standard_normal((50000, 3))
    assert whitening_error(np.eye(3), x) <= 0.1
    assert whitening_error(3.0 * np.eye(3), x) > 10.0
