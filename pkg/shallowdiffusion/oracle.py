#!/usr/bin/env python3
# -*- coding: utf-8, vim: expandtab:ts=4 -*-

"""
    Exact ground-truth scores under OU corruption.
     - mixture_score: closed form for a Gaussian mixture at time t
     - ambient_score_subspace / ambient_score_independent: the structural decompositions of grad log p_t
     - tweedie_score: brute-force posterior mean over point masses
     - gaussian_ambient_score: -Cov^{-1}(x - mean)
    All posterior weights are computed in log space.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from shallowdiffusion.exceptions import DomainError, ModelError
from shallowdiffusion.schedule import ou_coefficients
from shallowdiffusion.targets import IndependentModel, MixedModel, SubspaceModel, check_partition

LOG_2PI = math.log(2.0 * math.pi)


def _as_batch(x):
    x = np.asarray(x, dtype=np.float64)
    return (x[None, :], True) if x.ndim == 1 else (x, False)


@dataclass(frozen=True, eq=False)
class MixtureAtTime:
    """Law of m_t z_0 + sigma_t w: components (w_j, m_t mu_j, m_t^2 Sigma_j + sigma_t^2 I)"""
    t: float
    weights: np.ndarray = field(repr=False)
    means: np.ndarray = field(repr=False)
    covs: np.ndarray = field(repr=False)

    @property
    def dim(self):
        return self.means.shape[1]


def mixture_at_time(mix, t):
    coeffs = ou_coefficients(t)
    eye = np.eye(mix.dim)
    return MixtureAtTime(coeffs.t, mix.weights, coeffs.m * mix.means,
                         coeffs.m * coeffs.m * mix.covs + coeffs.sigma2 * eye[None, :, :])


def _cholesky_components(mix):
    factors = []
    for j, cov in enumerate(mix.covs):
        try:
            factors.append(linalg.cho_factor(cov, lower=True))
        except linalg.LinAlgError:
            raise DomainError('Component {0} covariance is singular at t={1!r}:'
                              ' the mixture score needs t > 0 or PD components'.format(j, mix.t))
    return factors


def _component_terms(mix, z):
    """Per component log(w_j N(z; m_j, C_j)) and C_j^{-1}(z - m_j), shapes (n, K) and (K, n, d)"""
    d = mix.dim
    log_terms = np.empty((z.shape[0], len(mix.weights)))
    solved = np.empty((len(mix.weights),) + z.shape)
    for j, (cf, mean) in enumerate(zip(_cholesky_components(mix), mix.means)):
        diff = z - mean
        sol = linalg.cho_solve(cf, diff.T).T
        logdet = 2.0 * np.sum(np.log(np.diag(cf[0])))
        log_terms[:, j] = math.log(mix.weights[j]) - 0.5 * np.sum(diff * sol, axis=1) - 0.5 * (logdet + d * LOG_2PI)
        solved[j] = sol
    return log_terms, solved


def mixture_log_density(mix, z):
    z, single = _as_batch(z)
    log_terms, _ = _component_terms(mix, z)
    out = logsumexp(log_terms, axis=1)
    return float(out[0]) if single else out


def mixture_score(mix, z):
    """sum_j r_j(z) (-C_j^{-1}(z - m_j)) with responsibilities r_j via log-sum-exp"""
    z, single = _as_batch(z)
    log_terms, solved = _component_terms(mix, z)
    resp = np.exp(log_terms - logsumexp(log_terms, axis=1, keepdims=True))
    out = -np.einsum('nj,jnd->nd', resp, solved)
    return out[0] if single else out


def ambient_score_subspace(U, latent_score_fn, x, t):
    """U grad log pi_t(U^T x) - (I - U U^T) x / sigma_t^2, latent_score_fn(z_batch, t)"""
    coeffs = ou_coefficients(t)
    if coeffs.t == 0.0:
        raise DomainError('The subspace ambient score diverges off range(U) at t = 0')
    x, single = _as_batch(x)
    z = x @ U
    out = latent_score_fn(z, coeffs.t) @ U.T - (x - z @ U.T) / coeffs.sigma2
    return out[0] if single else out


def ambient_score_independent(U, group_score_fns, selectors, x, t):
    """sum_i U P_i^T grad log pi_t^(i)(P_i U^T x), group_score_fns[i](z_i_batch, t)"""
    x, single = _as_batch(x)
    check_partition(selectors, U.shape[1])
    if len(group_score_fns) != len(selectors):
        raise ModelError('Got {0} group score functions for {1} selectors'.format(len(group_score_fns),
                                                                                 len(selectors)))
    z = x @ U
    latent = np.empty_like(z)
    for fn, sel in zip(group_score_fns, selectors):
        latent[:, sel] = fn(z[:, sel], t)
    out = latent @ U.T
    return out[0] if single else out


def tweedie_score(atoms, x, t):
    """
        Brute-force Tweedie: grad log p_t(x) = (sum_j rho_j(x) m_t x0_j - x) / sigma_t^2,
         rho_j proportional to w_j exp(-||x - m_t x0_j||^2 / (2 sigma_t^2))
        atoms: (weights, points) with points of shape (K, D)
    """
    weights, points = atoms
    weights = np.asarray(weights, dtype=np.float64)
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if points.shape[0] == 0 or weights.size == 0:
        raise DomainError('Tweedie oracle needs a non-empty atom support')
    coeffs = ou_coefficients(t)
    if coeffs.t == 0.0:
        raise DomainError('Tweedie oracle needs t > 0')
    x, single = _as_batch(x)
    centers = coeffs.m * points
    sq = np.sum((x[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    log_rho = np.log(weights)[None, :] - 0.5 * sq / coeffs.sigma2
    rho = np.exp(log_rho - logsumexp(log_rho, axis=1, keepdims=True))
    out = (rho @ centers - x) / coeffs.sigma2
    return out[0] if single else out


def gaussian_ambient_score(mean, covariance, x):
    x, single = _as_batch(x)
    try:
        cf = linalg.cho_factor(np.asarray(covariance, dtype=np.float64), lower=True)
    except linalg.LinAlgError:
        raise DomainError('Gaussian score needs a positive definite covariance')
    out = -linalg.cho_solve(cf, (x - np.asarray(mean, dtype=np.float64)).T).T
    return out[0] if single else out


def latent_score_fn(mix):
    """Bind a latent mixture into the (z, t) -> grad log pi_t(z) form the decompositions take"""
    def score(z, t):
        return mixture_score(mixture_at_time(mix, t), z)
    return score


ORACLE_KINDS = ('closed-form-subspace', 'closed-form-independent', 'tweedie-bruteforce', 'exact-gaussian-ambient',
                'ambient-mixture')


class ScoreOracle:
    """
        Exact grad log p_t for a target model.
        kind:
         closed-form-subspace      SubspaceModel via the subspace decomposition
         closed-form-independent   IndependentModel via the group decomposition
         tweedie-bruteforce        point-mass targets via Tweedie's identity
         exact-gaussian-ambient    single-Gaussian targets
         ambient-mixture           any target, closed-form score of the pushed-forward mixture in R^D
    """
    def __init__(self, model, kind=None):
        self.model = model
        if kind is None:
            kind = self.default_kind(model)
        if kind not in ORACLE_KINDS:
            raise ModelError('Unknown oracle kind {0!r} (choose from {1})'.format(kind, ', '.join(ORACLE_KINDS)))
        self.kind = kind
        self._ambient = model.ambient_mixture()

        if kind == 'closed-form-subspace':
            if not isinstance(model, SubspaceModel):
                raise ModelError('closed-form-subspace needs a SubspaceModel')
            self._latent_fn = latent_score_fn(model.latent)
        elif kind == 'closed-form-independent':
            if not isinstance(model, IndependentModel):
                raise ModelError('closed-form-independent needs an IndependentModel')
            self._group_fns = [latent_score_fn(g) for g in model.groups]
        elif kind == 'tweedie-bruteforce':
            if not np.all(self._ambient.degenerate):
                raise ModelError('tweedie-bruteforce needs a point-mass target')
        elif kind == 'exact-gaussian-ambient':
            if self._ambient.n_components != 1:
                raise ModelError('exact-gaussian-ambient needs a single-Gaussian target')

    @staticmethod
    def default_kind(model):
        if isinstance(model, SubspaceModel):
            return 'closed-form-subspace'
        if isinstance(model, IndependentModel):
            return 'closed-form-independent'
        if isinstance(model, MixedModel):
            return 'ambient-mixture'
        raise ModelError('No oracle for model of type {0}'.format(type(model).__name__))

    @property
    def D(self):
        return self.model.D

    def marginal(self, t):
        """p_t as a MixtureAtTime in R^D"""
        return mixture_at_time(self._ambient, t)

    def score(self, x, t):
        if self.kind == 'closed-form-subspace':
            return ambient_score_subspace(self.model.U, self._latent_fn, x, t)
        if self.kind == 'closed-form-independent':
            return ambient_score_independent(self.model.U, self._group_fns, self.model.selectors, x, t)
        if self.kind == 'tweedie-bruteforce':
            return tweedie_score((self._ambient.weights, self._ambient.means), x, t)
        if self.kind == 'exact-gaussian-ambient':
            marginal = self.marginal(t)
            return gaussian_ambient_score(marginal.means[0], marginal.covs[0], x)
        return mixture_score(self.marginal(t), x)

    def at(self, t):
        """The score at a fixed time as a plain x -> score callable"""
        def bound(x):
            return self.score(x, t)
        bound.t = float(t)
        return bound

    def __repr__(self):
        return '{0}(kind={1!r}, D={2})'.format(type(self).__name__, self.kind, self.D)
