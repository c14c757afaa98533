#!/usr/bin/env python3
# -*- coding: utf-8, vim: expandtab:ts=4 -*-

"""
    Synthetic target distributions p_0 with known latent structure:
     SubspaceModel     x_0 = U z_0,             U in O(D, d)
     IndependentModel  x_0 = U (z^(1), ..., z^(K)), U in O(D), independent groups
     MixedModel        x_0 = A z_0,             A invertible, independent groups
    Latents are Gaussian mixtures (point masses allowed), so every score is available in closed form.
"""

import itertools
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import linalg

from shallowdiffusion.exceptions import DomainError, ModelError, SingularCovarianceError
from shallowdiffusion.schedule import ou_coefficients

ORTHONORMAL_TOL = 1e-12
WHITENING_FLOOR = 1e-12


def _psd_factor(cov):
    """F with F F^T = cov for a symmetric PSD matrix (tiny negative eigenvalues from round-off are clipped)"""
    eigval, eigvec = linalg.eigh(cov)
    return eigvec * np.sqrt(np.clip(eigval, 0.0, None))


@dataclass(frozen=True, eq=False)
class LatentMixture:
    """Gaussian mixture sum_j w_j N(mu_j, Sigma_j) on R^d, Sigma_j = 0 is a point mass"""
    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    _factors: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        weights = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
        means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        covs = np.asarray(self.covs, dtype=np.float64)
        if covs.ndim == 2:
            covs = covs[None, :, :]
        k, d = means.shape
        if weights.shape != (k,) or covs.shape != (k, d, d):
            raise ModelError('Inconsistent mixture shapes: weights {0}, means {1}, covs {2}'.
                             format(weights.shape, means.shape, covs.shape))
        if np.any(weights <= 0.0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ModelError('Mixture weights must be positive and sum to 1, got {0}'.format(weights))
        for j in range(k):
            cov = covs[j]
            scale = max(1.0, float(np.max(np.abs(cov))))
            if np.max(np.abs(cov - cov.T)) > 1e-12 * scale:
                raise ModelError('Covariance of component {0} is not symmetric'.format(j))
            if linalg.eigvalsh(cov)[0] < -1e-12 * scale:
                raise ModelError('Covariance of component {0} is not positive semidefinite'.format(j))
        object.__setattr__(self, 'weights', weights)
        object.__setattr__(self, 'means', means)
        object.__setattr__(self, 'covs', covs)
        object.__setattr__(self, '_factors', np.stack([_psd_factor(c) for c in covs]))

    @property
    def dim(self):
        return self.means.shape[1]

    @property
    def n_components(self):
        return self.means.shape[0]

    @property
    def degenerate(self):
        """Per component: True for point masses (Sigma_j = 0)"""
        return np.array([not np.any(c) for c in self.covs])

    @property
    def is_positive_definite(self):
        return all(linalg.eigvalsh(c)[0] > 0.0 for c in self.covs)

    @property
    def second_moment_root(self):
        """mu_0 = (E ||z_0||^2)^(1/2) = (sum_j w_j (||mu_j||^2 + tr Sigma_j))^(1/2)"""
        per_comp = np.sum(self.means ** 2, axis=1) + np.trace(self.covs, axis1=1, axis2=2)
        return float(np.sqrt(np.dot(self.weights, per_comp)))

    @property
    def max_eigenvalue(self):
        """Largest component covariance eigenvalue (the sub-Gaussian parameter surrogate)"""
        return float(max(linalg.eigvalsh(c)[-1] for c in self.covs))

    @property
    def mean(self):
        return self.weights @ self.means

    @property
    def covariance(self):
        mean = self.mean
        second = np.einsum('j,jab->ab', self.weights, self.covs) + \
            np.einsum('j,ja,jb->ab', self.weights, self.means, self.means)
        return second - np.outer(mean, mean)

    def sample(self, n, rng):
        comp = rng.choice(self.n_components, size=n, p=self.weights)
        noise = rng.standard_normal((n, self.dim))
        # z = mu_j + F_j xi, batched over the chosen components
        return self.means[comp] + np.einsum('nab,nb->na', self._factors[comp], noise)

    def pushforward(self, matrix):
        """Law of M z for z from this mixture (M is D x d)"""
        matrix = np.asarray(matrix, dtype=np.float64)
        covs = np.einsum('ia,jab,kb->jik', matrix, self.covs, matrix)
        covs = 0.5 * (covs + np.transpose(covs, (0, 2, 1)))
        return LatentMixture(self.weights, self.means @ matrix.T, covs)


def standard_normal(d):
    return LatentMixture(np.ones(1), np.zeros((1, d)), np.eye(d)[None])


def point_masses(points, weights=None):
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    k, d = points.shape
    if weights is None:
        weights = np.full(k, 1.0 / k)
    return LatentMixture(weights, points, np.zeros((k, d, d)))


def gaussian(mean, cov):
    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    return LatentMixture(np.ones(1), mean[None], np.asarray(cov, dtype=np.float64)[None])


def two_component(d, separation=2.0, bandwidth=0.5, weight=0.5):
    """Two isotropic components at +/- (separation/2) e_1 with common variance bandwidth^2"""
    mean = np.zeros(d)
    mean[0] = 0.5 * separation
    cov = (bandwidth ** 2) * np.eye(d)
    return LatentMixture(np.array([weight, 1.0 - weight]), np.stack([mean, -mean]), np.stack([cov, cov]))


def random_mixture(d, n_components, rng, spread=1.5, bandwidth=0.5, degenerate=False):
    means = spread * rng.standard_normal((n_components, d))
    weights = rng.dirichlet(np.full(n_components, 2.0))
    if degenerate:
        return point_masses(means, weights)
    covs = []
    for _ in range(n_components):
        a = rng.standard_normal((d, d))
        covs.append(bandwidth ** 2 * (np.eye(d) + 0.3 * a @ a.T / d))
    return LatentMixture(weights, means, np.stack(covs))


def random_orthonormal(D, d, rng):
    """Haar-distributed D x d frame: QR of a Gaussian matrix with the sign of diag(R) fixed"""
    if not (1 <= d <= D):
        raise DomainError('Need 1 <= d <= D, got d={0} D={1}'.format(d, D))
    q, r = linalg.qr(rng.standard_normal((D, d)), mode='economic')
    signs = np.sign(np.diag(r))
    signs[signs == 0.0] = 1.0
    return q * signs


def _check_orthonormal_columns(U, name='U'):
    gram_err = linalg.norm(U.T @ U - np.eye(U.shape[1]), 'fro')
    if gram_err > ORTHONORMAL_TOL:
        raise ModelError('{0} must have orthonormal columns: ||U^T U - I||_F = {1:.3g}'.format(name, gram_err))


def group_selectors(dims):
    """Contiguous index ranges P_i for consecutive groups of the given dimensions"""
    offsets = np.concatenate(([0], np.cumsum(dims)))
    return [np.arange(offsets[i], offsets[i + 1]) for i in range(len(dims))]


def check_partition(selectors, D):
    """Raise ModelError unless the selectors partition range(D)"""
    seen = np.concatenate([np.asarray(s, dtype=int).ravel() for s in selectors]) if len(selectors) > 0 \
        else np.array([], dtype=int)
    if np.any(seen < 0) or np.any(seen >= D):
        raise ModelError('Selector indices out of range for D = {0}'.format(D))
    counts = np.bincount(seen, minlength=D)
    overlapping = np.nonzero(counts > 1)[0]
    missing = np.nonzero(counts == 0)[0]
    if len(overlapping) > 0 or len(missing) > 0:
        raise ModelError('Group selectors must partition [D]: overlapping {0}, missing {1}'.
                         format(overlapping.tolist(), missing.tolist()))


def _product_mixture(groups):
    """The joint law of independent groups as one mixture with block-diagonal components"""
    dims = [g.dim for g in groups]
    weights, means, covs = [], [], []
    for combo in itertools.product(*[range(g.n_components) for g in groups]):
        weights.append(np.prod([g.weights[j] for g, j in zip(groups, combo)]))
        means.append(np.concatenate([g.means[j] for g, j in zip(groups, combo)]))
        covs.append(linalg.block_diag(*[g.covs[j] for g, j in zip(groups, combo)]))
    weights = np.array(weights)
    return LatentMixture(weights / weights.sum(), np.stack(means), np.stack(covs).reshape(-1, sum(dims), sum(dims)))


@dataclass(frozen=True, eq=False)
class SubspaceModel:
    U: np.ndarray
    latent: LatentMixture
    kind = 'subspace'

    def __post_init__(self):
        U = np.asarray(self.U, dtype=np.float64)
        if U.ndim != 2 or U.shape[1] != self.latent.dim:
            raise ModelError('U must be D x d with d = latent dim {0}, got {1}'.format(self.latent.dim, U.shape))
        _check_orthonormal_columns(U)
        object.__setattr__(self, 'U', U)

    @property
    def D(self):
        return self.U.shape[0]

    @property
    def d(self):
        return self.U.shape[1]

    @property
    def second_moment_root(self):
        return self.latent.second_moment_root

    def sample(self, n, rng):
        return self.latent.sample(n, rng) @ self.U.T

    def ambient_mixture(self):
        return self.latent.pushforward(self.U)


@dataclass(frozen=True, eq=False)
class IndependentModel:
    U: np.ndarray
    groups: List[LatentMixture]
    kind = 'independent'

    def __post_init__(self):
        U = np.asarray(self.U, dtype=np.float64)
        D = sum(g.dim for g in self.groups)
        if U.shape != (D, D):
            raise ModelError('U must be D x D with D = sum of group dims = {0}, got {1}'.format(D, U.shape))
        _check_orthonormal_columns(U)
        object.__setattr__(self, 'U', U)
        object.__setattr__(self, 'groups', list(self.groups))

    @property
    def D(self):
        return self.U.shape[0]

    @property
    def group_dims(self):
        return tuple(g.dim for g in self.groups)

    @property
    def selectors(self):
        return group_selectors(self.group_dims)

    @property
    def second_moment_root(self):
        return float(np.sqrt(sum(g.second_moment_root ** 2 for g in self.groups)))

    def sample_latent(self, n, rng):
        return np.concatenate([g.sample(n, rng) for g in self.groups], axis=1)

    def sample(self, n, rng):
        return self.sample_latent(n, rng) @ self.U.T

    def ambient_mixture(self):
        return _product_mixture(self.groups).pushforward(self.U)


@dataclass(frozen=True, eq=False)
class MixedModel:
    A: np.ndarray
    groups: List[LatentMixture]
    kind = 'mixed'

    def __post_init__(self):
        A = np.asarray(self.A, dtype=np.float64)
        D = sum(g.dim for g in self.groups)
        if A.shape != (D, D):
            raise ModelError('A must be D x D with D = sum of group dims = {0}, got {1}'.format(D, A.shape))
        if not np.isfinite(np.linalg.cond(A)):
            raise ModelError('Mixing matrix A is singular')
        object.__setattr__(self, 'A', A)
        object.__setattr__(self, 'groups', list(self.groups))

    @property
    def D(self):
        return self.A.shape[0]

    @property
    def group_dims(self):
        return tuple(g.dim for g in self.groups)

    @property
    def selectors(self):
        return group_selectors(self.group_dims)

    @property
    def condition_number(self):
        return float(np.linalg.cond(self.A))

    @property
    def Sigma(self):
        """Block-diagonal latent covariance"""
        return linalg.block_diag(*[g.covariance for g in self.groups])

    @property
    def covariance(self):
        return self.A @ self.Sigma @ self.A.T

    @property
    def second_moment_root(self):
        mix = self.ambient_mixture()
        return mix.second_moment_root

    def sample_latent(self, n, rng):
        return np.concatenate([g.sample(n, rng) for g in self.groups], axis=1)

    def sample(self, n, rng):
        return self.sample_latent(n, rng) @ self.A.T

    def ambient_mixture(self):
        return _product_mixture(self.groups).pushforward(self.A)


def mixing_matrix(D, condition_number, rng):
    """Q1 diag(s) Q2 with singular values geometrically spaced from 1 down to 1/condition_number"""
    if condition_number < 1.0:
        raise ModelError('condition_number must be >= 1, got {0!r}'.format(condition_number))
    s = np.geomspace(1.0, 1.0 / condition_number, D)
    return random_orthonormal(D, D, rng) @ np.diag(s) @ random_orthonormal(D, D, rng)


def sample_x0(model, n, rng):
    return model.sample(n, rng)


def stream_rng(seed, *keys):
    """Independent generator for (seed, keys...), e.g. one stream per timestep or per sweep cell"""
    return np.random.default_rng(np.random.SeedSequence([int(seed)] + [int(k) for k in keys]))


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """n records (x0, w, xt) with xt = m_t x0 + sigma_t w exactly"""
    t: float
    x0: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)
    xt: np.ndarray = field(repr=False)
    stream: Optional[int] = None

    @property
    def n(self):
        return self.x0.shape[0]

    @property
    def D(self):
        return self.x0.shape[1]

    @property
    def coefficients(self):
        return ou_coefficients(self.t)

    def with_fresh_noise(self, rng):
        return forward_corrupt(self.x0, self.t, rng, stream=self.stream)


def forward_corrupt(x0_batch, t, rng, stream=None):
    coeffs = ou_coefficients(t)
    x0 = np.atleast_2d(np.asarray(x0_batch, dtype=np.float64))
    w = rng.standard_normal(x0.shape)
    xt = coeffs.m * x0 + coeffs.sigma * w
    return TrainingSet(coeffs.t, x0, w, xt, stream)


def sample_marginal(model, t, n, rng):
    """Fresh draws from p_t"""
    return forward_corrupt(model.sample(n, rng), t, rng).xt


def estimate_whitener(x0_batch):
    """Symmetric inverse square root of the sample covariance (eigenvalue floor 1e-12 lambda_max)"""
    x = np.asarray(x0_batch, dtype=np.float64)
    n, D = x.shape
    if n <= D:
        raise SingularCovarianceError('Whitening needs n > D samples, got n={0}, D={1}'.format(n, D))
    cov = np.cov(x, rowvar=False).reshape(D, D)
    eigval, eigvec = linalg.eigh(cov)
    floor = WHITENING_FLOOR * eigval[-1]
    if eigval[0] <= floor:
        raise SingularCovarianceError('Sample covariance is rank deficient (lambda_min = {0:.3g} <= {1:.3g});'
                                      ' the data look subspace-supported, use a subspace model instead'.
                                      format(eigval[0], floor))
    return (eigvec / np.sqrt(eigval)) @ eigvec.T


def whiten_model(model, W):
    """The model of W x_0 (exact, so oracles stay available after whitening)"""
    if isinstance(model, MixedModel):
        return MixedModel(W @ model.A, model.groups)
    if isinstance(model, IndependentModel):
        return MixedModel(W @ model.U, model.groups)
    raise ModelError('Whitening is defined for independent-component models only, got {0}'.format(model.kind))
