#!/usr/bin/env python3
# -*- coding: utf-8, vim: expandtab:ts=4 -*-

"""
    Finite-width mean-field ReLU networks f(x) = (1/m) sum_i u_i relu(<v_i, x>), R^D -> R^D, bias-free.
    The path norm (1/m) sum_i ||u_i|| ||v_i|| stands in for the F1 norm; the hypothesis class is a path-norm ball.
"""

from collections import namedtuple

import numpy as np
from scipy import linalg

from shallowdiffusion.exceptions import DomainError
from shallowdiffusion.schedule import ou_coefficients

UNIT_TOL = 1e-12

NetGradient = namedtuple('NetGradient', ['du', 'dv'])


class ShallowScoreNet:
    """
        u, v: (m, D) arrays of outer and inner weights, one row per neuron.
        t is informational (the forward time the net was trained for) and travels with checkpoints.
        Neurons carry free magnitudes; (c u_i, v_i / c) represents the same function.
    """
    def __init__(self, u, v, t=None):
        u = np.atleast_2d(np.asarray(u, dtype=np.float64))
        v = np.atleast_2d(np.asarray(v, dtype=np.float64))
        if u.shape != v.shape:
            raise ValueError('Outer and inner weights must have the same shape, got {0} and {1}'.
                             format(u.shape, v.shape))
        self.u = u
        self.v = v
        self.t = t

    @classmethod
    def random(cls, width, D, rng, r_init=1.0, t=None):
        """u_i, v_i iid uniform on the sphere of radius r_init (initial path norm r_init^2)"""
        def sphere():
            g = rng.standard_normal((width, D))
            return r_init * g / np.linalg.norm(g, axis=1, keepdims=True)
        u = sphere()
        return cls(u, sphere(), t)

    @classmethod
    def zeros(cls, width, D, t=None):
        return cls(np.zeros((width, D)), np.zeros((width, D)), t)

    @property
    def width(self):
        return self.u.shape[0]

    @property
    def D(self):
        return self.u.shape[1]

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        hidden = np.maximum(x @ self.v.T, 0.0)
        out = hidden @ self.u / self.width
        return out[0] if single else out

    __call__ = forward

    def copy(self):
        return ShallowScoreNet(self.u.copy(), self.v.copy(), self.t)

    def scaled(self, factor):
        """Both layers multiplied by factor (the function scales by factor^2)"""
        return ShallowScoreNet(self.u * factor, self.v * factor, self.t)

    def __repr__(self):
        return 'ShallowScoreNet(width={0}, D={1}, t={2}, path_norm={3:.6g})'.format(self.width, self.D, self.t,
                                                                                  path_norm(self))


def net_forward(net, x):
    return net.forward(x)


def path_norm(net):
    return float(np.mean(np.linalg.norm(net.u, axis=1) * np.linalg.norm(net.v, axis=1)))


def exact_linear_net(coefficients, directions, t=None):
    """
        B = sum_k c_k a_k a_k^T (unit a_k) as a width 2K net: neuron pairs (c_k m a_k, a_k), (-c_k m a_k, -a_k),
         since relu(s) - relu(-s) = s. Path norm 2 sum_k |c_k|.
    """
    coefficients = np.atleast_1d(np.asarray(coefficients, dtype=np.float64))
    directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    if directions.shape[0] != coefficients.shape[0]:
        raise ValueError('Need one direction per coefficient, got {0} and {1}'.format(directions.shape[0],
                                                                                   coefficients.shape[0]))
    norms = np.linalg.norm(directions, axis=1)
    if np.any(np.abs(norms - 1.0) > UNIT_TOL):
        raise DomainError('Directions must be unit vectors, got norms {0}'.format(norms))
    width = 2 * coefficients.shape[0]
    outer = (coefficients * width)[:, None] * directions
    return ShallowScoreNet(np.concatenate([outer, -outer]), np.concatenate([directions, -directions]), t)


def symmetric_expansion(B):
    """Eigen-decomposition of a symmetric matrix as (c_k, a_k) with B = sum_k c_k a_k a_k^T, zero terms dropped"""
    B = np.asarray(B, dtype=np.float64)
    if np.max(np.abs(B - B.T)) > 1e-12 * max(1.0, np.max(np.abs(B))):
        raise DomainError('The rank-one expansion needs a symmetric matrix')
    eigval, eigvec = linalg.eigh(B)
    keep = np.abs(eigval) > 1e-14 * max(1.0, np.max(np.abs(eigval)))
    return eigval[keep], eigvec[:, keep].T


def complement_projector_net(U, t):
    """x -> -(I - U U^T) x / sigma_t^2 via an orthonormal basis of the complement of range(U)"""
    coeffs = ou_coefficients(t)
    if coeffs.t == 0.0:
        raise DomainError('The normal score component diverges at t = 0')
    basis = linalg.null_space(np.asarray(U).T)  # D x (D - d)
    return exact_linear_net(np.full(basis.shape[1], -1.0 / coeffs.sigma2), basis.T, coeffs.t)


def lift_net(net, U):
    """g(x) = U f(U^T x): u_i <- U u_i, v_i <- U v_i (same path norm when U has orthonormal columns)"""
    return ShallowScoreNet(net.u @ U.T, net.v @ U.T, net.t)


def concatenate_nets(nets):
    """A net computing the sum of the given functions (path norms add)"""
    total = sum(n.width for n in nets)
    u = np.concatenate([n.u * (total / n.width) for n in nets])
    v = np.concatenate([n.v for n in nets])
    return ShallowScoreNet(u, v, nets[0].t)


def dsm_residuals(net, xt, w, sigma):
    """Pre-activations, hidden activations and residuals f(x_t) + w / sigma_t"""
    pre = xt @ net.v.T
    hidden = np.maximum(pre, 0.0)
    out = hidden @ net.u / net.width
    return pre, hidden, out + w / sigma


def dsm_gradient(net, batch):
    """
        Exact gradient of (1/n) sum_i ||f(x_t^i) + w^i / sigma_t||^2 with r^i the residual:
         dL/du_k = 2/(n m) sum_i r^i relu(<v_k, x_t^i>)
         dL/dv_k = 2/(n m) sum_i <r^i, u_k> 1[<v_k, x_t^i> > 0] x_t^i
    """
    sigma = ou_coefficients(batch.t).sigma
    if sigma == 0.0:
        raise DomainError('DSM gradient needs sigma_t > 0 (t = 0 given)')
    pre, hidden, res = dsm_residuals(net, batch.xt, batch.w, sigma)
    scale = 2.0 / (batch.n * net.width)
    du = scale * hidden.T @ res
    dv = scale * ((res @ net.u.T) * (pre > 0.0)).T @ batch.xt
    return NetGradient(du, dv)


def project_to_ball(net, R):
    """Identity inside the ball, otherwise both layers scaled by sqrt(R / path_norm) (function scaled by R/pn)"""
    if not R > 0.0:
        raise DomainError('Radius must be positive, got {0!r}'.format(R))
    pn = path_norm(net)
    if pn <= R:
        return net
    return net.scaled(np.sqrt(R / pn))
