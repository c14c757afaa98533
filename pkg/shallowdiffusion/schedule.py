#!/usr/bin/env python3
# -*- coding: utf-8, vim: expandtab:ts=4 -*-

"""
    Time parameterization of the OU forward process dx = -x dt + sqrt(2) dB and of its reverse-time sampler:
     OU coefficients, the two-phase reverse discretization grid and the hypothesis-class radius schedule.
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from shallowdiffusion.exceptions import ConfigurationError, DomainError

KAPPA_SLACK = 1e-12


@dataclass(frozen=True)
class OUCoefficients:
    t: float
    m: float
    sigma: float

    @property
    def sigma2(self):
        return self.sigma * self.sigma


def _check_time(t):
    try:
        t = float(t)
    except (TypeError, ValueError):
        raise DomainError('Time must be a real number, got {0!r}'.format(t))
    if not math.isfinite(t) or t < 0.0:
        raise DomainError('Time must be finite and non-negative, got {0!r}'.format(t))
    return t


def ou_coefficients(t):
    """m_t = exp(-t), sigma_t = sqrt(1 - exp(-2t)) (expm1 keeps sigma accurate for small t)"""
    t = _check_time(t)
    return OUCoefficients(t, math.exp(-t), math.sqrt(-math.expm1(-2.0 * t)))


def ou_m_sigma(t):
    """Vectorised (m_t, sigma_t) for an array of non-negative times"""
    t = np.asarray(t, dtype=np.float64)
    if not np.all(np.isfinite(t)) or np.any(t < 0.0):
        raise DomainError('Times must be finite and non-negative')
    return np.exp(-t), np.sqrt(-np.expm1(-2.0 * t))


@dataclass(frozen=True)
class ScheduleParams:
    T: float
    N: int
    zeta: float
    c0: float = 2.0
    c1: float = 1.0

    def validate(self):
        """Raise ConfigurationError naming the first violated constraint"""
        if not (0.0 < self.zeta < 1.0):
            raise ConfigurationError('zeta must lie in (0, 1), got {0!r}'.format(self.zeta))
        if not self.T > 1.0:
            raise ConfigurationError('T must be > 1 (the first half of the grid degenerates at T <= 1),'
                                     ' got {0!r}'.format(self.T))
        if int(self.N) != self.N or self.N <= 0:
            raise ConfigurationError('N must be a positive integer, got {0!r}'.format(self.N))
        if self.N % 2 != 0:
            raise ConfigurationError('N must be even, got {0}'.format(self.N))
        if self.N < 2.0 * math.log(1.0 / self.zeta):
            raise ConfigurationError('N must satisfy N >= 2*log(1/zeta) = {0:.6g}, got {1}'.
                                     format(2.0 * math.log(1.0 / self.zeta), self.N))
        if self.c0 <= 0.0 or self.c1 <= 0.0:
            raise ConfigurationError('c0 and c1 must be positive, got c0={0!r} c1={1!r}'.format(self.c0, self.c1))
        return self


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """
        reverse_times: tau_0 = 0 < ... < tau_N = T - zeta
        forward_times: t_k = T - tau_k for k = 0..N-1, the times the sampler queries (strictly decreasing from T)
        gaps: gamma_k = tau_{k+1} - tau_k
    """
    T: float
    N: int
    zeta: float
    reverse_times: np.ndarray = field(repr=False)
    forward_times: np.ndarray = field(repr=False)
    gaps: np.ndarray = field(repr=False)

    @property
    def kappa(self):
        return (2.0 * (self.T - 1.0) + 4.0 * math.log(1.0 / self.zeta)) / self.N

    def kappa_violations(self, slack=KAPPA_SLACK):
        """Indices k with gamma_k > kappa * min(1, T - tau_{k+1}) + slack"""
        bound = self.kappa * np.minimum(1.0, self.T - self.reverse_times[1:])
        return np.nonzero(self.gaps > bound + slack)[0]

    def check_invariants(self):
        tau = self.reverse_times
        problems = []
        if tau[0] != 0.0:
            problems.append('tau_0 != 0')
        if not np.all(np.diff(tau) > 0.0):
            problems.append('reverse times not strictly increasing')
        if tau[self.N // 2] != self.T - 1.0:
            problems.append('tau_(N/2) != T - 1')
        if tau[self.N] != self.T - self.zeta:
            problems.append('tau_N != T - zeta')
        if len(self.kappa_violations()) > 0:
            problems.append('kappa bound violated at steps {0}'.format(self.kappa_violations().tolist()))
        return problems

    def __len__(self):
        return self.N


def make_time_grid(params):
    """
        tau_i = 2(T-1) i/N            for i <= N/2
        tau_i = T - zeta^(2i/N - 1)    for i >  N/2
        forward_times[k] = T - tau_k for k = 0..N-1 (the time the sampler queries at step k), so each forward
         time is the reflection of a reverse time: forward_times[k] + reverse_times[k] = T
    """
    params.validate()
    T, N, zeta = float(params.T), int(params.N), float(params.zeta)
    half = N // 2
    tau = np.empty(N + 1, dtype=np.float64)
    for i in range(half + 1):
        # 2i/N is exactly 1.0 at i = N/2, so tau_(N/2) = T - 1 holds bit-exactly
        tau[i] = (T - 1.0) * (2.0 * i / N)
    for i in range(half + 1, N + 1):
        tau[i] = T - zeta ** (2.0 * i / N - 1.0)
    forward = T - tau[:N]
    gaps = np.diff(tau)
    for arr in (tau, forward, gaps):
        arr.setflags(write=False)
    return TimeGrid(T, N, zeta, tau, forward, gaps)


def schedule_from_accuracy(epsilon, zeta, D, mu0, c0=2.0, c1=1.0):
    """
        T = c0 log((sqrt(D) v mu0) / eps)
        N = 2 ceil(c1 (D v mu0^2) / eps^2 (log^2((sqrt(D) v mu0) / eps) + log^2(1/zeta)))
        N is enlarged to the smallest even integer >= 2 log(1/zeta) if needed
    """
    for name, val in (('epsilon', epsilon), ('zeta', zeta)):
        if not (0.0 < val < 1.0):
            raise ConfigurationError('{0} must lie in (0, 1), got {1!r}'.format(name, val))
    for name, val in (('D', D), ('mu0', mu0), ('c0', c0), ('c1', c1)):
        if not val > 0:
            raise ConfigurationError('{0} must be positive, got {1!r}'.format(name, val))

    scale = max(math.sqrt(D), mu0) / epsilon
    log_scale = math.log(scale)
    T = c0 * log_scale
    if T <= 1.0:
        raise ConfigurationError('schedule_from_accuracy gives T = {0:.6g} <= 1: increase c0 (currently {1!r})'.
                                 format(T, c0))
    log_zeta = math.log(1.0 / zeta)
    N = 2 * int(math.ceil(c1 * max(D, mu0 * mu0) / (epsilon * epsilon) * (log_scale ** 2 + log_zeta ** 2)))
    if N < 2.0 * log_zeta:
        N = 2 * int(math.ceil(log_zeta))
    return ScheduleParams(T, N, zeta, c0, c1).validate()


@dataclass(frozen=True)
class RadiusSchedule:
    """
        R_t = r_bar n^((d+1)/(2(d+5))) + D / sigma_t^2                     (subspace targets)
        R_t = sum_i r_bar n^((d_i+1)/(2(d_i+5)))                           (group_dims set: independent components)
    """
    r_bar: float
    d_latent: int
    ambient_dim: int
    group_dims: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        if not self.r_bar > 0.0:
            raise ConfigurationError('r_bar must be positive, got {0!r}'.format(self.r_bar))
        if self.d_latent < 1 or self.ambient_dim < 1:
            raise ConfigurationError('Dimensions must be positive integers')
        if self.group_dims is not None and sum(self.group_dims) != self.ambient_dim:
            raise ConfigurationError('group_dims {0} must sum to D = {1}'.format(self.group_dims, self.ambient_dim))


def _n_power(n, d):
    return n ** ((d + 1.0) / (2.0 * (d + 5.0)))


def radius_at(sched, t, n):
    t = _check_time(t)
    if t == 0.0:
        raise DomainError('The radius diverges at t = 0 (D / sigma_t^2); use early stopping')
    if n < 1:
        raise DomainError('Sample count must be >= 1, got {0!r}'.format(n))
    if sched.group_dims is not None:
        return sum(sched.r_bar * _n_power(n, d_i) for d_i in sched.group_dims)
    return sched.r_bar * _n_power(n, sched.d_latent) + sched.ambient_dim / ou_coefficients(t).sigma2
