#!/usr/bin/env python3
# -*- coding: utf-8, vim: expandtab:ts=4 -*-

from shallowdiffusion.logger import Logger, NullLogger
from shallowdiffusion.exceptions import ShallowDiffusionError, DomainError, SingularCovarianceError, \
    ConfigurationError, ModelError, AlignmentError, InsufficientGridError, ProviderError, TrainingError
from shallowdiffusion.schedule import ou_coefficients, ScheduleParams, TimeGrid, make_time_grid, \
    schedule_from_accuracy, RadiusSchedule, radius_at
from shallowdiffusion.targets import LatentMixture, SubspaceModel, IndependentModel, MixedModel, TrainingSet, \
    sample_x0, forward_corrupt, estimate_whitener, whiten_model
from shallowdiffusion.oracle import ScoreOracle, mixture_score, mixture_log_density, ambient_score_subspace, \
    ambient_score_independent, tweedie_score
from shallowdiffusion.shallow_net import ShallowScoreNet, net_forward, path_norm, exact_linear_net, dsm_gradient, \
    project_to_ball, lift_net, concatenate_nets
from shallowdiffusion.dsm_train import TrainConfig, ScoreModelSet, dsm_loss, risk_from_loss, estimate_Ct, \
    train_one_timestep, train_all_timesteps
from shallowdiffusion.sampler import ScoreProvider, ei_step, run_reverse, kl_gaussian, gaussian_fit_kl
from shallowdiffusion.metrics import score_risk, weighted_score_error, subspace_residual, energy_distance, \
    lipschitz_probe
from shallowdiffusion.utils import wrap_input_constants
from shallowdiffusion.harness import run_cell, sweep, fit_rate_exponent, report
from shallowdiffusion.version import __version__

__all__ = ['Logger', 'NullLogger', 'ShallowDiffusionError', 'DomainError', 'SingularCovarianceError',
           'ConfigurationError', 'ModelError', 'AlignmentError', 'InsufficientGridError', 'ProviderError',
           'TrainingError', 'ou_coefficients', 'ScheduleParams', 'TimeGrid', 'make_time_grid',
           'schedule_from_accuracy', 'RadiusSchedule', 'radius_at', 'LatentMixture', 'SubspaceModel',
           'IndependentModel', 'MixedModel', 'TrainingSet', 'sample_x0', 'forward_corrupt', 'estimate_whitener',
           'whiten_model', 'ScoreOracle', 'mixture_score', 'mixture_log_density', 'ambient_score_subspace',
           'ambient_score_independent', 'tweedie_score', 'ShallowScoreNet', 'net_forward', 'path_norm',
           'exact_linear_net', 'dsm_gradient', 'project_to_ball', 'lift_net', 'concatenate_nets', 'TrainConfig',
           'ScoreModelSet', 'dsm_loss', 'risk_from_loss', 'estimate_Ct', 'train_one_timestep', 'train_all_timesteps',
           'ScoreProvider', 'ei_step', 'run_reverse', 'kl_gaussian', 'gaussian_fit_kl', 'score_risk',
           'weighted_score_error', 'subspace_residual', 'energy_distance', 'lipschitz_probe',
           'wrap_input_constants', 'run_cell', 'sweep', 'fit_rate_exponent', 'report', '__version__']
