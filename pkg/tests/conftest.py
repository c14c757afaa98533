#!/usr/bin/env python3
# -*- coding: utf-8, vim: expandtab:ts=4 -*-

import os

import numpy as np
import pytest

CONFIGS_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'configs')


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def configs_dir():
    return CONFIGS_DIR


@pytest.fixture
def write_config(tmp_path):
    """Write a YAML config (given as text) into tmp_path and return its name"""
    def writer(text, name='config.yaml'):
        fname = tmp_path / name
        fname.write_text(text, encoding='UTF-8')
        return str(fname)
    return writer


TINY_GAUSSIAN = """
"target":
  "kind": "gaussian"
  "scale": 1.0
"schedule":
  "T": 2.0
  "N": 4
  "zeta": 0.25
"train":
  "width": 16
  "epochs": 5
  "step_size": 0.01
  "radius_mode": "fixed"
  "radius": 10.0
"sweep":
  "D": [2]
  "n": [64, 128, 256]
  "seeds": [0, 1, 2]
  "n_samples": 200
"metrics":
  "n_mc": 200
  "energy": false
  "weighted_error": true
  "n_mc_weighted": 50
"output_dir": "out"
"""

TINY_SUBSPACE = """
"target":
  "kind": "subspace"
  "d": 1
  "latent": "two-component"
  "separation": 2.0
  "bandwidth": 0.5
  "seed": 3
"schedule":
  "T": 2.0
  "N": 4
  "zeta": 0.25
"train":
  "width": 16
  "epochs": 5
  "r_bar": 2.0
"sweep":
  "D": [3]
  "n": [64]
  "seeds": [0]
  "n_samples": 100
"metrics":
  "n_mc": 100
  "energy": true
  "n_permutations": 10
"output_dir": "out"
"""


@pytest.fixture
def tiny_gaussian_config(write_config):
    return write_config(TINY_GAUSSIAN, 'gaussian.yaml')


@pytest.fixture
def tiny_subspace_config(write_config):
    return write_config(TINY_SUBSPACE, 'subspace.yaml')
