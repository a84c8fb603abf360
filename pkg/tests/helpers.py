"""Shared model builders for the test suite."""
from __future__ import annotations

import numpy as np

from fluid_exit import ModelSpec, PiecewiseConstant, homogeneous, validate_model

KILLED = np.array([[-2.0, 1.0], [1.0, -2.0]])
CONSERVATIVE = np.array([[-1.0, 1.0], [1.0, -1.0]])
V2 = (1.0, -1.0)


def killed_model():
    return homogeneous(["u", "d"], V2, KILLED)


def conservative_model():
    return homogeneous(["u", "d"], V2, CONSERVATIVE)


def switching_model(after=KILLED, at=1.0):
    """Conservative before ``at``, ``after`` from then on."""
    return validate_model(ModelSpec(["u", "d"], list(V2), PiecewiseConstant([at], [CONSERVATIVE, after])))


def random_generator(rng, m, kill_range=(0.2, 1.0)):
    off = rng.uniform(0.0, 1.0, size=(m, m))
    np.fill_diagonal(off, 0.0)
    kill = rng.uniform(*kill_range, size=m)
    return off - np.diag(off.sum(axis=1) + kill)


def random_velocities(rng, m):
    signs = np.ones(m)
    signs[rng.permutation(m)[: rng.integers(1, m)]] = -1.0
    return signs * rng.uniform(0.5, 2.0, size=m)


def random_killed_model(rng, m=None):
    m = int(rng.integers(2, 6)) if m is None else m
    return homogeneous([f"s{k}" for k in range(m)], random_velocities(rng, m), random_generator(rng, m))
