"""Shared fixtures.

The heavy session fixtures (trained networks, full finite-difference
solves) are built once and reused by the acceptance tests; unit tests
stick to small nets and coarse grids.
"""

import time
from types import SimpleNamespace

import numpy as np
import pytest

from mertonhjb.dgm import TrainConfig, train
from mertonhjb.fdm import Grid3D, network_boundary, solve_backward
from mertonhjb.model import (ConstantCoefficientModel, OUCIRHestonModel,
                             bundled_params, default_domain)
from mertonhjb.net import init_network


@pytest.fixture(scope="session")
def table1():
    """Calibrated parameter set with p = 0.0005 and its sampling box."""
    return bundled_params(p=0.0005)


@pytest.fixture(scope="session")
def model(table1):
    params, domain = table1
    return OUCIRHestonModel(params, domain)


@pytest.fixture(scope="session")
def model_p05():
    params, domain = bundled_params(p=0.5)
    return OUCIRHestonModel(params, domain)


@pytest.fixture(scope="session")
def const_model():
    # c = p * r = 0.005 with the risk premium switched off
    return ConstantCoefficientModel(p=0.5, r=0.01, T=1.0)


@pytest.fixture(scope="session")
def box():
    return default_domain(1.0)


@pytest.fixture()
def small_net(box):
    return init_network(5, box, seed=0)


# -- heavy, shared across the acceptance tests -----------------------------

@pytest.fixture(scope="session")
def trained_constant(const_model, box):
    """2000 outer steps on the constant-coefficient problem."""
    net = init_network(10, box, seed=0)
    cfg = TrainConfig(max_outer_steps=2000, seed=0)
    t0 = time.perf_counter()
    result = train(net, cfg, const_model, box)
    elapsed = time.perf_counter() - t0
    return SimpleNamespace(net=result.net, result=result, elapsed=elapsed, cfg=cfg)


@pytest.fixture(scope="session")
def trained_full(model):
    """Full-model training used by the terminal-shape and comparison tests."""
    net = init_network(50, model.domain, seed=0)
    cfg = TrainConfig(max_outer_steps=5000, seed=0)
    t0 = time.perf_counter()
    result = train(net, cfg, model)
    elapsed = time.perf_counter() - t0
    return SimpleNamespace(net=result.net, result=result, elapsed=elapsed, cfg=cfg)


@pytest.fixture(scope="session")
def full_cube(model, trained_full):
    """Backward march over the Table-1 problem with the trained net as boundary."""
    grid = Grid3D(model.domain)
    t0 = time.perf_counter()
    cube = solve_backward(grid, model, network_boundary(trained_full.net),
                          tol=1e-10, max_iter=20)
    elapsed = time.perf_counter() - t0
    return SimpleNamespace(cube=cube, grid=grid, elapsed=elapsed)
