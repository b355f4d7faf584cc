"""Shared fixtures: the expensive closed-loop runs are integrated once per
session and reused by the module tests and the acceptance suite."""

import dataclasses

import numpy as np
import pytest

from fracstep.fdesolve import SolverConfig, solve_abm
from fracstep.frackernel import FracOrder
from fracstep.harness import RunConfig, attach_diagnostics, compute_metrics, run
from fracstep.scenarios import second_order_scenario


@pytest.fixture(scope="session")
def stabilize_result():
    """Second-order stabilisation run (proposed controller, defaults)."""
    return run(RunConfig("second-order-stabilize", "proposed"))


@pytest.fixture(scope="session")
def uncontrolled2_result():
    return run(RunConfig("second-order-uncontrolled"))


@pytest.fixture(scope="session")
def tracking_results():
    """Tracking runs for the proposed controller and both baselines."""
    kinds = ("proposed", "sign_baseline", "arctan_baseline")
    return {k: run(RunConfig("second-order-track", k)) for k in kinds}


@pytest.fixture(scope="session")
def chua_result():
    return run(RunConfig("chua-hartley", "proposed"))


@pytest.fixture(scope="session")
def chua_uncontrolled_result():
    return run(RunConfig("chua-hartley-uncontrolled"))


@pytest.fixture(scope="session")
def alpha1_result():
    """Second-order stabilisation at the integer-order limit alpha = 1."""
    sc = second_order_scenario("proposed")
    sc = dataclasses.replace(sc, alpha=FracOrder(1.0))
    cl = sc.closed_loop()
    tr = solve_abm(
        cl.as_fde(sc.disturbance.onsets()),
        cl.initial_state(sc.x0),
        SolverConfig(dt=sc.dt, t_end=sc.horizon),
    )
    attach_diagnostics(tr, sc, cl)
    metrics = compute_metrics(tr, sc.horizon, sc.plant.n)
    return sc, tr, metrics
