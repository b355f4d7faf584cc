"""Solver checks: analytic cases, cross-validation, limits, edge handling."""

import math

import numpy as np
import pytest

from fracstep.fdesolve import CommensurateFDE, SolverConfig, Trajectory, solve_abm, solve_gl
from fracstep.frackernel import FracOrder, MLParams, mittag_leffler


def decay(t, x):
    return -x


def ml_decay_exact(t_grid, alpha):
    return np.array(
        [mittag_leffler(MLParams(alpha, 1.0, -float(t) ** alpha)) if t > 0 else 1.0 for t in t_grid]
    )


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(dt=0.0, t_end=1.0)
    with pytest.raises(ValueError):
        SolverConfig(dt=2.0, t_end=1.0)
    with pytest.raises(ValueError):
        SolverConfig(dt=0.1, t_end=1.0, corrector_iters=0)
    with pytest.raises(ValueError):
        SolverConfig(dt=0.1, t_end=1.0, memory_window=0)


def test_fde_validation():
    with pytest.raises(ValueError):
        CommensurateFDE(FracOrder(0.5), 0, decay)
    with pytest.raises(ValueError):
        CommensurateFDE(FracOrder(0.5), 1, decay, discontinuity_times=[2.0, 1.0])
    with pytest.raises(ValueError):
        CommensurateFDE(FracOrder(0.5), 1, decay, discontinuity_times=[-1.0])


def test_zero_rhs_keeps_initial_state():
    sys_ = CommensurateFDE(FracOrder(0.6), 2, lambda t, x: np.zeros(2))
    cfg = SolverConfig(dt=0.01, t_end=1.0)
    for solver in (solve_abm, solve_gl):
        tr = solver(sys_, np.array([3.0, -1.0]), cfg)
        assert np.array_equal(tr.states, np.tile([3.0, -1.0], (tr.t.size, 1)))


def test_constant_rhs_power_solution():
    # D^0.5 x = 1, x(0) = 0  ->  x = t^0.5 / Gamma(1.5)
    sys_ = CommensurateFDE(FracOrder(0.5), 1, lambda t, x: np.ones(1))
    tr = solve_abm(sys_, np.zeros(1), SolverConfig(dt=1e-3, t_end=1.0))
    exact = tr.t**0.5 / math.gamma(1.5)
    rel = np.abs(tr.states[1:, 0] - exact[1:]) / exact[1:]
    assert rel.max() <= 1e-3


def test_abm_against_mittag_leffler_decay():
    sys_ = CommensurateFDE(FracOrder(0.8), 1, decay)
    tr = solve_abm(sys_, np.ones(1), SolverConfig(dt=1e-2, t_end=10.0))
    exact = ml_decay_exact(tr.t, 0.8)
    assert np.abs(tr.states[:, 0] - exact).max() <= 5e-3


def test_gl_cross_validates_abm():
    sys_ = CommensurateFDE(FracOrder(0.8), 1, decay)
    cfg = SolverConfig(dt=1e-2, t_end=10.0)
    abm = solve_abm(sys_, np.ones(1), cfg)
    gl = solve_gl(sys_, np.ones(1), cfg)
    assert np.abs(abm.states - gl.states).max() <= 5e-3


def test_gl_integer_order_constant_rhs():
    sys_ = CommensurateFDE(FracOrder(1.0), 1, lambda t, x: np.ones(1))
    tr = solve_gl(sys_, np.zeros(1), SolverConfig(dt=1e-3, t_end=1.0))
    rel = np.abs(tr.states[1:, 0] - tr.t[1:]) / tr.t[1:]
    assert rel.max() <= 1e-6


def test_refinement_improves_error():
    sys_ = CommensurateFDE(FracOrder(0.8), 1, decay)
    errs = []
    for dt in (2e-2, 1e-2, 5e-3):
        tr = solve_abm(sys_, np.ones(1), SolverConfig(dt=dt, t_end=10.0))
        errs.append(np.abs(tr.states[:, 0] - ml_decay_exact(tr.t, 0.8)).max())
    assert errs[0] / errs[1] >= 1.5
    assert errs[1] / errs[2] >= 1.5


def test_integer_order_matches_classical_adams():
    # at alpha = 1 the scheme is cumulative Euler + trapezoid; iterated to
    # convergence it must match the exact one-step AM2 recursion for x' = -x
    dt = 1e-3
    sys_ = CommensurateFDE(FracOrder(1.0), 1, decay)
    tr = solve_abm(sys_, np.ones(1), SolverConfig(dt=dt, t_end=10.0))
    ratio = (2.0 - dt) / (2.0 + dt)
    classical = ratio ** np.arange(tr.t.size)
    assert np.abs(tr.states[:, 0] - classical).max() <= 1e-6


def test_memory_window_bit_identity():
    sys_ = CommensurateFDE(FracOrder(0.8), 1, decay)
    full = SolverConfig(dt=1e-2, t_end=5.0)
    windowed = SolverConfig(dt=1e-2, t_end=5.0, memory_window=10_000)
    for solver in (solve_abm, solve_gl):
        a = solver(sys_, np.ones(1), full)
        b = solver(sys_, np.ones(1), windowed)
        assert np.array_equal(a.states, b.states)


def test_short_memory_error_shrinks_with_window():
    # truncating the nonlocal history is a real perturbation; it must decay
    # monotonically toward the full-memory solution as the window grows
    sys_ = CommensurateFDE(FracOrder(0.8), 1, decay)
    full = solve_abm(sys_, np.ones(1), SolverConfig(dt=1e-2, t_end=5.0))
    diffs = []
    for window in (20, 100, 400):
        short = solve_abm(sys_, np.ones(1), SolverConfig(dt=1e-2, t_end=5.0, memory_window=window))
        assert not short.diverged
        diffs.append(np.abs(full.states - short.states).max())
    assert diffs[0] > diffs[1] > diffs[2] > 0.0


def test_divergence_truncates_with_flag():
    sys_ = CommensurateFDE(FracOrder(0.9), 1, lambda t, x: x * x)
    tr = solve_abm(sys_, np.array([2.0]), SolverConfig(dt=1e-3, t_end=5.0))
    assert tr.diverged
    assert tr.t[-1] < 5.0
    assert np.all(np.isfinite(tr.states))


def test_discontinuous_rhs_stays_finite():
    sys_ = CommensurateFDE(
        FracOrder(0.95),
        1,
        lambda t, x: -x + (2.0 if t >= 1.0 else 0.0),
        discontinuity_times=[1.0],
    )
    for solver in (solve_abm, solve_gl):
        tr = solver(sys_, np.zeros(1), SolverConfig(dt=1e-3, t_end=3.0))
        assert not tr.diverged
        assert np.all(np.isfinite(tr.states))


def test_trajectory_channel_lookup():
    tr = Trajectory(np.array([0.0, 0.1]), np.zeros((2, 1)), aux={"u": np.zeros(2)})
    assert tr.dt == pytest.approx(0.1)
    assert np.array_equal(tr.channel("u"), np.zeros(2))
    with pytest.raises(KeyError):
        tr.channel("nope")


def test_x0_shape_checked():
    sys_ = CommensurateFDE(FracOrder(0.8), 2, lambda t, x: -x)
    with pytest.raises(ValueError):
        solve_abm(sys_, np.ones(3), SolverConfig(dt=0.1, t_end=1.0))
    with pytest.raises(ValueError):
        solve_gl(sys_, np.ones(1), SolverConfig(dt=0.1, t_end=1.0))
