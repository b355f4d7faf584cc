"""Study plants, disturbances and baseline controller variants."""

import math

import numpy as np
import pytest

from fracstep.backstep import AdaptiveState, ControllerGains, ReferenceSignal
from fracstep.scenarios import (
    DisturbanceSpec,
    baseline_control_input,
    chua_hartley_scenario,
    scenario_by_name,
    second_order_scenario,
)


def test_second_order_regressor_values():
    sc = second_order_scenario()
    assert sc.plant.phi_value(1, np.array([1.0, 0.0]))[0] == pytest.approx(-0.4)
    assert sc.plant.phi_value(2, np.array([0.0, 1.0]))[0] == pytest.approx(0.9)


def test_second_order_disturbance():
    sc = second_order_scenario()
    d = sc.plant.disturbance
    assert d(20.0) == pytest.approx(math.sin(20.0) + math.cos(20.0) + 2.0)
    assert d(14.999) == pytest.approx(math.sin(14.999) + math.cos(14.999))
    assert d(15.0) == pytest.approx(math.sin(15.0) + math.cos(15.0) + 2.0)  # right-continuous


def test_second_order_configuration():
    sc = second_order_scenario("proposed", tracking=True)
    assert sc.alpha.alpha == 0.95
    assert sc.plant.n == 2
    assert np.array_equal(sc.gains.c, [30.0, 1.0])
    assert np.array_equal(sc.gains.Gamma[0], 2.0 * np.eye(1))
    assert np.array_equal(sc.gains.Gamma[1], 2.0 * np.eye(2))
    assert sc.gains.eta == 4.0
    assert sc.gains.lam[0] == 2.0
    assert sc.reference.r(1.3) == pytest.approx(math.sin(0.65))
    # the reference derivative agrees with the L1 value checked in the kernel tests
    assert sc.reference.dr_alpha(0.0) == 0.0
    stab = second_order_scenario()
    assert stab.reference.r(2.0) == 0.0 and stab.reference.dr_alpha(2.0) == 0.0


def test_chua_regressor_values():
    sc = chua_hartley_scenario()
    assert sc.plant.phi_value(1, np.array([1.0, 0.0, 0.0]))[0] == pytest.approx(0.0)
    assert sc.plant.phi_value(3, np.array([0.0, 0.7, 0.0]))[0] == pytest.approx(-10.0)
    assert sc.plant.disturbance(10.0) == pytest.approx(0.5 * math.sin(20.0) + 3.0)
    assert np.array_equal(sc.x0, [0.8, -2.0, 1.0])
    assert sc.alpha.alpha == 0.98
    assert sc.gains.eta == 0.1


def test_disturbance_bounds():
    d1 = second_order_scenario().disturbance
    assert d1.bound() == pytest.approx(math.sqrt(2.0) + 2.0)
    d2 = chua_hartley_scenario().disturbance
    assert d2.bound() == pytest.approx(3.5)
    # the bound really dominates samples
    t = np.linspace(0, 100, 20001)
    vals = np.array([d1(float(tt)) for tt in t])
    assert np.abs(vals).max() <= d1.bound() + 1e-12


def test_disturbance_spec_validation():
    with pytest.raises(ValueError):
        DisturbanceSpec(sinusoids=((1.0, 1.0, "tan"),))
    with pytest.raises(ValueError):
        DisturbanceSpec(steps=((1.0, -2.0),))


def test_step_onsets_snap_to_grid():
    spec = DisturbanceSpec(steps=((2.0, 15.0003),))
    snapped = spec.snapped(1e-3)
    assert snapped.onsets() == (15.0,)
    assert round(snapped.onsets()[0] / 1e-3) * 1e-3 == snapped.onsets()[0]


def test_quartic_regressor_finite_everywhere():
    sc = second_order_scenario()
    rng = np.random.default_rng(13)
    for _ in range(500):
        x = rng.uniform(-50, 50, 2)
        val = sc.plant.phi_value(2, x)
        assert np.all(np.isfinite(val))


def _zero_coupling_setup():
    from fracstep.backstep import PlantModel, Regressor

    zero = Regressor(lambda xb: np.zeros(1), lambda xb: np.zeros((1, len(xb))),
                     lambda xb: np.zeros((1, len(xb), len(xb))))
    plant = PlantModel(2, 1, [zero, zero], lambda x: 1.0,
                       [np.zeros(1), np.zeros(1)], lambda t: 0.0)
    gains = ControllerGains.scaled_identity(2, 1, [1.0, 1.0], [1.0, 1.0], [1.0], 1.0, 1.0)
    return plant, gains


def test_sign_baseline_discontinuity():
    # z2 = +/-0.01 with D_hat = 1 flips the compensation by 2 D_hat / g
    plant, gains = _zero_coupling_setup()
    est = AdaptiveState([np.zeros(1), np.zeros(2)], np.zeros(1), 1.0)
    us = {}
    for z2 in (0.01, -0.01):
        ref = ReferenceSignal(lambda t: 0.0, lambda t, v=z2: -v)
        us[z2] = baseline_control_input("sign_baseline", np.zeros(2), est, None, None,
                                        0.0, gains, plant, reference=ref)
    # u = -(c2 z2 + sign(z2) D_hat): jump is 2 D_hat plus the tiny c2 part
    assert us[0.01] - us[-0.01] == pytest.approx(-(2.0 + 0.02))
    # at z2 = 0 the compensation term vanishes
    u0 = baseline_control_input("sign_baseline", np.zeros(2), est, None, None, 0.0, gains, plant)
    assert u0 == 0.0


def test_arctan_baseline_saturates_to_d_hat():
    plant, gains = _zero_coupling_setup()
    est = AdaptiveState([np.zeros(1), np.zeros(2)], np.zeros(1), 3.0)
    big = 1e6
    ref = ReferenceSignal(lambda t: 0.0, lambda t: -big)
    u = baseline_control_input("arctan_baseline", np.zeros(2), est, None, None,
                               0.0, gains, plant, reference=ref)
    # u = -(c2 z2 + comp * D_hat) with comp -> 1: the compensation part -> D_hat/g
    assert u + 1.0 * big == pytest.approx(-3.0, rel=1e-5)
    with pytest.raises(ValueError):
        baseline_control_input("proposed", np.zeros(2), est, None, None, 0.0, gains, plant)


def test_scenario_by_name_mapping():
    assert scenario_by_name("second-order-stabilize").controller_kind == "proposed"
    assert scenario_by_name("second-order-track").reference.r(1.0) != 0.0
    assert scenario_by_name("second-order-uncontrolled").controller_kind == "uncontrolled"
    assert scenario_by_name("chua-hartley", controller="sign_baseline").controller_kind == "sign_baseline"
    assert scenario_by_name("chua-hartley-uncontrolled").controller_kind == "uncontrolled"
    with pytest.raises(ValueError):
        scenario_by_name("lorenz")


def test_scenario_horizon_defaults():
    assert second_order_scenario().horizon == 40.0
    assert second_order_scenario(tracking=True).horizon == 60.0
    assert second_order_scenario("uncontrolled").horizon == 50.0
    assert chua_hartley_scenario().horizon == 50.0
    assert scenario_by_name("second-order-track", dt=5e-3, horizon=10.0).dt == 5e-3


def test_uncontrolled_kind_forces_zero_input():
    sc = second_order_scenario("uncontrolled")
    cl = sc.closed_loop()
    u, rates, _ = cl.control_and_rates(1.0, np.arange(7, dtype=float))
    assert u == 0.0
    assert all(np.all(r == 0.0) for r in rates.theta)


def test_chua_uncontrolled_chaotic_wandering(chua_uncontrolled_result):
    # the uncontrolled circuit keeps wandering: every 5 s window after
    # t = 20 sees the state leave the 0.1-ball
    tr = chua_uncontrolled_result.trajectory
    assert not tr.diverged
    xs = tr.states[:, :3]
    for lo in np.arange(20.0, tr.t[-1] - 5.0 + 1e-9, 5.0):
        m = (tr.t >= lo) & (tr.t < lo + 5.0)
        assert np.abs(xs[m]).max() > 0.1
