import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdmanifold.cost import (CostSpec, StageCostEval, accumulate_objective, simpson_weights,
                             stage_cost, stage_cost_intersample, stage_cost_sampled)
from sdmanifold.errors import ConfigError
from sdmanifold.flow import FlowRequest, integrate_flow


def scalar_spec(h=1.0, mode="sampled", M=64):
    return CostSpec(np.eye(1), np.eye(1), h, mode, M)


def robot_spec(mode="intersample", M=64, h=1.0):
    return CostSpec(np.eye(3), np.eye(2), h, mode, M)


def test_sampled_zero():
    c = stage_cost_sampled(scalar_spec(), [0.0], [0.0])
    assert c.value == 0 and not np.any(c.grad_x) and not np.any(c.grad_u)


def test_sampled_hand_arithmetic():
    c = stage_cost_sampled(scalar_spec(), [2.0], [3.0])
    assert c.value == 13.0
    assert c.grad_x[0] == 4.0 and c.grad_u[0] == 6.0
    assert (c.state_part, c.input_part) == (4.0, 9.0)


def test_sampled_linear_in_h():
    assert stage_cost_sampled(scalar_spec(0.5), [2.0], [3.0]).value == 6.5


def intersample(plant, spec, x, u, order=2, fxx=False):
    fl = integrate_flow(plant, FlowRequest(x, u, spec.h, spec.M, order, fxx))
    return stage_cost_intersample(plant, spec, np.asarray(x, float), np.asarray(u, float), fl, fxx)


@pytest.mark.parametrize("M", [2, 4, 64])
def test_intersample_constant_state(integrator, M):
    assert intersample(integrator, scalar_spec(mode="intersample", M=M), [1.0], [0.0]).value == \
        pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("M", [2, 8, 64])
def test_intersample_ramp(integrator, M):
    c = intersample(integrator, scalar_spec(mode="intersample", M=M), [0.0], [1.0])
    assert c.value == pytest.approx(4.0 / 3.0, abs=1e-14)
    assert c.state_part == pytest.approx(1.0 / 3.0, abs=1e-14)


def test_intersample_zero(unicycle):
    c = intersample(unicycle, robot_spec(), np.zeros(3), np.zeros(2))
    assert c.value == 0.0


def test_simpson_weights():
    w = simpson_weights(8, 2.0)
    assert w.sum() == pytest.approx(2.0)
    t = np.linspace(0, 2.0, 9)
    assert w @ t ** 3 == pytest.approx(4.0)  # exact on cubics
    with pytest.raises(ConfigError):
        simpson_weights(7, 1.0)


def test_intersample_derivatives_match_fd(unicycle):
    spec = robot_spec()
    rng = np.random.default_rng(11)
    eps = 1e-6
    for _ in range(3):
        x, u = rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 2)
        c = intersample(unicycle, spec, x, u, fxx=True)
        val = lambda xx, uu: intersample(unicycle, spec, xx, uu, order=1)  # noqa: E731
        gx = np.array([(val(x + e, u).value - val(x - e, u).value) / (2 * eps) for e in eps * np.eye(3)])
        gu = np.array([(val(x, u + e).value - val(x, u - e).value) / (2 * eps) for e in eps * np.eye(2)])
        hxx = np.array([(val(x + e, u).grad_x - val(x - e, u).grad_x) / (2 * eps) for e in eps * np.eye(3)])
        hux = np.array([(val(x + e, u).grad_u - val(x - e, u).grad_u) / (2 * eps) for e in eps * np.eye(3)]).T
        huu = np.array([(val(x, u + e).grad_u - val(x, u - e).grad_u) / (2 * eps) for e in eps * np.eye(2)])
        scale = max(1.0, abs(c.value))
        assert np.max(np.abs(c.grad_x - gx)) / scale <= 1e-6
        assert np.max(np.abs(c.grad_u - gu)) / scale <= 1e-6
        assert np.max(np.abs(c.hess_xx - hxx)) / max(1, np.max(np.abs(hxx))) <= 1e-4
        assert np.max(np.abs(c.hess_ux - hux)) / max(1, np.max(np.abs(hux))) <= 1e-4
        assert np.max(np.abs(c.hess_uu - huu)) / max(1, np.max(np.abs(huu))) <= 1e-4


def test_quadrature_order(unicycle):
    x, u = np.array([0.1, 0.2, 0.3]), np.array([0.4, 0.5])
    ref = intersample(unicycle, robot_spec(M=1024), x, u, order=1).value
    Ms = np.array([4, 8, 16, 32])
    errs = [abs(intersample(unicycle, robot_spec(M=int(M)), x, u, order=1).value - ref) for M in Ms]
    slope = -np.polyfit(np.log(Ms), np.log(errs), 1)[0]
    assert 3.7 <= slope <= 4.3


def test_modes_agree_to_second_order_in_h(unicycle):
    x, u = np.array([0.3, -0.5, 0.4]), np.array([0.2, 0.7])
    gaps = []
    for h in (1e-2, 1e-3):
        s = robot_spec(h=h)
        gaps.append(abs(intersample(unicycle, s, x, u, order=1).value
                        - stage_cost_sampled(s.with_mode("sampled"), x, u).value))
    assert gaps[1] / gaps[0] == pytest.approx(1e-2, rel=0.05)


def test_dispatch(unicycle):
    x, u = np.array([0.1, 0.0, -0.2]), np.array([0.3, 0.1])
    s = robot_spec()
    assert stage_cost(unicycle, s, x, u).value == intersample(unicycle, s, x, u).value
    assert stage_cost(unicycle, s.with_mode("sampled"), x, u).value == \
        stage_cost_sampled(s, x, u).value


def test_mismatched_flow_rejected(unicycle):
    s = robot_spec()
    fl = integrate_flow(unicycle, FlowRequest(np.zeros(3), np.zeros(2), 1.0, 32, 1))
    with pytest.raises(ValueError):
        stage_cost_intersample(unicycle, s, np.zeros(3), np.zeros(2), fl)


def test_spec_validation():
    with pytest.raises(ConfigError):
        CostSpec(np.eye(1), np.eye(1), 1.0, "intersample", 63)
    with pytest.raises(ConfigError):
        CostSpec(np.eye(1), np.zeros((1, 1)), 1.0)
    with pytest.raises(ConfigError):
        CostSpec(np.eye(1), np.eye(1), -1.0)
    with pytest.raises(ValueError):
        CostSpec(np.eye(1), np.eye(1), 1.0, "continuous")


def test_accumulate():
    assert accumulate_objective([]).total == 0.0
    c = stage_cost_sampled(scalar_spec(), [2.0], [3.0])
    o = accumulate_objective([c, (1.0, 2.0)])
    assert (o.total, o.state_part, o.input_part) == (16.0, 5.0, 11.0)
    o = accumulate_objective([c, 1.5])
    assert o.total == 14.5 and math.isnan(o.state_part)


small = st.floats(-1.5, 1.5, allow_nan=False)


@settings(max_examples=25, deadline=None)
@given(st.tuples(small, small, small), st.tuples(small, small))
def test_nonnegative(x, u):
    from sdmanifold.plant import builtin_unicycle
    plant = builtin_unicycle()
    Q = np.diag([1.0, 0.0, 2.0])  # semidefinite is allowed
    spec = CostSpec(Q, np.eye(2), 1.0, "intersample", 8)
    c = intersample(plant, spec, x, u, order=1)
    assert c.value >= 0 and c.state_part >= 0
    assert stage_cost_sampled(spec, x, u).value >= 0
    assert isinstance(c, StageCostEval)
