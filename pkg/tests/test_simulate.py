import numpy as np
import pytest

from conftest import ROBOT_TARGET, robot_reference, robot_spec
from sdmanifold.cost import CostSpec, accumulate_objective, stage_cost_intersample, stage_cost_sampled
from sdmanifold.errors import InconsistencyError, InstabilityError, UnsupportedError
from sdmanifold.flow import FlowRequest, integrate_flow
from sdmanifold.riccati import local_lq
from sdmanifold.simulate import (closed_loop, error_coordinates, reference_from_error,
                                 replay_trajectory, world_frame_reconstruct)
from sdmanifold.synthesis import linear_law


def lin_spec(mode="sampled"):
    return CostSpec(np.diag([1.0, 0.5]), np.eye(1), 0.5, mode, 16)


def test_zero_state_zero_cost(unicycle):
    spec = robot_spec(M=8)
    K = local_lq(unicycle, spec).K
    sim = closed_loop(unicycle, spec, linear_law(K), np.zeros(3), 5)
    assert not np.any(sim.x) and not np.any(sim.u)
    assert sim.cost_sampled.total == 0.0 and sim.cost_intersample.total == 0.0


def test_lqr_cost_equals_value_function(linear2):
    spec = lin_spec()
    lq = local_lq(linear2, spec)
    x0 = np.array([1.0, -0.5])
    sim = closed_loop(linear2, spec, linear_law(lq.K), x0, 200, S=lq.S)
    assert sim.cost_sampled.total == pytest.approx(x0 @ lq.S @ x0, rel=1e-6)
    assert np.linalg.norm(sim.x[-1]) < 1e-8


def test_intersample_lqr_cost_equals_value_function(linear2):
    spec = lin_spec("intersample")
    lq = local_lq(linear2, spec)
    x0 = np.array([0.3, 0.8])
    sim = closed_loop(linear2, spec, linear_law(lq.K), x0, 200)
    assert sim.cost_intersample.total == pytest.approx(x0 @ lq.S @ x0, rel=1e-6)


def test_zero_order_hold(unicycle):
    spec = robot_spec(M=8)
    sim = closed_loop(unicycle, spec, linear_law(local_lq(unicycle, spec).K), [0.2, -0.1, 0.3], 4)
    t, xs, us = sim.dense()
    assert len(t) == 4 * 8 + 1
    for k in range(4):
        assert np.all(us[k * 8:(k + 1) * 8] == sim.u[k])
    np.testing.assert_array_equal(xs[::8], sim.x)


def test_cost_bookkeeping_matches_cost_module(unicycle):
    spec = robot_spec(M=16)
    sim = closed_loop(unicycle, spec, linear_law(local_lq(unicycle, spec).K), [0.4, 0.2, -0.5], 6)
    samp = accumulate_objective(stage_cost_sampled(spec, x, u) for x, u in zip(sim.x, sim.u))
    inter = []
    for x, u in zip(sim.x, sim.u):
        fl = integrate_flow(unicycle, FlowRequest(x, u, spec.h, spec.M, 1))
        inter.append(stage_cost_intersample(unicycle, spec, x, u, fl))
    inter = accumulate_objective(inter)
    assert sim.cost_sampled.total == samp.total
    assert sim.cost_intersample.total == inter.total
    assert sim.cost_intersample.state_part == inter.state_part


@pytest.mark.parametrize("mode, total, state", [("sampled", 13.9340, 5.8605),
                                                ("intersample", 13.8958, 5.5202)])
def test_replay_reference(unicycle, mode, total, state):
    ref = robot_reference(mode)
    sim = replay_trajectory(unicycle, robot_spec(mode), ref)
    assert sim.max_replay_error <= 1e-8
    assert sim.cost_intersample.total == pytest.approx(total, abs=1e-3)
    assert sim.cost_intersample.state_part == pytest.approx(state, abs=1e-3)


def test_replay_inconsistency(unicycle):
    ref = robot_reference("intersample").tail(10)
    ref.u[0] += 1e-3
    with pytest.raises(InconsistencyError):
        replay_trajectory(unicycle, robot_spec(), ref)


def test_noise_is_seeded(unicycle):
    spec = robot_spec(M=8)
    law = linear_law(local_lq(unicycle, spec).K)
    a = closed_loop(unicycle, spec, law, [0.3, 0.0, 0.5], 5, meas_noise_std=0.02, seed=1)
    b = closed_loop(unicycle, spec, law, [0.3, 0.0, 0.5], 5, meas_noise_std=0.02, seed=1)
    c = closed_loop(unicycle, spec, law, [0.3, 0.0, 0.5], 5, meas_noise_std=0.02, seed=2)
    np.testing.assert_array_equal(a.x, b.x)
    assert not np.array_equal(a.x, c.x)
    # noise enters the measurement only
    np.testing.assert_array_equal(a.x[0], [0.3, 0.0, 0.5])
    assert not np.array_equal(a.measured[0], a.x[0])


def test_instability_detected(linear2):
    spec = lin_spec()
    with pytest.raises(InstabilityError) as info:
        closed_loop(linear2, spec, linear_law(np.array([[0.0, 50.0]])), [1.0, 0.0], 200)
    assert info.value.step >= 1


def test_steps_validation(linear2):
    with pytest.raises(ValueError):
        closed_loop(linear2, lin_spec(), linear_law(np.zeros((1, 2))), [1.0, 0.0], 0)


def test_csv_outputs(tmp_path, unicycle):
    spec = robot_spec(M=4)
    sim = closed_loop(unicycle, spec, linear_law(local_lq(unicycle, spec).K), [0.1, 0.1, 0.1], 3)
    sim.to_csv(tmp_path / "sim.csv")
    sim.costs_to_csv(tmp_path / "c.csv")
    lines = (tmp_path / "sim.csv").read_text().splitlines()
    assert lines[0] == "t,x1,x2,x3,u1,u2" and len(lines) == 1 + 3 * 4 + 1
    assert (tmp_path / "c.csv").read_text().splitlines()[0].startswith("k,sampled_state")


def test_error_coordinates_round_trip():
    rng = np.random.default_rng(0)
    for _ in range(10):
        ctrl, err = rng.normal(size=3), rng.normal(size=3)
        np.testing.assert_allclose(error_coordinates(ctrl, reference_from_error(ctrl, err)), err,
                                   atol=1e-12)


def test_world_zero_error_robots_coincide(unicycle):
    spec = robot_spec(M=8)
    sim = closed_loop(unicycle, spec, linear_law(local_lq(unicycle, spec).K), np.zeros(3), 3)
    path = world_frame_reconstruct(sim, 1.0, 0.0, [0.0, 0.0, 0.0])
    np.testing.assert_allclose(path.controlled, path.reference, atol=1e-14)
    np.testing.assert_allclose(path.controlled[-1], [3.0, 0.0, 0.0], atol=1e-12)


def test_world_frame_consistent_with_error_dynamics(unicycle):
    spec = robot_spec(M=32)
    sim = closed_loop(unicycle, spec, linear_law(local_lq(unicycle, spec).K), [0.5, -0.3, 0.8], 4)
    path = world_frame_reconstruct(sim, 1.0, 0.0, [0.2, -0.1, 0.4])
    _, xs, _ = sim.dense()
    err = np.array([error_coordinates(c, r) for c, r in zip(path.controlled, path.reference)])
    np.testing.assert_allclose(err, xs, atol=1e-6)
    assert list(path.sample_index) == [0, 32, 64, 96, 128]


def test_world_frame_robot_start(unicycle):
    ref = robot_reference("intersample")
    sim = replay_trajectory(unicycle, robot_spec(), ref)
    path = world_frame_reconstruct(sim, 1.0, 0.0, [0.0, 0.0, -np.pi])
    # error (0, 0, pi) from heading -pi: same position, reference heading 0
    np.testing.assert_allclose(path.reference[0], [0.0, 0.0, 0.0], atol=1e-12)
    assert np.all(np.isfinite(path.controlled))
    np.testing.assert_allclose(sim.x[0], ROBOT_TARGET, atol=1e-6)


def test_world_frame_needs_unicycle(linear2):
    sim = closed_loop(linear2, lin_spec(), linear_law(np.zeros((1, 2))), [1.0, 0.0], 2)
    with pytest.raises(UnsupportedError):
        world_frame_reconstruct(sim, 1.0, 0.0, [0.0, 0.0, 0.0])
