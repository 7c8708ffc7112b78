from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import robot_spec
from sdmanifold import synthesis
from sdmanifold.cost import CostSpec
from sdmanifold.errors import EmptyCloudError, FitError, ShootingError
from sdmanifold.riccati import local_lq
from sdmanifold.shooting import ShootingOptions
from sdmanifold.synthesis import (ControlLaw, SampleCloud, design_matrix, draw_targets, eval_law,
                                  fit_polynomial_law, generate_cloud, linear_law, monomial_basis)


def lin_spec():
    return CostSpec(np.diag([1.0, 0.5]), np.eye(1), 0.5, "sampled")


def cloud_from(X, U):
    X, U = np.atleast_2d(X), np.atleast_2d(U)
    return SampleCloud(X, U, np.zeros(len(X), int), np.zeros(len(X), int))


def test_monomial_basis():
    b = monomial_basis(3, 3)
    assert len(b) == comb(3 + 3, 3) - 1
    assert all(1 <= sum(e) <= 3 for e in b)
    assert b[:3] == [(1, 0, 0), (0, 1, 0), (0, 0, 1)]
    assert len(set(b)) == len(b)


def test_design_matrix():
    X = np.array([[2.0, 3.0]])
    basis = monomial_basis(2, 2)  # x1, x2, x1^2, x1 x2, x2^2
    np.testing.assert_array_equal(design_matrix(X, basis), [[2, 3, 4, 6, 9]])


def test_fit_recovers_linear_gain():
    rng = np.random.default_rng(0)
    K = rng.normal(size=(2, 3))
    X = rng.normal(size=(40, 3))
    law = fit_polynomial_law(cloud_from(X, -X @ K.T), 1)
    np.testing.assert_allclose(law.linear_part(), -K, atol=1e-10)
    assert law.fit_residual <= 1e-12


def test_fit_single_origin_pair_gives_zero_law():
    law = fit_polynomial_law(cloud_from(np.zeros(3), np.zeros(2)), 1)
    assert not np.any(law.coeffs)
    assert not np.any(eval_law(law, np.array([1.0, 2.0, 3.0])))


def test_fit_underdetermined():
    with pytest.raises(FitError):
        fit_polynomial_law(cloud_from(np.ones((3, 3)) * [1, 2, 3], np.ones((3, 2))), 3)


def test_fit_rank_deficient_names_monomials():
    rng = np.random.default_rng(1)
    X = np.column_stack([rng.normal(size=30), rng.normal(size=30), np.zeros(30)])
    with pytest.raises(FitError, match=r"\(0, 0, 1\)"):
        fit_polynomial_law(cloud_from(X, rng.normal(size=(30, 1))), 1)


def test_eval_law_zero_and_linear():
    K = np.array([[1.0, 2.0, -1.0], [0.5, 0.0, 3.0]])
    law = linear_law(K)
    assert not np.any(eval_law(law, np.zeros(3)))
    x = np.random.default_rng(2).normal(size=(5, 3))
    np.testing.assert_allclose(eval_law(law, x), -x @ K.T, atol=1e-14)
    np.testing.assert_allclose(eval_law(law, x[0]), -K @ x[0], atol=1e-14)
    assert np.array_equal(eval_law(law, x[1]), eval_law(law, x[1]))


def test_law_json_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    basis = tuple(monomial_basis(3, 3))
    law = ControlLaw(3, basis, rng.normal(size=(2, len(basis))), 0.01)
    path = tmp_path / "law.json"
    law.to_json(path)
    back = ControlLaw.from_json(path)
    assert back.basis == law.basis and back.degree == 3
    np.testing.assert_array_equal(back.coeffs, law.coeffs)
    assert all(sum(e) > 0 for e in back.basis)
    d = law.to_dict()
    d["basis"][0] = [0, 0, 0]
    with pytest.raises(ValueError):
        ControlLaw.from_dict(d)


def test_draw_targets_streams_independent_of_other_bases():
    a = draw_targets([[0.0, 0.0], [1.0, 1.0]], 0.2, 5, seed=7)
    b = draw_targets([[0.0, 0.0], [1.0, 1.0], [5.0, 5.0]], 0.2, 5, seed=7)
    np.testing.assert_array_equal(a, b[:10])
    assert draw_targets([[0.0, 0.0]], 0.0, 3, 0).tolist() == [[0.0, 0.0]] * 3


def test_linear_cloud_is_lqr(linear2):
    spec = lin_spec()
    lq = local_lq(linear2, spec)
    cloud = generate_cloud(linear2, spec, [[1.0, 0.0], [0.0, -1.0]], 0.3, 3, seed=0, N=8,
                           shoot_opts=ShootingOptions(target_tol=1e-9, continuation_steps=1), lq=lq)
    assert cloud.success_rate == 1.0
    np.testing.assert_allclose(cloud.U, -cloud.X @ lq.K.T, atol=1e-8)
    law = fit_polynomial_law(cloud, 1)
    np.testing.assert_allclose(law.linear_part(), -lq.K, atol=1e-8)


def test_origin_only_cloud(linear2):
    cloud = generate_cloud(linear2, lin_spec(), [[0.0, 0.0]], 0.0, 2, seed=0, N=4)
    assert not np.any(cloud.X) and not np.any(cloud.U)
    assert len(cloud) == 1 + 2 * 4
    assert cloud.target_idx[0] == -1


def test_parallel_matches_serial(linear2):
    kw = dict(base_targets=[[1.0, 0.5], [-0.5, 1.0]], noise_std=0.2, per_target=3, seed=4, N=6,
              shoot_opts=ShootingOptions(target_tol=1e-9, continuation_steps=1))
    a = generate_cloud(linear2, lin_spec(), jobs=1, **kw)
    b = generate_cloud(linear2, lin_spec(), jobs=2, **kw)
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.U, b.U)
    np.testing.assert_array_equal(a.target_idx, b.target_idx)


def test_all_failures_raise(linear2, monkeypatch):
    def boom(*args, **kwargs):
        raise ShootingError("forced", [1.0])
    monkeypatch.setattr(synthesis, "seed_and_shoot", boom)
    with pytest.raises(EmptyCloudError):
        generate_cloud(linear2, lin_spec(), [[1.0, 0.0]], 0.1, 2, seed=0, N=4)


def test_partial_failures_counted(linear2, monkeypatch):
    real = synthesis.seed_and_shoot
    calls = []

    def flaky(*args, **kwargs):
        calls.append(1)
        if len(calls) == 2:
            raise ShootingError("forced", [1.0])
        return real(*args, **kwargs)
    monkeypatch.setattr(synthesis, "seed_and_shoot", flaky)
    cloud = generate_cloud(linear2, lin_spec(), [[1.0, 0.0]], 0.1, 3, seed=0, N=4,
                           shoot_opts=ShootingOptions(continuation_steps=1))
    assert cloud.failed == [1]
    assert cloud.success_rate == pytest.approx(2 / 3)


def test_cloud_csv(tmp_path, linear2):
    cloud = generate_cloud(linear2, lin_spec(), [[0.5, 0.0]], 0.0, 1, seed=0, N=3,
                           shoot_opts=ShootingOptions(continuation_steps=1))
    path = tmp_path / "cloud.csv"
    cloud.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x1,x2,u1,target_idx,k"
    assert len(lines) == 1 + len(cloud)


def test_tangency_of_fitted_law_near_origin(unicycle):
    spec = robot_spec()
    lq = local_lq(unicycle, spec)
    cloud = generate_cloud(unicycle, spec, [[0.0, 0.0, 0.0]], 0.05, 8, seed=3, N=6,
                           shoot_opts=ShootingOptions(target_tol=1e-6, continuation_steps=1), lq=lq)
    law = fit_polynomial_law(cloud, 3)
    gap = np.linalg.norm(law.linear_part() + lq.K, 2) / np.linalg.norm(lq.K, 2)
    assert gap <= 0.1


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 3), st.integers(1, 4))
def test_basis_has_no_constant(n, degree):
    basis = monomial_basis(n, degree)
    assert len(basis) == comb(n + degree, degree) - 1
    assert min(sum(e) for e in basis) == 1
