import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmot.costs import (
    CallbackCost,
    ConcaveOfSum,
    CostError,
    FiniteDifferenceView,
    GPlusQuadratic,
    HedonicCost,
    InnerMinimizationError,
    QuarticSubCost,
    SeparableSubCost,
    bilinear_normal_form,
    builtin_cost,
    cost_from_dict,
    eval_cost,
    fd_gradient,
    gradient,
    second_differential,
)
from mmot.geometry import DomainBox, ProductConfiguration, make_rng

from .instances import family_costs, fd_agreement

FAMILIES = family_costs()
IDS = [name for name, _, _ in FAMILIES]


def _configs(domains, k, seed):
    rng = make_rng(seed, stream=5)
    return [ProductConfiguration(tuple(b.sample(rng, open_box=True) for b in domains)) for _ in range(k)]


def test_gs_value_and_blocks():
    c = ConcaveOfSum(3, 2)
    x = ([0.1, 0.2], [0.3, 0.0], [0.5, 0.4])
    assert eval_cost(c, x) == pytest.approx(-(0.9**2 + 0.6**2), abs=1e-15)
    np.testing.assert_allclose(gradient(c, 1, x), -2 * np.array([0.9, 0.6]))
    np.testing.assert_allclose(second_differential(c, 0, 2, x).matrix, -2 * np.eye(2))
    assert second_differential(c, 0, 0, x).kind == "hessian"
    assert second_differential(c, 0, 1, x).kind == "mixed"


def test_bilinear_blocks_fold_and_transpose():
    A = np.array([[1.0, 2.0], [3.0, 4.0]])
    c = bilinear_normal_form(A)
    np.testing.assert_array_equal(c.mixed(1, 2), A)
    np.testing.assert_array_equal(c.mixed(2, 1), A.T)
    np.testing.assert_array_equal(c.second_differential(1, 1, ([0, 0],) * 3).matrix, np.zeros((2, 2)))
    # a (j, i) block enters as its transpose
    d = type(c)([2, 2, 2], {(0, 1): np.eye(2), (0, 2): np.eye(2), (2, 1): A.T})
    np.testing.assert_array_equal(d.mixed(1, 2), A)


def test_bilinear_rejects_bad_blocks():
    with pytest.raises(CostError):
        type(bilinear_normal_form(np.eye(2)))([2, 2], {(0, 0): np.eye(2)})
    with pytest.raises(CostError):
        type(bilinear_normal_form(np.eye(2)))([2, 3], {(0, 1): np.eye(2)})


def test_hedonic_quadratic_oracle():
    # f_i = |x_i - z|^2 / 2: z is the mean, the envelope derivatives are explicit
    c = HedonicCost(DomainBox([-5.0], [5.0]), [SeparableSubCost.quadratic(1)] * 3)
    x = ([0.0], [1.0], [2.0])
    sol = c.inner_minimize(x)
    assert sol.z[0] == pytest.approx(1.0, abs=1e-12)
    assert c.value(x) == pytest.approx(1.0, abs=1e-12)
    assert c.gradient(0, x)[0] == pytest.approx(-1.0, abs=1e-10)
    assert c.second_differential(0, 1, x).matrix[0, 0] == pytest.approx(-1 / 3, abs=1e-12)
    assert c.second_differential(1, 1, x).matrix[0, 0] == pytest.approx(2 / 3, abs=1e-12)


def test_hedonic_boundary_minimizer_raises():
    c = HedonicCost(DomainBox([0.5], [5.0]), [SeparableSubCost.quadratic(1)] * 3)
    with pytest.raises(InnerMinimizationError):
        c.value(([0.0], [0.1], [0.2]))


def test_hedonic_nonunique_minimizer_raises():
    class DoubleWell:
        kind = "double_well"
        nx = nz = 1

        def value(self, x, Z):
            return ((Z**2 - 1.0) ** 2).sum(-1) / 3

        def grad_x(self, x, z):
            return np.zeros(1)

        def grad_z(self, x, z):
            return 4 * z * (z**2 - 1) / 3

        def hess_xx(self, x, z):
            return np.zeros((1, 1))

        def hess_xz(self, x, z):
            return np.zeros((1, 1))

        def hess_zz(self, x, z):
            return (12 * z**2 - 4)[None, :] / 3

    c = HedonicCost(DomainBox([-2.0], [2.0]), [DoubleWell()] * 3)
    with pytest.raises(InnerMinimizationError):
        c.value(([0.0], [0.0], [0.0]))


@pytest.mark.parametrize("name,cost,domains", FAMILIES, ids=IDS)
def test_mixed_blocks_transpose(name, cost, domains):
    for x in _configs(domains, 5, 1):
        for i in range(cost.m):
            for j in range(cost.m):
                a = cost.second_differential(i, j, x).matrix
                b = cost.second_differential(j, i, x).matrix
                np.testing.assert_allclose(a, b.T, atol=1e-12)


@pytest.mark.parametrize("name,cost,domains", FAMILIES, ids=IDS)
def test_gradient_matches_finite_differences(name, cost, domains):
    for x in _configs(domains, 10, 2):
        for i in range(cost.m):
            np.testing.assert_allclose(cost.gradient(i, x), fd_gradient(cost, i, x), atol=1e-6, rtol=1e-6)


@pytest.mark.parametrize("name,cost,domains", FAMILIES, ids=IDS)
def test_second_differentials_match_finite_differences(name, cost, domains):
    assert fd_agreement(cost, domains, 15, seed=3) <= 1.0


@pytest.mark.parametrize("name,cost,domains", FAMILIES, ids=IDS)
def test_cost_tensor_matches_pointwise(name, cost, domains):
    rng = make_rng(4, stream=9)
    pts = [np.array([b.sample(rng) for _ in range(3)]) for b in domains]
    T = cost.cost_tensor(pts)
    for idx in [(0,) * cost.m, (1, 2, 0) + (1,) * (cost.m - 3), (2,) * cost.m]:
        x = ProductConfiguration(tuple(p[a] for p, a in zip(pts, idx)))
        assert T[idx] == pytest.approx(cost.value(x), abs=1e-12)


@pytest.mark.parametrize("name,cost,domains", FAMILIES, ids=IDS)
def test_json_roundtrip(name, cost, domains):
    back = cost_from_dict(json.loads(json.dumps(cost.to_dict())))
    assert back.family == cost.family
    for x in _configs(domains, 3, 6):
        assert back.value(x) == pytest.approx(cost.value(x), abs=1e-12)


def test_hedonic_envelope_gradient():
    # envelope: D_{x_i} c = D_x f_i(x_i, z*) with z* the inner minimizer
    c = HedonicCost(DomainBox(-3 * np.ones(2), 3 * np.ones(2)), [QuarticSubCost(2, 0.7)] * 3)
    for x in _configs([DomainBox.unit(2)] * 3, 5, 8):
        z = c.inner_minimize(x).z
        for i in range(3):
            np.testing.assert_allclose(c.gradient(i, x), c.components[i].grad_x(x[i], z), atol=1e-14)
            np.testing.assert_allclose(c.gradient(i, x), fd_gradient(c, i, x), atol=1e-6)


def test_callback_cost_and_fd_view_agree():
    def fn(coords):
        return float(np.sin(coords[0] @ coords[1]) + coords[2] @ coords[2])

    c = CallbackCost([2, 2, 2], fn)
    assert not c.analytic_gradient
    view = FiniteDifferenceView(ConcaveOfSum(3, 2))
    for x in _configs([DomainBox.unit(2)] * 3, 3, 10):
        g = c.gradient(0, x)
        np.testing.assert_allclose(g, np.cos(x[0] @ x[1]) * x[1], atol=1e-7)
        np.testing.assert_allclose(view.second_differential(0, 1, x).matrix, -2 * np.eye(2), atol=1e-5)


def test_check_rejects_wrong_shapes():
    c = ConcaveOfSum(3, 2)
    with pytest.raises(CostError):
        c.value(([0, 0], [0, 0]))
    with pytest.raises(CostError):
        c.value(([0, 0], [0, 0], [0]))


def test_builtin_cost_unknown_family():
    with pytest.raises(CostError):
        builtin_cost("nope", 3, [1, 1, 1])


def test_gq_g_mixed_is_second_differential():
    c = GPlusQuadratic(2, "diff_cosh")
    x = ([0.2, 0.7], [0.5, 0.5], [0.9, 0.1])
    np.testing.assert_allclose(c.second_differential(0, 2, x).matrix, c.g_mixed(x[0], x[2]))


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=30, deadline=None)
def test_gs_symmetric_in_factors(seed):
    c = ConcaveOfSum(3, 2)
    x = _configs([DomainBox.unit(2)] * 3, 1, seed)[0]
    y = ProductConfiguration((x[2], x[0], x[1]))
    assert c.value(x) == pytest.approx(c.value(y), abs=1e-14)
