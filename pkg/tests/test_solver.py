import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from mmot._simplex import SimplexError, simplex
from mmot.costs import ConcaveOfSum, bilinear_normal_form
from mmot.geometry import DiscreteMarginal, DomainBox, dirichlet_marginal, uniform_marginal
from mmot.solver import (
    Coupling,
    SolverError,
    brute_force_monge,
    coupling_from_maps,
    make_instance,
    solve_entropic,
    solve_lp,
)

from .instances import preset_instance


def _linprog_value(inst):
    shape = inst.shape
    idx = np.indices(shape).reshape(len(shape), -1)
    rows, rhs = [], []
    for i, n in enumerate(shape):
        for a in range(n):
            rows.append((idx[i] == a).astype(float))
            rhs.append(inst.marginals[i].weights[a])
    res = linprog(inst.cost_tensor.ravel(), A_eq=np.array(rows), b_eq=np.array(rhs), method="highs")
    assert res.status == 0
    return res.fun


def test_simplex_small_lp():
    # min -x - y  s.t. x + y + s = 1, x - y + t = 0.5, all >= 0
    A = np.array([[1.0, 1.0, 1.0, 0.0], [1.0, -1.0, 0.0, 1.0]])
    res = simplex(A, np.array([1.0, 0.5]), np.array([-1.0, -1.0, 0.0, 0.0]))
    assert res.objective == pytest.approx(-1.0)
    assert A @ res.x == pytest.approx([1.0, 0.5])


def test_simplex_infeasible():
    A = np.array([[1.0, 1.0]])
    with pytest.raises(SimplexError):
        simplex(A, np.array([-1.0]), np.array([1.0, 1.0]))


@pytest.mark.parametrize("preset", ["gs", "bilinear-neg", "gq"])
@pytest.mark.parametrize("weights", ["uniform", "dirichlet"])
def test_lp_matches_linprog(preset, weights):
    for seed in range(3):
        inst = preset_instance(preset, 5, dim=2, seed=seed, weights=weights)
        sol = solve_lp(inst)
        assert sol.coupling.objective == pytest.approx(_linprog_value(inst), abs=1e-9)
        assert sol.coupling.marginal_error(inst) <= 1e-12


def test_lp_two_marginals_unequal_sizes():
    box = DomainBox.unit(1)
    mu = dirichlet_marginal(box, 3, 1)
    nu = dirichlet_marginal(box, 5, 2)
    from mmot.costs import BilinearCost

    inst = make_instance([mu, nu], BilinearCost([1, 1], {(0, 1): [[-1.0]]}))
    assert solve_lp(inst).coupling.objective == pytest.approx(_linprog_value(inst), abs=1e-12)


def test_vertex_support_bound():
    for seed in range(5):
        inst = preset_instance("gs", 6, dim=2, seed=seed, weights="dirichlet")
        sol = solve_lp(inst)
        assert len(sol.coupling.masses) <= sum(inst.shape) - inst.m + 1
        assert len(sol.basis) == sum(inst.shape) - inst.m + 1


def test_weak_duality_random_feasible_pairs():
    inst = preset_instance("gq", 4, dim=1, seed=3, weights="dirichlet")
    rng = np.random.default_rng(0)
    C = inst.cost_tensor
    for _ in range(20):
        # feasible dual: random u_1, u_2, then u_3 = min(c - u_1 - u_2)
        u1, u2 = rng.normal(size=4), rng.normal(size=4)
        u3 = (C - u1[:, None, None] - u2[None, :, None]).min(axis=(0, 1))
        dual = u1 @ inst.weights[0] + u2 @ inst.weights[1] + u3 @ inst.weights[2]
        # feasible primal: product coupling
        pi = np.einsum("a,b,c->abc", *inst.weights)
        assert dual <= float((pi * C).sum()) + 1e-12
        assert dual <= solve_lp(inst).coupling.objective + 1e-12


def test_permutation_invariance():
    inst = preset_instance("gs", 5, dim=2, seed=4, weights="dirichlet")
    base = solve_lp(inst).coupling.objective
    perm = [3, 0, 4, 1, 2]
    margs = [inst.marginals[0], inst.marginals[1].permuted(perm), inst.marginals[2]]
    other = make_instance(margs, inst.cost)
    assert solve_lp(other).coupling.objective == pytest.approx(base, abs=1e-12)


def test_brute_force_matches_lp_for_gs():
    for seed in range(3):
        inst = preset_instance("gs", 5, dim=2, seed=seed)
        bf = brute_force_monge(inst)
        assert bf.objective == pytest.approx(solve_lp(inst).coupling.objective, abs=1e-9)
        c = coupling_from_maps(inst, bf.maps)
        assert c.objective == pytest.approx(bf.objective, abs=1e-14)
        assert c.marginal_error(inst) <= 1e-15


def test_brute_force_exhaustive_small():
    inst = preset_instance("bilinear-pos", 3, dim=1, seed=2)
    best = min(
        sum(inst.cost_tensor[a, p[a], q[a]] for a in range(3)) / 3
        for p in itertools.permutations(range(3))
        for q in itertools.permutations(range(3))
    )
    assert brute_force_monge(inst).objective == pytest.approx(best, abs=1e-15)


def test_brute_force_rejects_nonuniform_and_large():
    with pytest.raises(SolverError):
        brute_force_monge(preset_instance("gs", 4, seed=0, weights="dirichlet"))
    with pytest.raises(SolverError):
        brute_force_monge(preset_instance("gs", 9, seed=0))


def test_make_instance_errors():
    box = DomainBox.unit(2)
    mus = [uniform_marginal(box, 4, i) for i in range(3)]
    with pytest.raises(SolverError):
        make_instance(mus[:2], ConcaveOfSum(3, 2))
    with pytest.raises(SolverError):
        make_instance(mus, ConcaveOfSum(3, 1))
    with pytest.raises(SolverError):
        make_instance(mus, ConcaveOfSum(3, 2), cap=10)


def test_coupling_dense_roundtrip():
    inst = preset_instance("gs", 4, seed=1, weights="dirichlet")
    c = solve_lp(inst).coupling
    back = Coupling.from_dense(c.dense(), inst.cost_tensor)
    assert back.entries == c.entries
    assert back.objective == pytest.approx(c.objective)


def test_entropic_converges_and_matches_marginals():
    inst = preset_instance("gs", 5, seed=0)
    res = solve_entropic(inst, 0.01 * inst.cost_range())
    assert res.converged
    assert res.tv_error <= 1e-6
    assert res.coupling.tv_error(inst) <= 1e-6


def test_entropic_objective_monotone_in_epsilon():
    inst = preset_instance("gs", 5, seed=2, weights="dirichlet")
    lp = solve_lp(inst).coupling.objective
    objs = []
    for frac in (0.5, 0.2, 0.1, 0.05, 0.02, 0.01):
        res = solve_entropic(inst, frac * inst.cost_range(), tol=1e-9)
        assert res.converged
        objs.append(res.coupling.objective)
    assert all(a >= b - 1e-9 for a, b in zip(objs, objs[1:]))
    assert objs[-1] >= lp - 1e-9


def test_entropic_rejects_bad_epsilon():
    with pytest.raises(SolverError):
        solve_entropic(preset_instance("gs", 3, seed=0), 0.0)


@given(st.integers(0, 10_000), st.integers(2, 5))
@settings(max_examples=15, deadline=None)
def test_lp_optimum_is_feasible_and_dual_bounded(seed, n):
    box = DomainBox.unit(1)
    margs = [dirichlet_marginal(box, n, seed * 3 + i) for i in range(3)]
    inst = make_instance(margs, bilinear_normal_form([[0.5]]))
    sol = solve_lp(inst)
    assert sol.coupling.marginal_error(inst) <= 1e-12
    assert np.all(sol.coupling.masses > 0)
    assert sol.dual.max_violation(inst.cost_tensor) <= 1e-9
    assert sol.dual_objective == pytest.approx(sol.coupling.objective, abs=1e-10)


def test_zero_weight_atoms_are_supported():
    box = DomainBox.unit(1)
    w = np.array([0.5, 0.0, 0.5])
    mu = DiscreteMarginal(box, [[0.1], [0.5], [0.9]], w)
    inst = make_instance([mu, mu, mu], ConcaveOfSum(3, 1))
    sol = solve_lp(inst)
    assert sol.coupling.marginal(0)[1] == 0.0
    assert sol.coupling.objective == pytest.approx(_linprog_value(inst), abs=1e-12)
