import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmot.costs import BilinearCost
from mmot.diagnostics import (
    DiagnosticsError,
    graph_extract,
    pushforward_check,
    round_entropic,
    symmetric_difference_mass,
    uniqueness_probe,
)
from mmot.geometry import DiscreteMarginal, DomainBox
from mmot.solver import Coupling, coupling_from_maps, make_instance, solve_entropic, solve_lp

from .instances import preset_instance


def test_gs_lp_solution_is_graph():
    inst = preset_instance("gs", 5, seed=0)
    c = solve_lp(inst).coupling
    v = graph_extract(c, inst=inst)
    assert v.is_graph and v.max_fanout == 1
    assert v.off_graph_mass == 0.0
    assert pushforward_check(c, v, inst).max_discrepancy <= 1e-15
    rows = v.maps_csv().strip().splitlines()
    assert rows[0] == "x1,x2,x3"
    assert len(rows) == 6


@given(st.integers(0, 10_000), st.integers(2, 6))
@settings(max_examples=25, deadline=None)
def test_graph_roundtrip(seed, n):
    rng = np.random.default_rng(seed)
    inst = preset_instance("gs", n, dim=1, seed=seed % 5)
    maps = [rng.permutation(n), rng.permutation(n)]
    v = graph_extract(coupling_from_maps(inst, maps), inst=inst)
    assert v.is_graph
    for got, want in zip(v.maps, maps):
        np.testing.assert_array_equal(got, want)
    assert pushforward_check(coupling_from_maps(inst, maps), v, inst).max_discrepancy <= 1e-15


def test_product_coupling_is_not_graph():
    inst = preset_instance("gs", 3, dim=1, seed=0)
    pi = np.einsum("a,b,c->abc", *inst.weights)
    v = graph_extract(Coupling.from_dense(pi, inst.cost_tensor), inst=inst)
    assert not v.is_graph
    assert v.max_fanout == 9
    assert v.off_graph_mass == pytest.approx(1 - 3 / 27)
    assert v.maps is None
    with pytest.raises(DiagnosticsError):
        v.maps_csv()
    with pytest.raises(DiagnosticsError):
        pushforward_check(Coupling.from_dense(pi, inst.cost_tensor), v, inst)


def test_forced_split_classification():
    # one heavy first atom must spread over two lighter atoms
    box = DomainBox.unit(1)
    mu1 = DiscreteMarginal(box, [[0.2], [0.8]], [0.8, 0.2])
    mu2 = DiscreteMarginal(box, [[0.2], [0.8]], [0.5, 0.5])
    inst = make_instance([mu1, mu2], BilinearCost([1, 1], {(0, 1): [[-1.0]]}))
    v = graph_extract(solve_lp(inst).coupling, inst=inst)
    assert not v.is_graph
    assert v.forced_split_atoms == [0]
    assert v.genuine_split_atoms == []


def test_round_entropic_recovers_gs_maps():
    inst = preset_instance("gs", 4, seed=1)
    lp = graph_extract(solve_lp(inst).coupling)
    ent = solve_entropic(inst, 1e-3 * inst.cost_range()).coupling
    v = round_entropic(ent, inst)
    assert v.approximate
    assert not v.is_graph
    assert 0 < v.off_graph_mass < 0.3
    for a, b in zip(v.maps, lp.maps):
        np.testing.assert_array_equal(a, b)


def test_uniqueness_probe_stable_for_gs():
    for seed in range(3):
        u = uniqueness_probe(preset_instance("gs", 5, seed=seed), trials=4, seed=seed)
        assert u.support_stable
        assert u.accepted >= 1
        assert u.max_support_symmetric_difference_mass == 0.0


def test_uniqueness_probe_flags_tied_optima():
    # zero cost: every coupling is optimal, perturbations pick different vertices
    box = DomainBox.unit(1)
    mu = DiscreteMarginal(box, [[0.2], [0.8]], [0.5, 0.5])
    inst = make_instance([mu, mu], BilinearCost([1, 1], {(0, 1): [[0.0]]}))
    u = uniqueness_probe(inst, trials=6, seed=0)
    assert not u.support_stable
    assert u.max_support_symmetric_difference_mass == pytest.approx(2.0)


def test_uniqueness_probe_needs_two_trials():
    with pytest.raises(ValueError):
        uniqueness_probe(preset_instance("gs", 3, seed=0), trials=1)


def test_symmetric_difference_mass_counts_both_sides():
    shape = (2, 2)
    p = Coupling(np.array([[0, 0], [1, 1]]), np.array([0.5, 0.5]), 0.0, shape)
    q = Coupling(np.array([[0, 1], [1, 1]]), np.array([0.5, 0.5]), 0.0, shape)
    assert symmetric_difference_mass(p, q) == pytest.approx(1.0)
    assert symmetric_difference_mass(p, p) == 0.0
