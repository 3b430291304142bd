"""Seeded instance builders shared by the test modules."""

import numpy as np

from mmot.cli import preset_cost
from mmot.costs import ConcaveOfSum
from mmot.geometry import DiscreteMarginal, DomainBox, dirichlet_marginal, uniform_marginal
from mmot.solver import make_instance


def preset_instance(preset, n, dim=2, seed=0, weights="uniform", m=3):
    cost, boxes = preset_cost(preset, m, dim)
    draw = uniform_marginal if weights == "uniform" else dirichlet_marginal
    return make_instance([draw(b, n, 1000 * seed + i) for i, b in enumerate(boxes)], cost)


def duality_instances():
    """The twenty strong-duality instances: four presets, n = 4..8, dims 1 and 2."""
    out = []
    k = 0
    for preset in ("gs", "bilinear-neg", "gq", "hedonic"):
        for n in (4, 5, 6, 7, 8):
            dim = 1 + (k % 2)
            out.append((f"{preset}-n{n}-d{dim}", preset_instance(preset, n, dim, seed=k)))
            k += 1
    return out


def two_cluster_instance(n_per=3, seed=0):
    """GS cost with each marginal split into a low and a high cluster of mass 1/2 each.

    The optimum pairs low with low and high with high, so the support splits
    into two blocks and the dual gains a free offset between them.
    """
    rng = np.random.default_rng(seed)
    box = DomainBox.unit(1)
    margs = []
    for _ in range(3):
        low = rng.uniform(0.0, 0.1, n_per)
        high = rng.uniform(0.9, 1.0, n_per)
        w_low = rng.dirichlet(np.ones(n_per)) / 2
        w_high = rng.dirichlet(np.ones(n_per)) / 2
        pts = np.concatenate([low, high])[:, None]
        margs.append(DiscreteMarginal(box, pts, np.concatenate([w_low, w_high])))
    return make_instance(margs, ConcaveOfSum(3, 1))


def family_costs():
    """One representative per builtin family, with the boxes to sample on."""
    from mmot.costs import (
        GPlusQuadratic,
        HedonicCost,
        NegExpProfile,
        QuarticSubCost,
        SeparableSubCost,
        SinePerturbation,
        bilinear_normal_form,
    )

    unit2 = [DomainBox.unit(2)] * 3
    rng = np.random.default_rng(5)
    sep = [
        SeparableSubCost(
            P=-(1.0 + 0.25 * i) * np.eye(2) + 0.1 * rng.normal(size=(2, 2)),
            B=np.diag([1.0, 2.0]),
            L=(1.0 + i) * np.eye(2),
            q=rng.normal(size=2),
            b=rng.normal(size=2),
            l=0.1 * rng.normal(size=2),
        )
        for i in range(3)
    ]
    z_box = DomainBox(-5 * np.ones(2), 5 * np.ones(2))
    return [
        ("concave_of_sum", ConcaveOfSum(3, 2), unit2),
        ("concave_of_sum_negexp", ConcaveOfSum(4, 2, NegExpProfile(2)), [DomainBox.unit(2)] * 4),
        (
            "concave_of_sum_perturbed",
            ConcaveOfSum(3, 2, perturbation=SinePerturbation([rng.normal(size=2) for _ in range(3)]), epsilon=0.1),
            unit2,
        ),
        ("bilinear", bilinear_normal_form(rng.normal(size=(2, 2))), unit2),
        ("g_plus_quadratic", GPlusQuadratic(2, "diff_quadratic", np.array([[2.0, 0.5], [0.5, 1.0]])), unit2),
        ("g_plus_quadratic_sum", GPlusQuadratic(2, "sum_quadratic", -np.eye(2)), unit2),
        ("g_plus_quadratic_cosh", GPlusQuadratic(2, "diff_cosh"), unit2),
        ("hedonic_separable", HedonicCost(z_box, sep, grid=17), unit2),
        ("hedonic_quartic", HedonicCost(DomainBox(-3 * np.ones(2), 3 * np.ones(2)), [QuarticSubCost(2, 0.5)] * 3, grid=17), unit2),
    ]


def fd_agreement(cost, domains, samples, seed):
    """Worst ratio err / max(1e-5, 1e-4 * |block|) of analytic vs finite-difference blocks."""
    from mmot.costs import fd_second_differential
    from mmot.geometry import ProductConfiguration, make_rng

    rng = make_rng(seed, stream=77)
    worst = 0.0
    for _ in range(samples):
        x = ProductConfiguration(tuple(b.sample(rng, open_box=True) for b in domains))
        for i in range(cost.m):
            for j in range(cost.m):
                a = cost.second_differential(i, j, x).matrix
                f = fd_second_differential(cost, i, j, x).matrix
                tol = max(1e-5, 1e-4 * np.linalg.norm(a))
                worst = max(worst, float(np.abs(a - f).max()) / tol)
    return worst
