"""Dual potentials: c-conjugation, complementary slackness, uniqueness up to constants.

The infimum over M_j is replaced by the minimum over the support grid of
the j-th marginal, so every operation here works on the materialized cost
tensor of an instance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .geometry import make_rng

if TYPE_CHECKING:
    from .solver import Coupling, Instance

FEAS_TOL = 1e-9
CONJ_TOL = 1e-9


class InfeasiblePotentials(ValueError):
    pass


def _b(v, i, m):
    shape = [1] * m
    shape[i] = v.size
    return v.reshape(shape)


@dataclass
class Potentials:
    """One real per support atom per marginal."""

    values: list
    # argmin tuples recorded by conjugate_pass: attaining[i][a] is the index tuple
    attaining: list | None = field(default=None, compare=False)

    def __post_init__(self):
        self.values = [np.asarray(v, dtype=float).copy() for v in self.values]

    @property
    def m(self) -> int:
        return len(self.values)

    def total(self) -> np.ndarray:
        """sum_i u_i(a_i) on the full product grid."""
        m = self.m
        return sum(_b(v, i, m) for i, v in enumerate(self.values))

    def objective(self, weights) -> float:
        return float(sum(v @ w for v, w in zip(self.values, weights)))

    def max_violation(self, cost_tensor) -> float:
        """max over tuples of sum_i u_i - c (<= 0 means feasible)."""
        return float((self.total() - cost_tensor).max())

    def is_feasible(self, cost_tensor, tol: float = FEAS_TOL) -> bool:
        return self.max_violation(cost_tensor) <= tol

    def shifted(self, offsets) -> "Potentials":
        return Potentials([v + t for v, t in zip(self.values, offsets)])

    def to_json(self) -> list:
        return [v.tolist() for v in self.values]


def conjugate_pass(inst: "Instance", start: Potentials, check: bool = True) -> Potentials:
    """Sequential c-conjugation of ``start``.

    u_1 = min(c - sum_{j>1} v_j), then u_i = min(c - sum_{j<i} u_j - sum_{j>i} v_j)
    for i = 2..m, minima over the support grid. The result is c-conjugate,
    dominates ``start`` pointwise and has a dual objective at least as large.
    Ties in each minimum go to the lexicographically smallest index tuple.
    """
    C = inst.cost_tensor
    m = inst.m
    if check:
        viol = start.max_violation(C)
        if viol > FEAS_TOL:
            raise InfeasiblePotentials(f"start violates the dual constraint by {viol:.3e}")
    cur = [v.copy() for v in start.values]
    attaining = []
    for i in range(m):
        others = sum(_b(cur[j], j, m) for j in range(m) if j != i)
        R = np.moveaxis(C - others, i, 0).reshape(C.shape[i], -1)
        k = np.argmin(R, axis=1)
        cur[i] = R[np.arange(C.shape[i]), k]
        rest = [s for j, s in enumerate(C.shape) if j != i]
        tuples = []
        for a, kk in enumerate(k):
            t = list(np.unravel_index(kk, rest))
            t.insert(i, a)
            tuples.append(tuple(int(v) for v in t))
        attaining.append(tuples)
    return Potentials(cur, attaining)


def conjugacy_defect(inst: "Instance", pot: Potentials) -> float:
    """max_i max_a |u_i(a) - min(c - sum_{j != i} u_j)|; zero for c-conjugate tuples."""
    C = inst.cost_tensor
    m = inst.m
    worst = 0.0
    for i in range(m):
        others = sum(_b(pot.values[j], j, m) for j in range(m) if j != i)
        axes = tuple(k for k in range(m) if k != i)
        worst = max(worst, float(np.abs((C - others).min(axis=axes) - pot.values[i]).max()))
    return worst


@dataclass
class SlacknessReport:
    max_gap_on_support: float
    dual_objective: float
    primal_objective: float
    gap: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def verify_slackness(inst: "Instance", coupling: "Coupling", pot: Potentials) -> SlacknessReport:
    C = inst.cost_tensor
    idx = tuple(coupling.indices.T)
    on_support = C[idx] - pot.total()[idx] if coupling.masses.size else np.zeros(0)
    primal = float(coupling.masses @ C[idx])
    dual = pot.objective(inst.weights)
    return SlacknessReport(
        max_gap_on_support=float(np.abs(on_support).max(initial=0.0)),
        dual_objective=dual,
        primal_objective=primal,
        gap=primal - dual,
    )


@dataclass
class DualUniquenessReport:
    trials: int
    solutions_used: int
    exchange_graph_connected: bool
    exchange_graph_components: int
    max_offset_spread: float
    max_offset_sum: float
    verdict: str
    note: str = (
        "discrete evidence only: constant offsets are expected when the exchange graph "
        "of the optimal support is connected; otherwise extra degrees of freedom appear"
    )

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def exchange_graph_components(inst: "Instance", coupling: "Coupling", mass_tol: float = 1e-12) -> int:
    """Connected components of the graph on charged atoms linked by support tuples.

    Nodes are pairs (marginal i, atom a) with positive weight; every tuple in
    the support of ``coupling`` joins its m atoms. With one component the
    complementary-slackness equalities pin the optimal dual up to the
    constants t_i with sum t_i = 0.
    """
    offsets = np.cumsum([0] + [mu.n for mu in inst.marginals])
    parent = list(range(offsets[-1]))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for ix, w in zip(coupling.indices, coupling.masses):
        if w <= mass_tol:
            continue
        nodes = [offsets[i] + int(a) for i, a in enumerate(ix)]
        r0 = find(nodes[0])
        for v in nodes[1:]:
            parent[find(v)] = r0
    charged = [offsets[i] + a for i, mu in enumerate(inst.marginals) for a in np.flatnonzero(mu.weights > 0)]
    return len({find(v) for v in charged})


def compare_potentials(inst: "Instance", p: Potentials, q: Potentials, tol_mass: float = 0.0):
    """(max spread of p_i - q_i over charged atoms, |sum_i mean(p_i - q_i)|)."""
    spread, means = 0.0, []
    for v, w, mu in zip(p.values, q.values, inst.marginals):
        charged = mu.weights > tol_mass
        d = (v - w)[charged]
        spread = max(spread, float(d.max() - d.min()))
        means.append(float(d.mean()))
    return spread, abs(sum(means))


def dual_uniqueness_probe(
    inst: "Instance",
    trials: int = 5,
    seed: int = 0,
    pert_eps: float = 1e-7,
    tol: float = 1e-6,
) -> DualUniquenessReport:
    """Compare independently generated optimal c-conjugate potentials.

    Trial 0 uses the plain LP dual. Every other trial re-runs the simplex with
    the cost tensor and the marginal weights jittered by a seeded relative
    amount ``pert_eps``; the jitter only steers the pivot path. The basis it
    reaches is re-priced with the true cost, shifted to feasibility if needed,
    and c-conjugated against the true cost. Candidates whose dual objective
    misses the LP optimum by more than 1e-8 are discarded.
    """
    from .geometry import DiscreteMarginal
    from .solver import dual_for_basis, make_instance_like, solve_lp

    if trials < 2:
        raise ValueError("need at least two trials")
    base = solve_lp(inst)
    target = base.coupling.objective
    n_comp = exchange_graph_components(inst, base.coupling)
    scale = pert_eps * max(inst.cost_range(), 1.0)
    rng = make_rng(seed, stream=11)
    sols = []
    for t in range(trials):
        if t == 0:
            dual = base.dual
        else:
            margs = []
            for mu in inst.marginals:
                w = mu.weights * (1.0 + pert_eps * rng.uniform(-1.0, 1.0, size=mu.n))
                margs.append(DiscreteMarginal(mu.box, mu.points, w / w.sum()))
            jittered = make_instance_like(inst, margs)
            C = inst.cost_tensor + scale * rng.uniform(-1.0, 1.0, size=inst.shape)
            dual = dual_for_basis(inst, solve_lp(jittered, C).basis)
        viol = dual.max_violation(inst.cost_tensor)
        if viol > 0:
            dual = dual.shifted([-viol] + [0.0] * (inst.m - 1))
        u = conjugate_pass(inst, dual, check=False)
        if abs(u.objective(inst.weights) - target) <= 1e-8:
            sols.append(u)
    spread = offset_sum = 0.0
    for a in range(len(sols)):
        for b in range(a + 1, len(sols)):
            s_, o = compare_potentials(inst, sols[a], sols[b])
            spread, offset_sum = max(spread, s_), max(offset_sum, o)
    if len(sols) < 2:
        verdict = "insufficient-solutions"
    elif spread <= tol and offset_sum <= tol:
        verdict = "constants-up-to-tolerance"
    else:
        verdict = "non-constant-offsets"
    return DualUniquenessReport(trials, len(sols), n_comp == 1, n_comp, spread, offset_sum, verdict)
