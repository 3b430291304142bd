"""Is an optimal coupling a Monge solution, and is it unique?"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .geometry import make_rng
from .solver import Coupling, Instance, solve_lp

MASS_TOL = 1e-9
PERT_EPS = 1e-7


class DiagnosticsError(RuntimeError):
    pass


@dataclass
class GraphVerdict:
    is_graph: bool
    max_fanout: int
    off_graph_mass: float
    maps: list | None = None
    approximate: bool = False
    # a_1 atoms with fanout > 1, split by the weight-mismatch heuristic
    forced_split_atoms: list = field(default_factory=list)
    genuine_split_atoms: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "is_graph": self.is_graph,
            "max_fanout": self.max_fanout,
            "off_graph_mass": self.off_graph_mass,
            "maps": None if self.maps is None else [list(map(int, g)) for g in self.maps],
            "approximate": self.approximate,
            "forced_split_atoms": self.forced_split_atoms,
            "genuine_split_atoms": self.genuine_split_atoms,
        }

    def maps_csv(self) -> str:
        """Rows ``a1, G_2(a1), ..., G_m(a1)``."""
        if self.maps is None:
            raise DiagnosticsError("no maps: the coupling is not a graph")
        n1 = len(self.maps[0])
        header = ",".join(f"x{k}" for k in range(1, len(self.maps) + 2))
        rows = [",".join(str(int(v)) for v in [a] + [g[a] for g in self.maps]) for a in range(n1)]
        return "\n".join([header] + rows) + "\n"


def graph_extract(coupling: Coupling, mass_tol: float = MASS_TOL, inst: Instance | None = None) -> GraphVerdict:
    """Group the support by first index and count distinct targets per atom.

    ``off_graph_mass`` is the mass outside the heaviest tuple of each first
    atom. When ``inst`` is given, atoms with fanout are classified: a split is
    "forced" when the atom outweighs the heaviest target it uses on some axis
    (no single target could absorb it), "genuine" otherwise. That
    classification is a heuristic for non-uniform weights.
    """
    by_first = defaultdict(list)
    for ix, w in zip(coupling.indices, coupling.masses):
        by_first[int(ix[0])].append((tuple(int(a) for a in ix), float(w)))
    max_fanout, off = 0, 0.0
    heaviest = {}
    for a1, items in by_first.items():
        fan = sum(1 for _, w in items if w > mass_tol)
        max_fanout = max(max_fanout, fan)
        best = max(items, key=lambda t: (t[1], [-v for v in t[0]]))
        heaviest[a1] = best[0]
        off += sum(w for _, w in items) - best[1]
    is_graph = max_fanout == 1
    maps = None
    if is_graph:
        n1 = coupling.shape[0]
        maps = [np.full(n1, -1, dtype=int) for _ in range(len(coupling.shape) - 1)]
        for a1, tup in heaviest.items():
            for k, g in enumerate(maps):
                g[a1] = tup[k + 1]
    forced, genuine = [], []
    if inst is not None and not is_graph:
        for a1, items in by_first.items():
            live = [(t, w) for t, w in items if w > mass_tol]
            if len(live) <= 1:
                continue
            w1 = inst.marginals[0].weights[a1]
            is_forced = False
            for i in range(1, inst.m):
                targets = {t[i] for t, _ in live}
                if w1 > max(inst.marginals[i].weights[b] for b in targets) + mass_tol:
                    is_forced = True
            (forced if is_forced else genuine).append(a1)
    return GraphVerdict(is_graph, max_fanout, float(max(off, 0.0)), maps, False, sorted(forced), sorted(genuine))


def round_entropic(coupling: Coupling, inst: Instance | None = None) -> GraphVerdict:
    """Heaviest-tuple selection per first atom for a dense (entropic) coupling.

    The maps are always returned and the verdict is flagged approximate;
    ``off_graph_mass`` measures how far the coupling is from a graph.
    """
    by_first = defaultdict(list)
    for ix, w in zip(coupling.indices, coupling.masses):
        by_first[int(ix[0])].append((tuple(int(a) for a in ix), float(w)))
    n1 = coupling.shape[0]
    maps = [np.full(n1, -1, dtype=int) for _ in range(len(coupling.shape) - 1)]
    off, fan = 0.0, 0
    for a1, items in by_first.items():
        best = max(items, key=lambda t: t[1])
        for k, g in enumerate(maps):
            g[a1] = best[0][k + 1]
        off += sum(w for _, w in items) - best[1]
        fan = max(fan, sum(1 for _, w in items if w > MASS_TOL))
    return GraphVerdict(fan == 1, fan, off, maps, approximate=True)


@dataclass
class PushforwardReport:
    max_discrepancy: float
    per_marginal: list

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def pushforward_check(coupling: Coupling, verdict: GraphVerdict, inst: Instance) -> PushforwardReport:
    """Compare mu_i(b) with mu_1(G_i^{-1}(b)) for each axis i >= 2 and atom b."""
    if not verdict.is_graph or verdict.maps is None:
        raise DiagnosticsError("pushforward check needs a graph verdict with maps")
    w1 = inst.marginals[0].weights
    per = []
    for k, g in enumerate(verdict.maps):
        i = k + 1
        charged = g >= 0
        pushed = np.bincount(g[charged], weights=w1[charged], minlength=inst.marginals[i].n)
        per.append(float(np.abs(pushed - inst.marginals[i].weights).max()))
    return PushforwardReport(max(per), per)


@dataclass
class UniquenessVerdict:
    trials: int
    accepted: int
    support_stable: bool
    max_support_symmetric_difference_mass: float
    mass_tol: float = MASS_TOL

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def symmetric_difference_mass(p: Coupling, q: Coupling, mass_tol: float = MASS_TOL) -> float:
    ep, eq = p.entries, q.entries
    sp = {k for k, w in ep.items() if w > mass_tol}
    sq = {k for k, w in eq.items() if w > mass_tol}
    return float(sum(ep[k] for k in sp - sq) + sum(eq[k] for k in sq - sp))


def uniqueness_probe(
    inst: Instance,
    trials: int = 5,
    seed: int = 0,
    pert_eps: float = PERT_EPS,
    mass_tol: float = MASS_TOL,
    opt_tol: float = 1e-9,
) -> UniquenessVerdict:
    """Re-solve under seeded cost perturbations and compare optimal supports.

    Perturbations have size ``pert_eps * max(cost range, 1)``. Perturbed
    solutions that are not optimal for the true cost within ``opt_tol`` are
    discarded; if all are discarded the perturbation was too large.
    """
    if trials < 2:
        raise ValueError("need at least two trials")
    ref = solve_lp(inst).coupling
    scale = pert_eps * max(inst.cost_range(), 1.0)
    rng = make_rng(seed, stream=31)
    accepted = []
    for _ in range(trials):
        C = inst.cost_tensor + scale * rng.uniform(-1.0, 1.0, size=inst.shape)
        sol = solve_lp(inst, C).coupling
        if sol.objective <= ref.objective + opt_tol:
            accepted.append(sol)
    if not accepted:
        raise DiagnosticsError(
            f"every perturbed solution left the optimal face; reduce pert_eps (now {pert_eps:g})"
        )
    worst = max(symmetric_difference_mass(ref, s, mass_tol) for s in accepted)
    return UniquenessVerdict(trials, len(accepted), worst <= mass_tol, worst, mass_tol)
