"""Discrete Kantorovich problem: exact LP, entropic approximation, Monge brute force."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from ._simplex import simplex
from .costs import CostModel
from .duality import Potentials
from .geometry import DiscreteMarginal

FEAS_TOL = 1e-9
DEFAULT_CAP = 10**6


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class Instance:
    marginals: tuple
    cost: CostModel
    cost_tensor: np.ndarray

    @property
    def m(self) -> int:
        return len(self.marginals)

    @property
    def shape(self) -> tuple:
        return self.cost_tensor.shape

    @property
    def weights(self) -> list:
        return [mu.weights for mu in self.marginals]

    def cost_range(self) -> float:
        return float(self.cost_tensor.max() - self.cost_tensor.min())

    def with_tensor(self, tensor) -> "Instance":
        """Same marginals with a replacement cost tensor (used for perturbations)."""
        t = np.array(tensor, dtype=float)
        t.setflags(write=False)
        return Instance(self.marginals, self.cost, t)


def make_instance(marginals, cost: CostModel, cap: int = DEFAULT_CAP) -> Instance:
    marginals = tuple(marginals)
    if len(marginals) < 2:
        raise SolverError("need at least two marginals")
    if len(marginals) != cost.m:
        raise SolverError(f"cost has m={cost.m} but {len(marginals)} marginals were given")
    for i, mu in enumerate(marginals):
        if mu.dim != cost.dims[i]:
            raise SolverError(f"marginal {i} lives in R^{mu.dim}, cost expects R^{cost.dims[i]}")
    size = math.prod(mu.n for mu in marginals)
    if size > cap:
        raise SolverError(f"cost tensor would have {size} entries, above the cap {cap}")
    tensor = np.asarray(cost.cost_tensor([mu.points for mu in marginals]), dtype=float)
    if not np.all(np.isfinite(tensor)):
        raise SolverError("cost is not finite on the support grid")
    tensor.setflags(write=False)
    return Instance(marginals, cost, tensor)


def make_instance_like(inst: Instance, marginals) -> Instance:
    """Instance with new marginals on the same atoms; the cost tensor is reused."""
    marginals = tuple(marginals)
    for old, new in zip(inst.marginals, marginals):
        if old.points.shape != new.points.shape or not np.array_equal(old.points, new.points):
            raise SolverError("replacement marginals must keep the support atoms")
    return Instance(marginals, inst.cost, inst.cost_tensor)


@dataclass(frozen=True)
class Coupling:
    """Sparse coupling: ``indices[k]`` is an index tuple carrying ``masses[k] > 0``."""

    indices: np.ndarray
    masses: np.ndarray
    objective: float
    shape: tuple
    converged: bool = True
    iterations: int = 0

    @classmethod
    def from_dense(cls, pi: np.ndarray, cost_tensor: np.ndarray, threshold: float = 0.0, **kw) -> "Coupling":
        idx = np.argwhere(pi > threshold)
        masses = pi[tuple(idx.T)]
        obj = float(masses @ cost_tensor[tuple(idx.T)])
        return cls(idx, masses, obj, pi.shape, **kw)

    @property
    def entries(self) -> dict:
        return {tuple(int(a) for a in ix): float(w) for ix, w in zip(self.indices, self.masses)}

    def dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        np.add.at(out, tuple(self.indices.T), self.masses)
        return out

    def marginal(self, i: int) -> np.ndarray:
        return np.bincount(self.indices[:, i], weights=self.masses, minlength=self.shape[i])

    def marginal_error(self, inst: Instance) -> float:
        """Largest absolute deviation of any axis projection from its marginal."""
        return max(float(np.abs(self.marginal(i) - w).max()) for i, w in enumerate(inst.weights))

    def tv_error(self, inst: Instance) -> float:
        return max(0.5 * float(np.abs(self.marginal(i) - w).sum()) for i, w in enumerate(inst.weights))

    def support(self, mass_tol: float = 0.0) -> set:
        return {tuple(int(a) for a in ix) for ix, w in zip(self.indices, self.masses) if w > mass_tol}

    def to_json(self) -> list:
        return [{"index": [int(a) for a in ix], "mass": float(w)} for ix, w in zip(self.indices, self.masses)]


@dataclass
class LPSolution:
    coupling: Coupling
    dual: Potentials
    dual_objective: float
    iterations: int
    basis: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


def _constraint_matrix(shape):
    """Marginal constraints for the flattened coupling, one redundant row per
    marginal after the first removed (the last atom of each)."""
    m = len(shape)
    idx = np.indices(shape).reshape(m, -1)
    rows, row_of = [], []
    for i, n in enumerate(shape):
        keep = n if i == 0 else n - 1
        for a in range(keep):
            rows.append((idx[i] == a).astype(float))
            row_of.append((i, a))
    return np.array(rows), row_of


def dual_for_basis(inst: Instance, basis, cost_tensor=None) -> Potentials:
    """Simplex multipliers of ``basis`` priced with ``cost_tensor`` (default: the instance's)."""
    C = inst.cost_tensor if cost_tensor is None else np.asarray(cost_tensor, dtype=float)
    A, row_of = _constraint_matrix(inst.shape)
    basis = np.asarray(basis)
    y = np.linalg.solve(A[:, basis].T, C.ravel()[basis])
    values = [np.zeros(n) for n in inst.shape]
    for (i, a), yy in zip(row_of, y):
        values[i][a] = yy
    return Potentials(values)


def solve_lp(inst: Instance, cost_tensor=None) -> LPSolution:
    """Basic optimal coupling and dual certificate by revised simplex.

    ``cost_tensor`` overrides the instance tensor for the pivoting (used by the
    perturbation probes); the reported objective always uses the instance
    tensor. Atoms whose constraint row is dropped as redundant get potential 0.
    """
    C = inst.cost_tensor if cost_tensor is None else np.asarray(cost_tensor, dtype=float)
    shape = inst.shape
    A, row_of = _constraint_matrix(shape)
    b = np.array([inst.marginals[i].weights[a] for i, a in row_of])
    res = simplex(A, b, C.ravel())
    pi = res.x.reshape(shape)
    coupling = Coupling.from_dense(pi, inst.cost_tensor)
    values = [np.zeros(n) for n in shape]
    for (i, a), y in zip(row_of, res.y):
        values[i][a] = y
    dual = Potentials(values)
    return LPSolution(coupling, dual, dual.objective(inst.weights), res.iterations, res.basis)


@dataclass
class EntropicResult:
    coupling: Coupling
    log_scalings: list
    iterations: int
    converged: bool
    tv_error: float


def _broadcast(v, i, m):
    shape = [1] * m
    shape[i] = v.size
    return v.reshape(shape)


def solve_entropic(
    inst: Instance,
    epsilon: float,
    max_iters: int = 100_000,
    tol: float = 1e-6,
    eps_scaling: bool = True,
    init=None,
) -> EntropicResult:
    """Multi-marginal Sinkhorn in the log domain.

    The coupling has the Gibbs form ``exp(-C/epsilon + sum_i g_i)``; the
    scalings ``g_i`` are updated cyclically so that axis ``i`` matches its
    marginal. Stops when every axis has total-variation error <= ``tol``.
    With ``eps_scaling`` the regularization is annealed geometrically from the
    cost range down to ``epsilon``, warm-starting each stage.
    """
    if epsilon <= 0:
        raise SolverError("epsilon must be positive")
    C = inst.cost_tensor - inst.cost_tensor.min()
    m = inst.m
    with np.errstate(divide="ignore"):
        logw = [np.log(w) for w in inst.weights]
    g = [np.zeros(n) for n in inst.shape] if init is None else [np.array(v, dtype=float) for v in init]

    schedule = [epsilon]
    if eps_scaling:
        e = max(inst.cost_range(), epsilon)
        stages = []
        while e > epsilon * 1.5:
            stages.append(e)
            e /= 3.0
        schedule = stages + [epsilon]

    total = 0
    converged = False
    err = np.inf
    for stage, eps in enumerate(schedule):
        final = stage == len(schedule) - 1
        # scalings are stored in units of 1/eps; rescale when eps changes
        if stage > 0:
            g = [v * schedule[stage - 1] / eps for v in g]
        logK = -C / eps
        stage_tol = tol if final else max(tol, 1e-3)
        budget = max_iters - total
        for _ in range(budget):
            for i in range(m):
                L = logK + sum(_broadcast(g[j], j, m) for j in range(m) if j != i)
                axes = tuple(k for k in range(m) if k != i)
                with np.errstate(invalid="ignore"):
                    g[i] = logw[i] - logsumexp(L, axis=axes)
                g[i][~np.isfinite(g[i])] = -np.inf
            total += 1
            logpi = logK + sum(_broadcast(g[j], j, m) for j in range(m))
            pi = np.exp(logpi)
            err = max(
                0.5 * float(np.abs(pi.sum(axis=tuple(k for k in range(m) if k != i)) - w).sum())
                for i, w in enumerate(inst.weights)
            )
            if err <= stage_tol:
                if final:
                    converged = True
                break
        if total >= max_iters:
            break
    pi = np.exp(logK + sum(_broadcast(g[j], j, m) for j in range(m)))
    coupling = Coupling.from_dense(pi, inst.cost_tensor, converged=converged, iterations=total)
    return EntropicResult(coupling, g, total, converged, err)


@dataclass
class MongeSolution:
    maps: list
    objective: float


def brute_force_monge(inst: Instance, work_cap: float = 5e7) -> MongeSolution:
    """Exhaustive search over (m-1)-tuples of permutations.

    Needs uniform marginals with a common size n. ``maps[k][a]`` is the atom of
    marginal ``k + 1`` paired with atom ``a`` of the first marginal. Ties go to
    the lexicographically first tuple.
    """
    ns = {mu.n for mu in inst.marginals}
    if len(ns) != 1:
        raise SolverError("brute force needs marginals of equal size")
    n = ns.pop()
    if not all(mu.is_uniform() for mu in inst.marginals):
        raise SolverError("brute force needs uniform marginals")
    m = inst.m
    work = float(math.factorial(n)) ** (m - 1) * n
    if work > work_cap:
        raise SolverError(f"enumeration needs ~{work:.3g} operations, above the cap {work_cap:.3g}")
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.intp)
    C = inst.cost_tensor
    w1 = inst.marginals[0].weights
    rows = np.arange(n)
    best = (np.inf, None)
    for outer in itertools.product(range(len(perms)), repeat=m - 2):
        index = (rows,) + tuple(perms[k] for k in outer)
        M = C[index]  # (n, n): row a, column = last-axis atom
        totals = (M[rows, perms] * w1).sum(axis=1)
        k = int(np.argmin(totals))
        if totals[k] < best[0]:
            best = (float(totals[k]), outer + (k,))
    obj, choice = best
    maps = [perms[k].copy() for k in choice]
    return MongeSolution(maps, obj)


def coupling_from_maps(inst: Instance, maps) -> Coupling:
    """(Id, G_2, ..., G_m) pushforward of the first marginal."""
    n1 = inst.marginals[0].n
    idx = np.column_stack([np.arange(n1)] + [np.asarray(g) for g in maps])
    w = inst.marginals[0].weights
    keep = w > 0
    idx, w = idx[keep], w[keep]
    return Coupling(idx, w.copy(), float(w @ inst.cost_tensor[tuple(idx.T)]), inst.shape)
