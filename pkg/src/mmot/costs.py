"""Cost functions on products of Euclidean boxes.

Every cost exposes its value, the gradient in one factor and the second
differential block between two factors. Marginal indices are 0-based
throughout: the "first" factor is 0 and the "last" factor is ``m - 1``.

Second differential blocks follow the coordinate convention
``block[a, b] = d^2 c / dx_i^a dx_j^b``, so block (i, j) has shape
``dims[i] x dims[j]`` and block (j, i) is its transpose.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .geometry import DomainBox, ProductConfiguration

EPS = np.finfo(float).eps
GRAD_STEP = EPS ** (1.0 / 3.0)
SECOND_STEP = EPS ** (1.0 / 4.0)


class CostError(ValueError):
    pass


class InnerMinimizationError(RuntimeError):
    """The hedonic inner problem has no unique interior non-degenerate minimizer."""


@dataclass(frozen=True)
class DifferentialBlock:
    i: int
    j: int
    matrix: np.ndarray

    @property
    def kind(self) -> str:
        return "hessian" if self.i == self.j else "mixed"


def as_config(x) -> ProductConfiguration:
    if isinstance(x, ProductConfiguration):
        return x
    return ProductConfiguration(tuple(x))


# ---------------------------------------------------------------------------
# finite differences


def _step(v: float, base: float) -> float:
    return base * (1.0 + abs(v))


def fd_gradient(c: "CostModel", i: int, x) -> np.ndarray:
    """Central difference gradient in factor ``i``."""
    x = as_config(x)
    xi = np.array(x[i], dtype=float)
    g = np.empty(xi.size)
    for a in range(xi.size):
        h = _step(xi[a], GRAD_STEP)
        xp, xm = xi.copy(), xi.copy()
        xp[a] += h
        xm[a] -= h
        g[a] = (c.value(x.replace(i, xp)) - c.value(x.replace(i, xm))) / (xp[a] - xm[a])
    return g


def fd_second_differential(c: "CostModel", i: int, j: int, x) -> DifferentialBlock:
    """Central second differences of the value.

    Uses step eps**(1/4) * (1 + |coordinate|), the balance point between
    truncation and rounding error for a second difference.
    """
    x = as_config(x)
    xi = np.array(x[i], dtype=float)
    xj = np.array(x[j], dtype=float)
    out = np.empty((xi.size, xj.size))

    def shifted(da, db, a, b, ha, hb):
        if i == j:
            v = xi.copy()
            v[a] += da * ha
            v[b] += db * hb
            return c.value(x.replace(i, v))
        vi, vj = xi.copy(), xj.copy()
        vi[a] += da * ha
        vj[b] += db * hb
        return c.value(x.replace(i, vi).replace(j, vj))

    for a in range(xi.size):
        ha = _step(xi[a], SECOND_STEP)
        for b in range(xj.size):
            hb = _step(xj[b], SECOND_STEP)
            if i == j and a == b:
                f0 = c.value(x)
                out[a, b] = (shifted(1, 0, a, a, ha, 0) - 2 * f0 + shifted(-1, 0, a, a, ha, 0)) / ha**2
            else:
                out[a, b] = (
                    shifted(1, 1, a, b, ha, hb)
                    - shifted(1, -1, a, b, ha, hb)
                    - shifted(-1, 1, a, b, ha, hb)
                    + shifted(-1, -1, a, b, ha, hb)
                ) / (4 * ha * hb)
    if i == j:
        out = 0.5 * (out + out.T)
    return DifferentialBlock(i, j, out)


# ---------------------------------------------------------------------------
# base class


class CostModel:
    """Base class. Subclasses override ``value`` and, when they can, the
    analytic ``gradient`` and ``second_differential``."""

    family = "callback"
    analytic_gradient = False
    analytic_second = False

    def __init__(self, dims):
        self.dims = [int(d) for d in dims]
        if any(d < 1 for d in self.dims):
            raise CostError("dimensions must be positive")

    @property
    def m(self) -> int:
        return len(self.dims)

    def check(self, x) -> ProductConfiguration:
        x = as_config(x)
        if x.dims != self.dims:
            raise CostError(f"configuration dims {x.dims} do not match cost dims {self.dims}")
        return x

    def value(self, x) -> float:
        raise NotImplementedError

    def gradient(self, i: int, x) -> np.ndarray:
        return fd_gradient(self, i, self.check(x))

    def second_differential(self, i: int, j: int, x) -> DifferentialBlock:
        return fd_second_differential(self, i, j, self.check(x))

    def cost_tensor(self, point_sets) -> np.ndarray:
        """Cost on the full product grid; generic version loops."""
        shape = tuple(len(p) for p in point_sets)
        out = np.empty(shape)
        for idx in itertools.product(*(range(s) for s in shape)):
            out[idx] = self.value(ProductConfiguration(tuple(p[a] for p, a in zip(point_sets, idx))))
        return out

    def params(self) -> dict:
        raise CostError(f"family {self.family!r} is not serializable")

    def to_dict(self) -> dict:
        return {"family": self.family, "m": self.m, "dims": self.dims, "params": self.params()}


class CallbackCost(CostModel):
    """Host-language hook: wraps a Python callable ``fn(coords) -> float``.

    Optional ``grad(i, coords)`` and ``second(i, j, coords)`` callables
    replace the finite-difference fallbacks.
    """

    def __init__(self, dims, fn, grad=None, second=None):
        super().__init__(dims)
        self._fn, self._grad, self._second = fn, grad, second
        self.analytic_gradient = grad is not None
        self.analytic_second = second is not None

    def value(self, x) -> float:
        return float(self._fn(self.check(x).coords))

    def gradient(self, i, x):
        x = self.check(x)
        if self._grad is None:
            return fd_gradient(self, i, x)
        return np.asarray(self._grad(i, x.coords), dtype=float)

    def second_differential(self, i, j, x):
        x = self.check(x)
        if self._second is None:
            return fd_second_differential(self, i, j, x)
        return DifferentialBlock(i, j, np.asarray(self._second(i, j, x.coords), dtype=float))


class FiniteDifferenceView(CostModel):
    """Same value as ``base`` but every derivative by finite differences."""

    def __init__(self, base: CostModel):
        super().__init__(base.dims)
        self.base = base
        self.family = base.family

    def value(self, x):
        return self.base.value(x)

    def cost_tensor(self, point_sets):
        return self.base.cost_tensor(point_sets)


# ---------------------------------------------------------------------------
# concave functions of the sum


class QuadraticProfile:
    """h(s) = s^T Q s with Q symmetric (negative definite for concavity)."""

    kind = "quadratic"

    def __init__(self, Q):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if Q.shape[0] != Q.shape[1] or not np.allclose(Q, Q.T):
            raise CostError("Q must be square and symmetric")
        self.Q = Q
        self.n = Q.shape[0]

    def value(self, s):
        # s may carry leading batch axes
        return np.einsum("...a,ab,...b->...", s, self.Q, s)

    def grad(self, s):
        return 2.0 * self.Q @ s

    def hess(self, s):
        return 2.0 * self.Q

    def params(self):
        return {"h": self.kind, "Q": self.Q.tolist()}


class NegExpProfile:
    """h(s) = -sum_k exp(s_k); D^2 h = -diag(exp(s)) < 0."""

    kind = "neg_exp"

    def __init__(self, n):
        self.n = int(n)

    def value(self, s):
        return -np.exp(s).sum(axis=-1)

    def grad(self, s):
        return -np.exp(s)

    def hess(self, s):
        return -np.diag(np.exp(s))

    def params(self):
        return {"h": self.kind}


class SinePerturbation:
    """p(x) = sin(sum_i <w_i, x_i>)."""

    kind = "sine"

    def __init__(self, weights):
        self.weights = [np.atleast_1d(np.asarray(w, dtype=float)) for w in weights]

    def phase(self, x):
        return sum(float(w @ xi) for w, xi in zip(self.weights, x.coords))

    def value(self, x):
        return np.sin(self.phase(x))

    def grad(self, i, x):
        return np.cos(self.phase(x)) * self.weights[i]

    def second(self, i, j, x):
        return -np.sin(self.phase(x)) * np.outer(self.weights[i], self.weights[j])

    def params(self):
        return {"kind": self.kind, "weights": [w.tolist() for w in self.weights]}


class ConcaveOfSum(CostModel):
    """c(x) = h(x_1 + ... + x_m) + epsilon * p(x).

    With ``perturbation=None`` this is the concave-of-the-sum family; the
    default profile h(s) = -|s|^2 gives the Gangbo-Swiech cost.
    """

    analytic_gradient = True
    analytic_second = True

    def __init__(self, m: int, n: int, profile=None, perturbation=None, epsilon: float = 0.0):
        super().__init__([n] * m)
        self.profile = profile if profile is not None else QuadraticProfile(-np.eye(n))
        if self.profile.n != n:
            raise CostError(f"profile acts on R^{self.profile.n}, marginals live in R^{n}")
        self.perturbation = perturbation
        self.epsilon = float(epsilon)
        if perturbation is not None:
            self.family = "concave_of_sum_perturbed"
            if isinstance(perturbation, SinePerturbation):
                if len(perturbation.weights) != m or any(w.size != n for w in perturbation.weights):
                    raise CostError("sine perturbation needs one weight vector of length n per marginal")
            else:
                # arbitrary callable perturbation: fall back to finite differences
                self.analytic_gradient = self.analytic_second = False
        else:
            self.family = "concave_of_sum"

    def _pert_value(self, x):
        p = self.perturbation
        return float(p.value(x)) if hasattr(p, "value") else float(p(x.coords))

    def value(self, x):
        x = self.check(x)
        v = float(self.profile.value(sum(x.coords)))
        if self.perturbation is not None and self.epsilon:
            v += self.epsilon * self._pert_value(x)
        return v

    def gradient(self, i, x):
        x = self.check(x)
        if not self.analytic_gradient:
            return fd_gradient(self, i, x)
        g = self.profile.grad(sum(x.coords))
        if self.perturbation is not None:
            g = g + self.epsilon * self.perturbation.grad(i, x)
        return g

    def second_differential(self, i, j, x):
        x = self.check(x)
        if not self.analytic_second:
            return fd_second_differential(self, i, j, x)
        H = np.array(self.profile.hess(sum(x.coords)), dtype=float)
        if self.perturbation is not None:
            H = H + self.epsilon * self.perturbation.second(i, j, x)
        return DifferentialBlock(i, j, H)

    def cost_tensor(self, point_sets):
        if self.perturbation is not None and self.epsilon:
            return super().cost_tensor(point_sets)
        m = len(point_sets)
        s = 0.0
        for k, p in enumerate(point_sets):
            shape = [1] * m + [p.shape[1]]
            shape[k] = p.shape[0]
            s = s + p.reshape(shape)
        return np.asarray(self.profile.value(s), dtype=float)

    def params(self):
        d = dict(self.profile.params())
        if self.perturbation is not None:
            if not isinstance(self.perturbation, SinePerturbation):
                raise CostError("callback perturbations are not serializable")
            d["epsilon"] = self.epsilon
            d["perturbation"] = self.perturbation.params()
        return d


# ---------------------------------------------------------------------------
# bilinear


class BilinearCost(CostModel):
    """c(x) = sum_{i<j} x_i^T A_ij x_j.

    A general double sum over i != j folds into this form with
    A_ij <- A_ij + A_ji^T.
    """

    family = "bilinear"
    analytic_gradient = True
    analytic_second = True

    def __init__(self, dims, blocks: dict):
        super().__init__(dims)
        self.blocks = {}
        for (i, j), A in blocks.items():
            i, j = int(i), int(j)
            A = np.atleast_2d(np.asarray(A, dtype=float))
            if i == j or not (0 <= i < self.m and 0 <= j < self.m):
                raise CostError(f"bad block index ({i}, {j})")
            if i > j:
                i, j, A = j, i, A.T
            if A.shape != (self.dims[i], self.dims[j]):
                raise CostError(f"block ({i}, {j}) must be {self.dims[i]}x{self.dims[j]}, got {A.shape}")
            self.blocks[(i, j)] = self.blocks.get((i, j), 0) + A

    def mixed(self, i, j) -> np.ndarray:
        if i < j:
            return self.blocks.get((i, j), np.zeros((self.dims[i], self.dims[j])))
        return self.blocks.get((j, i), np.zeros((self.dims[j], self.dims[i]))).T

    def value(self, x):
        x = self.check(x)
        return float(sum(x[i] @ A @ x[j] for (i, j), A in self.blocks.items()))

    def gradient(self, i, x):
        x = self.check(x)
        g = np.zeros(self.dims[i])
        for j in range(self.m):
            if j != i:
                g += self.mixed(i, j) @ x[j]
        return g

    def second_differential(self, i, j, x):
        self.check(x)
        if i == j:
            return DifferentialBlock(i, j, np.zeros((self.dims[i], self.dims[i])))
        return DifferentialBlock(i, j, np.array(self.mixed(i, j)))

    def cost_tensor(self, point_sets):
        m = len(point_sets)
        out = np.zeros(tuple(len(p) for p in point_sets))
        for (i, j), A in self.blocks.items():
            pair = point_sets[i] @ A @ point_sets[j].T
            shape = [1] * m
            shape[i], shape[j] = pair.shape
            out = out + pair.reshape(shape)
        return out

    def params(self):
        return {
            "blocks": [{"i": i, "j": j, "matrix": A.tolist()} for (i, j), A in sorted(self.blocks.items())]
        }


def bilinear_normal_form(A) -> BilinearCost:
    """Three-marginal bilinear cost x1.x2 + x1.x3 + x2^T A x3."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    eye = np.eye(n)
    return BilinearCost([n, n, n], {(0, 1): eye, (0, 2): eye, (1, 2): A})


# ---------------------------------------------------------------------------
# g(x1, x3) + |x1 - x2|^2 / 2 + |x3 - x2|^2 / 2


class GPlusQuadratic(CostModel):
    """Three-marginal cost g(x1, x3) + |x1 - x2|^2/2 + |x3 - x2|^2/2.

    ``g_kind``:
      * ``diff_quadratic``: g = (x1-x3)^T Q (x1-x3) / 2, Q SPD
      * ``sum_quadratic``:  g = (x1+x3)^T Q (x1+x3) / 2, Q symmetric negative definite
      * ``diff_cosh``:      g = sum_k cosh((x1-x3)_k)
    """

    family = "g_plus_quadratic"
    analytic_gradient = True
    analytic_second = True
    G_KINDS = ("diff_quadratic", "sum_quadratic", "diff_cosh")

    def __init__(self, n: int, g_kind: str = "diff_quadratic", Q=None):
        super().__init__([n, n, n])
        if g_kind not in self.G_KINDS:
            raise CostError(f"unknown g kind {g_kind!r}")
        self.g_kind = g_kind
        self.n = n
        if g_kind == "diff_cosh":
            self.Q = None
        else:
            self.Q = np.eye(n) if Q is None else np.atleast_2d(np.asarray(Q, dtype=float))
            if self.Q.shape != (n, n) or not np.allclose(self.Q, self.Q.T):
                raise CostError("Q must be symmetric n x n")

    def _sign(self):
        return -1.0 if self.g_kind in ("diff_quadratic", "diff_cosh") else 1.0

    def _d(self, x1, x3):
        return np.asarray(x1, dtype=float) + self._sign() * np.asarray(x3, dtype=float)

    def g_value(self, x1, x3):
        d = self._d(x1, x3)
        if self.g_kind == "diff_cosh":
            return np.cosh(d).sum(axis=-1)
        return 0.5 * np.einsum("...a,ab,...b->...", d, self.Q, d)

    def g_grad(self, x1, x3):
        """(D_{x1} g, D_{x3} g)."""
        d = self._d(x1, x3)
        gd = np.sinh(d) if self.g_kind == "diff_cosh" else self.Q @ d
        return gd, self._sign() * gd

    def g_hess(self, x1, x3):
        """Second derivative of the profile in its argument d."""
        d = self._d(x1, x3)
        return np.diag(np.cosh(d)) if self.g_kind == "diff_cosh" else self.Q

    def value(self, x):
        x = self.check(x)
        x1, x2, x3 = x.coords
        return float(self.g_value(x1, x3) + 0.5 * (x1 - x2) @ (x1 - x2) + 0.5 * (x3 - x2) @ (x3 - x2))

    def gradient(self, i, x):
        x = self.check(x)
        x1, x2, x3 = x.coords
        g1, g3 = self.g_grad(x1, x3)
        if i == 0:
            return g1 + (x1 - x2)
        if i == 1:
            return 2 * x2 - x1 - x3
        return g3 + (x3 - x2)

    def second_differential(self, i, j, x):
        x = self.check(x)
        x1, _, x3 = x.coords
        G = self.g_hess(x1, x3)
        s = self._sign()
        eye = np.eye(self.n)
        table = {
            (0, 0): G + eye,
            (1, 1): 2 * eye,
            (2, 2): G + eye,
            (0, 1): -eye,
            (1, 2): -eye,
            (0, 2): s * G,
        }
        if (i, j) in table:
            M = table[(i, j)]
        else:
            M = table[(j, i)].T
        return DifferentialBlock(i, j, np.array(M, dtype=float))

    def g_mixed(self, x1, x3) -> np.ndarray:
        """D^2_{x1 x3} g."""
        return self._sign() * self.g_hess(x1, x3)

    def cost_tensor(self, point_sets):
        p1, p2, p3 = point_sets
        a, b, c = p1[:, None, None, :], p2[None, :, None, :], p3[None, None, :, :]
        g = self.g_value(a, c)
        return g + 0.5 * ((a - b) ** 2).sum(-1) + 0.5 * ((c - b) ** 2).sum(-1)

    def params(self):
        d = {"g": self.g_kind}
        if self.Q is not None:
            d["Q"] = self.Q.tolist()
        return d


# ---------------------------------------------------------------------------
# hedonic pricing: c(x) = min_z sum_i f_i(x_i, z)


class SeparableSubCost:
    """f(x, z) = x^T (P z + q) + x^T B x / 2 + b^T x + z^T L z / 2 + l^T z.

    ``x . alpha(z) + beta(x) + lambda(z)`` with affine alpha and quadratic
    beta, lambda. The Hessian in x does not depend on z.
    """

    kind = "separable"

    def __init__(self, P, B=None, L=None, q=None, b=None, l=None):
        self.P = np.atleast_2d(np.asarray(P, dtype=float))
        nx, nz = self.P.shape
        self.nx, self.nz = nx, nz
        self.B = np.eye(nx) if B is None else np.atleast_2d(np.asarray(B, dtype=float))
        self.L = np.eye(nz) if L is None else np.atleast_2d(np.asarray(L, dtype=float))
        self.q = np.zeros(nx) if q is None else np.asarray(q, dtype=float)
        self.b = np.zeros(nx) if b is None else np.asarray(b, dtype=float)
        self.l = np.zeros(nz) if l is None else np.asarray(l, dtype=float)
        if self.B.shape != (nx, nx) or self.L.shape != (nz, nz):
            raise CostError("B must be nx x nx and L nz x nz")

    @classmethod
    def quadratic(cls, n: int, W=None) -> "SeparableSubCost":
        """(x - z)^T W (x - z) / 2."""
        W = np.eye(n) if W is None else np.atleast_2d(np.asarray(W, dtype=float))
        return cls(P=-W, B=W, L=W)

    def value(self, x, Z):
        # Z: (k, nz) -> (k,)
        return (
            (Z @ self.P.T + self.q) @ x
            + 0.5 * x @ self.B @ x
            + self.b @ x
            + 0.5 * np.einsum("ka,ab,kb->k", Z, self.L, Z)
            + Z @ self.l
        )

    def grad_x(self, x, z):
        return self.P @ z + self.q + self.B @ x + self.b

    def grad_z(self, x, z):
        return self.P.T @ x + self.L @ z + self.l

    def hess_xx(self, x, z):
        return self.B

    def hess_xz(self, x, z):
        return self.P

    def hess_zz(self, x, z):
        return self.L

    def params(self):
        return {
            "kind": self.kind,
            "P": self.P.tolist(),
            "B": self.B.tolist(),
            "L": self.L.tolist(),
            "q": self.q.tolist(),
            "b": self.b.tolist(),
            "l": self.l.tolist(),
        }


class QuarticSubCost:
    """f(x, z) = |x - z|^2 / 2 + kappa * sum_k x_k^2 z_k^2 / 2 (convex in z for kappa >= 0)."""

    kind = "quartic"

    def __init__(self, n: int, kappa: float = 0.5):
        self.nx = self.nz = int(n)
        self.kappa = float(kappa)
        if self.kappa < 0:
            raise CostError("kappa must be nonnegative")

    def value(self, x, Z):
        return 0.5 * ((x - Z) ** 2).sum(-1) + 0.5 * self.kappa * ((x * Z) ** 2).sum(-1)

    def grad_x(self, x, z):
        return (x - z) + self.kappa * x * z**2

    def grad_z(self, x, z):
        return (z - x) + self.kappa * x**2 * z

    def hess_xx(self, x, z):
        return np.diag(1.0 + self.kappa * z**2)

    def hess_xz(self, x, z):
        return np.diag(-1.0 + 2.0 * self.kappa * x * z)

    def hess_zz(self, x, z):
        return np.diag(1.0 + self.kappa * x**2)

    def params(self):
        return {"kind": self.kind, "n": self.nx, "kappa": self.kappa}


def subcost_from_dict(d: dict):
    kind = d.get("kind", "separable")
    if kind == "separable":
        return SeparableSubCost(d["P"], d.get("B"), d.get("L"), d.get("q"), d.get("b"), d.get("l"))
    if kind == "quadratic":
        return SeparableSubCost.quadratic(int(d["n"]), d.get("W"))
    if kind == "quartic":
        return QuarticSubCost(int(d["n"]), d.get("kappa", 0.5))
    raise CostError(f"unknown hedonic component kind {kind!r}")


@dataclass(frozen=True)
class InnerSolution:
    z: np.ndarray
    value: float
    A: np.ndarray


class HedonicCost(CostModel):
    """c(x) = inf_{z in Z} sum_i f_i(x_i, z), derivatives by the envelope formulas.

    The inner minimum is found by a grid search over the z box followed by
    Newton refinement from every discrete local minimum of the grid. Two
    distinct refined minimizers whose values differ by less than
    ``separation_tol`` raise ``InnerMinimizationError``, as does a minimizer on
    the boundary of the box or a singular ``A = sum_i D^2_zz f_i``.
    """

    family = "hedonic"
    analytic_gradient = True
    analytic_second = True

    def __init__(
        self,
        z_box: DomainBox,
        components,
        grid: int = 33,
        newton_iters: int = 50,
        newton_tol: float = 1e-13,
        separation_tol: float = 1e-9,
        definiteness_tol: float = 1e-12,
        max_starts: int = 5,
    ):
        super().__init__([f.nx for f in components])
        self.z_box = z_box
        self.components = list(components)
        if any(f.nz != z_box.dim for f in self.components):
            raise CostError("every component must share the z dimension of z_box")
        self.grid = int(grid)
        self.newton_iters = newton_iters
        self.newton_tol = newton_tol
        self.separation_tol = separation_tol
        self.definiteness_tol = definiteness_tol
        self.max_starts = max_starts
        axes = [np.linspace(lo, hi, self.grid) for lo, hi in zip(z_box.lower, z_box.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        self._grid_shape = mesh[0].shape
        self._Z = np.stack([g.ravel() for g in mesh], axis=1)

    def _objective(self, coords, Z):
        return sum(f.value(x, Z) for f, x in zip(self.components, coords))

    def _grad_z(self, coords, z):
        return sum(f.grad_z(x, z) for f, x in zip(self.components, coords))

    def _A(self, coords, z):
        return sum(np.atleast_2d(f.hess_zz(x, z)) for f, x in zip(self.components, coords))

    def _grid_local_minima(self, vals):
        V = vals.reshape(self._grid_shape)
        is_min = np.ones(V.shape, dtype=bool)
        for ax in range(V.ndim):
            pad = [(0, 0)] * V.ndim
            pad[ax] = (1, 1)
            P = np.pad(V, pad, constant_values=np.inf)
            lo = np.take(P, range(0, V.shape[ax]), axis=ax)
            hi = np.take(P, range(2, V.shape[ax] + 2), axis=ax)
            is_min &= (V <= lo) & (V <= hi)
        idx = np.flatnonzero(is_min.ravel())
        return idx[np.argsort(vals[idx], kind="stable")][: self.max_starts]

    def _newton(self, coords, z):
        for _ in range(self.newton_iters):
            g = self._grad_z(coords, z)
            A = self._A(coords, z)
            try:
                step = np.linalg.solve(A, g)
            except np.linalg.LinAlgError:
                step = g
            f0 = self._objective(coords, z[None, :])[0]
            t = 1.0
            while t > 1e-8:
                z_new = z - t * step
                if self._objective(coords, z_new[None, :])[0] <= f0 + 1e-15 * (1 + abs(f0)):
                    break
                t *= 0.5
            z = z_new
            if np.linalg.norm(t * step) <= self.newton_tol * (1 + np.linalg.norm(z)):
                break
        return z

    def inner_minimize(self, x) -> InnerSolution:
        coords = self.check(x).coords
        vals = self._objective(coords, self._Z)
        found = []
        for k in self._grid_local_minima(vals):
            z = self._newton(coords, self._Z[k].copy())
            v = float(self._objective(coords, z[None, :])[0])
            if not any(np.linalg.norm(z - z2) < 1e-6 for z2, _ in found):
                found.append((z, v))
        found.sort(key=lambda t: t[1])
        z, v = found[0]
        if len(found) > 1 and found[1][1] - v < self.separation_tol:
            raise InnerMinimizationError(
                f"inner minimizer not unique: z={z} and z={found[1][0]} within {self.separation_tol}"
            )
        span = self.z_box.upper - self.z_box.lower
        if np.any(z <= self.z_box.lower + 1e-9 * span) or np.any(z >= self.z_box.upper - 1e-9 * span):
            raise InnerMinimizationError(f"inner minimizer z={z} lies on the boundary of the z box")
        A = self._A(coords, z)
        if np.linalg.eigvalsh(0.5 * (A + A.T)).min() <= self.definiteness_tol:
            raise InnerMinimizationError(f"sum of z-Hessians is not positive definite at z={z}")
        return InnerSolution(z, v, A)

    def value(self, x):
        return self.inner_minimize(x).value

    def gradient(self, i, x):
        x = self.check(x)
        z = self.inner_minimize(x).z
        return np.asarray(self.components[i].grad_x(x[i], z), dtype=float)

    def second_differential(self, i, j, x):
        x = self.check(x)
        sol = self.inner_minimize(x)
        fi, fj = self.components[i], self.components[j]
        Bi = np.atleast_2d(fi.hess_xz(x[i], sol.z))
        Bj = np.atleast_2d(fj.hess_xz(x[j], sol.z))
        M = -Bi @ np.linalg.solve(sol.A, Bj.T)
        if i == j:
            M = M + np.atleast_2d(fi.hess_xx(x[i], sol.z))
        return DifferentialBlock(i, j, M)

    def params(self):
        return {
            "z_lower": self.z_box.lower.tolist(),
            "z_upper": self.z_box.upper.tolist(),
            "grid": self.grid,
            "components": [f.params() for f in self.components],
        }


# ---------------------------------------------------------------------------
# construction


FAMILIES = ("concave_of_sum", "concave_of_sum_perturbed", "bilinear", "g_plus_quadratic", "hedonic")


def _profile(params: dict, n: int):
    kind = params.get("h", "quadratic")
    if kind == "quadratic":
        return QuadraticProfile(params.get("Q", -np.eye(n)))
    if kind == "neg_exp":
        return NegExpProfile(n)
    raise CostError(f"unknown profile {kind!r}")


def builtin_cost(family: str, m: int | None = None, dims=None, params: dict | None = None) -> CostModel:
    """Build one of the builtin cost families from plain parameters."""
    params = dict(params or {})
    if family not in FAMILIES:
        raise CostError(f"unknown cost family {family!r}; expected one of {FAMILIES}")
    if family in ("concave_of_sum", "concave_of_sum_perturbed"):
        m = 3 if m is None else m
        n = dims[0] if dims else 1
        if dims and len(set(dims)) != 1:
            raise CostError("concave_of_sum needs equal dimensions")
        profile = _profile(params, n)
        if family == "concave_of_sum":
            return ConcaveOfSum(m, n, profile)
        pert = params.get("perturbation", {"kind": "sine"})
        if pert.get("kind", "sine") != "sine":
            raise CostError("only the sine perturbation is available from parameters")
        weights = pert.get("weights")
        if weights is None:
            from .geometry import make_rng

            rng = make_rng(int(pert.get("seed", 0)), stream=3)
            weights = [rng.normal(size=n) for _ in range(m)]
        return ConcaveOfSum(m, n, profile, SinePerturbation(weights), params.get("epsilon", 0.1))
    if family == "bilinear":
        if "normal_form_A" in params:
            return bilinear_normal_form(params["normal_form_A"])
        if dims is None:
            raise CostError("bilinear needs dims")
        blocks = {(b["i"], b["j"]): b["matrix"] for b in params.get("blocks", [])}
        return BilinearCost(dims, blocks)
    if family == "g_plus_quadratic":
        n = dims[0] if dims else 1
        return GPlusQuadratic(n, params.get("g", "diff_quadratic"), params.get("Q"))
    # hedonic
    comps = [subcost_from_dict(d) for d in params["components"]]
    box = DomainBox(params["z_lower"], params["z_upper"])
    return HedonicCost(box, comps, grid=params.get("grid", 33))


def cost_from_dict(d: dict) -> CostModel:
    c = builtin_cost(d["family"], d.get("m"), d.get("dims"), d.get("params"))
    if d.get("m") is not None and c.m != int(d["m"]):
        raise CostError(f"cost declares m={d['m']} but parameters give m={c.m}")
    if d.get("dims") is not None and c.dims != [int(v) for v in d["dims"]]:
        raise CostError(f"cost declares dims={d['dims']} but parameters give {c.dims}")
    return c


def eval_cost(c: CostModel, x) -> float:
    return c.value(x)


def gradient(c: CostModel, i: int, x) -> np.ndarray:
    return c.gradient(i, x)


def second_differential(c: CostModel, i: int, j: int, x) -> DifferentialBlock:
    return c.second_differential(i, j, x)
