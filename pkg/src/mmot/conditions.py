"""Structural conditions on a cost: twist, non-degeneracy and negativity of T.

The first factor is index 0 and the last is ``m - 1``; the "middle" factors
are ``1 .. m-2``. Checks are sampling evidence over seeded configurations, so
a pass is never a proof.

Matrix convention for T
-----------------------
T is a bilinear form on the product of the middle tangent spaces. The stored
matrix composes the mixed blocks as ``D_{i,0} (D_{m-1,0})^-1 D_{m-1,j}``,
which is the transpose of the literal product
``D_{i,m-1} (D_{0,m-1})^-1 D_{0,j}``. Both give the same quadratic form
``v^T T v``; with this ordering the three-marginal bilinear normal form
``x1.x2 + x1.x3 + x2^T A x3`` yields ``T = A^T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .costs import CostModel, as_config
from .geometry import DomainBox, ProductConfiguration, make_rng

DET_TOL = 1e-10
TWIST_TOL = 1e-8
NEGDEF_MARGIN = 0.0
SAMPLING_NOTE = "sampling evidence over seeded configurations, not a proof"


class SingularBlockError(RuntimeError):
    def __init__(self, det: float, where):
        super().__init__(f"D^2_(x_first, x_last) c is singular (det = {det:.3e}) at {where}")
        self.det = det
        self.where = where


@dataclass
class ConditionReport:
    condition: str
    samples_tested: int
    verdict: str
    worst_value: float
    witness: list | None = None
    note: str = SAMPLING_NOTE
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "verdict": self.verdict,
            "samples_tested": self.samples_tested,
            "worst_value": self.worst_value,
            "witness": self.witness,
            "note": self.note,
            **({"details": self.details} if self.details else {}),
        }


@dataclass
class TensorAssembly:
    base: ProductConfiguration
    companions: list
    S: np.ndarray
    H: np.ndarray
    T: np.ndarray
    # offsets of the middle blocks inside S, H, T
    slices: list

    def block(self, name: str, i: int, j: int) -> np.ndarray:
        """Block (i, j) of S, H or T for middle factors i, j (1..m-2)."""
        M = getattr(self, name)
        return M[self.slices[i - 1], self.slices[j - 1]]

    def max_symmetric_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.T + self.T.T)).max())


def _default_domains(c: CostModel, domains):
    if domains is None:
        return [DomainBox.unit(d) for d in c.dims]
    if len(domains) != c.m or [b.dim for b in domains] != c.dims:
        raise ValueError("domains must match the cost's marginal count and dimensions")
    return list(domains)


def _witness(*configs):
    return [cfg.tolist() for cfg in configs]


def check_nondegenerate(
    c: CostModel, i: int, j: int, samples: int = 100, seed: int = 0, domains=None, det_tol: float = DET_TOL
) -> ConditionReport:
    """Minimum of |det D^2_{x_i x_j} c| over sampled configurations."""
    if c.dims[i] != c.dims[j]:
        return ConditionReport(
            "nondegeneracy", 0, "fail", 0.0, None, details={"reason": "block is not square", "i": i, "j": j}
        )
    domains = _default_domains(c, domains)
    rng = make_rng(seed, stream=21)
    worst, witness = np.inf, None
    for _ in range(samples):
        x = ProductConfiguration(tuple(b.sample(rng) for b in domains))
        d = abs(float(np.linalg.det(c.second_differential(i, j, x).matrix)))
        if d < worst:
            worst, witness = d, x
    verdict = "fail" if worst < det_tol else "pass"
    return ConditionReport(
        "nondegeneracy", samples, verdict, float(worst), _witness(witness), details={"i": i, "j": j, "det_tol": det_tol}
    )


def check_twist(
    c: CostModel,
    i: int,
    j: int,
    samples: int = 50,
    pairs_per_sample: int = 4,
    seed: int = 0,
    domains=None,
    twist_tol: float = TWIST_TOL,
) -> ConditionReport:
    """Injectivity of x_j -> D_{x_i} c over sampled pairs.

    worst_value is the smallest ratio |D_{x_i}c(.., x_j, ..) - D_{x_i}c(.., x_j', ..)| / |x_j - x_j'|.
    """
    domains = _default_domains(c, domains)
    rng = make_rng(seed, stream=22)
    worst, witness = np.inf, None
    for _ in range(samples):
        x = ProductConfiguration(tuple(b.sample(rng) for b in domains))
        for _ in range(pairs_per_sample):
            a, b = domains[j].sample(rng), domains[j].sample(rng)
            dist = np.linalg.norm(a - b)
            if dist == 0:
                continue
            xa, xb = x.replace(j, a), x.replace(j, b)
            ratio = float(np.linalg.norm(c.gradient(i, xa) - c.gradient(i, xb)) / dist)
            if ratio < worst:
                worst, witness = ratio, (xa, xb)
    verdict = "fail" if worst < twist_tol else "pass"
    return ConditionReport(
        "twist",
        samples * pairs_per_sample,
        verdict,
        float(worst),
        _witness(*witness) if witness else None,
        details={"i": i, "j": j, "twist_tol": twist_tol},
    )


def _blocks(c: CostModel, x):
    cache = {}

    def D(i, j):
        if (i, j) not in cache:
            if (j, i) in cache and i != j:
                cache[(i, j)] = cache[(j, i)].T
            else:
                cache[(i, j)] = c.second_differential(i, j, x).matrix
        return cache[(i, j)]

    return D


def assemble_T(c: CostModel, base, companions, det_tol: float = DET_TOL) -> TensorAssembly:
    """S, H and T = S + H at ``base`` with companion points for each middle factor.

    ``companions[k]`` belongs to middle factor ``k + 1`` and must agree with
    ``base`` in that coordinate.
    """
    base = as_config(base)
    m = c.m
    if m < 3:
        raise ValueError("T needs at least three marginals")
    companions = [as_config(y) for y in companions]
    if len(companions) != m - 2:
        raise ValueError(f"need {m - 2} companion configurations, got {len(companions)}")
    for k, y in enumerate(companions):
        if not np.array_equal(y[k + 1], base[k + 1]):
            raise ValueError(f"companion for factor {k + 1} must share coordinate {k + 1} with the base")
    first, last = 0, m - 1
    D = _blocks(c, base)
    K = D(last, first)
    det = float(np.linalg.det(K)) if K.shape[0] == K.shape[1] else 0.0
    if abs(det) <= det_tol:
        raise SingularBlockError(det, base.tolist())
    mids = list(range(1, m - 1))
    sizes = [c.dims[i] for i in mids]
    offs = np.concatenate([[0], np.cumsum(sizes)])
    slices = [slice(int(offs[k]), int(offs[k + 1])) for k in range(len(mids))]
    N = int(offs[-1])
    S = np.zeros((N, N))
    H = np.zeros((N, N))
    for a, i in enumerate(mids):
        left = D(i, first) @ np.linalg.inv(K)
        for b, j in enumerate(mids):
            blk = left @ D(last, j)
            if i != j:
                blk = blk - D(i, j)
            S[slices[a], slices[b]] = blk
        H[slices[a], slices[a]] = (
            c.second_differential(i, i, companions[a]).matrix - D(i, i)
        )
    return TensorAssembly(base, companions, S, H, S + H, slices)


def sample_T_inputs(domains, rng):
    """Base in the open product, companions in the closed product sharing one coordinate each."""
    m = len(domains)
    base = ProductConfiguration(tuple(b.sample(rng, open_box=True) for b in domains))
    comps = []
    for i in range(1, m - 1):
        y = ProductConfiguration(tuple(b.sample(rng) for b in domains))
        comps.append(y.replace(i, base[i]))
    return base, comps


def scan_T_negative(
    c: CostModel,
    samples: int = 100,
    seed: int = 0,
    domains=None,
    margin: float = NEGDEF_MARGIN,
) -> ConditionReport:
    """Largest eigenvalue of (T + T^T)/2 over sampled (base, companions)."""
    if c.m < 3:
        raise ValueError("T needs at least three marginals")
    domains = _default_domains(c, domains)
    rng = make_rng(seed, stream=23)
    worst, witness = -np.inf, None
    h_worst = -np.inf
    for _ in range(samples):
        base, comps = sample_T_inputs(domains, rng)
        asm = assemble_T(c, base, comps)
        lam = asm.max_symmetric_eigenvalue()
        h_worst = max(h_worst, float(np.linalg.eigvalsh(0.5 * (asm.H + asm.H.T)).max()))
        if lam > worst:
            worst, witness = lam, (base, *comps)
    verdict = "fail" if worst > -margin else "pass"
    return ConditionReport(
        "tensor_T",
        samples,
        verdict,
        float(worst),
        _witness(*witness),
        details={"margin": margin, "max_H_eigenvalue": h_worst},
    )


def hessian_part_bound(c: CostModel, samples: int = 100, seed: int = 0, domains=None) -> float:
    """Largest eigenvalue of the symmetrized H part seen over a scan.

    The H part depends on companion points that a finite computation cannot
    locate, so the segment certificate reports this bound separately.
    """
    return scan_T_negative(c, samples, seed, domains).details["max_H_eigenvalue"]


# ---------------------------------------------------------------------------
# segment certificate


class NewtonFailure(RuntimeError):
    pass


def solve_last_coordinate(c: CostModel, x1, middle, target_grad, guess, iters: int = 50, tol: float = 1e-12):
    """Solve D_{x_first} c(x1, middle..., x_last) = target_grad for x_last by Newton."""
    last = c.m - 1
    z = np.array(guess, dtype=float)
    for _ in range(iters):
        cfg = ProductConfiguration((x1, *middle, z))
        r = c.gradient(0, cfg) - target_grad
        J = c.second_differential(0, last, cfg).matrix
        try:
            step = np.linalg.solve(J, r)
        except np.linalg.LinAlgError as exc:
            raise NewtonFailure(f"singular D^2_(x_first, x_last) c at {cfg.tolist()}") from exc
        z = z - step
        if np.linalg.norm(step) <= tol * (1 + np.linalg.norm(z)):
            cfg = ProductConfiguration((x1, *middle, z))
            if np.linalg.norm(c.gradient(0, cfg) - target_grad) > 1e-8 * (1 + np.linalg.norm(target_grad)):
                break
            return z
    raise NewtonFailure("Newton iteration for the last coordinate did not converge")


def _grid_guess(c: CostModel, x1, middle, target_grad, box: DomainBox, per_dim: int = 21):
    axes = [np.linspace(lo, hi, per_dim) for lo, hi in zip(box.lower, box.upper)]
    best, arg = np.inf, None
    for z in np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1):
        r = np.linalg.norm(c.gradient(0, ProductConfiguration((x1, *middle, z))) - target_grad)
        if r < best:
            best, arg = r, z
    return arg


def segment_certificate(
    c: CostModel,
    x1,
    u1_grad,
    start,
    end,
    steps: int = 64,
    last_guess=None,
    last_box: DomainBox | None = None,
) -> float:
    """Midpoint-rule value of int_0^1 S(x1, gamma(t), F(gamma(t))) <gamma', gamma'> dt.

    gamma runs along straight segments from ``start`` to ``end`` (one vector
    per middle factor); the last coordinate is tracked by Newton on
    D_{x_first} c = ``u1_grad``, warm-started from the previous node. The
    first node starts from ``last_guess`` or, failing that, a grid search
    over ``last_box``. A negative value certifies that the two endpoints
    cannot both be coupled to ``x1``, up to the H part that is bounded
    separately.
    """
    m = c.m
    if m < 3:
        raise ValueError("the certificate needs at least three marginals")
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    g = np.atleast_1d(np.asarray(u1_grad, dtype=float))
    start = [np.atleast_1d(np.asarray(v, dtype=float)) for v in start]
    end = [np.atleast_1d(np.asarray(v, dtype=float)) for v in end]
    if len(start) != m - 2 or len(end) != m - 2:
        raise ValueError(f"start and end need {m - 2} middle coordinates")
    vel = np.concatenate([e - s for s, e in zip(start, end)])
    if not np.any(vel):
        return 0.0
    if last_guess is None:
        if last_box is None:
            last_box = DomainBox.unit(c.dims[-1])
        last_guess = _grid_guess(c, x1, start, g, last_box)
    z = np.asarray(last_guess, dtype=float)
    total = 0.0
    for k in range(steps):
        t = (k + 0.5) / steps
        middle = [(1 - t) * s + t * e for s, e in zip(start, end)]
        z = solve_last_coordinate(c, x1, middle, g, z)
        base = ProductConfiguration((x1, *middle, z))
        # companions equal to the base give H = 0, i.e. T reduces to S
        asm = assemble_T(c, base, [base] * (m - 2))
        total += float(vel @ asm.S @ vel)
    return total / steps
