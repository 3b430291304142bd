"""Domain boxes, discrete marginals and seeded samplers.

Randomness goes through numpy's counter-based Philox bit generator keyed by
the seed, so nothing here touches global RNG state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

WEIGHT_TOL = 1e-12


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Philox generator keyed by ``(seed, stream)``."""
    return np.random.Generator(np.random.Philox(key=[int(seed) & (2**64 - 1), int(stream)]))


@dataclass(frozen=True)
class DomainBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float)).copy()
        if lo.ndim != 1 or lo.shape != hi.shape or lo.size == 0:
            raise ValueError("lower and upper must be non-empty vectors of equal length")
        if not np.all(lo < hi):
            raise ValueError(f"box needs lower < upper componentwise, got {lo} / {hi}")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @classmethod
    def unit(cls, dim: int = 1) -> "DomainBox":
        return cls(np.zeros(dim), np.ones(dim))

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def sample(self, rng: np.random.Generator, size=None, open_box: bool = False) -> np.ndarray:
        shape = (self.dim,) if size is None else (size, self.dim)
        u = rng.random(shape)
        if open_box:
            # rng.random is in [0, 1); push exact zeros off the boundary
            u = np.where(u == 0.0, 0.5, u)
        return self.lower + (self.upper - self.lower) * u

    def to_dict(self) -> dict:
        return {"dim": self.dim, "lower": self.lower.tolist(), "upper": self.upper.tolist()}


@dataclass(frozen=True)
class DiscreteMarginal:
    """Finitely supported probability measure on a box.

    ``points`` has shape (n, dim); ``weights`` sums to one.
    """

    box: DomainBox
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1) if self.box.dim == 1 else pts.reshape(1, -1)
        pts = pts.copy()
        w = np.asarray(self.weights, dtype=float).ravel().copy()
        if pts.ndim != 2 or pts.shape[1] != self.box.dim:
            raise ValueError(f"points must have shape (n, {self.box.dim}), got {pts.shape}")
        if pts.shape[0] != w.size or w.size == 0:
            raise ValueError("need one weight per point and at least one point")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {w.sum()!r}, expected 1")
        for k, p in enumerate(pts):
            if not self.box.contains(p):
                raise ValueError(f"point {k} = {p} lies outside the box")
        if len({tuple(p) for p in pts}) != len(pts):
            raise ValueError("duplicate support atoms are not allowed")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.box.dim

    def is_uniform(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self.weights - 1.0 / self.n) <= tol))

    def permuted(self, perm) -> "DiscreteMarginal":
        perm = np.asarray(perm)
        return DiscreteMarginal(self.box, self.points[perm], self.weights[perm])

    def to_dict(self) -> dict:
        d = self.box.to_dict()
        d["points"] = self.points.tolist()
        d["weights"] = self.weights.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DiscreteMarginal":
        box = DomainBox(d["lower"], d["upper"])
        if "dim" in d and int(d["dim"]) != box.dim:
            raise ValueError(f"dim {d['dim']} does not match box dimension {box.dim}")
        return cls(box, np.asarray(d["points"], dtype=float), np.asarray(d["weights"], dtype=float))


@dataclass(frozen=True)
class ProductConfiguration:
    """A point (x_1, ..., x_m) of the product space. Marginal indices are 0-based."""

    coords: tuple = field(default_factory=tuple)

    def __post_init__(self):
        cs = []
        for c in self.coords:
            a = np.atleast_1d(np.asarray(c, dtype=float)).copy()
            a.setflags(write=False)
            cs.append(a)
        object.__setattr__(self, "coords", tuple(cs))

    @property
    def m(self) -> int:
        return len(self.coords)

    @property
    def dims(self) -> list[int]:
        return [c.size for c in self.coords]

    def __getitem__(self, i: int) -> np.ndarray:
        return self.coords[i]

    def replace(self, i: int, value) -> "ProductConfiguration":
        cs = list(self.coords)
        cs[i] = value
        return ProductConfiguration(tuple(cs))

    def flat(self) -> np.ndarray:
        return np.concatenate(self.coords)

    def tolist(self) -> list[list[float]]:
        return [c.tolist() for c in self.coords]


def sample_configuration(domains, seed: int, open_box: bool = False) -> ProductConfiguration:
    """Uniform point of the product of ``domains``; deterministic in ``seed``."""
    if not domains:
        raise ValueError("need at least one domain")
    rng = make_rng(seed)
    return ProductConfiguration(tuple(box.sample(rng, open_box=open_box) for box in domains))


def uniform_marginal(box: DomainBox, n: int, seed: int) -> DiscreteMarginal:
    """``n`` distinct uniform points in ``box``, each with weight 1/n."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = make_rng(seed, stream=1)
    pts = box.sample(rng, size=n)
    # continuous draws collide with probability zero; redraw to be safe
    while len({tuple(p) for p in pts}) != n:
        pts = box.sample(rng, size=n)
    return DiscreteMarginal(box, pts, np.full(n, 1.0 / n))


def dirichlet_marginal(box: DomainBox, n: int, seed: int, alpha: float = 1.0) -> DiscreteMarginal:
    """Uniform points with Dirichlet(alpha) weights."""
    base = uniform_marginal(box, n, seed)
    rng = make_rng(seed, stream=2)
    w = rng.dirichlet(np.full(n, alpha))
    w = w / w.sum()
    return DiscreteMarginal(box, base.points, w)
