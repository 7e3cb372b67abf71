"""Truncated dyadic systems, weights, leaf-constant vector functions.

A system is the complete b-ary tree of depth N rooted at Q0, with an optional
active mask selecting an arbitrary nonempty subset of cubes; operators and
suprema only see active cubes. Cubes are enumerated level by level; the cube
at (level, index) has id offsets[level] + index and covers the contiguous
leaf range [index * b^(N-level), (index+1) * b^(N-level)).

Conventions (used throughout): averages over mu-null cubes are 0, and null
or inactive cubes are skipped in every supremum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .lattice import INF, LatticeSpace


class DyadicSystem:
    def __init__(self, depth: int, branching: int = 2, active=None):
        if depth < 0 or branching < 2:
            raise ValueError("need depth >= 0 and branching >= 2")
        self.depth = depth
        self.branching = branching
        b = branching
        self.offsets = np.array([(b ** l - 1) // (b - 1) for l in range(depth + 2)],
                                dtype=np.int64)
        self.n_cubes = int(self.offsets[depth + 1])
        self.n_leaves = b ** depth
        self.level = np.concatenate([np.full(b ** l, l, dtype=np.int64)
                                     for l in range(depth + 1)])
        self.index = np.concatenate([np.arange(b ** l, dtype=np.int64)
                                     for l in range(depth + 1)])
        # ancestor chain per leaf, root first
        leaves = np.arange(self.n_leaves, dtype=np.int64)
        self.anc = np.empty((self.n_leaves, depth + 1), dtype=np.int64)
        for l in range(depth + 1):
            self.anc[:, l] = self.offsets[l] + leaves // (b ** (depth - l))
        self.parent = np.full(self.n_cubes, -1, dtype=np.int64)
        for l in range(1, depth + 1):
            ids = np.arange(self.offsets[l], self.offsets[l + 1])
            self.parent[ids] = self.offsets[l - 1] + (ids - self.offsets[l]) // b
        if active is None:
            self.active = np.ones(self.n_cubes, dtype=bool)
        else:
            self.active = np.zeros(self.n_cubes, dtype=bool)
            self.active[np.asarray(active, dtype=np.int64)] = True
            if not self.active.any():
                raise ValueError("active mask must contain at least one cube")
        self._descend_cache: dict[int, np.ndarray] = {}

    # -- geometry ----------------------------------------------------------
    def cube_id(self, level: int, index: int) -> int:
        if not (0 <= level <= self.depth) or not (0 <= index < self.branching ** level):
            raise ValueError(f"no cube at level={level} index={index}")
        return int(self.offsets[level] + index)

    @property
    def root(self) -> int:
        return 0

    def children(self, q: int) -> np.ndarray:
        l, i = int(self.level[q]), int(self.index[q])
        if l == self.depth:
            return np.empty(0, dtype=np.int64)
        base = self.offsets[l + 1] + i * self.branching
        return np.arange(base, base + self.branching, dtype=np.int64)

    def leaf_range(self, q: int) -> tuple[int, int]:
        l, i = int(self.level[q]), int(self.index[q])
        span = self.branching ** (self.depth - l)
        return i * span, (i + 1) * span

    def descend_mask(self, q: int) -> np.ndarray:
        """Boolean mask over cubes Q with Q contained in q."""
        m = self._descend_cache.get(q)
        if m is None:
            l, i = int(self.level[q]), int(self.index[q])
            shift = self.branching ** np.maximum(self.level - l, 0)
            m = (self.level >= l) & (self.index // shift == i)
            self._descend_cache[q] = m
        return m

    def contains(self, q: int, r: int) -> bool:
        """True if cube q contains cube r."""
        lq, lr = int(self.level[q]), int(self.level[r])
        if lq > lr:
            return False
        return int(self.index[r]) // self.branching ** (lr - lq) == int(self.index[q])

    def minimal_active(self) -> np.ndarray:
        """Active cubes with no active strict descendant."""
        out = []
        for q in np.nonzero(self.active)[0]:
            m = self.descend_mask(q) & self.active
            m[q] = False
            if not m.any():
                out.append(q)
        return np.asarray(out, dtype=np.int64)

    def label(self, q: int) -> str:
        return f"{int(self.level[q])}:{int(self.index[q])}"

    def parse_label(self, s: str) -> int:
        l, i = s.split(":")
        return self.cube_id(int(l), int(i))

    def to_json(self) -> dict:
        out = {"depth": self.depth, "branching": self.branching}
        if not self.active.all():
            out["active"] = [self.label(q) for q in np.nonzero(self.active)[0]]
        return out

    @staticmethod
    def from_json(obj: dict) -> "DyadicSystem":
        sys_ = DyadicSystem(int(obj["depth"]), int(obj.get("branching", 2)))
        if "active" in obj:
            ids = [sys_.parse_label(s) for s in obj["active"]]
            return DyadicSystem(sys_.depth, sys_.branching, active=ids)
        return sys_


class Weight:
    """Nonnegative masses on the leaves; cube masses are the leaf sums."""

    def __init__(self, system: DyadicSystem, leaf_masses):
        m = np.asarray(leaf_masses, dtype=float)
        if m.shape != (system.n_leaves,):
            raise ValueError("need one mass per leaf")
        if (m < 0).any():
            raise ValueError("masses must be nonnegative")
        self.system = system
        self.leaf_masses = m
        self._cube_masses = None

    @property
    def cube_masses(self) -> np.ndarray:
        if self._cube_masses is None:
            s = self.system
            self._cube_masses = kernels.cube_sums(
                self.leaf_masses[:, None], s.branching, s.depth, s.offsets)[:, 0]
        return self._cube_masses

    @staticmethod
    def lebesgue(system: DyadicSystem) -> "Weight":
        """Uniform masses b^-N (total mass 1 on the unit root cube)."""
        return Weight(system, np.full(system.n_leaves, 1.0 / system.n_leaves))


def measure(w: Weight, q: int) -> float:
    return float(w.cube_masses[q])


@dataclass
class CubeFunction:
    """Leaf-constant function with values in a lattice space."""

    system: DyadicSystem
    space: LatticeSpace
    values: np.ndarray  # (n_leaves, dim)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape != (self.system.n_leaves, self.space.dim):
            raise ValueError("values must be (n_leaves, dim)")
        self.values = v

    @staticmethod
    def constant(system, space, vec) -> "CubeFunction":
        return CubeFunction(system, space,
                            np.tile(np.asarray(vec, float), (system.n_leaves, 1)))

    def leaf_norms(self) -> np.ndarray:
        return self.space.norms_rows(self.values)


def _scalar_space() -> LatticeSpace:
    return LatticeSpace(1, 2.0)


def scalar_function(system, values) -> CubeFunction:
    return CubeFunction(system, _scalar_space(), np.asarray(values, float))


def cube_integrals(f: CubeFunction, w: Weight) -> np.ndarray:
    """int_Q f dmu for every cube, shape (n_cubes, dim)."""
    s = f.system
    return kernels.cube_sums(w.leaf_masses[:, None] * f.values,
                             s.branching, s.depth, s.offsets)


def averages_all(f: CubeFunction, w: Weight) -> np.ndarray:
    """<f>^mu_Q for every cube; 0 rows on mu-null cubes."""
    ints = cube_integrals(f, w)
    m = w.cube_masses
    out = np.zeros_like(ints)
    pos = m > 0
    out[pos] = ints[pos] / m[pos, None]
    return out


def average(f: CubeFunction, w: Weight, q: int) -> np.ndarray:
    return averages_all(f, w)[q]


def eligible_cubes(sys_: DyadicSystem, w: Weight) -> np.ndarray:
    """Active cubes of positive mass: the ones entering suprema."""
    return sys_.active & (w.cube_masses > 0)


def lattice_maximal(f: CubeFunction, w: Weight, R: int | None = None) -> CubeFunction:
    """Lattice maximal function: componentwise max of averages over active
    cubes of positive mass containing each point (restricted to Q within R
    when given, supported on R)."""
    s = f.system
    avgs = averages_all(f, w)
    elig = eligible_cubes(s, w)
    if R is not None:
        elig = elig & s.descend_mask(R)
    vals = kernels.max_over_ancestors(avgs, elig, s.anc)
    if R is not None:
        lo, hi = s.leaf_range(R)
        mask = np.zeros(s.n_leaves, dtype=bool)
        mask[lo:hi] = True
        vals = np.where(mask[:, None], vals, 0.0)
    return CubeFunction(s, f.space, vals)


def scalar_maximal(h, w: Weight, R: int | None = None) -> np.ndarray:
    """Real-valued dyadic maximal function of a leaf array."""
    s = w.system
    f = scalar_function(s, h)
    return lattice_maximal(f, w, R).values[:, 0]


def ratio_maximal(sigma: Weight, omega: Weight, R: int) -> np.ndarray:
    """sup over active Q within R with omega(Q) > 0 of sigma(Q)/omega(Q),
    per leaf, supported on R; 0 where no eligible cube."""
    s = sigma.system
    elig = s.active & s.descend_mask(R) & (omega.cube_masses > 0)
    ratios = np.zeros((s.n_cubes, 1))
    pos = omega.cube_masses > 0
    ratios[pos, 0] = sigma.cube_masses[pos] / omega.cube_masses[pos]
    vals = kernels.max_over_ancestors(ratios, elig, s.anc)[:, 0]
    lo, hi = s.leaf_range(R)
    out = np.zeros(s.n_leaves)
    out[lo:hi] = vals[lo:hi]
    return out


def finest_averaging(f: CubeFunction, w: Weight) -> CubeFunction:
    """Replace f by its averages over the minimal active cubes."""
    s = f.system
    avgs = averages_all(f, w)
    out = np.zeros_like(f.values)
    for q in s.minimal_active():
        lo, hi = s.leaf_range(q)
        out[lo:hi] = avgs[q]
    return CubeFunction(s, f.space, out)


def lp_norm(f: CubeFunction, p: float, w: Weight) -> float:
    """L^p norm of |f|_E against the weight; p = inf is the essential sup."""
    if p < 1:
        raise ValueError("p must lie in [1, inf]")
    norms = f.leaf_norms()
    m = w.leaf_masses
    if p == INF:
        sel = norms[m > 0]
        return float(sel.max()) if sel.size else 0.0
    return float(np.sum(m * norms ** p) ** (1.0 / p))


def lp_norm_scalar(values, p: float, w: Weight) -> float:
    return lp_norm(scalar_function(w.system, values), p, w)


def chain_sup_averages(f: CubeFunction, w: Weight) -> np.ndarray:
    """Per cube: lattice sup of <f>_Q over eligible Q containing the cube.

    Rows are -inf-free: cubes with no eligible ancestor get 0 (empty sup).
    """
    s = f.system
    avgs = averages_all(f, w)
    elig = eligible_cubes(s, w)
    out = np.full((s.n_cubes, f.space.dim), -math.inf)
    for q in range(s.n_cubes):
        par = s.parent[q]
        run = out[par] if par >= 0 else np.full(f.space.dim, -math.inf)
        out[q] = np.maximum(run, avgs[q]) if elig[q] else run
    return np.where(np.isneginf(out), 0.0, out)


def essential_sup_norms(f: CubeFunction, w: Weight, R: int | None = None) -> float:
    """mu-essential sup of |f|_E, optionally over R."""
    norms = f.leaf_norms()
    m = w.leaf_masses
    if R is not None:
        lo, hi = f.system.leaf_range(R)
        norms, m = norms[lo:hi], m[lo:hi]
    sel = norms[m > 0]
    return float(sel.max()) if sel.size else 0.0
