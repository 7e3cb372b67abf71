"""Finite-dimensional Banach lattices: R^n, componentwise order, ell_s norms.

Vectors are plain 1d numpy arrays; the space object carries the norm data
(exponent s in [1, inf], optional positive weights). The weighted norm is
(sum_i w_i |x_i|^s)^(1/s), and max_i w_i |x_i| for s = inf.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

INF = math.inf


def conjugate(s: float) -> float:
    """Hoelder conjugate s' with 1/s + 1/s' = 1 (1 <-> inf)."""
    if s == INF:
        return 1.0
    if s == 1.0:
        return INF
    return s / (s - 1.0)


@dataclass(frozen=True)
class LatticeSpace:
    """R^dim ordered componentwise, normed by a (weighted) ell_s norm."""

    dim: int
    s: float = 2.0
    weights: tuple | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if not (1.0 <= self.s):
            raise ValueError("s must lie in [1, inf]")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (self.dim,) or (w <= 0).any():
                raise ValueError("weights must be dim positive reals")
            object.__setattr__(self, "weights", tuple(float(v) for v in w))

    @property
    def weight_array(self) -> np.ndarray:
        if self.weights is None:
            return np.ones(self.dim)
        return np.asarray(self.weights)

    def norm(self, x) -> float:
        x = np.asarray(x, dtype=float)
        w = self.weight_array
        if self.s == INF:
            return float(np.max(w * np.abs(x))) if x.size else 0.0
        return float(np.sum(w * np.abs(x) ** self.s) ** (1.0 / self.s))

    def norms_rows(self, xs) -> np.ndarray:
        """Norm of each row of a (m, dim) array."""
        xs = np.asarray(xs, dtype=float)
        w = self.weight_array
        if self.s == INF:
            return np.max(w * np.abs(xs), axis=-1)
        return np.sum(w * np.abs(xs) ** self.s, axis=-1) ** (1.0 / self.s)

    def dual(self) -> "LatticeSpace":
        """Dual space: ell_{s'} with reciprocal-conjugate weights."""
        sp = conjugate(self.s)
        if self.weights is None:
            return LatticeSpace(self.dim, sp)
        w = self.weight_array
        if self.s in (1.0, INF):
            wd = 1.0 / w
        else:
            wd = w ** (-sp / self.s)
        return LatticeSpace(self.dim, sp, tuple(wd))

    def dual_argmax_positive(self, d) -> np.ndarray | None:
        """Positive unit-norm u maximizing <d, u>; None if d_+ = 0.

        Closed-form Hoelder maximizer over {u >= 0, norm(u) <= 1}; the
        returned vector has norm exactly 1.
        """
        d = np.maximum(np.asarray(d, dtype=float), 0.0)
        if not (d > 0).any():
            return None
        w = self.weight_array
        if self.s == INF:
            u = (d > 0) / w
        elif self.s == 1.0:
            j = int(np.argmax(d / w))
            u = np.zeros(self.dim)
            u[j] = 1.0 / w[j]
        else:
            u = (d / w) ** (1.0 / (self.s - 1.0))
        return u / self.norm(u)

    def random_positive_unit(self, rng) -> np.ndarray:
        u = rng.random(self.dim) + 1e-3
        return u / self.norm(u)

    def uniform_positive_unit(self) -> np.ndarray:
        u = np.ones(self.dim)
        return u / self.norm(u)

    def to_json(self) -> dict:
        out = {"dim": self.dim,
               "norm": {"kind": "ell_s", "s": "inf" if self.s == INF else self.s}}
        if self.weights is not None:
            out["norm"]["weights"] = list(self.weights)
        return out

    @staticmethod
    def from_json(obj: dict) -> "LatticeSpace":
        norm = obj["norm"]
        s = INF if norm["s"] == "inf" else float(norm["s"])
        w = norm.get("weights")
        return LatticeSpace(int(obj["dim"]), s, tuple(w) if w is not None else None)


def lattice_sup(x, y) -> np.ndarray:
    """Least upper bound (componentwise maximum)."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if x.shape != y.shape:
        raise ValueError("dimension mismatch")
    return np.maximum(x, y)


def lattice_inf(x, y) -> np.ndarray:
    x, y = np.asarray(x, float), np.asarray(y, float)
    if x.shape != y.shape:
        raise ValueError("dimension mismatch")
    return np.minimum(x, y)


def abs_parts(x):
    """(|x|, x_+, x_-) with x = pos - neg, |x| = pos + neg."""
    x = np.asarray(x, dtype=float)
    pos = np.maximum(x, 0.0)
    neg = np.maximum(-x, 0.0)
    return pos + neg, pos, neg


def dual_pairing(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    if x.shape != y.shape:
        raise ValueError("dimension mismatch")
    return float(np.dot(x, y))
