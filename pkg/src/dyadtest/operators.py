"""The positive dyadic operator, its adjoint, localizations and assembly.

The operator maps a domain-valued function f to the range-valued function
sum over active cubes Q of lambda_Q (int_Q f dsigma) 1_Q, where each
lambda_Q is an entrywise-nonnegative block.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .dyadic import CubeFunction, DyadicSystem, Weight, cube_integrals, scalar_function
from .lattice import LatticeSpace


class PositiveKernel:
    """Cube-indexed nonnegative coefficient blocks (dense, zeros implicit)."""

    def __init__(self, system: DyadicSystem, domain: LatticeSpace,
                 range_: LatticeSpace, blocks):
        b = np.asarray(blocks, dtype=float)
        if b.shape != (system.n_cubes, range_.dim, domain.dim):
            raise ValueError("blocks must be (n_cubes, dim_range, dim_domain)")
        if (b < 0).any():
            raise ValueError("kernel blocks must be entrywise nonnegative")
        if (b[~system.active] != 0).any():
            raise ValueError("nonzero block on an inactive cube")
        self.system = system
        self.domain = domain
        self.range = range_
        self.blocks = b

    @staticmethod
    def from_map(system, domain, range_, entries: dict) -> "PositiveKernel":
        blocks = np.zeros((system.n_cubes, range_.dim, domain.dim))
        for q, blk in entries.items():
            blocks[q] = np.asarray(blk, dtype=float)
        return PositiveKernel(system, domain, range_, blocks)

    def adjoint(self) -> "PositiveKernel":
        """Kernel of the adjoint operator: transposed blocks between duals."""
        return PositiveKernel(self.system, self.range.dual(), self.domain.dual(),
                              np.swapaxes(self.blocks, 1, 2))

    def scaled(self, c: float) -> "PositiveKernel":
        return PositiveKernel(self.system, self.domain, self.range, c * self.blocks)

    def to_json(self) -> dict:
        s = self.system
        cubes = [{"id": s.label(q), "block": self.blocks[q].tolist()}
                 for q in range(s.n_cubes) if self.blocks[q].any()]
        return {"cubes": cubes, "domain": self.domain.to_json(),
                "range": self.range.to_json()}

    @staticmethod
    def from_json(system: DyadicSystem, obj: dict) -> "PositiveKernel":
        dom = LatticeSpace.from_json(obj["domain"])
        rng = LatticeSpace.from_json(obj["range"])
        entries = {system.parse_label(c["id"]): c["block"] for c in obj["cubes"]}
        return PositiveKernel.from_map(system, dom, rng, entries)


def _cube_mask(T: PositiveKernel, R: int | None) -> np.ndarray:
    mask = T.system.active
    if R is not None:
        mask = mask & T.system.descend_mask(R)
    return mask


def apply(T: PositiveKernel, f: CubeFunction, sigma: Weight,
          R: int | None = None) -> CubeFunction:
    """T(f sigma), summed over active cubes (within R when given)."""
    s = T.system
    if f.system is not s or sigma.system is not s:
        raise ValueError("system mismatch")
    if f.space.dim != T.domain.dim:
        raise ValueError("domain dimension mismatch")
    ints = cube_integrals(f, sigma)
    contrib = np.einsum("qij,qj->qi", T.blocks, ints)
    contrib[~_cube_mask(T, R)] = 0.0
    vals = kernels.scatter_ancestor_sums(contrib, s.anc)
    return CubeFunction(s, T.range, vals)


def apply_adjoint(T: PositiveKernel, g: CubeFunction, omega: Weight,
                  R: int | None = None) -> CubeFunction:
    """T*(g omega): transposed blocks against the second weight.

    g is range-dual valued (coordinates in R^dim_range); the result is
    domain-dual valued.
    """
    s = T.system
    if g.values.shape[1] != T.range.dim:
        raise ValueError("range dimension mismatch")
    ints = kernels.cube_sums(omega.leaf_masses[:, None] * g.values,
                             s.branching, s.depth, s.offsets)
    contrib = np.einsum("qji,qj->qi", T.blocks, ints)
    contrib[~_cube_mask(T, R)] = 0.0
    vals = kernels.scatter_ancestor_sums(contrib, s.anc)
    return CubeFunction(s, T.domain.dual(), vals)


def pairing(g: CubeFunction, h: CubeFunction, w: Weight) -> float:
    """int <g, h> dw (coordinatewise product integrated leafwise)."""
    return float(np.sum(w.leaf_masses * np.sum(g.values * h.values, axis=1)))


def bilinear_form(T: PositiveKernel, f: CubeFunction, sigma: Weight,
                  g: CubeFunction, omega: Weight, R: int | None = None) -> float:
    """sum_Q (int_Q g domega)^T lambda_Q (int_Q f dsigma)."""
    fi = cube_integrals(f, sigma)
    gi = cube_integrals(g, omega)
    mask = _cube_mask(T, R)
    vals = np.einsum("qj,qji,qi->q", gi, T.blocks, fi)
    return float(vals[mask].sum())


def sequence_kernel(system: DyadicSystem, betas: dict | np.ndarray,
                    s_exp: float) -> PositiveKernel:
    """Scalar-domain kernel with range ell_s over the active cubes.

    Coordinates of the range are the active cubes in (level, index) order;
    cube Q contributes beta_Q times the scalar integral to coordinate Q.
    """
    beta = np.zeros(system.n_cubes)
    if isinstance(betas, dict):
        for q, v in betas.items():
            beta[q] = v
    else:
        beta = np.asarray(betas, dtype=float).copy()
    if (beta < 0).any():
        raise ValueError("betas must be nonnegative")
    beta[~system.active] = 0.0
    act = np.nonzero(system.active)[0]
    rng = LatticeSpace(len(act), s_exp)
    blocks = np.zeros((system.n_cubes, len(act), 1))
    for pos, q in enumerate(act):
        blocks[q, pos, 0] = beta[q]
    dom = LatticeSpace(1, 2.0)
    return PositiveKernel(system, dom, rng, blocks)


def random_kernel(system: DyadicSystem, domain: LatticeSpace, range_: LatticeSpace,
                  rng, density: float = 0.7, mode: str = "dense") -> PositiveKernel:
    """Random nonnegative kernel; modes: scalar/dense/diagonal."""
    blocks = np.zeros((system.n_cubes, range_.dim, domain.dim))
    for q in range(system.n_cubes):
        if not system.active[q] or rng.random() > density:
            continue
        if mode == "diagonal":
            d = min(range_.dim, domain.dim)
            blocks[q, np.arange(d), np.arange(d)] = rng.random(d)
        else:
            blocks[q] = rng.random((range_.dim, domain.dim))
    return PositiveKernel(system, domain, range_, blocks)


def assemble_linear_map(T: PositiveKernel, sigma: Weight, omega: Weight) -> np.ndarray:
    """Dense matrix of f -> T(f sigma) through the weighted L2 isometries.

    Requires Euclidean (unweighted ell_2) lattice norms on both sides; the
    top singular value of the result is the exact L2(sigma) -> L2(omega)
    operator norm.
    """
    for sp in (T.domain, T.range):
        if sp.s != 2.0 or sp.weights is not None:
            raise ValueError("assembly requires unweighted ell_2 lattice norms")
    s = T.system
    n, din, dout = s.n_leaves, T.domain.dim, T.range.dim
    # chain prefix sums of active blocks along each leaf's ancestor chain
    masked = np.where(s.active[:, None, None], T.blocks, 0.0)
    chain = np.cumsum(masked[s.anc], axis=1)  # (n_leaves, depth+1, dout, din)
    # deepest common level of leaf pairs
    b, N = s.branching, s.depth
    leaves = np.arange(n)
    lca = np.zeros((n, n), dtype=np.int64)
    for l in range(1, N + 1):
        same = (leaves[:, None] // b ** (N - l)) == (leaves[None, :] // b ** (N - l))
        lca[same] = l
    K = chain[leaves[:, None], lca]  # (n, n, dout, din)
    sq_o = np.sqrt(omega.leaf_masses)
    sq_s = np.sqrt(sigma.leaf_masses)
    M = K * sq_o[:, None, None, None] * sq_s[None, :, None, None]
    return M.transpose(0, 2, 1, 3).reshape(n * dout, n * din)


def exact_norm_l2(T: PositiveKernel, sigma: Weight, omega: Weight):
    """Exact L2->L2 norm (top singular value) plus the maximizing f."""
    M = assemble_linear_map(T, sigma, omega)
    if M.size == 0 or not M.any():
        return 0.0, None
    u, svals, vt = np.linalg.svd(M)
    s = T.system
    v = vt[0].reshape(s.n_leaves, T.domain.dim)
    f_vals = np.zeros_like(v)
    pos = sigma.leaf_masses > 0
    f_vals[pos] = v[pos] / np.sqrt(sigma.leaf_masses[pos])[:, None]
    # positive kernels attain the norm on the positive cone
    if f_vals.sum() < 0:
        f_vals = -f_vals
    return float(svals[0]), CubeFunction(s, T.domain, np.abs(f_vals))
