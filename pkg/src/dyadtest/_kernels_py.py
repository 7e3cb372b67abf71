"""Pure-numpy implementations of the hot kernels.

Same contracts as the compiled module ``dyadtest._kernels``; selected as a
fallback by :mod:`dyadtest.kernels` when the extension is not built.
"""

import numpy as np


def cube_sums(leaf_vals, branching, depth, offsets):
    """Sum leaf columns over every cube of a complete b-ary tree.

    leaf_vals: (n_leaves, d) array; returns (n_cubes, d) with the leaf rows
    aggregated bottom-up (root first in the canonical level/index order).
    """
    n_leaves, d = leaf_vals.shape
    out = np.empty((offsets[depth + 1], d), dtype=np.float64)
    out[offsets[depth]:] = leaf_vals
    for level in range(depth - 1, -1, -1):
        lo, hi = offsets[level], offsets[level + 1]
        child = out[offsets[level + 1]:offsets[level + 2]]
        out[lo:hi] = child.reshape(hi - lo, branching, d).sum(axis=1)
    return out


def scatter_ancestor_sums(cube_vals, anc):
    """Per-leaf sum of cube values over the leaf's ancestor chain.

    cube_vals: (n_cubes, d); anc: (n_leaves, depth+1) ancestor cube ids.
    """
    return cube_vals[anc].sum(axis=1)


def max_over_ancestors(cube_vals, eligible, anc):
    """Componentwise max of cube values over eligible ancestors, 0 if none."""
    masked = np.where(eligible[:, None], cube_vals, -np.inf)
    out = masked[anc].max(axis=1)
    return np.where(np.isneginf(out), 0.0, out)


def _interp2(slice2d, f_axis, F_axis, x, y):
    """Bilinear interpolation of a 2d table slice at a scalar point."""
    x = min(max(x, f_axis[0]), f_axis[-1])
    y = min(max(y, F_axis[0]), F_axis[-1])
    i = min(max(int(np.searchsorted(f_axis, x, side="right")) - 1, 0),
            len(f_axis) - 2)
    j = min(max(int(np.searchsorted(F_axis, y, side="right")) - 1, 0),
            len(F_axis) - 2)
    tx = (x - f_axis[i]) / (f_axis[i + 1] - f_axis[i])
    ty = (y - F_axis[j]) / (F_axis[j + 1] - F_axis[j])
    return (slice2d[i, j] * (1 - tx) * (1 - ty) + slice2d[i + 1, j] * tx * (1 - ty)
            + slice2d[i, j + 1] * (1 - tx) * ty + slice2d[i + 1, j + 1] * tx * ty)


def _f_candidates(f_axis, i, lo, n_split):
    """Axis-aligned candidates for the lower half of a mean split.

    All axis nodes in [lo, f_i] (stride-limited to ~n_split of them), plus
    the window edge lo and the node f_i itself. Node-aligned candidates make
    the mass-doubling cascade exact under the power-of-two axis ratio.
    """
    c0 = int(np.searchsorted(f_axis, lo, side="left"))
    count = i - c0 + 1
    out = [lo, f_axis[i]]
    if count > 0:
        stride = max(1, -(-count // n_split))
        out.extend(f_axis[c0 + s] for s in range(0, count, stride))
    return sorted(set(out))


def _F_candidates(F_axis, wlo, whi, n_split):
    c0 = int(np.searchsorted(F_axis, wlo, side="left"))
    c1 = int(np.searchsorted(F_axis, whi, side="right")) - 1
    out = [wlo, whi]
    count = c1 - c0 + 1
    if count > 0:
        stride = max(1, -(-count // n_split))
        out.extend(F_axis[c0 + s] for s in range(0, count, stride))
    return sorted(set(out))


def bellman_sweep(prev, f_axis, F_axis, p, n_split):
    """One backward-induction sweep of the maximal-function value table.

    prev: (nf, nF, nL) table with invariance/admissibility fills applied;
    the L axis equals the f axis and F_axis = f_axis**p, so admissible nodes
    are i <= j and the sup substitution max(L, f) is the node max(k, i).
    Returns the raw next level on the computed region i <= min(j, k); the
    caller applies the fills.
    """
    nf = len(f_axis)
    nF = len(F_axis)
    f_max = f_axis[-1]
    F_max = F_axis[-1]
    out = np.zeros_like(prev)
    for k in range(nf):
        sl = prev[:, :, k]
        for i in range(0, k + 1):
            f = f_axis[i]
            lo = max(0.0, 2.0 * f - f_max)
            fms = _f_candidates(f_axis, i, lo, n_split)
            for j in range(i, nF):
                F = F_axis[j]
                best = sl[i, j]  # exact trivial split (f,F)+(f,F)
                for fm in fms:
                    fp = 2.0 * f - fm
                    wlo = max(fm ** p, 2.0 * F - F_max)
                    whi = min(2.0 * F - fp ** p, F_max)
                    if whi < wlo:
                        continue
                    for Fm in _F_candidates(F_axis, wlo, whi, n_split):
                        Fp = 2.0 * F - Fm
                        val = 0.5 * (_interp2(sl, f_axis, F_axis, fm, Fm)
                                     + _interp2(sl, f_axis, F_axis, fp, Fp))
                        if val > best:
                            best = val
                out[i, j, k] = best
    return out
