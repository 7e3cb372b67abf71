"""Kernel backend selection: compiled extension when built, numpy otherwise.

All callers go through the wrappers below, which normalize dtypes/contiguity
so both backends see identical inputs.
"""

import numpy as np

from . import _kernels_py

try:  # pragma: no cover - exercised implicitly by the chosen backend
    from . import _kernels as _impl

    USING_COMPILED = True
except ImportError:  # pragma: no cover
    _impl = _kernels_py
    USING_COMPILED = False


def _f64_2d(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def cube_sums(leaf_vals, branching, depth, offsets, backend=None):
    impl = backend or _impl
    return impl.cube_sums(_f64_2d(leaf_vals), int(branching), int(depth),
                          np.ascontiguousarray(offsets, dtype=np.int64))


def scatter_ancestor_sums(cube_vals, anc, backend=None):
    impl = backend or _impl
    return impl.scatter_ancestor_sums(_f64_2d(cube_vals),
                                      np.ascontiguousarray(anc, dtype=np.int64))


def max_over_ancestors(cube_vals, eligible, anc, backend=None):
    impl = backend or _impl
    elig = np.ascontiguousarray(eligible, dtype=np.uint8)
    if impl is _kernels_py:
        elig = elig.astype(bool)
    return impl.max_over_ancestors(_f64_2d(cube_vals), elig,
                                   np.ascontiguousarray(anc, dtype=np.int64))


def bellman_sweep(prev, f_axis, F_axis, p, n_split, backend=None):
    impl = backend or _impl
    return impl.bellman_sweep(np.ascontiguousarray(prev, dtype=np.float64),
                              np.ascontiguousarray(f_axis, dtype=np.float64),
                              np.ascontiguousarray(F_axis, dtype=np.float64),
                              float(p), int(n_split))


def backends():
    """(name, module) pairs of the available backends, compiled first."""
    out = []
    if USING_COMPILED:
        out.append(("compiled", _impl))
    out.append(("python", _kernels_py))
    return out
