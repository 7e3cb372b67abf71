"""Stopping families: construction, verification, and the decomposition
machinery built from them.

A family is grown from the root by repeatedly selecting the maximal active
strict subcubes satisfying the tagged stopping condition(s). Conventions:
mu-null cubes are never selected, and a condition whose right-hand side is 0
selects nothing (see the ledgered degenerate paths).

Tags:
  LEMMA31    sup of averages over all containing cubes vs the maximal
             function's average, threshold 2, strict >
  A          same condition, threshold 4, strict >
  APRIME     sup restricted within F vs the plain average, threshold
             4 * weak-(1,1) constant, non-strict >=
  B, C       child average vs parent average, threshold 4, strict >
  PRINCIPAL  child average vs parent average, threshold 2, strict >
  D          partial operator sums vs the operator image's average,
             threshold 4, strict >
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .constants import (ProblemInstance, a_infinity, carleson_packing,
                        carleson_embedding_constant, decomposition_constant,
                        lsmp_constant, pythagoras_constant)
from .dyadic import (CubeFunction, DyadicSystem, Weight, averages_all,
                     cube_integrals, eligible_cubes, essential_sup_norms,
                     finest_averaging, lattice_maximal, lp_norm,
                     scalar_function)
from .lattice import INF, LatticeSpace, conjugate
from .operators import PositiveKernel, apply, bilinear_form

SUP_TAGS = ("LEMMA31", "A", "APRIME")
AVG_TAGS = ("B", "C", "PRINCIPAL")
DEFAULT_THRESHOLD = {"LEMMA31": 2.0, "PRINCIPAL": 2.0,
                     "A": 4.0, "APRIME": 4.0, "B": 4.0, "C": 4.0, "D": 4.0}


@dataclass
class StoppingContext:
    """Precomputed per-(f, w[, kernel]) fields used by the stopping predicates."""

    system: DyadicSystem
    f: CubeFunction
    w: Weight
    kernel: PositiveKernel | None
    avgs: np.ndarray          # <f>_Q per cube
    elig: np.ndarray          # active & positive-mass cubes
    chain_sup: np.ndarray     # sup of <f>_Q over eligible cubes containing Q
    norm_avg: np.ndarray      # <|f|_E>_Q
    maximal_norm_avg: np.ndarray  # <|Mf|_E>_Q
    t_chain: np.ndarray | None    # sum over active Q' containing Q of lambda int f
    t_norm_avg: np.ndarray | None  # <|T(f mu)|_D>_Q


def build_context(f: CubeFunction, w: Weight,
                  kernel: PositiveKernel | None = None) -> StoppingContext:
    s = f.system
    avgs = averages_all(f, w)
    elig = eligible_cubes(s, w)
    chain_sup = _chain_sup(s, avgs, elig)
    fn = scalar_function(s, f.leaf_norms())
    norm_avg = averages_all(fn, w)[:, 0]
    mf = lattice_maximal(f, w)
    mfn = scalar_function(s, mf.leaf_norms())
    maximal_norm_avg = averages_all(mfn, w)[:, 0]
    t_chain = t_norm_avg = None
    if kernel is not None:
        contrib = np.einsum("qij,qj->qi", kernel.blocks, cube_integrals(f, w))
        contrib[~s.active] = 0.0
        t_chain = _chain_cumsum(s, contrib)
        tf = apply(kernel, f, w)
        tfn = scalar_function(s, tf.leaf_norms())
        t_norm_avg = averages_all(tfn, w)[:, 0]
    return StoppingContext(s, f, w, kernel, avgs, elig, chain_sup, norm_avg,
                           maximal_norm_avg, t_chain, t_norm_avg)


def _chain_sup(s: DyadicSystem, avgs, elig):
    out = np.full_like(avgs, -math.inf)
    for q in range(s.n_cubes):
        par = s.parent[q]
        run = out[par] if par >= 0 else np.full(avgs.shape[1], -math.inf)
        out[q] = np.maximum(run, avgs[q]) if elig[q] else run
    return np.where(np.isneginf(out), 0.0, out)


def _chain_cumsum(s: DyadicSystem, contrib):
    out = np.zeros_like(contrib)
    for q in range(s.n_cubes):
        par = s.parent[q]
        out[q] = contrib[q] + (out[par] if par >= 0 else 0.0)
    return out


def _sup_within(ctx: StoppingContext, F: int) -> np.ndarray:
    """Per cube inside F: sup of eligible averages over F >= Q' >= Q."""
    s = ctx.system
    mask = s.descend_mask(F)
    out = np.full_like(ctx.avgs, -math.inf)
    for q in np.nonzero(mask)[0]:
        par = s.parent[q]
        run = out[par] if (q != F and par >= 0) else np.full(ctx.avgs.shape[1], -math.inf)
        out[q] = np.maximum(run, ctx.avgs[q]) if ctx.elig[q] else run
    return np.where(np.isneginf(out), 0.0, out)


def stopping_predicate(tag: str, ctx: StoppingContext, Fp: int, F: int,
                       threshold: float, weak_constant: float = 1.0,
                       within: np.ndarray | None = None) -> bool:
    """The tagged stopping condition for candidate Fp relative to F.

    False whenever the right-hand side is 0 (degenerate path).
    """
    E = ctx.f.space
    if tag in ("LEMMA31", "A"):
        rhs = threshold * ctx.maximal_norm_avg[F]
        return rhs > 0 and E.norm(ctx.chain_sup[Fp]) > rhs
    if tag == "APRIME":
        rhs = threshold * weak_constant * ctx.norm_avg[F]
        sup = within if within is not None else _sup_within(ctx, F)
        return rhs > 0 and E.norm(sup[Fp]) >= rhs
    if tag in ("B", "C", "PRINCIPAL"):
        rhs = threshold * ctx.norm_avg[F]
        return rhs > 0 and ctx.norm_avg[Fp] > rhs
    if tag == "D":
        if ctx.t_chain is None:
            raise ValueError("tag D needs a kernel")
        rhs = threshold * ctx.t_norm_avg[F]
        return rhs > 0 and ctx.kernel.range.norm(ctx.t_chain[Fp]) > rhs
    raise ValueError(f"unknown tag {tag!r}")


@dataclass
class StoppingFamily:
    system: DyadicSystem
    weight: Weight
    tags: tuple[str, ...]
    thresholds: dict
    members: list[int]
    children: dict
    parent_of: np.ndarray  # minimal family cube containing each cube
    weak_constant: float = 1.0
    context: StoppingContext | None = None

    def member_set(self):
        return set(self.members)

    def exceptional_mass(self, F: int) -> float:
        return float(self.weight.cube_masses[F]
                     - sum(self.weight.cube_masses[c] for c in self.children[F]))

    def e_leaf_mask(self, F: int) -> np.ndarray:
        """Leaves of F outside every family child of F."""
        s = self.system
        lo, hi = s.leaf_range(F)
        mask = np.zeros(s.n_leaves, dtype=bool)
        mask[lo:hi] = True
        for c in self.children[F]:
            clo, chi = s.leaf_range(c)
            mask[clo:chi] = False
        return mask

    def to_json(self) -> dict:
        s = self.system

        def node(F):
            masses = {"mass": float(self.weight.cube_masses[F])}
            return {"cube": s.label(F), **masses,
                    "children": [node(c) for c in self.children[F]]}

        return {"tags": list(self.tags), "tree": node(self.members[0])}


def build_family(tags, f: CubeFunction, w: Weight,
                 threshold: float | dict | None = None,
                 kernel: PositiveKernel | None = None,
                 weak_constant: float = 1.0,
                 start: int | None = None,
                 context: StoppingContext | None = None) -> StoppingFamily:
    """Grow the stopping family for one tag or a union of tags."""
    if isinstance(tags, str):
        tags = (tags,)
    tags = tuple(tags)
    thr = dict(DEFAULT_THRESHOLD)
    if isinstance(threshold, dict):
        thr.update(threshold)
    elif threshold is not None:
        thr.update({t: float(threshold) for t in tags})
    s = f.system
    ctx = context or build_context(f, w, kernel)
    root = s.root if start is None else start
    members, children = [root], {}
    stack = [root]
    while stack:
        F = stack.pop()
        within = _sup_within(ctx, F) if "APRIME" in tags else None
        sel = []
        cand = list(s.children(F))[::-1]
        while cand:
            Q = cand.pop()
            ok = (s.active[Q] and w.cube_masses[Q] > 0
                  and any(stopping_predicate(t, ctx, Q, F, thr[t],
                                             weak_constant, within)
                          for t in tags))
            if ok:
                sel.append(Q)
            else:
                cand.extend(s.children(Q))
        children[F] = sorted(sel)
        members.extend(children[F])
        stack.extend(children[F])
    parent_of = np.empty(s.n_cubes, dtype=np.int64)
    mem = np.zeros(s.n_cubes, dtype=bool)
    mem[members] = True
    for q in range(s.n_cubes):
        if mem[q]:
            parent_of[q] = q
        else:
            par = s.parent[q]
            parent_of[q] = parent_of[par] if par >= 0 else q
    return StoppingFamily(s, w, tags, thr, sorted(set(members)), children,
                          parent_of, weak_constant, ctx)


def auxiliary_function(tag: str, F: int, family: StoppingFamily,
                       use_finest: bool = False) -> CubeFunction:
    """The tagged row's auxiliary function for the family cube F."""
    ctx = family.context
    s, w, f = family.system, family.weight, ctx.f
    if tag in SUP_TAGS:
        mask = ctx.elig & (family.parent_of == F)
        vals = kernels.max_over_ancestors(ctx.avgs, mask, s.anc)
        return CubeFunction(s, f.space, vals)
    if tag in ("B", "PRINCIPAL", "C"):
        base = finest_averaging(f, w).values if use_finest else f.values
        out = np.where(family.e_leaf_mask(F)[:, None], base, 0.0)
        ints = cube_integrals(f, w)
        for Fp in family.children[F]:
            if tag == "C":
                hat = int(s.parent[Fp])
                mh = w.cube_masses[hat]
                if mh > 0:
                    lo, hi = s.leaf_range(hat)
                    out[lo:hi] += ints[Fp] / mh
            else:
                lo, hi = s.leaf_range(Fp)
                out[lo:hi] = ctx.avgs[Fp]
        return CubeFunction(s, f.space, out)
    if tag == "D":
        mask = s.active & (family.parent_of == F)
        contrib = np.einsum("qij,qj->qi", ctx.kernel.blocks,
                            cube_integrals(f, w))
        contrib[~mask] = 0.0
        vals = kernels.scatter_ancestor_sums(contrib, s.anc)
        return CubeFunction(s, ctx.kernel.range, vals)
    raise ValueError(f"unknown tag {tag!r}")


@dataclass
class Check:
    name: str
    ok: bool
    margin: float  # rhs - lhs (>= 0 when ok), worst over the swept cubes
    offender: str = ""


def _record(checks, name, lhs, rhs, tol, offender=""):
    checks.append(Check(name, lhs <= rhs + tol, rhs - lhs, offender))


def verify_family(family: StoppingFamily, t: float = INF,
                  tol: float = 1e-9) -> list[Check]:
    """All Table-row properties for the family's tags.

    Sparseness with the per-condition measure constant (1/threshold per
    condition, summed over a union), the failure of the condition at every
    cube with pi(Q) = F, the tagged norm estimates, and the replacement
    rules (equality for B/C/PRINCIPAL, inequality for sup-type tags).
    """
    ctx = family.context
    s, w, f = family.system, family.weight, ctx.f
    E = f.space
    checks: list[Check] = []
    kappa = sum(1.0 / family.thresholds[tag] for tag in family.tags)

    for F in family.members:
        mF = w.cube_masses[F]
        child_mass = sum(w.cube_masses[c] for c in family.children[F])
        _record(checks, "sparseness", child_mass, kappa * mF, tol * max(1.0, mF),
                s.label(F))

    # pi(Q) = F implies the condition fails at Q
    bad = ""
    for Q in np.nonzero(ctx.elig)[0]:
        F = int(family.parent_of[Q])
        within = _sup_within(ctx, F) if "APRIME" in family.tags else None
        for tag in family.tags:
            if stopping_predicate(tag, ctx, Q, F, family.thresholds[tag],
                                  family.weak_constant, within):
                bad = f"{tag}@{s.label(Q)}"
    checks.append(Check("parent_condition_fails", bad == "", 0.0, bad))

    ints = cube_integrals(f, w)
    for tag in family.tags:
        theta = family.thresholds[tag]
        for F in family.members:
            mF = w.cube_masses[F]
            scale = max(1.0, float(np.abs(ctx.avgs).max(initial=0.0)))
            if tag in SUP_TAGS:
                aux = auxiliary_function(tag, F, family)
                lhs = float(aux.leaf_norms().max(initial=0.0))
                if tag == "APRIME":
                    rhs = theta * family.weak_constant * ctx.norm_avg[F]
                else:
                    rhs = theta * ctx.maximal_norm_avg[F]
                _record(checks, f"{tag}_linf_estimate", lhs, rhs,
                        tol * scale, s.label(F))
            elif tag in ("B", "PRINCIPAL"):
                ratio = max([w.cube_masses[s.parent[c]] / w.cube_masses[c]
                             for c in family.children[F]], default=1.0)
                child_part = np.zeros_like(f.values)
                for c in family.children[F]:
                    lo, hi = s.leaf_range(c)
                    child_part[lo:hi] = ctx.avgs[c]
                lhs = float(E.norms_rows(child_part).max(initial=0.0))
                _record(checks, f"{tag}_children_estimate", lhs,
                        theta * ratio * ctx.norm_avg[F], tol * scale, s.label(F))
                efine = finest_averaging(f, w).values
                emask = family.e_leaf_mask(F)
                lhs2 = float(E.norms_rows(np.where(emask[:, None], efine, 0.0))
                             .max(initial=0.0))
                _record(checks, f"{tag}_exceptional_estimate", lhs2,
                        theta * ctx.norm_avg[F], tol * scale, s.label(F))
                aux = auxiliary_function(tag, F, family, use_finest=True)
                lhs3 = float(aux.leaf_norms().max(initial=0.0))
                _record(checks, f"{tag}_row_estimate", lhs3,
                        theta * max(ratio, 1.0) * ctx.norm_avg[F],
                        tol * scale, s.label(F))
            elif tag == "C":
                tt = t if t != INF else 2.0
                spread = np.zeros_like(f.values)
                for c in family.children[F]:
                    hat = int(s.parent[c])
                    if w.cube_masses[hat] > 0:
                        lo, hi = s.leaf_range(hat)
                        spread[lo:hi] += ints[c] / w.cube_masses[hat]
                lhs = lp_norm(CubeFunction(s, E, spread), tt, w)
                rhs = (lsmp_constant(tt) * theta ** (1.0 / conjugate(tt))
                       * ctx.norm_avg[F] * mF ** (1.0 / tt))
                _record(checks, "C_spread_lt_estimate", lhs, rhs,
                        tol * scale, s.label(F))
                aux = auxiliary_function("C", F, family, use_finest=True)
                rhs_full = ((lsmp_constant(tt) * theta ** (1.0 / conjugate(tt))
                             + theta) * ctx.norm_avg[F] * mF ** (1.0 / tt))
                _record(checks, "C_row_lt_estimate", lp_norm(aux, tt, w),
                        rhs_full, tol * scale, s.label(F))
            elif tag == "D":
                aux = auxiliary_function("D", F, family)
                lhs = float(aux.leaf_norms().max(initial=0.0))
                _record(checks, "D_linf_estimate", lhs,
                        theta * ctx.t_norm_avg[F], tol * scale, s.label(F))

        # replacement rules: whole-sum equality for the child-average rows,
        # inequality for the sup-type and parent-spread rows, plus the exact
        # per-child identity for the parent-spread terms
        if tag == "D":
            continue
        eq = tag in ("B", "PRINCIPAL")
        worst, off = 0.0, ""
        for F in family.members:
            aux = auxiliary_function(tag, F, family)
            aux_ints = cube_integrals(aux, w)
            for Q in np.nonzero(ctx.elig & (family.parent_of == F))[0]:
                gap = aux_ints[Q] - ints[Q]
                dev = float(-gap.min()) if not eq else float(np.abs(gap).max())
                if dev > worst:
                    worst, off = dev, s.label(Q)
        scale = max(1.0, float(np.abs(ints).max(initial=0.0)))
        checks.append(Check(f"{tag}_replacement_{'eq' if eq else 'le'}",
                            worst <= tol * scale, -worst, off))
        if tag == "C":
            # exact per-child identity: the c-spread term integrates over Q
            # to int_c f whenever c is strictly inside Q (its parent then
            # lies inside Q as well)
            worst, off = 0.0, ""
            for F in family.members:
                for Q in np.nonzero(ctx.elig & (family.parent_of == F))[0]:
                    for c in family.children[F]:
                        if not (s.contains(Q, c) and Q != c):
                            continue
                        hat = int(s.parent[c])
                        mh = w.cube_masses[hat]
                        if mh <= 0:
                            continue
                        overlap = mh if s.contains(Q, hat) else 0.0
                        term = ints[c] * (overlap / mh)
                        dev = float(np.abs(term - ints[c]).max())
                        if dev > worst:
                            worst, off = dev, s.label(Q)
            checks.append(Check("C_term_identity", worst <= tol * scale,
                                -worst, off))

    # every sparse family here is Carleson with constant 2
    _record(checks, "carleson_two", carleson_packing(family.members, w), 2.0, tol)
    return checks


def decomposition_functions(family: StoppingFamily, g: CubeFunction,
                            w: Weight) -> dict:
    """Child-average decompositions g_G (exact replacement on pi(Q)=G)."""
    out = {}
    for G in family.members:
        out[G] = auxiliary_function("B", G, _rebind(family, g, w))
    return out


def _rebind(family: StoppingFamily, g: CubeFunction, w: Weight) -> StoppingFamily:
    """Same family tree, context rebuilt for a different function/weight."""
    ctx = build_context(g, w, None)
    return StoppingFamily(family.system, w, family.tags, family.thresholds,
                          family.members, family.children, family.parent_of,
                          family.weak_constant, ctx)


# ---------------------------------------------------------------------------
# lemma checks


def carleson_embedding_check(family_cubes, f: CubeFunction, w: Weight,
                             p: float, tol: float = 1e-9) -> Check:
    """Sparse-family embedding: (sum <|f|>_S^p mu(S))^{1/p} <= 2p' ||f||."""
    members = list(family_cubes)
    fn = scalar_function(f.system, f.leaf_norms())
    navg = averages_all(fn, w)[:, 0]
    lhs = float(np.sum([navg[S] ** p * w.cube_masses[S] for S in members])
                ** (1.0 / p))
    rhs = carleson_embedding_constant(p) * lp_norm(f, p, w)
    return Check("carleson_embedding", lhs <= rhs + tol, rhs - lhs)


def pythagoras_check(family: StoppingFamily, parts: dict, w: Weight, p: float,
                     tol: float = 1e-9) -> Check:
    """||sum f_S||_p <= 3p (sum ||f_S||_p^p)^{1/p} for admissible parts."""
    s = family.system
    for S, fS in parts.items():
        lo, hi = s.leaf_range(S)
        outside = np.delete(fS.values, np.s_[lo:hi], axis=0)
        if outside.size and np.abs(outside).max() > 0:
            raise ValueError("part not supported on its cube")
        for c in family.children[S]:
            clo, chi = s.leaf_range(c)
            block = fS.values[clo:chi]
            if block.size and np.abs(block - block[0]).max() > 1e-12:
                raise ValueError("part not constant on a family child")
    total = np.sum([fS.values for fS in parts.values()], axis=0)
    space = next(iter(parts.values())).space
    lhs = lp_norm(CubeFunction(s, space, total), p, w)
    rhs = pythagoras_constant(p) * float(
        np.sum([lp_norm(fS, p, w) ** p for fS in parts.values()]) ** (1.0 / p))
    return Check("pythagoras", lhs <= rhs + tol, rhs - lhs)


def decomposition_check(family: StoppingFamily, f: CubeFunction, w: Weight,
                        p: float, tol: float = 1e-9) -> Check:
    """(sum_S ||f_S||_p^p)^{1/p} <= 3p' ||f|| for the child-average parts."""
    parts = decomposition_functions(family, f, w)
    lhs = float(np.sum([lp_norm(fS, p, w) ** p for fS in parts.values()])
                ** (1.0 / p))
    rhs = decomposition_constant(p) * lp_norm(f, p, w)
    return Check("decomposition", lhs <= rhs + tol, rhs - lhs)


def lsmp_check(cubes, h, w: Weight, p: float, tol: float = 1e-9) -> Check:
    """Parent-spread bound with the pinned constant p."""
    s = w.system
    cubes = list(cubes)
    for a in cubes:
        if a == s.root:
            raise ValueError("cubes must have a parent")
        for b in cubes:
            if a != b and (s.contains(a, b) or s.contains(b, a)):
                raise ValueError("cubes must be pairwise disjoint")
    h = np.abs(np.asarray(h, dtype=float))
    hints = kernels.cube_sums((w.leaf_masses * h)[:, None], s.branching,
                              s.depth, s.offsets)[:, 0]
    spread = np.zeros(s.n_leaves)
    S, L = 0.0, 0.0
    for R in cubes:
        hat = int(s.parent[R])
        mh = w.cube_masses[hat]
        if mh <= 0:
            continue
        lo, hi = s.leaf_range(hat)
        spread[lo:hi] += hints[R] / mh
        S = max(S, hints[hat] / mh)
        L += hints[R]
    lhs = float(np.sum(w.leaf_masses * spread ** p) ** (1.0 / p))
    rhs = lsmp_constant(p) * S ** (1.0 / conjugate(p)) * L ** (1.0 / p)
    return Check("lsmp", lhs <= rhs + tol, rhs - lhs)


# ---------------------------------------------------------------------------
# A-infinity <-> Carleson equivalence via the ratio stopping construction


def ratio_stopping_family(sigma: Weight, omega: Weight, start: int,
                          within=None) -> StoppingFamily:
    """Family from the density-ratio condition ratio(G') > 2 ratio(G);
    candidates restricted to `within` when given (a cube id set)."""
    s = sigma.system
    allowed = np.zeros(s.n_cubes, dtype=bool)
    if within is None:
        allowed[:] = s.active
    else:
        allowed[list(within)] = True

    def ratio(q):
        return sigma.cube_masses[q] / omega.cube_masses[q]

    members, children = [start], {}
    stack = [start]
    while stack:
        G = stack.pop()
        sel = []
        base_ok = omega.cube_masses[G] > 0
        cand = list(s.children(G))[::-1]
        while cand:
            Q = cand.pop()
            ok = (allowed[Q] and omega.cube_masses[Q] > 0 and base_ok
                  and ratio(Q) > 2.0 * ratio(G))
            if ok:
                sel.append(Q)
            else:
                cand.extend(s.children(Q))
        children[G] = sorted(sel)
        members.extend(children[G])
        stack.extend(children[G])
    parent_of = np.empty(s.n_cubes, dtype=np.int64)
    mem = np.zeros(s.n_cubes, dtype=bool)
    mem[members] = True
    for q in range(s.n_cubes):
        if mem[q]:
            parent_of[q] = q
        else:
            par = s.parent[q]
            parent_of[q] = parent_of[par] if par >= 0 else q
    fam = StoppingFamily(s, omega, ("RATIO",), {"RATIO": 2.0},
                         sorted(set(members)), children, parent_of)
    return fam


def a_infinity_carleson_checks(sigma: Weight, omega: Weight,
                               extra_carleson_families=(),
                               tol: float = 1e-9) -> list[Check]:
    """Both halves of the A-infinity <-> Carleson equivalence.

    (i) every omega-Carleson-2 family packs sigma with constant at most
    8 [sigma]_Ainf(omega); (ii) the localized maximal integrals are bounded
    by twice the sigma-packing of the proof's ratio families, hence
    [sigma]_Ainf(omega) <= 2 [sigma]_Car(omega).
    """
    from .dyadic import ratio_maximal
    s = sigma.system
    ainf = a_infinity(sigma, omega)
    checks = []
    families = [ratio_stopping_family(sigma, omega, int(q))
                for q in np.nonzero(s.active & (omega.cube_masses > 0))[0]]
    test_families = [fam.members for fam in families
                     if carleson_packing(fam.members, omega) <= 2.0 + tol]
    test_families.extend(extra_carleson_families)
    worst, off = math.inf, ""
    for cubes in test_families:
        for H0 in cubes:
            sH = sigma.cube_masses[H0]
            if sH <= 0:
                continue
            inside = sum(float(sigma.cube_masses[h]) for h in cubes
                         if s.contains(H0, h))
            margin = 8.0 * ainf * sH - inside
            if margin < worst:
                worst, off = margin, s.label(H0)
    checks.append(Check("carleson_le_8_ainf", worst >= -tol,
                        worst if worst != math.inf else 0.0, off))

    worst, off = math.inf, ""
    car_lower = 0.0
    for Q0 in np.nonzero(s.active & (sigma.cube_masses > 0))[0]:
        fam = ratio_stopping_family(sigma, omega, int(Q0))
        if carleson_packing(fam.members, omega) > 2.0 + tol:
            checks.append(Check("ratio_family_carleson", False, 0.0,
                                s.label(int(Q0))))
            continue
        integral = float(np.sum(omega.leaf_masses
                                * ratio_maximal(sigma, omega, int(Q0))))
        pack = sum(float(sigma.cube_masses[g]) for g in fam.members)
        margin = 2.0 * pack - integral
        if margin < worst:
            worst, off = margin, s.label(int(Q0))
        car_lower = max(car_lower, pack / sigma.cube_masses[Q0])
    checks.append(Check("integral_le_2_pack", worst >= -tol,
                        worst if worst != math.inf else 0.0, off))
    checks.append(Check("ainf_le_2_car", ainf <= 2.0 * car_lower + tol,
                        2.0 * car_lower - ainf))
    return checks


# ---------------------------------------------------------------------------
# the parallel decomposition of the two-weight proof


def _half_chain(T: PositiveKernel, fam_sup: StoppingFamily,
                fam_dec: StoppingFamily, f: CubeFunction, g: CubeFunction,
                w_in: Weight, w_out: Weight, p: float, q: float,
                S_half: float, testing_value: float, tol: float) -> dict:
    """Term-by-term evaluation of one half of the two-weight proof chain.

    fam_sup is the family of the tested function f (sup-type auxiliaries,
    weight w_in); fam_dec the family of g (child-average decompositions,
    weight w_out). Returns the chain rows and the testing ratios of the
    f_F candidates (which certify lower bounds for the testing constant).
    """
    s = T.system
    qc = conjugate(q)
    rows = []
    f_parts = {F: auxiliary_function(fam_sup.tags[0], F, fam_sup)
               for F in fam_sup.members}
    g_parts = decomposition_functions(fam_dec, g, w_out)

    # replacement identities
    ints_g = cube_integrals(g, w_out)
    worst_eq = 0.0
    for G in fam_dec.members:
        gm = cube_integrals(g_parts[G], w_out)
        sel = eligible_cubes(s, w_out) & (fam_dec.parent_of == G)
        for Q in np.nonzero(sel)[0]:
            worst_eq = max(worst_eq, float(np.abs(gm[Q] - ints_g[Q]).max()))
    scale_g = max(1.0, float(np.abs(ints_g).max(initial=0.0)))
    rows.append(Check("g_replacement_identity", worst_eq <= 1e-10 * scale_g,
                      -worst_eq))

    # S_half <= sum_F int G_F . T_F(f_F w_in) dw_out
    total, per_F = 0.0, {}
    for F in fam_sup.members:
        Gs = [G for G in fam_dec.members if fam_sup.parent_of[G] == F]
        if not Gs:
            per_F[F] = (0.0, 0.0, 0.0)
            continue
        GF = np.sum([g_parts[G].values for G in Gs], axis=0)
        TF = apply(T, f_parts[F], w_in, R=F).values
        val = float(np.sum(w_out.leaf_masses * np.sum(GF * TF, axis=1)))
        total += val
        gf_norm = lp_norm(CubeFunction(s, g.space, GF), qc, w_out)
        tf_norm = lp_norm(CubeFunction(s, T.range, TF), q, w_out)
        per_F[F] = (val, gf_norm, tf_norm)
    rows.append(Check("half_le_paired_sum", S_half <= total + tol, total - S_half))

    holder_sum = sum(gf * tf for (_, gf, tf) in per_F.values())
    rows.append(Check("pairing_holder", total <= holder_sum + tol,
                      holder_sum - total))

    # testing step with chain-augmented constant
    t_ratios = []
    a_F, b_F = {}, {}
    for F in fam_sup.members:
        mF = w_in.cube_masses[F]
        ess = essential_sup_norms(f_parts[F], w_in)
        a_F[F] = per_F[F][1]
        b_F[F] = ess * mF ** (1.0 / p)
        if mF > 0 and ess > 0:
            t_ratios.append(per_F[F][2] / (ess * mF ** (1.0 / p)))
    T_chain = max([testing_value] + t_ratios)
    test_sum = T_chain * sum(a_F[F] * b_F[F] for F in fam_sup.members)
    rows.append(Check("testing_step", holder_sum <= test_sum + tol,
                      test_sum - holder_sum))

    # discrete Hoelder at exponents (q', p), valid since 1/p + 1/q' >= 1
    A = float(np.sum([a_F[F] ** qc for F in fam_sup.members]) ** (1.0 / qc))
    B = float(np.sum([b_F[F] ** p for F in fam_sup.members]) ** (1.0 / p))
    ab = sum(a_F[F] * b_F[F] for F in fam_sup.members)
    rows.append(Check("discrete_holder", ab <= A * B + tol, A * B - ab))

    # sup-estimate + Carleson embedding on the f side
    ctx = fam_sup.context
    mid = float(np.sum([ctx.maximal_norm_avg[F] ** p * w_in.cube_masses[F]
                        for F in fam_sup.members]) ** (1.0 / p))
    rows.append(Check("f_sup_estimate", B <= 2.0 * mid + tol, 2.0 * mid - B))
    mf = lattice_maximal(f, w_in)
    mnorm = lp_norm(mf, p, w_in)
    rows.append(Check("f_carleson_embedding",
                      mid <= carleson_embedding_constant(p) * mnorm + tol,
                      carleson_embedding_constant(p) * mnorm - mid))

    # Pythagoras across F, then the decomposition bound
    GF_norms_q = float(np.sum([per_F[F][1] ** qc for F in fam_sup.members])
                       ** (1.0 / qc))
    gG_norms = float(np.sum([lp_norm(g_parts[G], qc, w_out) ** qc
                             for G in fam_dec.members]) ** (1.0 / qc))
    rows.append(Check("pythagoras_step",
                      GF_norms_q <= pythagoras_constant(qc) * gG_norms + tol,
                      pythagoras_constant(qc) * gG_norms - GF_norms_q))
    gnorm = lp_norm(g, qc, w_out)
    rows.append(Check("decomposition_step",
                      gG_norms <= decomposition_constant(qc) * gnorm + tol,
                      decomposition_constant(qc) * gnorm - gG_norms))
    return {"rows": rows, "testing_ratio_max": max(t_ratios, default=0.0),
            "bound": (T_chain * 2.0 * carleson_embedding_constant(p) * mnorm
                      * pythagoras_constant(qc) * decomposition_constant(qc)
                      * gnorm)}


def parallel_decomposition(f: CubeFunction, g: CubeFunction,
                           inst: ProblemInstance, testing_direct: float = 0.0,
                           testing_dual: float = 0.0,
                           tol: float = 1e-9) -> dict:
    """Split the pairing by the two parallel stopping families and verify
    every intermediate inequality of the two-weight argument."""
    s = inst.system
    T = inst.kernel
    famF = build_family("LEMMA31", f, inst.sigma)
    famG = build_family("LEMMA31", g, inst.omega)

    fi = cube_integrals(f, inst.sigma)
    gi = cube_integrals(g, inst.omega)
    terms = np.einsum("qj,qji,qi->q", gi, T.blocks, fi)
    terms[~s.active] = 0.0
    S = float(terms.sum())
    S1 = S2 = 0.0
    for Q in np.nonzero(s.active)[0]:
        F, G = famF.parent_of[Q], famG.parent_of[Q]
        if s.contains(F, G):
            S1 += float(terms[Q])
        else:
            S2 += float(terms[Q])
    rows = [Check("split_exhausts_sum", S <= S1 + S2 + tol, S1 + S2 - S)]

    half1 = _half_chain(T, famF, famG, f, g, inst.sigma, inst.omega,
                        inst.p, inst.q, S1, testing_direct, tol)
    Tst = T.adjoint()
    half2 = _half_chain(Tst, famG, famF, g, f, inst.omega, inst.sigma,
                        conjugate(inst.q), conjugate(inst.p), S2,
                        testing_dual, tol)
    rows += [Check(f"direct:{c.name}", c.ok, c.margin, c.offender)
             for c in half1["rows"]]
    rows += [Check(f"dual:{c.name}", c.ok, c.margin, c.offender)
             for c in half2["rows"]]
    rows.append(Check("total_bound", S <= half1["bound"] + half2["bound"] + tol,
                      half1["bound"] + half2["bound"] - S))
    return {"S": S, "S1": S1, "S2": S2, "rows": rows,
            "testing_ratio_direct": half1["testing_ratio_max"],
            "testing_ratio_dual": half2["testing_ratio_max"]}
