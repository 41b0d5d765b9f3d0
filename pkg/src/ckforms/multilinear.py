"""Exterior-algebra kernels on increasing-index component arrays.

A p-form (or p-vector) on an n-dimensional space is stored by its components
over strictly increasing index tuples, lexicographically ordered, so the
component axis has length C(n, p).  All kernels here accept either a plain
ndarray whose last axis is the component axis, or a Jet whose last *batch*
axis is the component axis; arithmetic then carries full derivative
information for free.
"""

import math
from functools import lru_cache
from itertools import combinations, permutations

import numpy as np

from .errors import DegreeError
from .jets import Jet


@lru_cache(maxsize=None)
def form_indices(n, p):
    """Strictly increasing p-tuples from range(n), lex sorted."""
    if p < 0 or p > n:
        raise DegreeError(f"degree {p} out of range for dimension {n}")
    return tuple(combinations(range(n), p))


@lru_cache(maxsize=None)
def form_position(n, p):
    return {J: k for k, J in enumerate(form_indices(n, p))}


def n_components(n, p):
    return math.comb(n, p)


def merge_sign(a, b):
    """Sign of sorting the concatenation of two disjoint increasing tuples.

    Returns 0 if the tuples share an index.
    """
    if set(a) & set(b):
        return 0
    sign = 1
    for x in a:
        # count elements of b that x must move past
        sign *= (-1) ** sum(1 for y in b if y < x)
    return sign


def perm_sign(seq):
    """Sign of the permutation sorting seq; 0 on repeats."""
    seq = list(seq)
    if len(set(seq)) != len(seq):
        return 0
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


# ---------------------------------------------------------------------------
# gather/scatter helpers shared by all kernels


def _gather(x, idx):
    if isinstance(x, Jet):
        return Jet(x.dim, x.order, x.coeffs[..., idx, :])
    return np.asarray(x)[..., idx]


def _scale(x, s):
    if isinstance(x, Jet):
        return Jet(x.dim, x.order, x.coeffs * np.asarray(s, float)[..., None])
    return x * s


def _scatter(x, mat):
    """Contract the last component axis with a scatter matrix (rows, cols)."""
    if isinstance(x, Jet):
        return Jet(x.dim, x.order, np.einsum("...rc,ro->...oc", x.coeffs, mat))
    return np.asarray(x) @ mat


def _mul(a, b):
    return a * b


# ---------------------------------------------------------------------------
# wedge product


@lru_cache(maxsize=None)
def _wedge_table(n, p, q):
    ia, ib, sgn, tgt = [], [], [], []
    pos_out = form_position(n, p + q)
    for ka, J in enumerate(form_indices(n, p)):
        for kb, K in enumerate(form_indices(n, q)):
            s = merge_sign(J, K)
            if s == 0:
                continue
            ia.append(ka)
            ib.append(kb)
            sgn.append(s)
            tgt.append(pos_out[tuple(sorted(J + K))])
    ia, ib = np.array(ia, int), np.array(ib, int)
    sgn = np.array(sgn, float)
    scatter = np.zeros((len(ia), n_components(n, p + q)))
    scatter[np.arange(len(ia)), tgt] = 1.0
    return ia, ib, sgn, scatter


def wedge(a, b, n, p, q):
    """Components of the wedge product of a p-form and a q-form."""
    if p + q > n:
        raise DegreeError(f"wedge degree {p + q} exceeds dimension {n}")
    ia, ib, sgn, scatter = _wedge_table(n, p, q)
    prod = _scale(_mul(_gather(a, ia), _gather(b, ib)), sgn)
    return _scatter(prod, scatter)


# ---------------------------------------------------------------------------
# interior product (contraction with a vector in the first slot)


@lru_cache(maxsize=None)
def _interior_table(n, p):
    comp, src, sgn, tgt = [], [], [], []
    pos_out = form_position(n, p - 1)
    for ks, J in enumerate(form_indices(n, p)):
        for a, j in enumerate(J):
            comp.append(j)
            src.append(ks)
            sgn.append((-1.0) ** a)
            tgt.append(pos_out[J[:a] + J[a + 1:]])
    comp, src = np.array(comp, int), np.array(src, int)
    sgn = np.array(sgn, float)
    scatter = np.zeros((len(src), n_components(n, p - 1)))
    scatter[np.arange(len(src)), tgt] = 1.0
    return comp, src, sgn, scatter


def interior(v, a, n, p):
    """Contraction of a p-form with a vector (components, first slot)."""
    if p == 0:
        raise DegreeError("cannot contract a 0-form")
    comp, src, sgn, scatter = _interior_table(n, p)
    prod = _scale(_mul(_gather(v, comp), _gather(a, src)), sgn)
    return _scatter(prod, scatter)


# ---------------------------------------------------------------------------
# compound matrix: the induced action of a linear map on p-vectors


@lru_cache(maxsize=None)
def _compound_table(n, p):
    rows = form_indices(n, p)
    tables = []
    for sigma in permutations(range(p)):
        s = perm_sign([sigma[i] for i in range(p)])
        pick = []
        for J in rows:
            for K in rows:
                pick.append([(J[a], K[sigma[a]]) for a in range(p)])
        tables.append((s, np.array(pick, int).reshape(len(rows), len(rows), p, 2)))
    return tables


def compound_matrix(m, n, p):
    """C(n,p) x C(n,p) matrix of p x p minors of an n x n matrix m.

    Works for ndarray or Jet matrices (two trailing batch axes).
    """
    if p == 0:
        if isinstance(m, Jet):
            return Jet.constant(np.ones(m.shape[:-2] + (1, 1)), m.dim, m.order)
        return np.ones(np.asarray(m).shape[:-2] + (1, 1))
    out = None
    for s, pick in _compound_table(n, p):
        term = None
        for a in range(p):
            f = _gather_matrix(m, pick[..., a, 0], pick[..., a, 1])
            term = f if term is None else term * f
        term = _scale_scalar(term, s)
        out = term if out is None else out + term
    return out


def _gather_matrix(m, ri, ci):
    if isinstance(m, Jet):
        return Jet(m.dim, m.order, m.coeffs[..., ri, ci, :])
    return np.asarray(m)[..., ri, ci]


def _scale_scalar(x, s):
    if s == 1:
        return x
    return x * float(s)


def compound_apply(m, comps, n, p):
    """Apply the degree-p compound of m to p-form components.

    Covariant components pull back with the transpose, so callers pick the
    matrix orientation; this is a plain matrix-vector product on the
    component axis.
    """
    cm = compound_matrix(m, n, p)
    if isinstance(cm, Jet) or isinstance(comps, Jet):
        if not isinstance(cm, Jet):
            return Jet(comps.dim, comps.order,
                       np.einsum("...ij,...jc->...ic", cm, comps.coeffs))
        if not isinstance(comps, Jet):
            return Jet(cm.dim, cm.order,
                       np.einsum("...ijc,...j->...ic", cm.coeffs, comps))
        prod = cm[..., :, :] * comps.expand(-2)
        return prod.sum(-1)
    return np.einsum("...ij,...j->...i", cm, comps)


# ---------------------------------------------------------------------------
# dense operator tensors (used to fuse form operations into einsum calls)


@lru_cache(maxsize=None)
def interior_tensor(n, p):
    """V with (v . psi)_K = sum_{i,J} V[i, J, K] v^i psi_J (p -> p-1)."""
    comp, src, sgn, scatter = _interior_table(n, p)
    V = np.zeros((n, n_components(n, p), n_components(n, p - 1)))
    for c, s, w, row in zip(comp, src, sgn, scatter):
        V[c, s] += w * row
    return V


@lru_cache(maxsize=None)
def wedge1_tensor(n, p):
    """U with (dx^j ^ psi)_K = sum U[j, J, K] psi_J (p -> p+1)."""
    ia, ib, sgn, scatter = _wedge_table(n, 1, p)
    U = np.zeros((n, n_components(n, p), n_components(n, p + 1)))
    for a, b, w, row in zip(ia, ib, sgn, scatter):
        U[a, b] += w * row
    return U


@lru_cache(maxsize=None)
def subst_tensor(n, p):
    """W with (M psi)_J = sum M^m_j W[m, j, J, J'] psi_{J'}.

    This is the derivation extension of an endomorphism M to p-forms:
    each index slot of J is replaced in turn through M.
    """
    C = n_components(n, p)
    pos = form_position(n, p)
    W = np.zeros((n, n, C, C))
    for kJ, J in enumerate(form_indices(n, p)):
        for a, j in enumerate(J):
            for m in range(n):
                repl = J[:a] + (m,) + J[a + 1:]
                s = perm_sign(repl)
                if s == 0:
                    continue
                W[m, j, kJ, pos[tuple(sorted(repl))]] += s
    return W


@lru_cache(maxsize=None)
def ext_d_table(n, p):
    """Rows (coord, src, dst, sign): (d psi)_K = sum sign * d_coord psi_src."""
    pos_src = form_position(n, p)
    coord, src, dst, sgn = [], [], [], []
    for kK, K in enumerate(form_indices(n, p + 1)):
        for a, i in enumerate(K):
            coord.append(i)
            src.append(pos_src[K[:a] + K[a + 1:]])
            dst.append(kK)
            sgn.append((-1.0) ** a)
    return (np.array(coord, int), np.array(src, int),
            np.array(dst, int), np.array(sgn))


# ---------------------------------------------------------------------------
# Hodge duality table


@lru_cache(maxsize=None)
def hodge_table(n, p):
    """(complement positions, signs): component J of a p-vector maps to
    component J^c of the (n-p)-form with sign eps(J, J^c)."""
    pos_out = form_position(n, n - p)
    dst = np.empty(n_components(n, p), int)
    sgn = np.empty(n_components(n, p))
    for k, J in enumerate(form_indices(n, p)):
        Jc = tuple(i for i in range(n) if i not in J)
        dst[k] = pos_out[Jc]
        sgn[k] = merge_sign(J, Jc)
    return dst, sgn


def hodge_scatter(n, p):
    """Scatter matrix version of hodge_table (C(n,p) x C(n,n-p))."""
    dst, sgn = hodge_table(n, p)
    mat = np.zeros((len(dst), n_components(n, n - p)))
    mat[np.arange(len(dst)), dst] = sgn
    return mat
