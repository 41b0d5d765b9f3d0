"""Parallel-section repackaging of the conformal Killing equation.

A conformal Killing p-form determines the four-slot section
(psi, d psi, d* psi, d d* psi) of the bundle
Lambda^p + Lambda^{p+1} + Lambda^{p-1} + Lambda^p, and the covariant
derivative of each slot is a pointwise linear expression in the others.
This module builds that linear expression as an explicit connection
matrix A(X), verifies the first-order identities it rests on, transports
sections along curves, and counts solution dimensions against the
C(n+2, p+1) bound.
"""

from dataclasses import dataclass

import numpy as np

from . import multilinear as ml
from .errors import DegreeError, GeometryError
from .forms import FormField, JetContext, _q_kernel, codiff_field, d_field
from .geometry import geodesic_integrate
from .jets import Jet, jeinsum
from .twistor import p1_traces, project_p1, twistor_components


# ---------------------------------------------------------------------------
# the four-slot section


@dataclass
class ESection:
    """Slot values (psi, d psi, d* psi, d d* psi) at one or many points."""

    degree: int
    psi: np.ndarray
    dpsi: np.ndarray
    dstar_psi: np.ndarray
    ddstar_psi: np.ndarray

    def flat(self):
        return np.concatenate(
            [self.psi, self.dpsi, self.dstar_psi, self.ddstar_psi], axis=-1)


def slot_dims(n, p):
    return (ml.n_components(n, p), ml.n_components(n, p + 1),
            ml.n_components(n, p - 1), ml.n_components(n, p))


def unflatten(vec, n, p):
    dims = slot_dims(n, p)
    cuts = np.cumsum(dims)[:-1]
    a, b, c, d = np.split(np.asarray(vec, float), cuts, axis=-1)
    return ESection(p, a, b, c, d)


def e_section(man, ff, x, chart=0):
    """Evaluate the four derived fields of a form at sample points."""
    x = np.asarray(x, float)
    p = ff.degree
    if p < 1 or p > man.dim - 1:
        raise DegreeError(f"E-sections need 1 <= p <= n-1, got {p}")
    ds = codiff_field(ff)
    return ESection(p, ff.values(x, chart), d_field(ff).values(x, chart),
                    ds.values(x, chart), d_field(ds).values(x, chart))


# ---------------------------------------------------------------------------
# projections and the theta operators


def _zero_slot(ctx, like, q):
    comps = ml.n_components(ctx.n, q) if 0 <= q <= ctx.n else 1
    shape = like.coeffs.shape[:-2] + (comps, like.coeffs.shape[-1])
    return Jet(ctx.n, like.order, np.zeros(shape))


def project_trace_free(ctx, S, q):
    """Trace-free projection of a covector-slot form S[i, J] in degree q.

    The summand is the zero bundle for q = 0 and q = n (the fiber is
    exhausted by the trace images); those cases return zero.
    """
    if q <= 0 or q >= ctx.n:
        return S * 0.0
    return project_p1(ctx, S, q)


def twistor_or_zero(ctx, a, q):
    """Twistor image of a q-form jet, zero in the degenerate degrees."""
    if q <= 0 or q >= ctx.n:
        na = ctx.nabla(a, q) if 0 < q < ctx.n else ctx.nabla(a, max(q, 0))
        return na * 0.0
    return twistor_components(ctx, a, q)


def theta_plus(ctx, S, p):
    """Degree-raising derivative of a covector-slot p-form section:
    wedge the derivative direction of nabla S into the form (keeping the
    section's own covector slot), then project trace-free."""
    dS = ctx.cov_deriv(S, p, 1)                       # (..., i, j, J)
    U = ml.wedge1_tensor(ctx.n, p)
    B = Jet(ctx.n, dS.order,
            np.einsum("...ijJc,iJK->...jKc", dS.coeffs, U))
    return project_trace_free(ctx, B, p + 1)


def theta_minus(ctx, S, p):
    """Degree-lowering companion: contract instead of wedge.  Carries the
    minus sign of the codifferential convention d* = -trace(nabla)."""
    dS = ctx.cov_deriv(S, p, 1)
    raised = jeinsum("ik,ijJ->kjJ", ctx.ginv, dS)
    V = ml.interior_tensor(ctx.n, p)
    B = Jet(ctx.n, raised.order,
            -np.einsum("...ijJc,iJK->...jKc", raised.coeffs, V))
    return project_trace_free(ctx, B, p - 1)


# ---------------------------------------------------------------------------
# curvature slot maps (jet level)


def r_plus_slots(ctx, a, p):
    """S[i, K] = R^+(e_i) a: frame-wedged curvature action per direction."""
    act = ctx.curvature_action(a, p)
    U = ml.wedge1_tensor(ctx.n, p)
    return Jet(ctx.n, act.order,
               np.einsum("...ijJc,jJK->...iKc", act.coeffs, U))


def r_minus_slots(ctx, a, p):
    """S[i, K] = R^-(e_i) a: frame-contracted curvature action."""
    act = ctx.curvature_action(a, p)
    raised = jeinsum("jk,ijJ->ikJ", ctx.ginv, act)
    V = ml.interior_tensor(ctx.n, p)
    return Jet(ctx.n, raised.order,
               np.einsum("...ikJc,kJK->...iKc", raised.coeffs, V))


def wedge_slots(ctx, b, q):
    """S[i, K] = X_i* ^ b: metric-lowered wedge per direction."""
    U = ml.wedge1_tensor(ctx.n, q)
    w = Jet(ctx.n, b.order,
            np.einsum("...Kc,jKJ->...jJc", b.coeffs, U))
    return jeinsum("ij,jJ->iJ", ctx.g, w)


def interior_slots(ctx, b, q):
    """S[i, K] = e_i . b: coordinate contraction per direction."""
    V = ml.interior_tensor(ctx.n, q)
    return Jet(ctx.n, b.order,
               np.einsum("...Kc,iKJ->...iJc", b.coeffs, V))


# ---------------------------------------------------------------------------
# first-order identities


def nabla_d_residual(man, ff, x, chart=0):
    """Residuals of the two covariant-derivative formulas satisfied by a
    conformal Killing form: nabla(d psi) from R^+ and d d* psi, and
    nabla(d* psi) from R^-, d d* psi and q(R).  Sup over coordinate
    directions; the input must actually be conformal Killing."""
    p = ff.degree
    n = man.dim
    if p < 1 or p > n - 1:
        raise DegreeError(f"formulas need 1 <= p <= n-1, got {p}")
    x = np.asarray(x, float)
    ctx = JetContext(man, x, 2, chart)
    a = ctx.field(ff)
    da = ctx.d(a, p)
    dsa = ctx.codiff(a, p)
    dds = ctx.d(dsa, p - 1)
    out = {}

    lhs = ctx.nabla(da, p + 1).value
    rp = r_plus_slots(ctx, a, p)
    wd = wedge_slots(ctx, dds, p)
    rhs = (rp * ((p + 1.0) / p)
           + wd * ((p + 1.0) / (p * (n - p + 1.0)))).value
    out["d"] = np.max(np.abs(lhs - rhs), axis=tuple(range(lhs.ndim - 2)))

    lhs = ctx.nabla(dsa, p - 1).value
    rm = r_minus_slots(ctx, a, p)
    idd = interior_slots(ctx, dds, p)
    iq = interior_slots(ctx, ctx.q_R(a, p), p)
    rhs = (rm * (-(n - p + 1.0) / (n - p))
           + idd * (1.0 / p)
           + iq * (-(n - p + 1.0) / (p * (n - p)))).value
    out["dstar"] = np.max(np.abs(lhs - rhs), axis=tuple(range(lhs.ndim - 2)))
    return out


def twistor_weitzenbock_residuals(man, ff, x, chart=0):
    """Residuals of the two derivative-commutation identities that hold
    for ARBITRARY forms: the twistor image of d psi (resp. d* psi)
    against the theta-derivative of T psi plus curvature terms."""
    p = ff.degree
    n = man.dim
    if p < 1 or p > n - 1:
        raise DegreeError(f"identities need 1 <= p <= n-1, got {p}")
    x = np.asarray(x, float)
    ctx = JetContext(man, x, 3, chart)
    a = ctx.field(ff)
    T = twistor_components(ctx, a, p)
    out = {}

    lhs = twistor_or_zero(ctx, ctx.d(a, p), p + 1)
    rhs = (theta_plus(ctx, T, p) * ((p + 1.0) / p)
           + r_plus_slots(ctx, a, p) * ((p + 1.0) / p)
           + wedge_slots(ctx, ctx.q_R(a, p), p)
           * ((p + 1.0) / (p * (n - p))))
    diff = (lhs - rhs).value
    out["raise"] = np.max(np.abs(diff), axis=tuple(range(diff.ndim - 2)))

    lhs = twistor_or_zero(ctx, ctx.codiff(a, p), p - 1)
    rhs = (theta_minus(ctx, T, p) * ((n - p + 1.0) / (n - p))
           + r_minus_slots(ctx, a, p) * (-(n - p + 1.0) / (n - p))
           + interior_slots(ctx, ctx.q_R(a, p), p)
           * (-(n - p + 1.0) / (p * (n - p))))
    diff = (lhs - rhs).value
    out["lower"] = np.max(np.abs(diff), axis=tuple(range(diff.ndim - 2)))
    return out


def nabla_curvature_terms(man, ff, X, Y, x, chart=0):
    """Residuals of the Leibniz expansions of nabla_X(R^-(Y) psi) and
    nabla_X(q(R) psi) in terms of nabla R, nabla Y and nabla psi.
    X, Y are constant coordinate vectors (their covariant derivative is
    the Christoffel contraction)."""
    p = ff.degree
    n = man.dim
    x = np.asarray(x, float)
    X = np.asarray(X, float)
    Y = np.asarray(Y, float)
    ctx = JetContext(man, x, 3, chart)
    a = ctx.field(ff)
    na = ctx.nabla(a, p)
    nXa = Jet(n, na.order, np.einsum("i,...iJc->...Jc", X, na.coeffs))
    gam = ctx.gamma.value
    nabla_XY = np.einsum("i,...kij,j->...k", X, gam, Y)
    nr = ctx.nabla_riemann.value                  # (l, i, j, k, b)
    nr_up = np.einsum("...mk,...lijkb->...lmijb", ctx.ginv.value, nr)
    nX_up = np.einsum("l,...lmijb->...mijb", X, nr_up)
    W = ml.subst_tensor(n, p)
    nact = -np.einsum("...mijk,mkJK->...ijJK", nX_up, W)
    out = {}

    def as_jet(v, order):
        return Jet.constant(np.broadcast_to(v, x.shape).copy(), n, order)

    # contraction slot: nabla_X(R^-(Y) psi)
    rmY = ctx.r_minus(as_jet(Y, a.order - 2), a, p)
    cd = ctx.cov_deriv(rmY, p - 1, 0).value
    lhs = np.einsum("i,...iJ->...J", X, cd)
    rhs = (ctx.r_minus(as_jet(nabla_XY, 0), a, p)
           + ctx.r_minus(as_jet(Y, 0), nXa, p)).value
    V = ml.interior_tensor(n, p)
    nact_Y = np.einsum("i,...ijJK,...K->...jJ", Y, nact, a.value)
    raised = np.einsum("...jk,...jJ->...kJ", ctx.ginv.value, nact_Y)
    rhs = rhs + np.einsum("...kJ,kJM->...M", raised, V)
    out["rminus"] = np.max(np.abs(lhs - rhs),
                           axis=tuple(range(lhs.ndim - 1)))

    # endomorphism: nabla_X(q(R) psi)
    qa = ctx.q_R(a, p)
    lhs = np.einsum("i,...iJ->...J", X, ctx.cov_deriv(qa, p, 0).value)
    D = _q_kernel(n, p)
    mixed = np.einsum("...il,...ijJK->...ljJK", ctx.ginv.value, nact)
    q_nabla = np.einsum("...ljJK,ljJM,...K->...M", mixed, D, a.value)
    rhs = ctx.q_R(nXa, p).value + q_nabla
    out["q"] = np.max(np.abs(lhs - rhs), axis=tuple(range(lhs.ndim - 1)))
    return out


def projection_relation_residual(n, p, seed=0, samples=20):
    """Direct numerical check, on random 3-tensors with a random metric,
    of the linear relation tying the three degree-raising projections of
    a second-derivative tensor: (p+1) pi+ + pr1+ = ((p+1)/p) pr2+."""
    if p < 1 or p + 1 > n - 1:
        raise DegreeError("relation needs 1 <= p <= n-2")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    g = A @ A.T + n * np.eye(n)
    man = _FlatMetricPoint(n, g)
    ctx = JetContext(man, np.zeros((samples, n)), 0)
    C = ml.n_components(n, p)
    U = ml.wedge1_tensor(n, p)
    S = rng.standard_normal((samples, n, n, C))

    def pr(arr, q):
        return project_p1(ctx, Jet.constant(arr, n, 0), q)

    # wedge the second slot straight into the form
    pr1 = pr(np.einsum("...abJ,bJK->...aK", S, U), p + 1)
    # trace-free the (second, form) pair first, then wedge the first slot
    P = np.stack([pr(S[..., a, :, :], p).value for a in range(n)], axis=-3)
    pr2 = pr(np.einsum("...abJ,aJK->...bK", P, U), p + 1)
    # antisymmetrize the covector slots and substitute the frame; the
    # 1/p weight normalizes the substitution so the stated coefficients
    # of the relation are exact
    alt = (S - S.swapaxes(-3, -2)) / p
    pi_plus = pr(np.einsum("...amJ,aJK->...mK", alt, U), p + 1)

    res = (pi_plus * (p + 1.0) + pr1 - pr2 * ((p + 1.0) / p)).value
    return float(np.max(np.abs(res)))


class _FlatMetricPoint:
    """Minimal manifold stub: one chart, constant metric (for pointwise
    linear algebra through JetContext)."""

    def __init__(self, n, g):
        self.dim = n
        self._g = np.asarray(g, float)
        self.volume_orientation = 1.0

    def metric_jet(self, x, order, chart=0):
        x = np.asarray(x, float)
        return Jet.constant(
            np.broadcast_to(self._g, x.shape[:-1] + self._g.shape),
            self.dim, order)


# ---------------------------------------------------------------------------
# the connection matrix


class _PointKernels:
    """Pointwise curvature matrices at batched sample points.

    Every map is stored as a matrix block (..., out, in) acting on form
    components, with an optional leading direction axis.
    """

    def __init__(self, man, x, p, chart=0):
        self.man = man
        self.n = man.dim
        self.p = p
        self.x = np.asarray(x, float)
        ctx = JetContext(man, self.x, 3, chart)
        self.ctx = ctx
        self.g = ctx.g.value
        self.gi = ctx.ginv.value
        self.scalar = ctx.scalar.value
        self.r_up = ctx.r_up.value
        nr = ctx.nabla_riemann.value
        self.nr_up = np.einsum("...mk,...lijkb->...lmijb", self.gi, nr)
        self._cache = {}

    def _get(self, key, builder):
        if key not in self._cache:
            self._cache[key] = builder()
        return self._cache[key]

    def act(self, q):
        # curvature action matrix (..., i, j, J, K) on q-forms
        W = ml.subst_tensor(self.n, q)
        return self._get(("act", q), lambda: -np.einsum(
            "...mijk,mkJK->...ijJK", self.r_up, W))

    def nact(self, q):
        # directional-derivative curvature action (..., l, i, j, J, K)
        W = ml.subst_tensor(self.n, q)
        return self._get(("nact", q), lambda: -np.einsum(
            "...lmijk,mkJK->...lijJK", self.nr_up, W))

    def qm(self, q):
        # q(R) as a matrix (..., M, K)
        def build():
            D = _q_kernel(self.n, q)
            mixed = np.einsum("...il,...ijJK->...ljJK", self.gi, self.act(q))
            return np.einsum("...ljJK,ljJM->...MK", mixed, D)
        return self._get(("qm", q), build)

    def qn(self, q):
        # q(nabla_l R) matrices (..., l, M, K)
        def build():
            D = _q_kernel(self.n, q)
            mixed = np.einsum("...ia,...lijJK->...lajJK",
                              self.gi, self.nact(q))
            return np.einsum("...lajJK,ajJM->...lMK", mixed, D)
        return self._get(("qn", q), build)

    def rp(self, q):
        # R^+(e_i) matrices (..., i, P, K)
        U = ml.wedge1_tensor(self.n, q)
        return self._get(("rp", q), lambda: np.einsum(
            "...ijJK,jJP->...iPK", self.act(q), U))

    def rm(self, q):
        # R^-(e_i) matrices (..., i, M, K)
        V = ml.interior_tensor(self.n, q)
        return self._get(("rm", q), lambda: np.einsum(
            "...jl,...ijJK,lJM->...iMK", self.gi, self.act(q), V))

    def nrp(self, q):
        U = ml.wedge1_tensor(self.n, q)
        return self._get(("nrp", q), lambda: np.einsum(
            "...lijJK,jJP->...liPK", self.nact(q), U))

    def nrm(self, q):
        V = ml.interior_tensor(self.n, q)
        return self._get(("nrm", q), lambda: np.einsum(
            "...ja,...lijJK,aJM->...liMK", self.gi, self.nact(q), V))

    def wm(self, q):
        # metric-lowered wedge matrices (..., i, P, K)
        U = ml.wedge1_tensor(self.n, q)
        return self._get(("wm", q), lambda: np.einsum(
            "...ij,jKP->...iPK", self.g, U))

    def im(self, q):
        # coordinate contraction matrices (i, M, K), point independent
        V = ml.interior_tensor(self.n, q)
        return self._get(("im", q), lambda: V.swapaxes(-1, -2))

    def project_blocks(self, B, q):
        """Trace-free projection of a covector-slot block (..., i, q, in)."""
        n = self.n
        if q <= 0 or q >= n:
            return np.zeros_like(B)
        U = ml.wedge1_tensor(n, q)
        V = ml.interior_tensor(n, q)
        w = np.einsum("...iPK,iPW->...WK", B, U)
        c = np.einsum("...il,...iPK,lPM->...MK", self.gi, B, V)
        Vup = ml.interior_tensor(n, q + 1)
        t1 = np.einsum("iWP,...WK->...iPK", Vup, w)
        Ud = ml.wedge1_tensor(n, q - 1)
        t2 = np.einsum("...il,lMP,...MK->...iPK", self.g, Ud, c)
        return B - t1 / (q + 1.0) - t2 / (n - q + 1.0)


class ConnectionMatrix:
    """The 4x4 block matrix A(X) of the parallel-section repackaging."""

    def __init__(self, n, p, blocks, reduced=False):
        self.n = n
        self.p = p
        self.blocks = blocks          # 4x4 nested list, None for zero
        self.dims = slot_dims(n, p)
        self.reduced = reduced

    @property
    def full(self):
        N = sum(self.dims)
        batch = ()
        for row in self.blocks:
            for b in row:
                if b is not None:
                    batch = b.shape[:-2]
                    break
        out = np.zeros(batch + (N, N))
        ro = 0
        for r, dr in enumerate(self.dims):
            co = 0
            for c, dc in enumerate(self.dims):
                b = self.blocks[r][c]
                if b is not None:
                    out[..., ro:ro + dr, co:co + dc] = b
                co += dc
            ro += dr
        return out

    def apply(self, section):
        vec = section.flat() if isinstance(section, ESection) else section
        out = np.einsum("...NK,...K->...N", self.full, vec)
        return unflatten(out, self.n, self.p)


def _direction_blocks(k):
    """All sixteen blocks with a leading direction axis, before the
    contraction with X.  Returns a 4x4 nested list; entries None or
    arrays (..., dir, out, in)."""
    man, n, p = k.man, k.n, k.p
    if p < 1 or p > n - 1:
        raise DegreeError(f"connection needs 1 <= p <= n-1, got {p}")
    batch = k.g.shape[:-2]

    def bc(arr):
        # broadcast a point-independent (i, out, in) kernel to the batch
        return np.broadcast_to(arr, batch + arr.shape)

    A = [[None] * 4 for _ in range(4)]
    A[0][1] = bc(k.im(p + 1)) / (p + 1.0)
    A[0][2] = -k.wm(p - 1) / (n - p + 1.0)
    A[1][0] = k.rp(p) * ((p + 1.0) / p)
    A[1][3] = k.wm(p) * ((p + 1.0) / (p * (n - p + 1.0)))
    A[2][0] = (-((n - p + 1.0) / (n - p)) * k.rm(p)
               - ((n - p + 1.0) / (p * (n - p)))
               * np.einsum("iMJ,...JK->...iMK", k.im(p), k.qm(p)))
    A[2][3] = bc(k.im(p)) / p

    # slot maps of nabla psi in the other slots
    ndp = bc(k.im(p + 1)) / (p + 1.0)          # (..., l, p, p+1)
    nds = -k.wm(p - 1) / (n - p + 1.0)         # (..., l, p, p-1)

    if n == 2:
        # reduced surface variant: valid when the curvature is parallel
        # and the trace-free second derivative of d* psi vanishes (true
        # on constant-curvature surfaces, where the solution space still
        # closes); only the d* psi slot feeds the last row
        A[3][2] = -(k.scalar[..., None, None, None]
                    / (2.0 * (n - 1.0))) * k.wm(0)
        return A, True

    c3 = (n - p + 1.0) / (n - p)
    # divergence of the q(R) image: the trace part of the last row
    d_psi = -c3 * np.einsum("...jl,jMK,...lKP->...MP",
                            k.gi, k.im(p), k.qn(p))
    qm_p = k.qm(p)
    qd = np.einsum("jMK,...KP->...jMP", k.im(p), qm_p)
    d_dp = -c3 * np.einsum("...jl,...jMK,...lKP->...MP", k.gi, qd, ndp)
    d_ds = -c3 * np.einsum("...jl,...jMK,...lKP->...MP", k.gi, qd, nds)

    if p >= 2:
        c1 = -(n - p + 1.0) / (n - p)
        c2 = -(n - p + 1.0) / (p * (n - p))
        im_p = k.im(p)
        # derivative expansion of the twistor image of d* psi
        g_psi = (c1 * k.nrm(p)
                 + c2 * np.einsum("iMK,...lKP->...liMP", im_p, k.qn(p)))
        rmq = c1 * k.rm(p) + c2 * np.einsum(
            "iMK,...KP->...iMP", im_p, qm_p)
        g_dp = np.einsum("...iMK,...lKP->...liMP", rmq, ndp)
        g_ds = np.einsum("...iMK,...lKP->...liMP", rmq, nds)
        # wedge the derivative direction into the form, keep the slot
        U = ml.wedge1_tensor(n, p - 1)
        b_psi = np.einsum("...liMK,lMP->...iPK", g_psi, U)
        b_dp = np.einsum("...liMK,lMP->...iPK", g_dp, U)
        b_ds = np.einsum("...liMK,lMP->...iPK", g_ds, U)
        pb_psi = k.project_blocks(b_psi, p)
        pb_dp = k.project_blocks(b_dp, p)
        pb_ds = k.project_blocks(b_ds, p)

        cf = p / (p - 1.0)
        t_ds = cf * (k.rp(p - 1)
                     + np.einsum("...iPK,...KM->...iPM", k.wm(p - 1),
                                 k.qm(p - 1)) / (n - p + 1.0))
        wm0 = k.wm(p - 1)
        A[3][0] = (cf * pb_psi
                   - np.einsum("...iPM,...MK->...iPK", wm0, d_psi)
                   / (n - p + 1.0))
        A[3][1] = (cf * pb_dp
                   - np.einsum("...iPM,...MK->...iPK", wm0, d_dp)
                   / (n - p + 1.0))
        A[3][2] = (cf * pb_ds + t_ds
                   - np.einsum("...iPM,...MK->...iPK", wm0, d_ds)
                   / (n - p + 1.0))
        return A, False

    # p = 1, n >= 3: express the last row through the degree-two slot
    if n < 3:
        raise GeometryError("last row needs dimension >= 3 for p = 1")
    # twistor image of q(R) psi: the covector slot is the derivative itself
    b_psi = k.qn(1)                               # (..., l, M, K)
    nq_dp = np.einsum("...MK,...lKP->...lMP", k.qm(1), ndp)
    nq_ds = np.einsum("...MK,...lKP->...lMP", k.qm(1), nds)
    tq_psi = k.project_blocks(b_psi, 1)
    tq_dp = k.project_blocks(nq_dp, 1)
    tq_ds = k.project_blocks(nq_ds, 1)

    # twistor image of d psi (conformal input): blocks on psi only
    s2 = 2.0 * k.rp(1) + (2.0 / (n - 1.0)) * np.einsum(
        "...iPK,...KM->...iPM", k.wm(1), k.qm(1))
    # its derivative expansion
    gs_psi = (2.0 * k.nrp(1)
              + (2.0 / (n - 1.0)) * np.einsum(
                  "...iPK,...lKM->...liPM", k.wm(1), k.qn(1)))
    gs_dp = np.einsum("...iPK,...lKM->...liPM", s2, ndp)
    gs_ds = np.einsum("...iPK,...lKM->...liPM", s2, nds)
    # contract the derivative direction into the degree-two form
    V2 = ml.interior_tensor(n, 2)
    bm_psi = -np.einsum("...la,...aiPK,lPM->...iMK", k.gi, gs_psi, V2)
    bm_dp = -np.einsum("...la,...aiPK,lPM->...iMK", k.gi, gs_dp, V2)
    bm_ds = -np.einsum("...la,...aiPK,lPM->...iMK", k.gi, gs_ds, V2)
    pm_psi = k.project_blocks(bm_psi, 1)
    pm_dp = k.project_blocks(bm_dp, 1)
    pm_ds = k.project_blocks(bm_ds, 1)

    cl = (n - 1.0) / (n - 2.0)
    tdso_psi = cl * pm_psi
    tdso_dp = (cl * pm_dp
               - cl * k.rm(2)
               - (cl / 2.0) * np.einsum("iMK,...KP->...iMP",
                                        k.im(2), k.qm(2)))
    tdso_ds = cl * pm_ds

    cn = n / (n - 1.0)
    row_psi = cn * (tq_psi - 0.5 * tdso_psi)
    row_dp = cn * (tq_dp - 0.5 * tdso_dp)
    row_ds = cn * (tq_ds - 0.5 * tdso_ds)

    wm0 = k.wm(0)
    A[3][0] = row_psi - np.einsum("...iPM,...MK->...iPK",
                                  wm0, d_psi) / n
    A[3][1] = row_dp - np.einsum("...iPM,...MK->...iPK", wm0, d_dp) / n
    A[3][2] = row_ds - np.einsum("...iPM,...MK->...iPK", wm0, d_ds) / n
    return A, False


def connection_directions(man, x, p, chart=0):
    """Per-direction connection matrices (..., dir, N, N) plus the
    reduced-variant flag."""
    k = _PointKernels(man, x, p, chart)
    A, reduced = _direction_blocks(k)
    dims = slot_dims(man.dim, p)
    N = sum(dims)
    batch = k.g.shape[:-2]
    out = np.zeros(batch + (man.dim, N, N))
    ro = 0
    for r, dr in enumerate(dims):
        co = 0
        for c, dc in enumerate(dims):
            if A[r][c] is not None:
                out[..., :, ro:ro + dr, co:co + dc] = A[r][c]
            co += dc
        ro += dr
    return out, reduced


def assemble_A(man, x, X, p, chart=0):
    """Connection matrix A(X) at sample points for a direction X."""
    k = _PointKernels(man, x, p, chart)
    A, reduced = _direction_blocks(k)
    X = np.asarray(X, float)
    blocks = [[None if b is None else np.einsum("...i,...iPK->...PK",
                                                np.broadcast_to(X, b.shape[:-2]), b)
               for b in row] for row in A]
    return ConnectionMatrix(man.dim, p, blocks, reduced)


def parallel_residual(man, ff, x, chart=0):
    """Central soundness check: for a conformal Killing form the jet
    covariant derivative of every slot equals the connection matrix
    applied to the section, in every coordinate direction."""
    p = ff.degree
    n = man.dim
    x = np.asarray(x, float)
    dirs, _ = connection_directions(man, x, p, chart)
    sec = e_section(man, ff, x, chart)
    pred = np.einsum("...iNK,...K->...iN", dirs, sec.flat())

    ctx = JetContext(man, x, 3, chart)
    a = ctx.field(ff)
    da = ctx.d(a, p)
    dsa = ctx.codiff(a, p)
    dds = ctx.d(dsa, p - 1)
    actual = np.concatenate([
        ctx.nabla(a, p).value, ctx.nabla(da, p + 1).value,
        ctx.nabla(dsa, p - 1).value, ctx.nabla(dds, p).value], axis=-1)
    return np.max(np.abs(pred - actual), axis=tuple(range(pred.ndim - 2)))


# ---------------------------------------------------------------------------
# transport and the dimension bound


def transport_E(man, p, section0, curve, t_span, steps=200, chart=0):
    """Parallel transport of a section along a curve by RK4 on
    s' = A(x'(t)) s.  curve(t) must return (point, velocity)."""
    n = man.dim
    vec = (section0.flat() if isinstance(section0, ESection)
           else np.asarray(section0, float)).astype(float)
    t0, t1 = t_span
    h = (t1 - t0) / steps

    dims = slot_dims(n, p)
    degs = (p, p + 1, p - 1, p)
    offs = np.concatenate([[0], np.cumsum(dims)])

    def rhs(t, s):
        xp, vp = curve(t)
        vp = np.asarray(vp, float)
        dirs, _ = connection_directions(man, np.atleast_2d(xp), p, chart)
        Ax = np.einsum("i,biNK->NK", vp, dirs)
        # the ODE evolves coordinate components, so the Christoffel
        # action on each slot's form indices is added back
        ctx = JetContext(man, np.atleast_2d(xp), 1, chart)
        gam = ctx.gamma.value[0]
        for sl, q in enumerate(degs):
            if q <= 0:
                continue
            W = ml.subst_tensor(n, q)
            C = np.einsum("i,mij,mjJK->JK", vp, gam, W)
            o = offs[sl]
            Ax[o:o + dims[sl], o:o + dims[sl]] += C
        return Ax @ s

    t = t0
    s = vec.copy()
    for _ in range(steps):
        k1 = rhs(t, s)
        k2 = rhs(t + h / 2, s + h / 2 * k1)
        k3 = rhs(t + h / 2, s + h / 2 * k2)
        k4 = rhs(t + h, s + h * k3)
        s = s + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return unflatten(s, n, p)


def dimension_count(man, p, fields, samples, chart=0, rel_cut=1e-8):
    """Numerical solution-space dimension against the binomial bound.

    Stacks the flattened sections of the candidate fields at sample
    points and counts singular values above rel_cut * max.
    """
    from math import comb
    x = np.asarray(samples, float)
    rows = []
    for ff in fields:
        rows.append(e_section(man, ff, x, chart).flat().ravel())
    M = np.stack(rows)
    if M.shape[1] < 2 * len(fields):
        raise GeometryError("too few sample points for a stable rank")
    sv = np.linalg.svd(M, compute_uv=False)
    rank = int(np.sum(sv > rel_cut * sv[0]))
    bound = comb(man.dim + 2, p + 1)
    verdict = ("attained" if rank == bound
               else "below bound" if rank < bound else "exceeds bound")
    return rank, bound, verdict
