"""The twistor operator on forms and the residual suite built around it.

The covariant derivative of a p-form splits into an exterior part, a
codifferential part, and a trace-free remainder; the remainder is the
twistor operator.  A form is conformal Killing when the remainder
vanishes, Killing when it is additionally coclosed, and special Killing
when the derivative of its exterior derivative is proportional to a
metric wedge with the form itself.

Every checker in this module returns either raw per-point residual arrays
(for composition in tests) or a ResidualReport (for the CLI).  Residuals
are measured in metric norms, so they are frame-independent up to the
metric condition number.
"""

from functools import lru_cache
from itertools import permutations

import numpy as np

from . import multilinear as ml
from .errors import DegreeError, SampleError
from .forms import FormField, JetContext, _q_kernel, jinv_trunc
from .geometry import Chart, ChartManifold
from .jets import Jet, jeinsum
from .reports import make_report

REL_TOL = 1e-7
ABS_FLOOR = 1e-10


def residual_tolerance(scale, rel=REL_TOL, floor=ABS_FLOOR):
    """Default tolerance: relative to the field magnitude with an absolute
    floor for fields that vanish at a sample point."""
    return max(rel * float(scale), floor)


# ---------------------------------------------------------------------------
# the operator itself


def twistor_components(ctx, a, p):
    """T[i, J]: trace-free part of the covariant derivative (order drops 1).

    T_X a = nabla_X a - 1/(p+1) X . da + 1/(n-p+1) X* ^ d*a.
    """
    n = ctx.n
    if p < 1 or p > n - 1:
        raise DegreeError(f"twistor operator needs 1 <= p <= n-1, got {p}")
    na = ctx.nabla(a, p)
    da = ctx.d(a, p)
    V = ml.interior_tensor(n, p + 1)
    t1 = Jet(n, da.order, np.einsum("...Kc,iKJ->...iJc", da.coeffs, V))
    dsa = ctx.codiff(a, p)
    U = ml.wedge1_tensor(n, p - 1)
    w = Jet(n, dsa.order, np.einsum("...Kc,jKJ->...jJc", dsa.coeffs, U))
    t2 = jeinsum("ij,jJ->iJ", ctx.g, w)
    return na - t1 * (1.0 / (p + 1)) + t2 * (1.0 / (n - p + 1))


def p1_traces(ctx, S, p):
    """Both traces of a 1-form-valued p-form S[i, J].

    Returns (wedge trace sum_i dx^i ^ S_i, metric trace sum g^{ij} e_j . S_i).
    Elements of the trace-free summand kill both.
    """
    n = ctx.n
    U = ml.wedge1_tensor(n, p)
    w = Jet(n, S.order, np.einsum("...iJc,iJK->...Kc", S.coeffs, U))
    raised = jeinsum("ij,jJ->iJ", ctx.ginv, S)
    V = ml.interior_tensor(n, p)
    c = Jet(n, raised.order, np.einsum("...iJc,iJK->...Kc", raised.coeffs, V))
    return w, c


def project_p1(ctx, S, p):
    """Orthogonal projection of S[i, J] onto the trace-free summand.

    pr(S)_i = S_i - 1/(p+1) e_i . w - 1/(n-p+1) X_i* ^ c with w, c the two
    traces; idempotent, kills pure wedge and pure contraction inputs.
    """
    n = ctx.n
    w, c = p1_traces(ctx, S, p)
    V = ml.interior_tensor(n, p + 1)
    iw = Jet(n, w.order, np.einsum("...Kc,iKJ->...iJc", w.coeffs, V))
    U = ml.wedge1_tensor(n, p - 1)
    t = Jet(n, c.order, np.einsum("...Kc,jKJ->...jJc", c.coeffs, U))
    xc = jeinsum("ij,jJ->iJ", ctx.g, t)
    return S - iw * (1.0 / (p + 1)) - xc * (1.0 / (n - p + 1))


def vector_form_norm2(ctx, S, p):
    """|S|^2 = g^{ij} <S_i, S_j> for a 1-form-valued p-form."""
    raised = jeinsum("ij,jJ->iJ", ctx.ginv, S)
    if p > 0:
        cm = ml.compound_matrix(jinv_trunc(ctx.ginv, raised), ctx.n, p)
        raised = jeinsum("JK,iK->iJ", cm, raised)
    return jeinsum("iJ,iJ->", S, raised)


def t_star_t(ctx, a, p):
    """Formal-adjoint composition: minus the covariant divergence of the
    twistor image (consumes two derivative orders)."""
    T = twistor_components(ctx, a, p)
    S = ctx.cov_deriv(T, p, 1)
    return -jeinsum("ij,ijJ->J", ctx.ginv, S)


def laplacian(ctx, a, p):
    """Hodge Laplacian d*d + dd* on component jets (order drops by 2)."""
    lap = ctx.codiff(ctx.d(a, p), p + 1)
    if p >= 1:
        lap = lap + ctx.d(ctx.codiff(a, p), p - 1)
    return lap


class TwistorValue:
    """Pointwise twistor image T_{i;J} with its two trace defects."""

    def __init__(self, components, wedge_trace, contraction_trace):
        self.components = components
        self.wedge_trace = wedge_trace
        self.contraction_trace = contraction_trace

    def trace_defect(self):
        return max(float(np.max(np.abs(self.wedge_trace))),
                   float(np.max(np.abs(self.contraction_trace))))


def twistor_apply(man, ff, x, chart=0):
    """Evaluate the twistor operator of a form field at points x."""
    ctx = JetContext(man, x, 1, chart)
    a = ctx.field(ff)
    T = twistor_components(ctx, a, ff.degree)
    w, c = p1_traces(ctx, T, ff.degree)
    return TwistorValue(T.value, w.value, c.value)


# ---------------------------------------------------------------------------
# defining-equation residuals


def _norm_arrays(man, ff, x, chart):
    p = ff.degree
    ctx = JetContext(man, x, 1, chart)
    a = ctx.field(ff)
    T = twistor_components(ctx, a, p)
    tnorm2 = vector_form_norm2(ctx, T, p).value
    da = ctx.d(a, p)
    dsa = ctx.codiff(a, p)
    d2 = ctx.norm2(da, p + 1).value
    ds2 = ctx.norm2(dsa, p - 1).value
    psi2 = ctx.norm2(a, p).value
    grad2 = vector_form_norm2(ctx, ctx.nabla(a, p), p).value
    return tnorm2, d2, ds2, psi2, grad2


def _residual_report(man, ff, sample, chart, mode, tol, check_id):
    sample = np.asarray(sample, float)
    if sample.size == 0:
        raise SampleError("empty sample")
    tnorm2, d2, ds2, psi2, _ = _norm_arrays(man, ff, sample, chart)
    extra = {"ckf": 0.0, "killing": ds2, "star_killing": d2}[mode]
    res = np.sqrt(np.maximum(tnorm2 + extra, 0.0))
    if tol is None:
        tol = residual_tolerance(np.sqrt(np.max(psi2)))
    cid = check_id or f"{mode}:{ff.label}@{man.name}"
    return make_report(cid, res[:, None], sample, tol)


def ckf_residual(man, ff, sample, chart=0, tol=None, check_id=None):
    """Conformal Killing check: metric norm of the twistor image."""
    return _residual_report(man, ff, sample, chart, "ckf", tol, check_id)


def killing_residual(man, ff, sample, chart=0, tol=None, check_id=None):
    """Killing check: twistor image plus the codifferential must vanish."""
    return _residual_report(man, ff, sample, chart, "killing", tol, check_id)


def star_killing_residual(man, ff, sample, chart=0, tol=None, check_id=None):
    """Dual variant: twistor image plus the exterior derivative."""
    return _residual_report(man, ff, sample, chart, "star_killing", tol,
                            check_id)


def norm_estimate_gap(man, ff, x, chart=0):
    """Sharp first-derivative estimate: returns the gradient energy, the
    lower bound built from d and d*, their gap, and |T psi|^2.

    The gap equals |T psi|^2 identically (orthogonal splitting), so it is
    nonnegative and vanishes exactly on conformal Killing forms.
    """
    p, n = ff.degree, man.dim
    tnorm2, d2, ds2, _, grad2 = _norm_arrays(man, ff, x, chart)
    bound = d2 / (p + 1.0) + ds2 / (n - p + 1.0)
    return {"grad2": grad2, "bound": bound, "gap": grad2 - bound,
            "tnorm2": tnorm2}


# ---------------------------------------------------------------------------
# Weitzenboeck-type identities


def weitzenbock_residuals(man, ff, x, chart=0):
    """Residuals of the two second-order identities satisfied by T*T.

    first:     nabla*nabla - 1/(p+1) d*d - 1/(n-p+1) dd*  - T*T
    second:    q(R)        - p/(p+1) d*d - (n-p)/(n-p+1) dd* + T*T
    classical: (d*d + dd*) - nabla*nabla - q(R)
    All three vanish identically on smooth forms.
    """
    p, n = ff.degree, man.dim
    ctx = JetContext(man, x, 2, chart)
    a = ctx.field(ff)
    tt = t_star_t(ctx, a, p).value
    dsd = ctx.codiff(ctx.d(a, p), p + 1).value
    dds = ctx.d(ctx.codiff(a, p), p - 1).value
    rough = -jeinsum("ij,ijJ->J", ctx.ginv, ctx.nabla2(a, p)).value
    q = ctx.q_R(a, p).value
    first = rough - dsd / (p + 1.0) - dds / (n - p + 1.0) - tt
    second = (q - (p / (p + 1.0)) * dsd
              - ((n - p) / (n - p + 1.0)) * dds + tt)
    classical = (dsd + dds) - rough - q
    return {"first": first, "second": second, "classical": classical}


def integrability_residual(man, ff, x, chart=0):
    """For conformal Killing forms the curvature term is determined by the
    Laplacian pieces: q(R) psi - p/(p+1) d*d psi - (n-p)/(n-p+1) dd* psi."""
    p, n = ff.degree, man.dim
    ctx = JetContext(man, x, 2, chart)
    a = ctx.field(ff)
    q = ctx.q_R(a, p).value
    dsd = ctx.codiff(ctx.d(a, p), p + 1).value
    dds = ctx.d(ctx.codiff(a, p), p - 1).value
    return q - (p / (p + 1.0)) * dsd - ((n - p) / (n - p + 1.0)) * dds


def killing_eigen_check(man, ff, x, chart=0):
    """Coclosed Killing forms satisfy Laplacian = (p+1)/p q(R)."""
    p = ff.degree
    ctx = JetContext(man, x, 2, chart)
    a = ctx.field(ff)
    lap = laplacian(ctx, a, p).value
    q = ctx.q_R(a, p).value
    return lap - ((p + 1.0) / p) * q


# ---------------------------------------------------------------------------
# special Killing forms


def special_killing_residual(man, ff, x, c=None, variant="first_order",
                             chart=0):
    """Check nabla_X(d psi) = c X* ^ psi, or its once-integrated second
    derivative form; returns (residual array, constant used).

    With c=None the constant is fitted by least squares over all sampled
    components; for the second-order variant the constant scales by
    1/(p+1) relative to the first-order one.
    """
    p, n = ff.degree, man.dim
    ctx = JetContext(man, x, 2, chart)
    a = ctx.field(ff)
    aval = a.value
    g = ctx.g.value
    if variant == "first_order":
        nd = ctx.nabla(ctx.d(a, p), p + 1).value
        Up = ml.wedge1_tensor(n, p)
        model = np.einsum("...im,mJK,...J->...iK", g, Up, aval)
        data = nd
    elif variant == "second_order":
        n2 = ctx.nabla2(a, p).value
        Vp = ml.interior_tensor(n, p)
        Um = ml.wedge1_tensor(n, p - 1)
        inter = np.einsum("jJK,...J->...jK", Vp, aval)
        wi = np.einsum("...im,mKJ,...jK->...ijJ", g, Um, inter)
        model = g[..., :, :, None] * aval[..., None, None, :] - wi
        data = n2
        if c is not None:
            c = c / (p + 1.0)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    if c is None:
        denom = float(np.sum(model * model))
        c = float(np.sum(data * model)) / denom if denom > 0 else 0.0
    return data - c * model, float(c)


# ---------------------------------------------------------------------------
# conformal rescaling


def conformal_rescale(man, ff, lam):
    """Rescale the metric by exp(2 lam) and the field by exp((p+1) lam).

    lam is a jet-compatible scalar function of chart coordinates; the same
    coordinate formula is applied in every chart, so multi-chart
    consistency is the caller's concern (checks sample a single chart).
    Conformal Killing forms stay conformal Killing under this map.
    """
    p = ff.degree

    def lam_jet(c):
        v = lam(c)
        if isinstance(v, Jet):
            return v
        if isinstance(c, Jet):
            return Jet.constant(np.broadcast_to(np.asarray(v, float),
                                                c.shape[:-1]), c.dim, c.order)
        return np.asarray(v, float)

    def make_metric(base):
        def metric(c):
            m0 = base(c)
            lv = lam_jet(c)
            if isinstance(lv, Jet):
                f = (lv * 2.0).exp().expand(-1).expand(-1)
                if isinstance(m0, Jet):
                    return m0 * f
                return f * np.asarray(m0, float)
            f = np.exp(2.0 * lv)[..., None, None]
            if isinstance(m0, Jet):
                return m0 * f
            return np.asarray(m0, float) * f
        return metric

    charts = []
    for ch in man.charts:
        charts.append(Chart(metric=make_metric(ch.metric),
                            name=ch.name + "|conf",
                            sample_low=ch.sample_low,
                            sample_high=ch.sample_high,
                            contains=ch.contains,
                            transition=ch.transition,
                            transition_target=ch.transition_target,
                            switch=ch.switch))
    man2 = ChartManifold(man.dim, charts, name=man.name + "_conf",
                         volume_orientation=man.volume_orientation)

    def eval_fn(x, order, chart=0):
        base = ff.eval_fn(x, order, chart)
        lv = lam_jet(Jet.seed(np.asarray(x, float), order))
        return base * (lv * (p + 1.0)).exp().expand(-1)

    ff2 = FormField(man2, p, eval_fn, label=ff.label + "^conf")
    return man2, ff2


# ---------------------------------------------------------------------------
# symmetrized characterization


@lru_cache(maxsize=None)
def _dense_expand(n, p):
    """Matrix (C(n,p), n^p): increasing components to full dense components."""
    if p == 0:
        return np.ones((1, 1))
    C = ml.n_components(n, p)
    E = np.zeros((C, n ** p))
    for k, J in enumerate(ml.form_indices(n, p)):
        for sigma in permutations(range(p)):
            flat = 0
            for t in range(p):
                flat = flat * n + J[sigma[t]]
            E[k, flat] = ml.perm_sign(sigma)
    return E


def symmetrized_characterization(man, ff, x, chart=0):
    """Residual of the symmetric characterization of conformal Killing forms.

    (nabla_X psi)(Y, Z..) + (nabla_Y psi)(X, Z..) must equal the metric
    combination built from theta = -1/(n-p+1) d* psi; the normalization of
    theta is pinned by tracing over X = Y.  Returns the dense residual
    tensor (batch, i, j, p-1 slots).
    """
    p, n = ff.degree, man.dim
    ctx = JetContext(man, x, 1, chart)
    a = ctx.field(ff)
    nd = ctx.nabla(a, p).value
    th = ctx.codiff(a, p).value * (-1.0 / (n - p + 1.0))
    Ep = _dense_expand(n, p)
    Et = _dense_expand(n, p - 1)
    ndd = np.einsum("...iJ,JF->...iF", nd, Ep)
    ndd = ndd.reshape(nd.shape[:-1] + (n,) * p)
    thd = np.einsum("...J,JF->...F", th, Et)
    thd = thd.reshape(th.shape[:-1] + (n,) * (p - 1))
    lhs = ndd + np.swapaxes(ndd, -(p + 1), -p)
    w = "abc"[: p - 1]
    g = ctx.g.value
    rhs = 2.0 * np.einsum(f"...ij,...{w}->...ij{w}", g, thd)
    for r in range(p - 1):
        coef = -((-1.0) ** (r + 2))
        others = w[:r] + w[r + 1:]
        rhs += coef * (np.einsum(f"...j{w[r]},...i{others}->...ij{w}", g, thd)
                       + np.einsum(f"...i{w[r]},...j{others}->...ij{w}",
                                   g, thd))
    return lhs - rhs


# ---------------------------------------------------------------------------
# the quadratic first integral


def _killing_matrix(ctx, a, p):
    """K[i, j] = <e_i . psi, e_j . psi> as a jet matrix."""
    n = ctx.n
    V = ml.interior_tensor(n, p)
    I = Jet(n, a.order, np.einsum("...Jc,iJK->...iKc", a.coeffs, V))
    Ir = I
    if p - 1 > 0:
        cm = ml.compound_matrix(jinv_trunc(ctx.ginv, I), n, p - 1)
        Ir = jeinsum("JK,iK->iJ", cm, I)
    return jeinsum("iJ,jJ->ij", I, Ir)


def killing_tensor(man, ff, x, X=None, Y=None, chart=0):
    """Symmetric bilinear form K(X, Y) = g(X . psi, Y . psi).

    Without X, Y returns the full matrix at each point.  For Killing psi
    this is a Killing tensor: constant along geodesics in its own
    direction, with vanishing symmetrized covariant derivative.
    """
    ctx = JetContext(man, x, 1, chart)
    K = _killing_matrix(ctx, ctx.field(ff), ff.degree).value
    if X is None:
        return K
    return np.einsum("...ij,...i,...j->...", K, np.asarray(X, float),
                     np.asarray(Y, float))


def killing_trace_residual(man, ff, x, chart=0):
    """tr_g K - p |psi|^2, an algebraic identity for every form."""
    p = ff.degree
    ctx = JetContext(man, x, 1, chart)
    a = ctx.field(ff)
    K = _killing_matrix(ctx, a, p)
    tr = jeinsum("ij,ij->", ctx.ginv, K).value
    return tr - p * ctx.norm2(a, p).value


def cyclic_residual(man, ff, x, X=None, Y=None, Z=None, chart=0):
    """Cyclic sum of the covariant derivative of K; zero iff K is a
    Killing tensor, which holds whenever psi is a Killing form."""
    p = ff.degree
    ctx = JetContext(man, x, 2, chart)
    a = ctx.field(ff)
    K = _killing_matrix(ctx, a, p)
    G = ctx.cov_deriv(K.expand(-1), 0, 2).value[..., 0]    # (..., m, i, j)
    cyc = (G + np.moveaxis(G, -1, -3) + np.moveaxis(G, -3, -1))
    if X is None:
        return cyc
    return np.einsum("...mij,...m,...i,...j->...", cyc,
                     np.asarray(X, float), np.asarray(Y, float),
                     np.asarray(Z, float))


# ---------------------------------------------------------------------------
# curvature conditions


def curvature_condition(man, ff, x, chart=0):
    """Residual of the pointwise curvature identity for conformal Killing
    forms: R(X, Y) psi expressed through q(R) and the R^+/R^- operators.

    Returns the residual array over all coordinate pairs (X, Y) = (e_i, e_j).
    """
    p, n = ff.degree, man.dim
    if p == 0 or p == n:
        raise DegreeError("curvature condition needs 1 <= p <= n-1")
    ctx = JetContext(man, x, 2, chart)
    a = ctx.field(ff)
    act = ctx.curvature_action(a, p).value
    q = ctx.q_R(a, p).value
    g, gi = ctx.g.value, ctx.ginv.value
    Vp = ml.interior_tensor(n, p)
    Up = ml.wedge1_tensor(n, p)
    Vp1 = ml.interior_tensor(n, p + 1)
    Um = ml.wedge1_tensor(n, p - 1)
    # (X_j* ^ e_i . q) antisymmetrized, weight 1/(p(n-p))
    iq = np.einsum("iJK,...J->...iK", Vp, q)
    wiq = np.einsum("...jm,mKJ,...iK->...jiJ", g, Um, iq)
    A = np.swapaxes(wiq, -3, -2) - wiq
    # interior contraction with R^+, weight -1/p
    rp = np.einsum("...jkJ,kJK->...jK", act, Up)
    irp = np.einsum("iKJ,...jK->...ijJ", Vp1, rp)
    B = -(1.0 / p) * (irp - np.swapaxes(irp, -3, -2))
    # wedge with R^-, weight -1/(n-p)
    rm = np.einsum("...kl,lJK,...jkJ->...jK", gi, Vp, act)
    wrm = np.einsum("...im,mKJ,...jK->...ijJ", g, Um, rm)
    C = -(1.0 / (n - p)) * (wrm - np.swapaxes(wrm, -3, -2))
    return act - ((1.0 / (p * (n - p))) * A + B + C)


# ---------------------------------------------------------------------------
# decomposition of the full curvature action


def _orthobasis(cols, tol=1e-10):
    if cols.shape[1] == 0:
        return cols
    u, s, _ = np.linalg.svd(cols, full_matrices=False)
    return u[:, s > tol * max(1.0, s[0])]


@lru_cache(maxsize=None)
def _trace_free_projector(n, q):
    """Projector of R^n tensor Lambda^q onto its trace-free summand, with
    the Euclidean metric (used only at orthonormal-frame level)."""
    Cq = ml.n_components(n, q)
    dim = n * Cq
    P = np.eye(dim).reshape(n, Cq, n, Cq)
    if q + 1 <= n:
        U = ml.wedge1_tensor(n, q)
        Vq1 = ml.interior_tensor(n, q + 1)
        P = P - (1.0 / (q + 1)) * np.einsum("iKJ,cMK->iJcM", Vq1, U)
    if q >= 1:
        V = ml.interior_tensor(n, q)
        Um = ml.wedge1_tensor(n, q - 1)
        P = P - (1.0 / (n - q + 1)) * np.einsum("iKJ,cMK->iJcM", Um, V)
    return P.reshape(dim, dim)


@lru_cache(maxsize=None)
def _decomp_bases(n, p):
    """Orthonormal bases for five equivariant images inside Lambda^p (x)
    Lambda^2, plus the raw degree-p embedding matrix for calibration.

    Returns (bases dict, raw degree-p map, skipped names).  Components whose
    images overlap (degenerate n, p combinations) are dropped and reported.
    """
    C2, Cp = ml.n_components(n, 2), ml.n_components(n, p)
    idx2 = ml.form_indices(n, 2)
    dimV = C2 * Cp
    raw = {}
    # same degree: wedge one slot against a contraction of another
    D = _q_kernel(n, p)
    Fp = np.stack([(D[b, a] - D[a, b]).T for (a, b) in idx2])
    raw["p"] = Fp.reshape(dimV, Cp)
    # degree p+2: double contraction
    if p + 2 <= n:
        Vp2 = ml.interior_tensor(n, p + 2)
        Vp1 = ml.interior_tensor(n, p + 1)
        F = np.stack([np.einsum("SM,MK->KS", Vp2[a], Vp1[b])
                      for (a, b) in idx2])
        raw["p+2"] = F.reshape(dimV, ml.n_components(n, p + 2))
    # degree p-2: double wedge
    if p >= 2:
        Um2 = ml.wedge1_tensor(n, p - 2)
        Um1 = ml.wedge1_tensor(n, p - 1)
        F = np.stack([np.einsum("SM,MK->KS", Um2[b], Um1[a])
                      for (a, b) in idx2])
        raw["p-2"] = F.reshape(dimV, ml.n_components(n, p - 2))
    # trace-free one-form-valued neighbors
    if p + 1 <= n:
        Cp1 = ml.n_components(n, p + 1)
        Vp1 = ml.interior_tensor(n, p + 1)
        G = np.zeros((C2, Cp, n, Cp1))
        for k2, (a, b) in enumerate(idx2):
            G[k2, :, b, :] += Vp1[a].T
            G[k2, :, a, :] -= Vp1[b].T
        raw["p+1,1"] = G.reshape(dimV, n * Cp1) @ _trace_free_projector(
            n, p + 1)
    if p >= 1:
        Cm = ml.n_components(n, p - 1)
        Um1 = ml.wedge1_tensor(n, p - 1)
        G = np.zeros((C2, Cp, n, Cm))
        for k2, (a, b) in enumerate(idx2):
            G[k2, :, b, :] += Um1[a].T
            G[k2, :, a, :] -= Um1[b].T
        raw["p-1,1"] = G.reshape(dimV, n * Cm) @ _trace_free_projector(
            n, p - 1)
    bases = {k: _orthobasis(v) for k, v in raw.items()}
    bases = {k: v for k, v in bases.items() if v.shape[1] > 0}
    # distinct summands must come out mutually orthogonal; overlapping
    # pairs mark a degenerate (n, p) and are skipped
    skipped = set()
    names = list(bases)
    for i, ki in enumerate(names):
        for kj in names[i + 1:]:
            if np.max(np.abs(bases[ki].T @ bases[kj])) > 1e-8:
                skipped.update((ki, kj))
    bases = {k: v for k, v in bases.items() if k not in skipped}
    return bases, raw["p"], tuple(sorted(skipped))


def decompose_curvature_action(man, ff, x, chart=0):
    """Split R(., .) psi into its algebraically irreducible components.

    Works in the Gram-Schmidt orthonormal frame at each point so that the
    component projections are metric-independent.  Returns per-point norms
    of each component, the norm of the residual component (the summand
    that must vanish for conformal Killing forms), the degree-p component
    compared against q(R) psi after a one-time scale calibration, and the
    list of skipped (degenerate) components.
    """
    p, n = ff.degree, man.dim
    if p < 1 or p > n - 1:
        raise DegreeError("decomposition needs 1 <= p <= n-1")
    ctx = JetContext(man, x, 2, chart)
    a = ctx.field(ff)
    act = ctx.curvature_action(a, p).value
    q = ctx.q_R(a, p).value
    E = np.linalg.inv(np.linalg.cholesky(ctx.g.value))
    CE = ml.compound_matrix(E, n, p)
    act_f = np.einsum("...ai,...bj,...AJ,...ijJ->...abA", E, E, CE, act)
    q_f = np.einsum("...AJ,...J->...A", CE, q)
    idx2 = ml.form_indices(n, 2)
    C2, Cp = len(idx2), ml.n_components(n, p)
    M = np.stack([act_f[..., a, b, :] for (a, b) in idx2], axis=-2)
    vecB = M.reshape(M.shape[:-2] + (C2 * Cp,))
    bases, Fp, skipped = _decomp_bases(n, p)
    norms, recon = {}, np.zeros_like(vecB)
    cp_vec = None
    for name, U in bases.items():
        coef = vecB @ U
        norms[name] = np.linalg.norm(coef, axis=-1)
        part = coef @ U.T
        recon = recon + part
        if name == "p":
            cp_vec = part
    resid = vecB - recon
    out = {"components": norms,
           "residual_component": np.linalg.norm(resid, axis=-1),
           "total": np.linalg.norm(vecB, axis=-1),
           "skipped": list(skipped)}
    if cp_vec is not None:
        vq = np.einsum("vs,...s->...v", Fp, q_f)
        flat_v = vq.reshape(-1, vq.shape[-1])
        flat_c = cp_vec.reshape(-1, cp_vec.shape[-1])
        k = int(np.argmax(np.linalg.norm(flat_v, axis=-1)))
        denom = float(flat_v[k] @ flat_v[k])
        kappa = float(flat_c[k] @ flat_v[k]) / denom if denom > 0 else 0.0
        out["q_scale"] = kappa
        out["q_match_residual"] = np.linalg.norm(cp_vec - kappa * vq,
                                                 axis=-1)
    return out
