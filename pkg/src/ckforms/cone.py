"""The metric cone over a chart manifold and the lift/extract machinery.

The cone over (M, g) is M x (0, inf) with metric r^2 g + dr^2, built as an
ordinary ChartManifold (extra last coordinate r) so that every connection
and curvature quantity comes from the generic geometry stack; the special
cone-connection formulas are tests, not implementation shortcuts.

A p-form psi on M lifts to the (p+1)-form
    r^p dr ^ psi + r^{p+1}/(p+1) d psi
on the cone; the lift is parallel exactly when psi satisfies the special
Killing equation with constant -(p+1), which turns a differential problem
on M into a linear-algebra problem on the cone.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import multilinear as ml
from . import twistor as tw
from .errors import DegreeError, GeometryError
from .forms import FormField, JetContext, d_field, hodge_field
from .geometry import Chart, ChartManifold
from .jets import Jet, jet_embed, jet_restrict
from .reports import make_report


# ---------------------------------------------------------------------------
# the cone manifold


def _cone_metric(base_chart, n):
    def metric(c):
        if not isinstance(c, Jet):
            c = Jet.seed(np.asarray(c, float), 0)
        y = c[..., :n]
        r = c[..., n]
        gb = base_chart.metric(y)
        if not isinstance(gb, Jet):
            gb = Jet.constant(np.broadcast_to(
                np.asarray(gb, float), c.shape[:-1] + (n, n)),
                c.dim, c.order)
        top = gb * (r * r).expand(-1).expand(-1)
        out = np.zeros(top.coeffs.shape[:-3] + (n + 1, n + 1)
                       + top.coeffs.shape[-1:])
        out[..., :n, :n, :] = top.coeffs
        out[..., n, n, 0] = 1.0
        return Jet(c.dim, top.order, out)
    return metric


class ConeManifold(ChartManifold):
    """Warped product M x (r_min, r_max) with metric r^2 g + dr^2.

    The last coordinate is the radius; the base charts are reused verbatim
    for the first n coordinates (no chart transitions on the cone: all
    checks are pointwise).
    """

    def __init__(self, base, r_bounds=(0.5, 2.0), sample_r=(0.6, 1.7)):
        n = base.dim
        charts = []
        for ch in base.charts:
            lo = np.append(np.broadcast_to(
                np.asarray(ch.sample_low, float), (n,)), sample_r[0])
            hi = np.append(np.broadcast_to(
                np.asarray(ch.sample_high, float), (n,)), sample_r[1])

            def contains(x, ch=ch):
                r = x[..., n]
                ok = (r > r_bounds[0]) & (r < r_bounds[1])
                if ch.contains is not None:
                    ok = ok & np.asarray(ch.contains(x[..., :n]), bool)
                return ok

            charts.append(Chart(metric=_cone_metric(ch, n),
                                name=ch.name + "*r", sample_low=lo,
                                sample_high=hi, contains=contains))
        super().__init__(n + 1, charts, name=base.name + "_cone",
                         volume_orientation=base.volume_orientation)
        self.base = base
        self.r_bounds = r_bounds

    def sample_shells(self, rng, count, radii=(0.6, 1.0, 1.7), chart=0):
        """Base samples distributed over a fixed set of radii (tests
        r-homogeneity explicitly instead of relying on random r)."""
        y = self.base.sample(rng, count, chart)
        r = np.array([radii[k % len(radii)] for k in range(count)])
        return np.concatenate([y, r[:, None]], axis=1)


# ---------------------------------------------------------------------------
# index bookkeeping between base forms and cone forms


@lru_cache(maxsize=None)
def _horizontal_matrix(n, p):
    """(C(n,p), C(n+1,p)): base p-form components into r-free cone slots."""
    pos = ml.form_position(n + 1, p)
    M = np.zeros((ml.n_components(n, p), ml.n_components(n + 1, p)))
    for k, J in enumerate(ml.form_indices(n, p)):
        M[k, pos[J]] = 1.0
    return M


@lru_cache(maxsize=None)
def _append_dr_matrix(n, p):
    """(C(n,p), C(n+1,p+1)): alpha -> alpha ^ dr (dr in the last slot)."""
    pos = ml.form_position(n + 1, p + 1)
    M = np.zeros((ml.n_components(n, p), ml.n_components(n + 1, p + 1)))
    for k, J in enumerate(ml.form_indices(n, p)):
        M[k, pos[J + (n,)]] = 1.0
    return M


def _dr_wedge_matrix(n, p):
    """alpha -> dr ^ alpha = (-1)^p alpha ^ dr."""
    return ((-1.0) ** p) * _append_dr_matrix(n, p)


def _rpow(r, k):
    if k == 0:
        return Jet.constant(np.ones(r.shape), r.dim, r.order)
    return r ** int(k)


def horizontal_field(cone, ff, r_power=0):
    """Pull a base form field up to the cone, optionally weighted by r^k."""
    n = cone.base.dim
    p = ff.degree
    H = _horizontal_matrix(n, p)

    def eval_fn(x, order, chart=0):
        x = np.asarray(x, float)
        comps = ff.eval_fn(x[..., :n], order, chart)
        big = jet_embed(comps, n + 1, tuple(range(n)))
        out = ml._scatter(big, H)
        if r_power != 0:
            r = Jet.seed(x, order)[..., n]
            out = out * _rpow(r, r_power).expand(-1)
        return out

    return FormField(cone, p, eval_fn, label=f"hor({ff.label})")


# ---------------------------------------------------------------------------
# lift and parallelism


def cone_lift(ff, cone=None):
    """The (p+1)-form r^p dr ^ psi + r^{p+1}/(p+1) d psi on the cone."""
    base = ff.manifold
    n, p = base.dim, ff.degree
    cone = cone if cone is not None else ConeManifold(base)
    df = d_field(ff)
    D = _dr_wedge_matrix(n, p)
    H = _horizontal_matrix(n, p + 1)

    def eval_fn(x, order, chart=0):
        x = np.asarray(x, float)
        psi = jet_embed(ff.eval_fn(x[..., :n], order, chart),
                        n + 1, tuple(range(n)))
        dpsi = jet_embed(df.eval_fn(x[..., :n], order, chart),
                         n + 1, tuple(range(n)))
        r = Jet.seed(x, order)[..., n]
        t1 = ml._scatter(psi, D) * _rpow(r, p).expand(-1)
        t2 = ml._scatter(dpsi, H) * (_rpow(r, p + 1)
                                     * (1.0 / (p + 1))).expand(-1)
        return t1 + t2

    return FormField(cone, p + 1, eval_fn, label=f"lift({ff.label})")


def cone_parallel_residual(ffhat, sample, chart=0, tol=None, check_id=None):
    """Metric norm of the full covariant derivative of a cone form."""
    cone = ffhat.manifold
    q = ffhat.degree
    ctx = JetContext(cone, sample, 1, chart)
    a = ctx.field(ffhat)
    na = ctx.nabla(a, q)
    res = np.sqrt(np.maximum(tw.vector_form_norm2(ctx, na, q).value, 0.0))
    scale = np.sqrt(np.max(ctx.norm2(a, q).value))
    if tol is None:
        tol = tw.residual_tolerance(scale)
    cid = check_id or f"cone_parallel:{ffhat.label}"
    return make_report(cid, res[:, None], sample, tol)


# ---------------------------------------------------------------------------
# extraction of the special Killing pair from a parallel cone form


@dataclass
class ConeSplit:
    """The two r-independent base forms of a cone form of pure homogeneity:
    omega = r^p dr ^ omega1 + r^{p+1} omega0."""

    omega0: FormField          # degree p+1
    omega1: FormField          # degree p


def _restricted_field(ffhat, mat, degree, label):
    cone = ffhat.manifold
    n = cone.base.dim

    def eval_fn(y, order, chart=0):
        y = np.asarray(y, float)
        x = np.concatenate([y, np.ones(y.shape[:-1] + (1,))], axis=-1)
        big = ffhat.eval_fn(x, order, chart)
        small = jet_restrict(big, n, tuple(range(n)))
        return ml._scatter(small, mat.T)

    return FormField(cone.base, degree, eval_fn, label=label)


def cone_extract(ffhat, sample, chart=0, homogeneity_tol=1e-8):
    """Split a cone (p+1)-form into its radial and horizontal base parts
    and verify the coupled first-order system they satisfy when the cone
    form is parallel.

    Returns (ConeSplit, residuals).  The residual dict contains the two
    coupled derivative relations plus the derived identities: omega0 is
    closed, omega1 is coclosed, d omega1 = (p+1) omega0, d* omega0 =
    (n-p) omega1, and Laplacian(omega1) = (p+1)(n-p) omega1.  Raises if
    the input does not have the assumed r-homogeneity.
    """
    cone = ffhat.manifold
    base = cone.base
    n, q = base.dim, ffhat.degree
    p = q - 1
    D = _dr_wedge_matrix(n, p)
    H = _horizontal_matrix(n, q)
    omega1 = _restricted_field(ffhat, D, p, f"radial({ffhat.label})")
    omega0 = _restricted_field(ffhat, H, q, f"horizontal({ffhat.label})")

    # homogeneity: the scaled parts must agree across radii
    y = np.asarray(sample, float)[..., :n] if np.asarray(
        sample).shape[-1] == n + 1 else np.asarray(sample, float)
    for r in (0.6, 1.7):
        x = np.concatenate([y, np.full(y.shape[:-1] + (1,), r)], axis=-1)
        v = ffhat.values(x, chart)
        w1 = (v @ D.T) / r ** p
        w0 = (v @ H.T) / r ** (q)
        ref1 = omega1.values(y, chart)
        ref0 = omega0.values(y, chart)
        scale = max(np.max(np.abs(ref1)), np.max(np.abs(ref0)), 1e-30)
        drift = max(np.max(np.abs(w1 - ref1)), np.max(np.abs(w0 - ref0)))
        if drift > homogeneity_tol * max(scale, 1.0):
            raise GeometryError(
                f"cone form is not r-homogeneous: drift {drift:.2e} at r={r}")

    ctx = JetContext(base, y, 2, chart)
    a1 = ctx.field(omega1)
    a0 = ctx.field(omega0)
    g = ctx.g.value
    res = {}
    if p >= 1:
        na1 = ctx.nabla(a1, p).value
        Vq = ml.interior_tensor(n, q)
        res["derivative_omega1"] = na1 - np.einsum(
            "iJK,...J->...iK", Vq, a0.value)
    else:
        da1 = ctx.d(a1, 0).value
        res["derivative_omega1"] = da1 - a0.value
    na0 = ctx.nabla(a0, q).value
    Up = ml.wedge1_tensor(n, p)
    res["derivative_omega0"] = na0 + np.einsum(
        "...im,mJK,...J->...iK", g, Up, a1.value)
    if q < n:
        res["d_omega0"] = ctx.d(a0, q).value
    res["d_omega1_vs_omega0"] = ctx.d(a1, p).value - (p + 1.0) * a0.value
    if p >= 1:
        res["codiff_omega1"] = ctx.codiff(a1, p).value
    res["codiff_omega0"] = ctx.codiff(a0, q).value - (n - p) * a1.value
    lap = tw.laplacian(ctx, a1, p).value
    res["laplace_omega1"] = lap - (p + 1.0) * (n - p) * a1.value
    return ConeSplit(omega0=omega0, omega1=omega1), res


# ---------------------------------------------------------------------------
# powers of odd-degree forms


def power_construction(ff, k):
    """psi ^ (d psi)^k, degree p + k(p+1); needs odd p so the wedge powers
    of the even form d psi do not collapse."""
    p = ff.degree
    if p % 2 == 0:
        raise DegreeError("power construction needs an odd-degree form")
    if k == 0:
        return ff
    man = ff.manifold
    n = man.dim
    pk = p + k * (p + 1)
    if pk > n:
        raise DegreeError(f"power degree {pk} exceeds dimension {n}")
    df = d_field(ff)

    def eval_fn(x, order, chart=0):
        a = ff.eval_fn(x, order, chart)
        b = df.eval_fn(x, order, chart)
        out, deg = a, p
        for _ in range(k):
            out = ml.wedge(out, b, n, deg, p + 1)
            deg += p + 1
        return out

    return FormField(man, pk, eval_fn, label=f"{ff.label}*d^{k}")


def power_lift_residual(ff, k, sample, cone=None, chart=0):
    """The lift of psi ^ (d psi)^k against the wedge power of the lift:
    lift(psi_k) = (p+1)^k/(k+1) * lift(psi)^{k+1}, an exact identity."""
    p = ff.degree
    hat = cone_lift(ff, cone)
    cone = hat.manifold
    n1 = cone.dim
    hat_k = cone_lift(power_construction(ff, k), cone)
    lhs = hat_k.values(sample, chart)
    hv = hat.values(sample, chart)
    out, deg = hv, p + 1
    for _ in range(k):
        out = ml.wedge(out, hv, n1, deg, p + 1)
        deg += p + 1
    return lhs - ((p + 1.0) ** k / (k + 1.0)) * out


# ---------------------------------------------------------------------------
# Hodge star across the cone


def cone_hodge_relation(ffcone, sample, chart=0):
    """Residual of star_cone(omega) = r^{n-2p} (star_base(omega)) ^ dr for
    a horizontal p-form on the cone.  Raises on non-horizontal input."""
    cone = ffcone.manifold
    base = cone.base
    n, p = base.dim, ffcone.degree
    x = np.asarray(sample, float)
    v = ffcone.values(x, chart)
    H = _horizontal_matrix(n, p)
    hor = v @ H.T
    back = hor @ H
    scale = max(np.max(np.abs(v)), 1e-30)
    if np.max(np.abs(v - back)) > 1e-10 * scale:
        raise DegreeError("cone form has radial components")
    ctx = JetContext(cone, x, 1, chart)
    lhs = ctx.hodge(ctx.field(ffcone), p).value
    y = x[..., :n]
    ctxb = JetContext(base, y, 1, chart)
    sb = ctxb.hodge(Jet.constant(hor, n, 1), p).value
    A = _append_dr_matrix(n, n - p)
    r = x[..., n]
    rhs = (r ** (n - 2 * p))[..., None] * (sb @ A)
    return lhs - rhs


# ---------------------------------------------------------------------------
# the nearly Kaehler chain on the 6-sphere


def nk_star_domega_check(man, omega_ff, sample, chart=0,
                         eigenvalue=12.0, constant=-4.0):
    """Checks tying the fundamental 2-form of the nearly Kaehler 6-sphere
    to its Hodge-dual chain: Laplace eigenvalue, the exact-derivative
    relation d(star d omega) = -eigenvalue * star omega, and the special
    Killing equation for star d omega with the stated constant.
    """
    p = omega_ff.degree
    x = np.asarray(sample, float)
    ctx = JetContext(man, x, 2, chart)
    a = ctx.field(omega_ff)
    lap = tw.laplacian(ctx, a, p).value
    out = {"eigenvalue": lap - eigenvalue * a.value}
    sd = hodge_field(d_field(omega_ff))            # degree n - p - 1
    so = hodge_field(omega_ff)                     # degree n - p
    dsd = ctx.d(ctx.field(sd), man.dim - p - 1).value
    out["exact_derivative"] = dsd + eigenvalue * so.values(x, chart)
    res, c = tw.special_killing_residual(man, sd, x, c=constant,
                                         variant="first_order", chart=chart)
    out["special_killing"] = res
    return out
