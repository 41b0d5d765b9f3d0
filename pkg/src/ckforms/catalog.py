"""Concrete manifolds and named form fields.

Spheres are described by two stereographic charts (metric 4/(1+|y|^2)^2 times
identity for the unit round sphere); flat tori by a single periodic chart.
The named structures (Sasakian, nearly Kaehler, weak G2, 3-Sasakian) are all
produced by one mechanism: the cone over the round sphere is flat, so pulling
a constant ambient form back through (y, r) -> r F(y) (F the inverse
stereographic map) gives a parallel cone form, and its radial part at r = 1
is a special Killing form on the sphere.  The required constant forms come
from division-algebra multiplication tables built by Cayley-Dickson doubling.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import multilinear as ml
from .cone import (ConeManifold, _append_dr_matrix, _dr_wedge_matrix,
                   _horizontal_matrix, _restricted_field)
from .errors import DegreeError, SampleError
from .forms import FormField, JetContext, codiff_field, d_field, hodge_field
from .geometry import Chart, ChartManifold
from .jets import Jet, jet_embed


def _sphere_metric(n):
    def metric(c):
        s = (c * c).sum(-1)
        f = (s + 1.0).reciprocal() * 2.0
        return (f * f).expand(-1).expand(-1) * np.eye(n)
    return metric


def _sphere_transition(c):
    # antipodal stereographic chart: y -> y / |y|^2
    s = (c * c).sum(-1)
    if isinstance(s, Jet):
        return c * s.reciprocal().expand(-1)
    return c / s[..., None]


def round_sphere(n, switch_radius=2.5):
    """Unit round n-sphere in two stereographic charts."""
    def contains(x):
        return np.linalg.norm(x, axis=-1) < 2.0

    def switch(x):
        return np.linalg.norm(x, axis=-1) > switch_radius

    charts = []
    for k, nm in enumerate(("north", "south")):
        charts.append(Chart(
            metric=_sphere_metric(n), name=nm,
            sample_low=-1.4 * np.ones(n), sample_high=1.4 * np.ones(n),
            contains=contains, transition=_sphere_transition,
            transition_target=1 - k, switch=switch))
    return ChartManifold(n, charts, name=f"s{n}")


def flat_torus(n):
    """Flat n-torus: identity metric, periodic coordinates of period 2 pi."""
    chart = Chart(metric=lambda c: np.eye(n), name="periodic",
                  sample_low=np.zeros(n),
                  sample_high=2.0 * np.pi * np.ones(n))
    return ChartManifold(n, [chart], name=f"t{n}")


@lru_cache(maxsize=None)
def _sphere(n):
    return round_sphere(n)


@lru_cache(maxsize=None)
def _sphere_cone(n):
    return ConeManifold(_sphere(n))


@lru_cache(maxsize=None)
def _torus(n):
    return flat_torus(n)


# ---------------------------------------------------------------------------
# division-algebra multiplication tables (Cayley-Dickson doubling)


def _double(T):
    """Double a multiplication table T[a,b,c] (e_a e_b = sum_c T[a,b,c] e_c)
    via (x1, x2)(y1, y2) = (x1 y1 - conj(y2) x2, y2 x1 + x2 conj(y1))."""
    m = T.shape[0]
    K = -np.eye(m)
    K[0, 0] = 1.0
    out = np.zeros((2 * m,) * 3)
    out[:m, :m, :m] = T
    out[:m, m:, m:] = np.einsum("dac->adc", T)
    out[m:, :m, m:] = np.einsum("ck,bkd->bcd", K, T)
    out[m:, m:, :m] = -np.einsum("dk,kbc->bdc", K, T)
    return out


@lru_cache(maxsize=None)
def quaternion_table():
    """T[a,b,c] with basis (1, i, j, k); i j = k."""
    T = np.ones((1, 1, 1))
    return _double(_double(T))


@lru_cache(maxsize=None)
def octonion_table():
    return _double(quaternion_table())


def algebra_multiply(T, x, y):
    return np.einsum("abc,...a,...b->...c", T, x, y)


# ---------------------------------------------------------------------------
# constant calibration forms on flat space


def kahler_form(m):
    """Constant Kahler 2-form of C^m on R^{2m}, complex lines (2a, 2a+1)."""
    n = 2 * m
    comps = np.zeros(ml.n_components(n, 2))
    pos = ml.form_position(n, 2)
    for a in range(m):
        comps[pos[(2 * a, 2 * a + 1)]] = 1.0
    return comps


def associative_form():
    """3-form (x, y, z) -> <x y, z> on the imaginary octonions."""
    T = octonion_table()
    comps = np.zeros(ml.n_components(7, 3))
    for k, (a, b, c) in enumerate(ml.form_indices(7, 3)):
        comps[k] = T[a + 1, b + 1, c + 1]
    return comps


def flat_hodge(comps, n, p):
    """Hodge dual of constant components, identity metric."""
    return np.asarray(comps, float) @ ml.hodge_scatter(n, p)


def cayley_form():
    """4-form on R^8 = Im O + R e_7 stabilized by Spin(7):
    star7(phi) - phi ^ dx7 with phi the associative 3-form.

    The sign makes the pullback to the cone over S^7 self-dual in the
    orientation of the first stereographic cone chart (the embedding
    (y, r) -> r F(y) is orientation-reversing there).
    """
    phi = associative_form()
    out = flat_hodge(phi, 7, 3) @ _horizontal_matrix(7, 4)
    return out - phi @ _append_dr_matrix(7, 3)


def quaternion_kahler_forms():
    """The three constant 2-forms of H^2 = R^8 given by right multiplication
    with i, j, k on each quaternion block."""
    T = quaternion_table()
    out = []
    pos = ml.form_position(8, 2)
    for i in (1, 2, 3):
        comps = np.zeros(ml.n_components(8, 2))
        for blk in (0, 4):
            for a in range(4):
                for b in range(a + 1, 4):
                    comps[pos[(blk + a, blk + b)]] = T[a, i, b]
        out.append(comps)
    return out


# ---------------------------------------------------------------------------
# inverse stereographic embedding and the flat-cone pullback


def sphere_embedding(c, n, chart=0):
    """Jet of the unit ambient vector F(y) of a stereographic chart point.

    Charts 0 and 1 project from opposite poles, so the last ambient
    coordinate flips sign between them; with the inversion transition of
    round_sphere both describe the same ambient point.
    """
    if not isinstance(c, Jet):
        c = Jet.seed(np.asarray(c, float), 1)
    s = (c * c).sum(-1)
    w = (s + 1.0).reciprocal()
    head = c * (w * 2.0).expand(-1)
    last = (s - 1.0) * w
    if chart == 1:
        last = -last
    coeffs = np.concatenate([head.coeffs, last.expand(-1).coeffs], axis=-2)
    return Jet(c.dim, c.order, coeffs)


def flat_cone_field(cone, comps, q, label=""):
    """Pullback of a constant ambient q-form through (y, r) -> r F(y).

    Over a round sphere the map is an isometry onto flat space, so the
    result is a parallel form on the cone.
    """
    n = cone.base.dim
    comps = np.asarray(comps, float)
    nz = [(K, comps[k]) for k, K in enumerate(ml.form_indices(n + 1, q))
          if comps[k] != 0.0]
    if not nz:
        raise SampleError("constant form is identically zero")

    def eval_fn(x, order, chart=0):
        c = Jet.seed(np.asarray(x, float), order + 1)
        F = sphere_embedding(c[..., :n], n, chart)
        X = F * c[..., n].expand(-1)
        # rows[..., A, i] = dX_A/dx_i: row A is the pullback of dX^A
        rows = Jet.stack([X.deriv(i) for i in range(n + 1)], axis=-1)
        out = None
        for K, cK in nz:
            w = rows[..., K[0], :] * cK
            for deg, A in enumerate(K[1:], start=1):
                w = ml.wedge(w, rows[..., A, :], n + 1, deg, 1)
            out = w if out is None else out + w
        return out

    return FormField(cone, q, eval_fn, label=label)


def sphere_extraction(n, comps, q, label=""):
    """(psi, omega0, cone form): psi is the special Killing (q-1)-form on
    S^n extracted at r = 1, omega0 = d psi / q its exact companion."""
    cone = _sphere_cone(n)
    hat = flat_cone_field(cone, comps, q, label=f"hat({label})")
    psi = _restricted_field(hat, _dr_wedge_matrix(n, q - 1), q - 1, label)
    omega0 = _restricted_field(hat, _horizontal_matrix(n, q), q,
                               f"{label}_h")
    return psi, omega0, hat


def from_flat_parallel_form(n, comps, q, label=""):
    """The special Killing (q-1)-form on S^n extracted from a constant
    ambient q-form (parallel on the flat cone R^{n+1})."""
    return sphere_extraction(n, comps, q, label)[0]


# ---------------------------------------------------------------------------
# form-field combinators (keep exact d-companions to avoid deep jets)


def wedge_fields(f1, f2, label=""):
    man, n = f1.manifold, f1.manifold.dim
    p, q = f1.degree, f2.degree

    def eval_fn(x, order, chart=0):
        return ml.wedge(f1.eval_fn(x, order, chart),
                        f2.eval_fn(x, order, chart), n, p, q)

    return FormField(man, p + q, eval_fn,
                     label=label or f"{f1.label}^{f2.label}")


def scale_field(ff, c, label=""):
    def eval_fn(x, order, chart=0):
        return ff.eval_fn(x, order, chart) * float(c)
    return FormField(ff.manifold, ff.degree, eval_fn,
                     label=label or f"{c}*{ff.label}")


def add_fields(f1, f2, label=""):
    if f1.degree != f2.degree:
        raise DegreeError("cannot add forms of different degree")

    def eval_fn(x, order, chart=0):
        return f1.eval_fn(x, order, chart) + f2.eval_fn(x, order, chart)

    return FormField(f1.manifold, f1.degree, eval_fn,
                     label=label or f"{f1.label}+{f2.label}")


def volume_field(man):
    n = man.dim

    def eval_fn(x, order, chart=0):
        g = man.metric_jet(np.asarray(x, float), order, chart)
        from .jets import jdet
        return (jdet(g).sqrt() * man.volume_orientation).expand(-1)

    return FormField(man, n, eval_fn, label=f"vol({man.name})")


# ---------------------------------------------------------------------------
# named forms and catalog entries


@dataclass(frozen=True)
class NamedForm:
    """A form field with its verified properties attached.

    properties is a subset of {killing, star_killing, ckf, special,
    parallel, unit}; special_constant is the c of nabla_X(d psi) =
    c X* ^ psi; eigenvalue the Laplace eigenvalue where known.
    """

    field: object
    properties: tuple = ()
    special_constant: float = None
    eigenvalue: float = None
    note: str = ""


class CatalogEntry:
    """A manifold with named forms and parametrized form builders."""

    def __init__(self, entry_id, manifold, forms=None, builders=None,
                 note="", extras=None):
        self.id = entry_id
        self.manifold = manifold
        self.forms = dict(forms or {})
        self.builders = dict(builders or {})
        self.note = note
        self.extras = dict(extras or {})

    def form(self, fid):
        """Resolve a form id like 'xi_star', 'omega_k:1' or 'basis:1:3'."""
        if fid in self.forms:
            return self.forms[fid]
        head, _, rest = fid.partition(":")
        if head in self.builders:
            args = rest.split(":") if rest else []
            return self.builders[head](*args)
        raise KeyError(f"entry {self.id!r} has no form {fid!r}")

    def form_ids(self):
        return sorted(self.forms) + [f"{b}:..." for b in sorted(self.builders)]


@lru_cache(maxsize=None)
def sphere_ckf_basis(n, p):
    """The C(n+2, p+1) conformal Killing p-forms on the round S^n.

    First the C(n+1, p+1) coclosed Killing family (extracted from the
    ambient constant (p+1)-forms, Laplace eigenvalue (p+1)(n-p)), then the
    C(n+1, p) closed family (Hodge duals of extracted (n-p)-forms,
    eigenvalue p(n-p+1)).
    """
    if not 1 <= p <= n - 1:
        raise DegreeError(f"no basis for degree {p} on a {n}-sphere")
    out = []
    for k in range(ml.n_components(n + 1, p + 1)):
        comps = np.zeros(ml.n_components(n + 1, p + 1))
        comps[k] = 1.0
        psi = from_flat_parallel_form(n, comps, p + 1, label=f"b{p}k{k}")
        out.append(NamedForm(psi, ("killing", "special"),
                             -(p + 1.0), float((p + 1) * (n - p))))
    for k in range(ml.n_components(n + 1, n - p + 1)):
        comps = np.zeros(ml.n_components(n + 1, n - p + 1))
        comps[k] = 1.0
        kf = from_flat_parallel_form(n, comps, n - p + 1, label=f"b{p}s{k}")
        out.append(NamedForm(hodge_field(kf), ("star_killing",),
                             None, float(p * (n - p + 1))))
    return tuple(out)


def _basis_builder(n):
    def build(p, idx):
        return sphere_ckf_basis(n, int(p))[int(idx)]
    return build


# ---------------------------------------------------------------------------
# Sasakian structures (odd spheres via the flat Kahler form)


def sasakian_structure_residuals(man, xi_ff, sample, chart=0):
    """Pointwise residuals of the structure equations attached to a unit
    Killing field xi whose covariant derivative defines phi = -nabla xi:
    unit length, the endomorphism derivative rule
    (nabla_X phi)(Y) = g(X, Y) xi - xi*(Y) X, and phi^2 = -id + xi* (x) xi.
    """
    x = np.asarray(sample, float)
    n = man.dim
    ctx = JetContext(man, x, 2, chart)
    a = ctx.field(xi_ff)
    xiv = a.value
    g = ctx.g.value
    gi = np.linalg.inv(g)
    res = {"unit": ctx.norm2(a, 1).value - 1.0}
    n2 = ctx.nabla2(a, 1).value                  # (..., i, j, z)
    rhs = (g[..., :, :, None] * xiv[..., None, None, :]
           - xiv[..., None, :, None] * g[..., :, None, :])
    res["endomorphism"] = -n2 - rhs
    na = ctx.nabla(a, 1).value                   # (..., i, z)
    phi = -np.einsum("...az,...iz->...ai", gi, na)
    xi_up = np.einsum("...ab,...b->...a", gi, xiv)
    res["phi_square"] = (np.einsum("...ab,...bc->...ac", phi, phi)
                         + np.eye(n)
                         - xi_up[..., :, None] * xiv[..., None, :])
    return res


def contact_volume_ratio(man, top_ff, sample, chart=0):
    """Fit the constant ratio of a top-degree form against the Riemannian
    volume form; returns (constant, residual array)."""
    x = np.asarray(sample, float)
    v = top_ff.values(x, chart)[..., 0]
    ctx = JetContext(man, x, 1, chart)
    vol = ctx.volume_form().value[..., 0]
    c = float(np.dot(vol, v) / np.dot(vol, vol))
    return c, v - c * vol


def hopf_sasakian(half):
    """S^{2 half + 1} with the Hopf Killing field from the complex
    structure of C^{half+1} and its wedge-power Killing forms."""
    if half < 1:
        raise DegreeError("need an odd sphere of dimension >= 3")
    n = 2 * half + 1
    man = _sphere(n)
    xi, om0, _ = sphere_extraction(n, kahler_form(half + 1), 2, "xi_star")
    dxi = scale_field(om0, 2.0, label="d_xi_star")

    def omega_k(k):
        k = int(k)
        if not 0 <= k <= half:
            raise DegreeError(f"omega_k degree {2 * k + 1} out of range")
        f = xi
        for _ in range(k):
            f = wedge_fields(f, dxi)
        return NamedForm(f, ("killing", "special"), -2.0 * (k + 1),
                         4.0 * (k + 1) * (half - k) if k < half else None,
                         note=f"xi* ^ (d xi*)^{k}")

    forms = {
        "xi_star": NamedForm(xi, ("killing", "special", "unit"), -2.0,
                             2.0 * (n - 1), note="Hopf Killing 1-form"),
        "d_xi_star": NamedForm(dxi, ("ckf",), note="closed CKF 2-form"),
    }
    return CatalogEntry(f"s{n}", man, forms,
                        {"omega_k": omega_k, "basis": _basis_builder(n)},
                        note=f"round S^{n} with the Hopf Sasakian structure")


def sasaki_converse_probe(man, xi_ff, sample, chart=0, tol=1e-6):
    """Instance check of the converse direction: on an Einstein manifold
    normalized to s = n(n-1), a unit Killing field whose exterior
    derivative is a conformal Killing 2-form satisfies the Sasakian
    derivative rule nabla_X(d xi*) = -2 X* ^ xi*.

    Returns a dict with hypothesis residuals; when any hypothesis fails
    the status is 'inconclusive' and the conclusion is not evaluated.
    """
    from . import twistor as tw
    x = np.asarray(sample, float)
    n = man.dim
    ctx = JetContext(man, x, 2, chart)
    a = ctx.field(xi_ff)
    g = ctx.g.value
    ric = ctx.ricci.value
    out = {
        "einstein": float(np.max(np.abs(ric - (n - 1.0) * g))),
        "unit": float(np.max(np.abs(ctx.norm2(a, 1).value - 1.0))),
    }
    out["killing"] = float(tw.killing_residual(man, xi_ff, x,
                                               chart=chart).max_residual)
    out["dxi_ckf"] = float(tw.ckf_residual(man, d_field(xi_ff), x,
                                           chart=chart).max_residual)
    if max(out.values()) > tol:
        out["status"] = "inconclusive"
        return out
    res, _ = tw.special_killing_residual(man, xi_ff, x, c=-2.0,
                                         variant="first_order", chart=chart)
    out["sasaki_rule"] = float(np.max(np.abs(res)))
    out["status"] = "confirmed" if out["sasaki_rule"] < tol else "refuted"
    return out


# ---------------------------------------------------------------------------
# vector cross products


@dataclass
class CrossProduct:
    """r-fold cross product read off its associated (r+1)-form:
    g(P(v_1..v_r), w) = omega(v_1..v_r, w)."""

    manifold: object
    omega: object
    arity: int

    def apply(self, x, vectors, chart=0):
        x = np.asarray(x, float)
        n = self.manifold.dim
        a = self.omega.values(x, chart)
        deg = self.arity + 1
        for v in vectors:
            a = ml.interior(np.asarray(v, float), a, n, deg)
            deg -= 1
        gi = np.linalg.inv(self.manifold.metric_jet(x, 0, chart).value)
        return np.einsum("...ij,...j->...i", gi, a)


def cross_axiom_residuals(cp, x, vectors, chart=0):
    """Axiom residuals at sample points: orthogonality to every argument
    and |P(v_1..v_r)|^2 = det(<v_i, v_j>)."""
    x = np.asarray(x, float)
    P = cp.apply(x, vectors, chart)
    g = cp.manifold.metric_jet(x, 0, chart).value
    orth = np.stack(
        [np.einsum("...ij,...i,...j->...", g, P, v) for v in vectors],
        axis=-1)
    gram = np.stack(
        [np.stack([np.einsum("...ij,...i,...j->...", g, u, v)
                   for v in vectors], axis=-1) for u in vectors], axis=-2)
    norm = (np.einsum("...ij,...i,...j->...", g, P, P)
            - np.linalg.det(gram))
    return {"orthogonality": orth, "norm": norm}


def nearly_parallel_residual(man, ff, x, vectors, chart=0):
    """X . nabla_X psi at sample points, one residual row per vector."""
    p = ff.degree
    x = np.asarray(x, float)
    ctx = JetContext(man, x, 1, chart)
    na = ctx.nabla(ctx.field(ff), p).value
    rows = []
    for X in vectors:
        t = np.einsum("...i,...iJ->...J", np.asarray(X, float), na)
        rows.append(ml.interior(np.asarray(X, float), t, man.dim, p))
    return np.stack(rows, axis=-2)


# ---------------------------------------------------------------------------
# the nearly Kahler 6-sphere


def endomorphism_from_kahler(man, omega_ff, x, chart=0):
    """J with g(J X, Y) = omega(X, Y), as matrices J[a, b] at points."""
    from .twistor import _dense_expand
    n = man.dim
    x = np.asarray(x, float)
    w = omega_ff.values(x, chart)
    dense = np.einsum("...K,Kt->...t", w, _dense_expand(n, 2))
    dense = dense.reshape(dense.shape[:-1] + (n, n))
    gi = np.linalg.inv(man.metric_jet(x, 0, chart).value)
    return np.einsum("...cb,...ba->...ac", dense, gi)


def s6_octonion_endomorphism(x, chart=0):
    """J at points of S^6 from octonion multiplication by the base point,
    expressed in stereographic chart coordinates."""
    x = np.asarray(x, float)
    T = octonion_table()
    F = sphere_embedding(Jet.seed(x, 1), 6, chart)
    p, E = F.value, F.grad()                      # (..., 7), (..., 7, 6)
    # L w = Im(p . w) on imaginary octonions
    L = np.einsum("...a,abc->...cb", p, T[1:, 1:, 1:])
    g = np.einsum("...Ai,...Aj->...ij", E, E)
    back = np.linalg.solve(g, np.einsum("...Ai,...AB,...Bj->...ij",
                                        E, L, E))
    return back


def kahler_contraction_identity(man, omega_ff, j_of_x, sample, chart=0):
    """Residual of Lambda(d omega) = J(d* omega) for an almost Hermitian
    structure, with Lambda(beta) = 1/2 sum_i (J e_i) . (e_i . beta) over an
    orthonormal frame and (J alpha)(Y) = -alpha(J Y) on 1-forms.

    Returns (residual, lhs, rhs) so callers can also check the two sides
    are individually nonzero on non-nearly-Kahler structures.
    """
    from .twistor import _dense_expand
    n = man.dim
    x = np.asarray(sample, float)
    dw = d_field(omega_ff).values(x, chart)
    cw = codiff_field(omega_ff).values(x, chart)
    J = j_of_x(x)
    gi = np.linalg.inv(man.metric_jet(x, 0, chart).value)
    dense = np.einsum("...K,Kt->...t", dw, _dense_expand(n, 3))
    dense = dense.reshape(dense.shape[:-1] + (n, n, n))
    lhs = 0.5 * np.einsum("...ab,...cb,...acz->...z", gi, J, dense)
    rhs = -np.einsum("...a,...ab->...b", cw, J)
    return lhs - rhs, lhs, rhs


def nearly_kahler_s6():
    """Round S^6 with the octonionic almost complex structure: the Kahler
    2-form is the extraction of the associative 3-form of R^7."""
    man = _sphere(6)
    omega, om0, _ = sphere_extraction(6, associative_form(), 3, "nk_omega")
    domega = scale_field(om0, 3.0, label="d_nk_omega")
    star_domega = hodge_field(domega)
    forms = {
        "nk_omega": NamedForm(omega, ("killing", "special"), -3.0, 12.0,
                              note="nearly Kahler fundamental 2-form"),
        "nk_star_domega": NamedForm(star_domega, ("killing", "special"),
                                    -4.0, 12.0, note="Hodge dual of d omega"),
    }
    cross = CrossProduct(man, omega, 1)
    return CatalogEntry("s6_nk", man, forms,
                        {"basis": _basis_builder(6)},
                        note="nearly Kahler S^6, scalar curvature 30",
                        extras={"cross": cross,
                                "J": s6_octonion_endomorphism})


def twisted_torus_hermitian(amp=0.4):
    """A non-nearly-Kahler almost Hermitian structure on the flat T^6:
    the standard J conjugated by a position-dependent rotation of the
    (x0, x2) plane.  Returns (manifold, omega field, J matrix function)."""
    man = _torus(6)
    J0 = np.zeros((6, 6))
    for a in range(3):
        J0[2 * a, 2 * a + 1] = -1.0
        J0[2 * a + 1, 2 * a] = 1.0

    def j_matrix(c):
        jet = isinstance(c, Jet)
        if not jet:
            c = Jet.seed(np.asarray(c, float), 0)
        th = c[..., 0].sin() * amp
        ct, st = th.cos(), th.sin()
        batch = th.shape
        R = np.zeros(batch + (6, 6) + (th.coeffs.shape[-1],))
        for a in range(6):
            R[..., a, a, 0] = 1.0
        R[..., 0, 0, :] = ct.coeffs
        R[..., 2, 2, :] = ct.coeffs
        R[..., 0, 2, :] = -st.coeffs
        R[..., 2, 0, :] = st.coeffs
        Rj = Jet(c.dim, c.order, R)
        from .jets import jmatmul
        Jm = jmatmul(jmatmul(Rj, Jet.constant(
            np.broadcast_to(J0, batch + (6, 6)), c.dim, c.order)),
            Rj.swapaxes(-1, -2))
        return Jm if jet else Jm.value

    idx = list(ml.form_indices(6, 2))

    def omega_fn(c, chart):
        Jm = j_matrix(c)
        cols = [Jm[..., i, j] * -1.0 for (i, j) in idx]
        return Jet.stack(cols, axis=-1)

    omega = FormField.from_chart_function(man, 2, omega_fn, label="tw_omega")
    return man, omega, lambda x: j_matrix(x)


# ---------------------------------------------------------------------------
# the weak G2 7-sphere


def weak_g2_s7():
    """Round S^7 with the 3-form extracted from the Cayley 4-form of R^8."""
    man = _sphere(7)
    phi, om0, hat = sphere_extraction(7, cayley_form(), 4, "g2_phi")
    forms = {
        "g2_phi": NamedForm(phi, ("killing", "special"), -4.0, 16.0,
                            note="weak G2 3-form"),
    }
    cross = CrossProduct(man, phi, 2)
    return CatalogEntry("s7_g2", man, forms, {"basis": _basis_builder(7)},
                        note="weak G2 S^7, scalar curvature 42",
                        extras={"cross": cross, "cone_form": hat})


# ---------------------------------------------------------------------------
# the 3-Sasakian 7-sphere


def three_sasakian_s7():
    """Round S^7 with the quaternionic triple of Hopf structures."""
    man = _sphere(7)
    triple = quaternion_kahler_forms()
    etas, d_etas = [], []
    for i, w in enumerate(triple):
        eta, om0, _ = sphere_extraction(7, w, 2, f"eta{i + 1}")
        etas.append(eta)
        d_etas.append(scale_field(om0, 2.0, label=f"d_eta{i + 1}"))

    def psi_abc(a, b, c):
        a, b, c = int(a), int(b), int(c)
        m = a + b + c
        if m < 1:
            raise DegreeError("psi_abc needs a + b + c >= 1")
        deg = 2 * m - 1
        if deg > 7:
            raise DegreeError(f"psi_abc degree {deg} exceeds dimension 7")
        counts = (a, b, c)
        total = None
        for slot in range(3):
            if counts[slot] == 0:
                continue
            term = etas[slot]
            for i in range(3):
                reps = counts[i] - (1 if i == slot else 0)
                for _ in range(reps):
                    term = wedge_fields(term, d_etas[i])
            term = scale_field(term, counts[slot] / m)
            total = term if total is None else add_fields(total, term)
        ev = 4.0 * m * (4 - m) if m < 4 else None
        return NamedForm(total, ("killing", "special"), -2.0 * m, ev,
                         note=f"psi_{a},{b},{c}")

    forms = {}
    for i, (eta, de) in enumerate(zip(etas, d_etas)):
        forms[f"eta{i + 1}"] = NamedForm(
            eta, ("killing", "special", "unit"), -2.0, 12.0)
        forms[f"d_eta{i + 1}"] = NamedForm(de, ("ckf",))
    return CatalogEntry("s7_3sas", man, forms,
                        {"psi_abc": psi_abc, "basis": _basis_builder(7)},
                        note="3-Sasakian S^7 from H^2",
                        extras={"ambient_forms": triple})


def vector_bracket(man, u_ff, v_ff, x, chart=0):
    """Lie bracket of the metric duals of two 1-form fields at points."""
    x = np.asarray(x, float)
    ctx = JetContext(man, x, 2, chart)
    gi = np.linalg.inv(ctx.g.value)

    def up_and_grad(ff):
        a = ctx.field(ff)
        na = ctx.nabla(a, 1).value              # (..., i, z)
        uv = np.einsum("...az,...z->...a", gi, a.value)
        # nabla_i u^a = g^{az} nabla_i u_z (metric is parallel)
        nu = np.einsum("...az,...iz->...ia", gi, na)
        return uv, nu

    u, nu = up_and_grad(u_ff)
    v, nv = up_and_grad(v_ff)
    return (np.einsum("...i,...ia->...a", u, nv)
            - np.einsum("...i,...ia->...a", v, nu))


# ---------------------------------------------------------------------------
# products


@lru_cache(maxsize=None)
def _factor_matrix(n1, n2, p, which):
    """Scatter factor p-form components into product form slots."""
    off = 0 if which == 0 else n1
    nf = n1 if which == 0 else n2
    pos = ml.form_position(n1 + n2, p)
    M = np.zeros((ml.n_components(nf, p), ml.n_components(n1 + n2, p)))
    for k, J in enumerate(ml.form_indices(nf, p)):
        M[k, pos[tuple(j + off for j in J)]] = 1.0
    return M


def product_manifold(m1, m2, name=None):
    """Riemannian product of the first charts of two manifolds."""
    n1, n2 = m1.dim, m2.dim
    ch1, ch2 = m1.chart(0), m2.chart(0)

    def metric(c):
        if not isinstance(c, Jet):
            c = Jet.seed(np.asarray(c, float), 0)

        def block(ch, y, nf):
            gb = ch.metric(y)
            if not isinstance(gb, Jet):
                gb = Jet.constant(np.broadcast_to(
                    np.asarray(gb, float), c.shape[:-1] + (nf, nf)),
                    c.dim, c.order)
            return gb

        g1 = block(ch1, c[..., :n1], n1)
        g2 = block(ch2, c[..., n1:], n2)
        out = np.zeros(c.shape[:-1] + (n1 + n2, n1 + n2)
                       + g1.coeffs.shape[-1:])
        out[..., :n1, :n1, :] = g1.coeffs
        out[..., n1:, n1:, :] = g2.truncate(g1.order).coeffs
        return Jet(c.dim, g1.order, out)

    lo = np.concatenate([np.broadcast_to(np.asarray(ch1.sample_low, float),
                                         (n1,)),
                         np.broadcast_to(np.asarray(ch2.sample_low, float),
                                         (n2,))])
    hi = np.concatenate([np.broadcast_to(np.asarray(ch1.sample_high, float),
                                         (n1,)),
                         np.broadcast_to(np.asarray(ch2.sample_high, float),
                                         (n2,))])
    chart = Chart(metric=metric, name=f"{ch1.name}x{ch2.name}",
                  sample_low=lo, sample_high=hi)
    return ChartManifold(n1 + n2, [chart],
                         name=name or f"{m1.name}x{m2.name}")


def factor_pullback(prod, n1, ff, which, label=""):
    """Pull a form field on one factor back to the product."""
    n = prod.dim
    n2 = n - n1
    M = _factor_matrix(n1, n2, ff.degree, which)
    cmap = tuple(range(n1)) if which == 0 else tuple(range(n1, n))

    def eval_fn(x, order, chart=0):
        x = np.asarray(x, float)
        sub = x[..., :n1] if which == 0 else x[..., n1:]
        comps = ff.eval_fn(sub, order, 0)
        return ml._scatter(jet_embed(comps, n, cmap), M)

    return FormField(prod, ff.degree, eval_fn,
                     label=label or f"pull{which}({ff.label})")


def s2xs3_entry():
    """S^2 x S^3 with the product-form instances: a pulled-back Killing
    1-form and vol(S^2) wedged with a pulled-back star-Killing 1-form."""
    s2, s3 = _sphere(2), _sphere(3)
    prod = product_manifold(s2, s3, name="s2xs3")
    hopf = entry("s3").form("xi_star").field
    xi = factor_pullback(prod, 2, hopf, 1, label="xi_star")
    star1 = sphere_ckf_basis(3, 1)[ml.n_components(4, 2)].field
    mixed = wedge_fields(factor_pullback(prod, 2, volume_field(s2), 0),
                         factor_pullback(prod, 2, star1, 1),
                         label="vol_wedge_star")
    forms = {
        "xi_star": NamedForm(xi, ("killing",), note="pullback of the Hopf "
                             "Killing form on the S^3 factor"),
        "vol_wedge_star": NamedForm(mixed, ("ckf",),
                                    note="vol(S^2) ^ pulled-back closed CKF"),
    }
    return CatalogEntry("s2xs3", prod, forms,
                        note="Riemannian product instance checks")


# ---------------------------------------------------------------------------
# simple entries and the registry


def sphere_entry(n):
    """Round S^n with the CKF basis and one distinguished rotation form."""
    man = _sphere(n)
    comps = np.zeros(ml.n_components(n + 1, 2))
    comps[0] = 1.0
    xi = from_flat_parallel_form(n, comps, 2, label="xi_star")
    forms = {"xi_star": NamedForm(xi, ("killing", "special"), -2.0,
                                  2.0 * (n - 1), note="rotation Killing "
                                  "1-form")}
    return CatalogEntry(f"s{n}", man, forms, {"basis": _basis_builder(n)},
                        note=f"round S^{n}")


def torus_entry(n):
    man = _torus(n)

    def parallel(name):
        if not (name.startswith("dx") and name[2:].isdigit()):
            raise KeyError(f"unknown parallel form {name!r}")
        i = int(name[2:]) - 1
        if not 0 <= i < n:
            raise DegreeError(f"coordinate index {i + 1} out of range")
        comps = np.zeros(n)
        comps[i] = 1.0
        ff = FormField.constant(man, 1, comps, label=name)
        return NamedForm(ff, ("parallel", "killing", "special"), 0.0, 0.0)

    return CatalogEntry(f"t{n}", man, builders={"parallel": parallel},
                        note=f"flat T^{n}")


_ENTRY_BUILDERS = {
    "s2": lambda: sphere_entry(2),
    "s3": lambda: hopf_sasakian(1),
    "s5": lambda: hopf_sasakian(2),
    "s6_nk": nearly_kahler_s6,
    "s7_g2": weak_g2_s7,
    "s7_3sas": three_sasakian_s7,
    "t2": lambda: torus_entry(2),
    "t3": lambda: torus_entry(3),
    "s2xs3": s2xs3_entry,
}

_ENTRY_CACHE = {}


def entry(entry_id):
    """Catalog lookup by id; entries are built once and reused."""
    if entry_id not in _ENTRY_CACHE:
        if entry_id not in _ENTRY_BUILDERS:
            raise KeyError(f"unknown catalog entry {entry_id!r}")
        _ENTRY_CACHE[entry_id] = _ENTRY_BUILDERS[entry_id]()
    return _ENTRY_CACHE[entry_id]


def entry_ids():
    return sorted(_ENTRY_BUILDERS)
