"""Form fields and the natural first/second-order operators on them.

A FormField is a degree-p field over a chart manifold whose components can
be evaluated to jets of any order at any batch of points; derived fields
(covariant derivatives, curvature images, twistor values) are themselves
FormFields with closures that rebuild the required jets internally, so they
can be differentiated again.

The JetContext bundles the metric/connection/curvature jets at a batch of
points and exposes the operators: exterior derivative, codifferential,
covariant derivatives, Hodge star, q(R), the curvature action and R^+/R^-.
"""

from functools import lru_cache

import numpy as np

from . import multilinear as ml
from .errors import DegreeError
from .jets import Jet, jeinsum, jinv, jdet
from .geometry import christoffel_jet, riemann_up_jet, nabla_riemann_jet


class FormField:
    """Degree-p form field; eval_fn(x, order, chart) -> Jet of components.

    The component axis (length C(n, p)) is the last batch axis of the
    returned jet; degree 0 fields return scalar-jet batches with a length-1
    component axis.
    """

    def __init__(self, manifold, degree, eval_fn, label=""):
        self.manifold = manifold
        self.degree = degree
        self.eval_fn = eval_fn
        self.label = label

    @staticmethod
    def from_chart_function(manifold, degree, fn, label=""):
        """fn maps seed jets (or value arrays) to component arrays."""
        def eval_fn(x, order, chart=0):
            out = fn(Jet.seed(np.asarray(x, float), order), chart)
            if not isinstance(out, Jet):
                out = Jet.constant(np.broadcast_to(
                    np.asarray(out, float),
                    np.asarray(x).shape[:-1]
                    + (ml.n_components(manifold.dim, degree),)),
                    manifold.dim, order)
            return out
        return FormField(manifold, degree, eval_fn, label)

    @staticmethod
    def constant(manifold, degree, comps, label=""):
        comps = np.asarray(comps, float)
        return FormField.from_chart_function(
            manifold, degree, lambda c, chart: comps, label)

    def components(self, x, order=0, chart=0):
        return self.eval_fn(x, order, chart)

    def values(self, x, chart=0):
        return self.eval_fn(x, 0, chart).value


class JetContext:
    """Metric and curvature jets at a batch of points, with form operators.

    order is the jet order of the metric; each derivative consumed by an
    operator drops the order of its output by one.
    """

    def __init__(self, manifold, x, order, chart=0):
        self.m = manifold
        self.n = manifold.dim
        self.x = np.asarray(x, float)
        self.order = order
        self.chart = chart
        self._cache = {}

    def _get(self, key, builder):
        if key not in self._cache:
            self._cache[key] = builder()
        return self._cache[key]

    # -- geometric jets ----------------------------------------------------

    @property
    def g(self):
        return self._get("g", lambda: self.m.metric_jet(
            self.x, self.order, self.chart))

    @property
    def ginv(self):
        return self._get("ginv", lambda: jinv(self.g))

    @property
    def sqrt_det(self):
        return self._get("sqrt_det",
                         lambda: jdet(self.g).sqrt()
                         * self.m.volume_orientation)

    @property
    def gamma(self):
        return self._get("gamma", lambda: christoffel_jet(self.g))

    @property
    def r_up(self):
        return self._get("r_up", lambda: riemann_up_jet(self.gamma))

    @property
    def riemann(self):
        return self._get("riemann", lambda: jeinsum(
            "km,mijl->ijkl", self.g, self.r_up))

    @property
    def ricci(self):
        def build():
            c = np.einsum("...kkijc->...ijc", self.r_up.coeffs)
            return Jet(self.n, self.r_up.order, c)
        return self._get("ricci", build)

    @property
    def scalar(self):
        return self._get("scalar", lambda: jeinsum(
            "ij,ij->", self.ginv, self.ricci))

    @property
    def nabla_riemann(self):
        return self._get("nr", lambda: nabla_riemann_jet(
            self.riemann, self.gamma))

    # -- evaluation --------------------------------------------------------

    def field(self, ff, order=None):
        order = self.order if order is None else order
        return ff.components(self.x, order, self.chart)

    # -- algebraic operators ----------------------------------------------

    def wedge(self, a, p, b, q):
        return ml.wedge(a, b, self.n, p, q)

    def interior(self, v, a, p):
        return ml.interior(v, a, self.n, p)

    def sharp(self, alpha):
        return jeinsum("ij,j->i", self.ginv, alpha)

    def flat(self, v):
        return jeinsum("ij,j->i", self.g, v)

    def inner(self, a, b, p):
        """Pointwise metric inner product of two p-form component jets."""
        if p == 0:
            return jeinsum("J,J->", a, b)
        raised = ml.compound_apply(jinv_trunc(self.ginv, a, b), a, self.n, p)
        return jeinsum("J,J->", raised, b)

    def norm2(self, a, p):
        return self.inner(a, a, p)

    def hodge(self, a, p):
        raised = ml.compound_apply(
            jinv_trunc(self.ginv, a), a, self.n, p)
        scaled = raised * self.sqrt_det.expand(-1)
        return ml._scatter(scaled, ml.hodge_scatter(self.n, p))

    def volume_form(self, order=None):
        one = Jet.constant(np.ones(self.x.shape[:-1] + (1,)),
                           self.n, self.order if order is None else order)
        return self.hodge(one, 0)

    # -- differential operators -------------------------------------------

    def d(self, a, p):
        """Exterior derivative of component jets (order drops by one)."""
        coord, src, scatter = _d_scatter(self.n, p)
        da = Jet.stack([a.deriv(i) for i in range(self.n)], axis=-2)
        rows = da.coeffs[..., coord, src, :]
        return Jet(self.n, da.order,
                   np.einsum("...Rc,RK->...Kc", rows, scatter))

    def nabla(self, a, p):
        """Covariant derivative: output batch (..., i, J), order drops by 1."""
        da = Jet.stack([a.deriv(i) for i in range(self.n)], axis=-2)
        if p == 0:
            return da
        W = ml.subst_tensor(self.n, p)
        gam = self.gamma.truncate(da.order)
        op = Jet(self.n, gam.order, np.einsum(
            "...mijc,mjJK->...iJKc", gam.coeffs, W))
        corr = jeinsum("iJK,K->iJ", op, a)
        return da - corr

    def cov_deriv(self, F, p, n_vec):
        """Covariant derivative of a jet tensor with batch
        (..., v_1..v_{n_vec}, J): output (..., i, v_1.., J)."""
        dF = Jet.stack([F.deriv(i) for i in range(self.n)],
                       axis=-(n_vec + 2))
        gam = self.gamma.truncate(dF.order)
        out = dF
        body = "".join(chr(ord("a") + t) for t in range(n_vec))
        # covariant vector slots
        for s in range(n_vec):
            letter = chr(ord("a") + s)
            sub = body.replace(letter, "m")
            out = out - jeinsum(f"mi{letter},{sub}J->i{body}J", gam, F)
        # the form slot
        if p > 0:
            W = ml.subst_tensor(self.n, p)
            op = Jet(self.n, gam.order, np.einsum(
                "...mijc,mjJK->...iJKc", gam.coeffs, W))
            out = out - jeinsum(f"iJK,{body}K->i{body}J", op, F)
        return out

    def nabla2(self, a, p):
        """Second covariant derivative, batch (..., i, j, J)."""
        return self.cov_deriv(self.nabla(a, p), p, 1)

    def codiff(self, a, p):
        """d* a = -g^{ij} (e_i interior) nabla_j a (order drops by one)."""
        if p == 0:
            raise DegreeError("codifferential of a 0-form")
        na = self.nabla(a, p)  # (..., i, J)
        raised = jeinsum("ij,jJ->iJ", self.ginv, na)
        V = ml.interior_tensor(self.n, p)
        return Jet(self.n, raised.order, -np.einsum(
            "...iJc,iJK->...Kc", raised.coeffs, V))

    # -- curvature operators ----------------------------------------------

    def subst_apply(self, a, p):
        """(W a)[m, j, J]: slot-substituted components awaiting an
        endomorphism contraction (linear, so done on raw coefficients)."""
        W = ml.subst_tensor(self.n, p)
        return Jet(self.n, a.order,
                   np.einsum("...Kc,mjJK->...mjJc", a.coeffs, W))

    def curvature_action(self, a, p):
        """(..., i, j, J): the curvature R_{e_i,e_j} acting on the form."""
        wa = self.subst_apply(a, p)
        return -jeinsum("mijk,mkJ->ijJ", self.r_up, wa)

    def q_R(self, a, p):
        """Curvature endomorphism: trace of wedge-contract over the frame."""
        act = self.curvature_action(a, p)          # (..., i, j, J)
        mixed = jeinsum("il,ijJ->ljJ", self.ginv, act)
        D = _q_kernel(self.n, p)
        return Jet(self.n, mixed.order, np.einsum(
            "...ljJc,ljJK->...Kc", mixed.coeffs, D))

    def r_plus(self, X, a, p):
        """R^+(X) psi = sum_j dx^j ^ R_{X, e_j} psi (degree p + 1)."""
        act = self.curvature_action(a, p)
        rx = jeinsum("i,ijJ->jJ", X, act)
        U = ml.wedge1_tensor(self.n, p)
        return Jet(self.n, rx.order, np.einsum(
            "...jJc,jJK->...Kc", rx.coeffs, U))

    def r_minus(self, X, a, p):
        """R^-(X) psi = sum_{j} e^j interior R_{X, e_j} psi (degree p - 1)."""
        act = self.curvature_action(a, p)
        rx = jeinsum("i,ijJ->jJ", X, act)
        rr = jeinsum("jk,jJ->kJ", self.ginv, rx)
        V = ml.interior_tensor(self.n, p)
        return Jet(self.n, rr.order, np.einsum(
            "...kJc,kJK->...Kc", rr.coeffs, V))

    def ric_derivation(self, a, p):
        """Derivation extension of the Ricci endomorphism to p-forms."""
        ric_up = jeinsum("mk,kj->mj", self.ginv, self.ricci)
        wa = self.subst_apply(a, p)
        return jeinsum("mj,mjJ->J", ric_up, wa)

    def curvature_operator_2form(self, a):
        """The curvature operator on 2-forms: (R op a)_K = R[i,j,K] a^{ij}."""
        raised = ml.compound_apply(jinv_trunc(self.ginv, a), a, self.n, 2)
        idx2 = ml.form_indices(self.n, 2)
        r = self.riemann
        # build the lowered matrix [K, (ij)] = R[i, j, K]
        C = len(idx2)
        mat = np.zeros(r.coeffs.shape[:-5] + (C, C) + r.coeffs.shape[-1:])
        for b, (i, j) in enumerate(idx2):
            for kK, (k, l) in enumerate(idx2):
                mat[..., kK, b, :] = r.coeffs[..., i, j, k, l, :]
        op = Jet(self.n, r.order, mat)
        return jeinsum("KJ,J->K", op, raised)


def jinv_trunc(ginv, *jets_):
    order = min(j.order for j in jets_)
    return ginv.truncate(order)


@lru_cache(maxsize=None)
def _d_scatter(n, p):
    coord, src, dst, sgn = ml.ext_d_table(n, p)
    scatter = np.zeros((len(dst), ml.n_components(n, p + 1)))
    scatter[np.arange(len(dst)), dst] = sgn
    return coord, src, scatter


@lru_cache(maxsize=None)
def _q_kernel(n, p):
    """D[l, j, J, K] = components of dx^j ^ (e_l interior (.)) on p-forms."""
    V = ml.interior_tensor(n, p)       # (l, J, J'')
    U = ml.wedge1_tensor(n, p - 1)     # (j, J'', K)
    return np.einsum("lJa,jaK->ljJK", V, U)


# ---------------------------------------------------------------------------
# field-level wrappers (derived fields evaluable to jets)


def d_field(ff):
    man, p = ff.manifold, ff.degree

    def eval_fn(x, order, chart=0):
        ctx = JetContext(man, x, order + 1, chart)
        return ctx.d(ff.components(x, order + 1, chart), p)

    return FormField(man, p + 1, eval_fn, label=f"d({ff.label})")


def codiff_field(ff):
    man, p = ff.manifold, ff.degree

    def eval_fn(x, order, chart=0):
        ctx = JetContext(man, x, order + 1, chart)
        return ctx.codiff(ff.components(x, order + 1, chart), p)

    return FormField(man, p - 1, eval_fn, label=f"d*({ff.label})")


def hodge_field(ff):
    man, p = ff.manifold, ff.degree

    def eval_fn(x, order, chart=0):
        ctx = JetContext(man, x, order, chart)
        return ctx.hodge(ff.components(x, order, chart), p)

    return FormField(man, man.dim - p, eval_fn, label=f"*({ff.label})")


def q_R_field(ff):
    man, p = ff.manifold, ff.degree

    def eval_fn(x, order, chart=0):
        ctx = JetContext(man, x, order + 2, chart)
        return ctx.q_R(ff.components(x, order, chart), p)

    return FormField(man, p, eval_fn, label=f"q(R)({ff.label})")
