"""Tests for the catalog: division algebra tables, constant calibration
forms on flat space, the flat-cone pullback route to the sphere
structures, product manifolds, and the entry registry."""

import numpy as np
import pytest

from ckforms import catalog as cat
from ckforms import cone as cn
from ckforms import multilinear as ml
from ckforms import twistor as tw
from ckforms.errors import DegreeError
from ckforms.forms import FormField, JetContext, d_field
from ckforms.geometry import metric_frame, transition_jacobian


# ---------------------------------------------------------------------------
# algebra tables


def test_quaternion_table():
    T = cat.quaternion_table()
    e = np.eye(4)
    # ij = k, ji = -k, i^2 = -1
    assert np.allclose(cat.algebra_multiply(T, e[1], e[2]), e[3])
    assert np.allclose(cat.algebra_multiply(T, e[2], e[1]), -e[3])
    assert np.allclose(cat.algebra_multiply(T, e[1], e[1]), -e[0])
    # associative: (xy)z = x(yz) for all basis triples
    lhs = np.einsum("abk,kcd->abcd", T, T)
    rhs = np.einsum("bck,akd->abcd", T, T)
    assert np.array_equal(lhs, rhs)


def test_octonion_table():
    T = cat.octonion_table()
    rng = np.random.default_rng(0)
    x, y = rng.standard_normal((2, 5, 8))
    p = np.einsum("abc,...a,...b->...c", T, x, y)
    # norm multiplicative, but not associative
    assert np.allclose(np.sum(p * p, -1),
                       np.sum(x * x, -1) * np.sum(y * y, -1), atol=1e-12)
    lhs = np.einsum("abk,kcd->abcd", T, T)
    rhs = np.einsum("bck,akd->abcd", T, T)
    assert np.max(np.abs(lhs - rhs)) > 1.0


# ---------------------------------------------------------------------------
# constant calibration forms on flat space


def test_associative_form_norm():
    phi = cat.associative_form()
    assert np.count_nonzero(phi) == 7
    assert np.sum(phi * phi) == 7.0


def test_cayley_form_anti_self_dual():
    # the sign convention pairs with the orientation-reversing cone chart,
    # so in the standard flat orientation the form is anti-self-dual
    om = cat.cayley_form()
    assert np.allclose(cat.flat_hodge(om, 8, 4), -om, atol=1e-14)
    assert np.sum(om * om) == 14.0


def test_quaternion_kahler_triple():
    ws = cat.quaternion_kahler_forms()
    assert len(ws) == 3
    for w in ws:
        # each form encodes an orthogonal anticommuting complex structure
        J = np.zeros((8, 8))
        for k, (i, j) in enumerate(ml.form_indices(8, 2)):
            J[i, j], J[j, i] = w[k], -w[k]
        assert np.allclose(J @ J, -np.eye(8), atol=1e-14)
    J1, J2 = ws[0], ws[1]
    assert not np.allclose(J1, J2)


# ---------------------------------------------------------------------------
# the embedding and extraction route


def test_sphere_embedding_isometric():
    rng = np.random.default_rng(1)
    for n in (2, 6):
        man = cat._sphere(n)
        x = man.sample(rng, 5)
        for chart in (0, 1):
            F = cat.sphere_embedding(cat.Jet.seed(x, 1), n, chart)
            val = F.value
            assert np.allclose(np.sum(val * val, -1), 1.0, atol=1e-13)
            E = F.grad()                       # (..., n+1, n)
            g = np.einsum("...Ai,...Aj->...ij", E, E)
            assert np.allclose(g, man.metric_jet(x, 0, chart).value,
                               atol=1e-12)


def test_extraction_matches_cone_lift():
    # the horizontal+radial split of the flat parallel form agrees with
    # the intrinsic cone lift of the extracted Killing form
    e = cat.entry("s3")
    xi = e.form("xi_star").field
    hat = cn.cone_lift(xi)
    cone = hat.manifold
    x = cone.sample_shells(np.random.default_rng(2), 6)
    _, _, flat = cat.sphere_extraction(3, cat.kahler_form(2), 2, "xi")
    a, b = flat.values(x), hat.values(x)
    c = np.dot(a.ravel(), b.ravel()) / np.dot(b.ravel(), b.ravel())
    assert np.max(np.abs(a - c * b)) < 1e-12


def test_g2_cone_form_parallel_and_self_dual():
    e = cat.entry("s7_g2")
    hat = e.extras["cone_form"]
    cone = hat.manifold
    x = cone.sample_shells(np.random.default_rng(3), 4)
    assert cn.cone_parallel_residual(hat, x, tol=1e-9).passed
    ctx = JetContext(cone, x, 0)
    a = ctx.field(hat)
    assert np.max(np.abs(ctx.hodge(a, 4).value - a.value)) < 1e-12


# ---------------------------------------------------------------------------
# declared properties of every named catalog form


def _sweep_points(man, rng):
    return man.sample(rng, 5 if man.dim >= 6 else 12)


@pytest.mark.parametrize("eid", cat.entry_ids())
def test_catalog_property_sweep(eid):
    e = cat.entry(eid)
    rng = np.random.default_rng(4)
    man = e.manifold
    x = _sweep_points(man, rng)
    for fid, nf in e.forms.items():
        ff = nf.field
        if "killing" in nf.properties:
            rep = tw.killing_residual(man, ff, x, tol=1e-9)
            assert rep.passed, (eid, fid, rep.max_residual)
        if "ckf" in nf.properties:
            rep = tw.ckf_residual(man, ff, x, tol=1e-9)
            assert rep.passed, (eid, fid, rep.max_residual)
        if "special" in nf.properties:
            res, c = tw.special_killing_residual(man, ff, x,
                                                 variant="first_order")
            assert np.max(np.abs(res)) < 1e-9, (eid, fid)
            assert abs(c - nf.special_constant) < 1e-9, (eid, fid, c)
        if "unit" in nf.properties:
            ctx = JetContext(man, x, 0)
            n2 = ctx.norm2(ctx.field(ff), ff.degree).value
            assert np.max(np.abs(n2 - 1.0)) < 1e-10, (eid, fid)
        if "parallel" in nf.properties:
            ctx = JetContext(man, x, 1)
            na = ctx.nabla(ctx.field(ff), ff.degree).value
            assert np.max(np.abs(na)) < 1e-10, (eid, fid)


def test_chart_consistency_of_named_forms():
    # values in the two charts agree after pullback along the transition
    rng = np.random.default_rng(5)
    cases = [("s3", "xi_star"), ("s5", "d_xi_star"), ("s6_nk", "nk_omega"),
             ("s7_g2", "g2_phi"), ("s7_3sas", "eta2")]
    for eid, fid in cases:
        e = cat.entry(eid)
        man, ff = e.manifold, e.form(fid).field
        y = rng.standard_normal((6, man.dim))
        y *= ((1.05 + 0.3 * rng.random(6))
              / np.linalg.norm(y, axis=1))[:, None]
        ch = man.charts[0]
        jac = transition_jacobian(ch, y)
        cm = ml.compound_matrix(jac, man.dim, ff.degree)
        back = np.einsum("...K,...KI->...I",
                         ff.values(ch.transition(y), chart=1), cm)
        assert np.max(np.abs(back - ff.values(y))) < 1e-12, (eid, fid)


def test_sphere_scalar_curvatures():
    rng = np.random.default_rng(6)
    for n in (5, 6, 7):
        man = cat._sphere(n)
        fr = metric_frame(man, man.sample(rng, 3), depth=2)
        assert np.allclose(fr.scalar, n * (n - 1.0), atol=1e-8)


# ---------------------------------------------------------------------------
# Sasakian structures on odd spheres


def test_hopf_sasakian_structure_equations():
    rng = np.random.default_rng(7)
    for eid in ("s3", "s5"):
        e = cat.entry(eid)
        x = e.manifold.sample(rng, 8)
        res = cat.sasakian_structure_residuals(e.manifold,
                                               e.form("xi_star").field, x)
        for name, arr in res.items():
            assert np.max(np.abs(arr)) < 1e-12, (eid, name)


def test_contact_volume_constant():
    # xi* ^ d xi* on S^3 is twice the volume form
    e = cat.entry("s3")
    x = e.manifold.sample(np.random.default_rng(8), 10)
    c, res = cat.contact_volume_ratio(e.manifold,
                                      e.form("omega_k:1").field, x)
    assert abs(c - 2.0) < 1e-12
    assert np.max(np.abs(res)) < 1e-12


def test_omega_k_family_on_s5():
    e = cat.entry("s5")
    man = e.manifold
    x = man.sample(np.random.default_rng(9), 4)
    for k in (0, 1):
        nf = e.form(f"omega_k:{k}")
        assert nf.field.degree == 2 * k + 1
        res, c = tw.special_killing_residual(man, nf.field, x,
                                             variant="first_order")
        assert np.max(np.abs(res)) < 1e-12
        assert abs(c + 2.0 * (k + 1)) < 1e-10
    # the top power is 2^k k! times the volume form
    c, res = cat.contact_volume_ratio(man, e.form("omega_k:2").field, x)
    assert abs(c - 8.0) < 1e-12
    assert np.max(np.abs(res)) < 1e-12
    for k in (0, 1):
        nf = e.form(f"omega_k:{k}")
        ctx = JetContext(man, x, 3)
        lap = tw.laplacian(ctx, ctx.field(nf.field), nf.field.degree).value
        v = nf.field.values(x)
        assert np.max(np.abs(lap - nf.eigenvalue * v)) < 1e-9
    with pytest.raises(DegreeError):
        e.form("omega_k:3")


def test_sasaki_converse_probe():
    rng = np.random.default_rng(10)
    e = cat.entry("s3")
    x = e.manifold.sample(rng, 8)
    out = cat.sasaki_converse_probe(e.manifold, e.form("xi_star").field, x)
    assert out["status"] == "confirmed"
    assert out["sasaki_rule"] < 1e-10
    # a flat torus fails the Einstein normalization: no conclusion drawn
    t = cat.entry("t3")
    xt = t.manifold.sample(rng, 6)
    out = cat.sasaki_converse_probe(t.manifold,
                                    t.form("parallel:dx1").field, xt)
    assert out["status"] == "inconclusive"
    assert "sasaki_rule" not in out


# ---------------------------------------------------------------------------
# the conformal Killing basis and its eigenvalues


def test_sphere_basis_counts_and_eigenvalues():
    rng = np.random.default_rng(11)
    for n, p in ((2, 1), (3, 1)):
        man = cat._sphere(n)
        x = man.sample(rng, 5)
        basis = cat.sphere_ckf_basis(n, p)
        from math import comb
        assert len(basis) == comb(n + 2, p + 1)
        kill = [nf for nf in basis if "killing" in nf.properties]
        assert len(kill) == comb(n + 1, p + 1)
        for nf in basis:
            ctx = JetContext(man, x, 3)
            lap = tw.laplacian(ctx, ctx.field(nf.field), p).value
            v = nf.field.values(x)
            assert np.max(np.abs(lap - nf.eigenvalue * v)) < 1e-8, nf.note
        # linear independence at a handful of points
        vals = np.stack([nf.field.values(x).ravel() for nf in basis])
        assert np.linalg.matrix_rank(vals, tol=1e-8) == len(basis)


# ---------------------------------------------------------------------------
# the nearly Kahler six-sphere


def test_s6_complex_structure_agreement():
    e = cat.entry("s6_nk")
    man = e.manifold
    rng = np.random.default_rng(12)
    x = man.sample(rng, 6)
    for chart in (0, 1):
        Jo = cat.s6_octonion_endomorphism(x, chart)
        Jw = cat.endomorphism_from_kahler(man, e.form("nk_omega").field,
                                          x, chart)
        assert np.max(np.abs(Jo - Jw)) < 1e-12
        assert np.max(np.abs(
            np.einsum("...ab,...bc->...ac", Jo, Jo) + np.eye(6))) < 1e-12


def test_s6_cross_product_axioms():
    e = cat.entry("s6_nk")
    cp = e.extras["cross"]
    rng = np.random.default_rng(13)
    x = e.manifold.sample(rng, 8)
    v = list(rng.standard_normal((1, 8, 6)))
    res = cat.cross_axiom_residuals(cp, x, v)
    assert np.max(np.abs(res["orthogonality"])) < 1e-12
    assert np.max(np.abs(res["norm"])) < 1e-12
    nr = cat.nearly_parallel_residual(e.manifold, e.form("nk_omega").field,
                                      x, v)
    assert np.max(np.abs(nr)) < 1e-12


def test_kahler_contraction_identity():
    # Lambda(d omega) = J(d* omega): both sides vanish for the nearly
    # Kahler S^6 and are equal but nonzero for a twisted torus structure
    rng = np.random.default_rng(14)
    e = cat.entry("s6_nk")
    x = e.manifold.sample(rng, 5)
    res, lhs, rhs = cat.kahler_contraction_identity(
        e.manifold, e.form("nk_omega").field, e.extras["J"], x)
    assert np.max(np.abs(lhs)) < 1e-12
    assert np.max(np.abs(rhs)) < 1e-12

    man, om, jfn = cat.twisted_torus_hermitian()
    xt = man.sample(rng, 10)
    res, lhs, rhs = cat.kahler_contraction_identity(man, om, jfn, xt)
    assert np.max(np.abs(lhs)) > 0.05
    assert np.max(np.abs(res)) < 1e-12
    J = jfn(xt)
    assert np.max(np.abs(
        np.einsum("...ab,...bc->...ac", J, J) + np.eye(6))) < 1e-12


# ---------------------------------------------------------------------------
# the weak G2 seven-sphere


def test_s7_two_fold_cross_product():
    e = cat.entry("s7_g2")
    cp = e.extras["cross"]
    assert cp.arity == 2
    rng = np.random.default_rng(15)
    x = e.manifold.sample(rng, 6)
    v = list(rng.standard_normal((2, 6, 7)))
    res = cat.cross_axiom_residuals(cp, x, v)
    assert np.max(np.abs(res["orthogonality"])) < 1e-11
    assert np.max(np.abs(res["norm"])) < 1e-11
    nr = cat.nearly_parallel_residual(e.manifold, e.form("g2_phi").field,
                                      x, v[:1])
    assert np.max(np.abs(nr)) < 1e-11


# ---------------------------------------------------------------------------
# the 3-Sasakian seven-sphere


def test_three_sasakian_frame():
    e = cat.entry("s7_3sas")
    man = e.manifold
    rng = np.random.default_rng(16)
    x = man.sample(rng, 6)
    xi = [e.form(f"eta{i}").field for i in (1, 2, 3)]
    g = man.metric_jet(x, 0).value
    gi = np.linalg.inv(g)
    vals = [f.values(x) for f in xi]
    for i in range(3):
        for j in range(3):
            ip = np.einsum("...ab,...a,...b->...", gi, vals[i], vals[j])
            assert np.max(np.abs(ip - float(i == j))) < 1e-12
    # quaternionic so(3) bracket relations on the dual vectors
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        br = cat.vector_bracket(man, xi[i], xi[j], x)
        xk = np.einsum("...ab,...b->...a", gi, vals[k])
        assert np.max(np.abs(br - 2.0 * xk)) < 1e-11, (i, j, k)


def test_psi_abc_forms():
    e = cat.entry("s7_3sas")
    man = e.manifold
    x = man.sample(np.random.default_rng(17), 4)
    # weight one reduces to the contact form itself
    a = e.form("psi_abc:1:0:0").field.values(x)
    b = e.form("eta1").field.values(x)
    assert np.array_equal(a, b)
    for fid, want in (("psi_abc:1:1:0", -4.0), ("psi_abc:2:0:0", -4.0),
                      ("psi_abc:3:0:0", -6.0), ("psi_abc:2:1:0", -6.0)):
        nf = e.form(fid)
        res, c = tw.special_killing_residual(man, nf.field, x,
                                             variant="first_order")
        assert np.max(np.abs(res)) < 1e-12, fid
        assert abs(c - want) < 1e-10, (fid, c)
    # the fully mixed weight cancels identically
    v = e.form("psi_abc:1:1:1").field.values(x)
    assert np.max(np.abs(v)) < 1e-14
    with pytest.raises(DegreeError):
        e.form("psi_abc:3:2:0")
    with pytest.raises(DegreeError):
        e.form("psi_abc:0:0:0")


# ---------------------------------------------------------------------------
# products and the registry


def test_product_entry():
    e = cat.entry("s2xs3")
    man = e.manifold
    assert man.dim == 5
    x = man.sample(np.random.default_rng(18), 8)
    assert tw.killing_residual(man, e.form("xi_star").field, x,
                               tol=1e-9).passed
    assert tw.ckf_residual(man, e.form("vol_wedge_star").field, x,
                           tol=1e-9).passed


def test_product_metric_blocks():
    m1, m2 = cat._sphere(2), cat._torus(3)
    prod = cat.product_manifold(m1, m2)
    rng = np.random.default_rng(19)
    x = prod.sample(rng, 4)
    g = prod.metric_jet(x, 0).value
    assert np.allclose(g[:, :2, :2], m1.metric_jet(x[:, :2], 0).value,
                       atol=1e-13)
    assert np.allclose(g[:, 2:, 2:], np.eye(3), atol=1e-13)
    assert np.allclose(g[:, :2, 2:], 0.0, atol=1e-14)
    # a parallel factor form pulls back to a parallel product form
    ff = cat.factor_pullback(
        prod, 2, FormField.constant(m2, 1, [1.0, 0.0, 0.0], label="dx1"),
        which=1, label="lift")
    ctx = JetContext(prod, x, 1)
    assert np.max(np.abs(ctx.nabla(ctx.field(ff), 1).value)) < 1e-12


def test_registry_and_errors():
    ids = cat.entry_ids()
    for want in ("s2", "s3", "s5", "s6_nk", "s7_g2", "s7_3sas",
                 "t2", "t3", "s2xs3"):
        assert want in ids
    assert cat.entry("s3") is cat.entry("s3")
    with pytest.raises(KeyError):
        cat.entry("k3")
    with pytest.raises(KeyError):
        cat.entry("s3").form("no_such_form")
    with pytest.raises(DegreeError):
        cat.entry("t2").form("parallel:dx5")
    with pytest.raises(KeyError):
        cat.entry("t2").form("parallel:bogus")
