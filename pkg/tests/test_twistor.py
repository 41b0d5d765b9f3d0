"""Tests for the twistor operator and its residual suite.

Nontrivial inputs that don't need the full catalog: the rotational Killing
1-form on the round 2-sphere (Killing by symmetry of the metric), parallel
torus forms (trivially Killing), and conformal rescalings of parallel
forms (conformal Killing but not Killing).
"""

import numpy as np
import pytest

from ckforms import multilinear as ml
from ckforms import twistor as tw
from ckforms.catalog import flat_torus, round_sphere
from ckforms.errors import DegreeError, SampleError
from ckforms.forms import FormField, JetContext, hodge_field
from ckforms.jets import Jet

from test_geometry import bumpy_metric
from test_forms import random_form


def s2_rotation_form():
    """Dual of the rotation field (-y, x) on stereographic S^2; the same
    formula is valid in both charts since rotations commute with the
    antipodal inversion."""
    man = round_sphere(2)

    def fn(c, chart):
        s = (c * c).sum(-1)
        f2 = (s + 1.0).reciprocal() * 2.0
        f2 = f2 * f2
        return Jet.stack([c[..., 1] * f2 * (-1.0), c[..., 0] * f2], axis=-1)

    return FormField.from_chart_function(man, 1, fn, "rot")


def torus_parallel(n=4, comps=None):
    man = flat_torus(n)
    if comps is None:
        comps = np.zeros(ml.n_components(n, 2))
        comps[0] = 1.0
    return man, FormField.constant(man, 2, comps, label="par2")


# ---------------------------------------------------------------------------
# operator-level checks


def test_parallel_form_twistor_zero():
    man, ff = torus_parallel()
    x = man.sample(np.random.default_rng(0), 6)
    tv = tw.twistor_apply(man, ff, x)
    assert np.max(np.abs(tv.components)) < 1e-13
    gap = tw.norm_estimate_gap(man, ff, x)
    for k in ("grad2", "bound", "gap", "tnorm2"):
        assert np.max(np.abs(gap[k])) < 1e-13
    assert tw.ckf_residual(man, ff, x).passed
    assert tw.killing_residual(man, ff, x).passed


def test_trace_invariants_random_form():
    man = bumpy_metric(4, seed=40)
    ff = random_form(man, 2, seed=41)
    x = man.sample(np.random.default_rng(1), 8)
    tv = tw.twistor_apply(man, ff, x)
    assert tv.trace_defect() < 1e-9
    assert np.max(np.abs(tv.components)) > 1e-3  # genuinely non-Killing


def test_reconstruction_of_nabla():
    # nabla_X psi = 1/(p+1) X . d psi - 1/(n-p+1) X* ^ d* psi + T(X)
    man = bumpy_metric(3, seed=42)
    ff = random_form(man, 2, seed=43)
    x = man.sample(np.random.default_rng(2), 6)
    n, p = 3, 2
    ctx = JetContext(man, x, 1)
    a = ctx.field(ff)
    na = ctx.nabla(a, p).value
    T = tw.twistor_components(ctx, a, p).value
    da = ctx.d(a, p).value
    dsa = ctx.codiff(a, p).value
    g = ctx.g.value
    rec = np.empty_like(na)
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        t1 = ml.interior(e, da, n, p + 1) / (p + 1.0)
        xi = g[..., i, :]
        t2 = ml.wedge(xi, dsa, n, 1, p - 1) / (n - p + 1.0)
        rec[..., i, :] = t1 - t2 + T[..., i, :]
    assert np.max(np.abs(na - rec)) < 1e-9


def test_twistor_equals_projected_nabla():
    man = bumpy_metric(3, seed=44)
    ff = random_form(man, 2, seed=45)
    x = man.sample(np.random.default_rng(3), 6)
    ctx = JetContext(man, x, 1)
    a = ctx.field(ff)
    T = tw.twistor_components(ctx, a, 2)
    P = tw.project_p1(ctx, ctx.nabla(a, 2), 2)
    assert np.max(np.abs(T.value - P.value)) < 1e-10


def test_project_p1_idempotent_and_kernel():
    man = bumpy_metric(4, seed=46)
    x = man.sample(np.random.default_rng(4), 5)
    n, p = 4, 2
    ctx = JetContext(man, x, 1)
    rng = np.random.default_rng(5)
    S = Jet.constant(rng.standard_normal(
        x.shape[:-1] + (n, ml.n_components(n, p))), n, 1)
    P1 = tw.project_p1(ctx, S, p)
    P2 = tw.project_p1(ctx, P1, p)
    assert np.max(np.abs(P2.value - P1.value)) < 1e-10
    w, c = tw.p1_traces(ctx, P1, p)
    assert np.max(np.abs(w.value)) < 1e-10
    assert np.max(np.abs(c.value)) < 1e-10
    # pure contraction input: S_i = e_i . beta for a fixed (p+1)-form
    beta = rng.standard_normal(ml.n_components(n, p + 1))
    V = ml.interior_tensor(n, p + 1)
    Sk = Jet.constant(np.broadcast_to(
        np.einsum("iKJ,K->iJ", V, beta),
        x.shape[:-1] + (n, ml.n_components(n, p))), n, 1)
    assert np.max(np.abs(tw.project_p1(ctx, Sk, p).value)) < 1e-12
    # pure wedge input: S_i = X_i* ^ tau
    tau = rng.standard_normal(ml.n_components(n, p - 1))
    U = ml.wedge1_tensor(n, p - 1)
    wcomp = np.einsum("jKJ,K->jJ", U, tau)
    Sw = jet_from(ctx, np.einsum("...ij,jJ->...iJ", ctx.g.value, wcomp))
    assert np.max(np.abs(tw.project_p1(ctx, Sw, p).value)) < 1e-11


def jet_from(ctx, arr):
    return Jet.constant(arr, ctx.n, 1)


def test_project_p1_rank():
    # Euclidean brute force at one point: image dimension of the projection
    man = flat_torus(4)
    x = man.sample(np.random.default_rng(6), 1)
    ctx = JetContext(man, x, 1)
    n, p = 4, 2
    dim = n * ml.n_components(n, p)
    basis = np.eye(dim).reshape(dim, n, ml.n_components(n, p))
    S = Jet.constant(basis[:, None], n, 1)  # (dim, 1, i, J) batch
    P = tw.project_p1(ctx, S, p).value.reshape(dim, dim)
    rank = np.linalg.matrix_rank(P, tol=1e-9)
    assert rank == dim - n - ml.n_components(n, p + 1)  # 24 - 4 - 4 = 16
    assert rank == 16


# ---------------------------------------------------------------------------
# a genuine Killing form: rotation on the round 2-sphere


def test_s2_rotation_is_killing():
    ff = s2_rotation_form()
    man = ff.manifold
    x = man.sample(np.random.default_rng(7), 40)
    rep = tw.killing_residual(man, ff, x, tol=1e-8)
    assert rep.passed, rep.max_residual
    # not closed: the star-Killing variant must fail
    assert not tw.star_killing_residual(man, ff, x, tol=1e-8).passed


def test_s2_rotation_special_constant():
    ff = s2_rotation_form()
    man = ff.manifold
    x = man.sample(np.random.default_rng(8), 25)
    res, c = tw.special_killing_residual(man, ff, x, variant="first_order")
    assert abs(c + 2.0) < 1e-8
    assert np.max(np.abs(res)) < 1e-8
    res2, c2 = tw.special_killing_residual(man, ff, x,
                                           variant="second_order")
    assert abs(c2 + 1.0) < 1e-8
    assert np.max(np.abs(res2)) < 1e-8
    # passing the first-order constant scales it for the second-order form
    res3, c3 = tw.special_killing_residual(man, ff, x, c=-2.0,
                                           variant="second_order")
    assert abs(c3 + 1.0) < 1e-12
    assert np.max(np.abs(res3)) < 1e-8


def test_s2_rotation_eigen_and_integrability():
    ff = s2_rotation_form()
    man = ff.manifold
    x = man.sample(np.random.default_rng(9), 20)
    assert np.max(np.abs(tw.integrability_residual(man, ff, x))) < 1e-8
    assert np.max(np.abs(tw.killing_eigen_check(man, ff, x))) < 1e-8
    # Laplace eigenvalue 2 = 2 (n-1) on the Killing 1-form
    ctx = JetContext(man, x, 2)
    a = ctx.field(ff)
    lap = tw.laplacian(ctx, a, 1).value
    assert np.max(np.abs(lap - 2.0 * a.value)) < 1e-8


def test_s2_rotation_hodge_dual_is_star_killing():
    ff = s2_rotation_form()
    man = ff.manifold
    sf = hodge_field(ff)
    x = man.sample(np.random.default_rng(10), 25)
    assert tw.star_killing_residual(man, sf, x, tol=1e-8).passed
    assert not tw.killing_residual(man, sf, x, tol=1e-8).passed
    assert tw.ckf_residual(man, sf, x, tol=1e-8).passed


def test_symmetrized_characterization():
    ff = s2_rotation_form()
    man = ff.manifold
    x = man.sample(np.random.default_rng(11), 20)
    assert np.max(np.abs(tw.symmetrized_characterization(man, ff, x))) < 1e-8
    # random forms are far from conformal Killing
    man2 = bumpy_metric(3, seed=47)
    ff2 = random_form(man2, 2, seed=48)
    x2 = man2.sample(np.random.default_rng(12), 6)
    assert np.max(np.abs(tw.symmetrized_characterization(man2, ff2, x2))) > 1e-3


# ---------------------------------------------------------------------------
# norm estimate and Weitzenboeck identities


def test_norm_gap_equals_twistor_norm():
    for man, p, seed in [(bumpy_metric(3, seed=49), 1, 50),
                         (round_sphere(4), 2, 51)]:
        ff = random_form(man, p, seed=seed)
        x = man.sample(np.random.default_rng(13), 8)
        gap = tw.norm_estimate_gap(man, ff, x)
        assert np.max(np.abs(gap["gap"] - gap["tnorm2"])) < 1e-9
        assert np.min(gap["gap"]) > -1e-10


def test_weitzenbock_identities():
    man = bumpy_metric(3, seed=52)
    x = man.sample(np.random.default_rng(14), 5)
    for p, seed in [(1, 53), (2, 54)]:
        for k in range(3):
            ff = random_form(man, p, seed=seed + 10 * k)
            res = tw.weitzenbock_residuals(man, ff, x)
            assert np.max(np.abs(res["first"])) < 1e-7
            assert np.max(np.abs(res["second"])) < 1e-7
            assert np.max(np.abs(res["classical"])) < 1e-7


def test_weitzenbock_killing_reduces_to_integrability():
    ff = s2_rotation_form()
    man = ff.manifold
    x = man.sample(np.random.default_rng(15), 10)
    res = tw.weitzenbock_residuals(man, ff, x)
    # T*T term vanishes for a Killing input, so the second identity
    # coincides with the integrability residual
    ii = tw.integrability_residual(man, ff, x)
    assert np.max(np.abs(res["second"] - ii)) < 1e-8


# ---------------------------------------------------------------------------
# conformal rescaling


def test_conformal_identity_at_lambda_zero():
    man, ff = torus_parallel()
    man2, ff2 = tw.conformal_rescale(man, ff, lambda c: 0.0)
    x = man.sample(np.random.default_rng(16), 5)
    assert np.allclose(man2.metric_jet(x, 2).coeffs,
                       man.metric_jet(x, 2).coeffs, atol=1e-14)
    assert np.allclose(ff2.values(x), ff.values(x), atol=1e-14)


def test_conformal_rescale_preserves_ckf():
    man, ff = torus_parallel()
    man2, ff2 = tw.conformal_rescale(man, ff,
                                     lambda c: c[..., 0].sin() * 0.3)
    x = man.sample(np.random.default_rng(17), 30)
    rep = tw.ckf_residual(man2, ff2, x, tol=1e-8)
    assert rep.passed, rep.max_residual
    # no longer parallel, and coclosedness is lost
    ctx = JetContext(man2, x, 1)
    assert np.max(np.abs(ctx.nabla(ctx.field(ff2), 2).value)) > 1e-3
    assert not tw.killing_residual(man2, ff2, x, tol=1e-8).passed
    # gap identity survives the rescale
    gap = tw.norm_estimate_gap(man2, ff2, x)
    assert np.max(np.abs(gap["gap"])) < 1e-9


def test_conformal_rescale_sphere_killing():
    ff = s2_rotation_form()
    man = ff.manifold
    man2, ff2 = tw.conformal_rescale(man, ff, lambda c: c[..., 0] * 0.2)
    x = man.sample(np.random.default_rng(18), 25)
    assert tw.ckf_residual(man2, ff2, x, tol=1e-8).passed
    assert not tw.killing_residual(man2, ff2, x, tol=1e-8).passed


def test_residual_linearity_probe():
    man, ff = torus_parallel(3, comps=np.array([1.0, 0.0, 0.0]))
    pert = random_form(man, 2, seed=55)
    x = man.sample(np.random.default_rng(19), 10)
    res = {}
    for eps in (1e-3, 1e-2):
        def fn(xx, order, chart=0, e=eps):
            return ff.eval_fn(xx, order, chart) \
                + pert.eval_fn(xx, order, chart) * e
        res[eps] = tw.ckf_residual(
            man, FormField(man, 2, fn), x).max_residual
    ratio = res[1e-2] / res[1e-3]
    assert 9.0 < ratio < 11.0


def test_empty_sample_rejected():
    man, ff = torus_parallel()
    with pytest.raises(SampleError):
        tw.ckf_residual(man, ff, np.zeros((0, 4)))


# ---------------------------------------------------------------------------
# Killing tensors


def test_killing_tensor_trace_identity():
    man = bumpy_metric(3, seed=56)
    for p, seed in [(1, 57), (2, 58)]:
        ff = random_form(man, p, seed=seed)
        x = man.sample(np.random.default_rng(20), 8)
        assert np.max(np.abs(tw.killing_trace_residual(man, ff, x))) < 1e-9


def test_killing_tensor_cyclic():
    ff = s2_rotation_form()
    man = ff.manifold
    x = man.sample(np.random.default_rng(21), 15)
    assert np.max(np.abs(tw.cyclic_residual(man, ff, x))) < 1e-8
    # contracted variant agrees
    rng = np.random.default_rng(22)
    X, Y, Z = rng.standard_normal((3, x.shape[0], 2))
    full = tw.cyclic_residual(man, ff, x)
    ctr = tw.cyclic_residual(man, ff, x, X, Y, Z)
    ref = np.einsum("...mij,...m,...i,...j->...", full, X, Y, Z)
    assert np.allclose(ctr, ref, atol=1e-12)
    # K itself is symmetric and positive semidefinite
    K = tw.killing_tensor(man, ff, x)
    assert np.allclose(K, np.swapaxes(K, -1, -2), atol=1e-12)
    assert np.min(np.linalg.eigvalsh(K)) > -1e-12


def test_killing_tensor_parallel_flat():
    man, ff = torus_parallel()
    x = man.sample(np.random.default_rng(23), 5)
    assert np.max(np.abs(tw.cyclic_residual(man, ff, x))) < 1e-13


# ---------------------------------------------------------------------------
# curvature conditions


def test_curvature_condition_flat():
    man, ff = torus_parallel()
    x = man.sample(np.random.default_rng(24), 5)
    assert np.max(np.abs(tw.curvature_condition(man, ff, x))) < 1e-13


def test_curvature_condition_killing_s2():
    ff = s2_rotation_form()
    man = ff.manifold
    x = man.sample(np.random.default_rng(25), 20)
    assert np.max(np.abs(tw.curvature_condition(man, ff, x))) < 1e-7


def test_curvature_condition_conformal_ckf():
    # conformally flat metric with a genuine (non-Killing) CKF
    man, ff = torus_parallel()
    man2, ff2 = tw.conformal_rescale(man, ff,
                                     lambda c: c[..., 0].sin() * 0.3)
    x = man.sample(np.random.default_rng(26), 15)
    assert np.max(np.abs(tw.curvature_condition(man2, ff2, x))) < 1e-7


def test_curvature_condition_degree_errors():
    man, _ = torus_parallel()
    f0 = FormField.constant(man, 0, [1.0])
    with pytest.raises(DegreeError):
        tw.curvature_condition(man, f0, man.sample(
            np.random.default_rng(27), 2))


# ---------------------------------------------------------------------------
# curvature action decomposition


def test_decompose_bianchi_vanishing():
    man = bumpy_metric(4, seed=59)
    ff = random_form(man, 2, seed=60)
    x = man.sample(np.random.default_rng(28), 6)
    out = tw.decompose_curvature_action(man, ff, x)
    assert out["skipped"] == []
    scale = np.max(out["total"]) + 1e-30
    assert np.max(out["components"]["p+2"]) / scale < 1e-8
    assert np.max(out["components"]["p-2"]) / scale < 1e-8
    # generic form: the other components are genuinely present
    assert np.max(out["components"]["p"]) / scale > 1e-3
    assert np.max(out["residual_component"]) / scale > 1e-4


def test_decompose_component_sum():
    man = bumpy_metric(4, seed=61)
    ff = random_form(man, 2, seed=62)
    x = man.sample(np.random.default_rng(29), 4)
    out = tw.decompose_curvature_action(man, ff, x)
    total2 = out["total"] ** 2
    parts = sum(v ** 2 for v in out["components"].values())
    parts = parts + out["residual_component"] ** 2
    assert np.allclose(parts, total2, rtol=1e-10, atol=1e-12)


def test_decompose_q_match_any_form():
    man = bumpy_metric(4, seed=63)
    ff = random_form(man, 2, seed=64)
    x = man.sample(np.random.default_rng(30), 6)
    out = tw.decompose_curvature_action(man, ff, x)
    scale = np.max(out["components"]["p"]) + 1e-30
    assert np.max(out["q_match_residual"]) / scale < 1e-8


def test_decompose_ckf_residual_component_vanishes():
    man, ff = torus_parallel()
    man2, ff2 = tw.conformal_rescale(man, ff,
                                     lambda c: c[..., 0].sin() * 0.3)
    x = man.sample(np.random.default_rng(31), 10)
    out = tw.decompose_curvature_action(man2, ff2, x)
    scale = np.max(out["total"]) + 1e-30
    assert np.max(out["residual_component"]) / scale < 1e-7
    # Killing input on the 2-sphere: only three components can exist at all
    # (n = 2 leaves just p, p-1,1 and p+1,1 candidates) and the sphere's
    # constant curvature kills everything except the pure q(R) part
    ffk = s2_rotation_form()
    outk = tw.decompose_curvature_action(ffk.manifold, ffk,
                                         ffk.manifold.sample(
                                             np.random.default_rng(32), 8))
    sk = np.max(outk["total"]) + 1e-30
    assert np.max(outk["residual_component"]) / sk < 1e-8
