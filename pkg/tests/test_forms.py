"""Tests for form fields and natural operators.

Cross-operator oracles: d is pure partial derivatives, nabla adds
Christoffel corrections, d* is a metric trace of nabla; their classical
interrelations (antisymmetrization, trace, Ricci identity, Weitzenboeck)
are checked on generic analytic metrics, not just symmetric spaces.
"""

import numpy as np
import pytest

from ckforms import multilinear as ml
from ckforms.catalog import flat_torus, round_sphere
from ckforms.forms import FormField, JetContext, d_field, codiff_field
from ckforms.geometry import metric_frame
from ckforms.jets import Jet

from test_geometry import bumpy_metric


def random_form(man, p, seed=0):
    n = man.dim
    C = ml.n_components(n, p)
    rng = np.random.default_rng(seed)
    amp = rng.standard_normal((C, n)) * 0.7
    phase = rng.uniform(0, 2 * np.pi, (C, n))

    def fn(c, chart):
        comps = []
        for J in range(C):
            s = None
            for k in range(n):
                t = (c[..., k] + phase[J, k]).sin() * amp[J, k]
                s = t if s is None else s + t
            comps.append(s)
        return Jet.stack(comps, axis=-1)

    return FormField.from_chart_function(man, p, fn, label=f"rand{p}")


def test_d_squared_zero():
    man = bumpy_metric(3, seed=1)
    ff = random_form(man, 1, seed=2)
    x = man.sample(np.random.default_rng(0), 10)
    ctx = JetContext(man, x, 2)
    dda = ctx.d(ctx.d(ctx.field(ff), 1), 2)
    assert np.max(np.abs(dda.value)) < 1e-12


def test_d_matches_nabla_antisymmetrization():
    man = bumpy_metric(3, seed=3)
    ff = random_form(man, 1, seed=4)
    x = man.sample(np.random.default_rng(1), 8)
    ctx = JetContext(man, x, 2)
    a = ctx.field(ff)
    da = ctx.d(a, 1).value
    na = ctx.nabla(a, 1).value  # (..., i, j)
    anti = na - np.swapaxes(na, -1, -2)
    # increasing-pair components of the antisymmetrized derivative
    for k, (i, j) in enumerate(ml.form_indices(3, 2)):
        assert np.allclose(da[..., k], anti[..., i, j], atol=1e-10)


def test_codiff_is_nabla_trace():
    man = bumpy_metric(3, seed=5)
    ff = random_form(man, 2, seed=6)
    x = man.sample(np.random.default_rng(2), 8)
    ctx = JetContext(man, x, 2)
    a = ctx.field(ff)
    ds = ctx.codiff(a, 2).value
    na = ctx.nabla(a, 2)
    # brute force: -g^{ij} (e_i interior nabla_j a)
    gi = ctx.ginv.value
    ref = np.zeros_like(ds)
    for i in range(3):
        for j in range(3):
            e = np.zeros(3)
            e[i] = 1.0
            ref -= gi[..., i, j, None] * ml.interior(e, na.value[..., j, :],
                                                     3, 2)
    assert np.allclose(ds, ref, atol=1e-10)


def test_musical_and_adjointness():
    man = bumpy_metric(4, seed=7)
    rng = np.random.default_rng(3)
    x = man.sample(rng, 6)
    ctx = JetContext(man, x, 1)
    v = Jet.constant(rng.standard_normal(x.shape), 4, 1)
    a = ctx.field(random_form(man, 2, seed=8))
    b = ctx.field(random_form(man, 3, seed=9))
    vf = ctx.flat(v)
    # involution
    assert np.allclose(ctx.sharp(vf).value, v.value, atol=1e-12)
    # adjointness <v . a, c> = <a, v^flat ^ c> with c of degree p-1
    c = ctx.field(random_form(man, 1, seed=10))
    lhs = ctx.inner(ctx.interior(v, a, 2), c, 1).value
    rhs = ctx.inner(a, ctx.wedge(vf, 1, c, 1), 2).value
    assert np.allclose(lhs, rhs, atol=1e-10)
    # Cartan-type identity v . (v* ^ a) + v* ^ (v . a) = |v|^2 a
    t1 = ctx.interior(v, ctx.wedge(vf, 1, a, 2), 3)
    t2 = ctx.wedge(vf, 1, ctx.interior(v, a, 2), 1)
    vv = ctx.inner(vf, vf, 1)
    lhs = (t1 + t2).value
    rhs = vv.value[..., None] * a.value
    assert np.allclose(lhs, rhs, atol=1e-10)


def test_hodge_star_laws():
    man = bumpy_metric(3, seed=11)
    rng = np.random.default_rng(5)
    x = man.sample(rng, 6)
    ctx = JetContext(man, x, 1)
    a = ctx.field(random_form(man, 1, seed=12))
    b = ctx.field(random_form(man, 1, seed=13))
    # star star = (-1)^{p(n-p)}
    ss = ctx.hodge(ctx.hodge(a, 1), 2)
    assert np.allclose(ss.value, a.value, atol=1e-10)
    # <a, b> vol = a ^ star b
    vol = ctx.volume_form()
    lhs = ctx.inner(a, b, 1).value[..., None] * vol.value
    rhs = ctx.wedge(a, 1, ctx.hodge(b, 1), 2).value
    assert np.allclose(lhs, rhs, atol=1e-10)
    # star 1 has coefficient sqrt(det g)
    assert np.allclose(vol.value[..., 0],
                       np.sqrt(np.linalg.det(ctx.g.value)), atol=1e-12)


def test_ricci_identity():
    man = bumpy_metric(3, seed=13)
    ff = random_form(man, 2, seed=14)
    x = man.sample(np.random.default_rng(6), 6)
    ctx = JetContext(man, x, 3)
    a = ctx.field(ff)
    n2 = ctx.nabla2(a, 2).value        # (..., i, j, J)
    comm = n2 - np.swapaxes(n2, -3, -2)
    act = ctx.curvature_action(a, 2).value
    assert np.max(np.abs(comm - act)) < 1e-8


def test_q_R_on_one_forms_is_ricci():
    man = bumpy_metric(3, seed=15)
    ff = random_form(man, 1, seed=16)
    x = man.sample(np.random.default_rng(7), 6)
    ctx = JetContext(man, x, 2)
    a = ctx.field(ff)
    q = ctx.q_R(a, 1).value
    ric = ctx.ric_derivation(a, 1).value
    assert np.allclose(q, ric, atol=1e-9)


def test_q_R_sphere_eigenvalue():
    man = round_sphere(4)
    ff = random_form(man, 2, seed=17)
    x = man.sample(np.random.default_rng(8), 10)
    ctx = JetContext(man, x, 2)
    a = ctx.field(ff)
    q = ctx.q_R(a, 2).value
    assert np.max(np.abs(q - 4.0 * a.value)) < 1e-8


def test_q_R_flat_zero():
    man = flat_torus(3)
    ff = random_form(man, 1, seed=18)
    x = man.sample(np.random.default_rng(9), 5)
    ctx = JetContext(man, x, 2)
    q = ctx.q_R(ctx.field(ff), 1).value
    assert np.max(np.abs(q)) < 1e-13


def test_q_R_frame_sum_cross_check():
    # orthonormal-frame assembly must agree with the coordinate contraction
    man = bumpy_metric(3, seed=19)
    ff = random_form(man, 2, seed=20)
    x = man.sample(np.random.default_rng(10), 4)
    ctx = JetContext(man, x, 2)
    a = ctx.field(ff)
    q = ctx.q_R(a, 2).value
    act = ctx.curvature_action(a, 2).value  # (..., i, j, J)
    fr = metric_frame(man, x, depth=1)
    E = fr.orthonormal_frame()              # rows = frame vectors
    g = fr.g
    npts = x.shape[0]
    ref = np.zeros_like(q)
    for aa in range(3):
        for bb in range(3):
            r_ab = np.einsum("...i,...j,...ijJ->...J", E[..., aa, :],
                             E[..., bb, :], act)
            inter = ml.interior(E[..., aa, :], r_ab, 3, 2)
            ebstar = np.einsum("...ij,...j->...i", g, E[..., bb, :])
            ref += ml.wedge(ebstar, inter, 3, 1, 1)
    assert np.allclose(q, ref, atol=1e-9)


def test_r_plus_trace_is_minus_q():
    man = bumpy_metric(3, seed=21)
    ff = random_form(man, 2, seed=22)
    x = man.sample(np.random.default_rng(11), 4)
    ctx = JetContext(man, x, 2)
    a = ctx.field(ff)
    tot = None
    for i in range(3):
        e = np.zeros((x.shape[0], 3))
        e[:, i] = 1.0
        rp = ctx.r_plus(Jet.constant(e, 3, 2), a, 2)
        ei_raised = ctx.ginv.value[..., i, :]
        term = ml.interior(ei_raised, rp.value, 3, 3)
        tot = term if tot is None else tot + term
    q = ctx.q_R(a, 2).value
    assert np.allclose(tot, -q, atol=1e-9)


def test_eq9_two_form_identity():
    for man, seed in [(round_sphere(4), 23), (bumpy_metric(4, seed=25), 26)]:
        ff = random_form(man, 2, seed=seed)
        x = man.sample(np.random.default_rng(12), 5)
        ctx = JetContext(man, x, 2)
        a = ctx.field(ff)
        q = ctx.q_R(a, 2).value
        ric = ctx.ric_derivation(a, 2).value
        rop = ctx.curvature_operator_2form(a).value
        assert np.max(np.abs(q - (ric - 2.0 * rop))) < 1e-8


def test_classical_weitzenbock():
    man = bumpy_metric(3, seed=27)
    x = man.sample(np.random.default_rng(13), 5)
    for p, seed in [(1, 28), (2, 29)]:
        ff = random_form(man, p, seed=seed)
        ctx = JetContext(man, x, 3)
        a = ctx.field(ff)
        lap = ctx.codiff(ctx.d(a, p), p + 1)
        if p >= 1:
            lap = lap + ctx.d(ctx.codiff(a, p), p - 1)
        n2 = ctx.nabla2(a, p)
        rough = -jeinsum_values(ctx, n2)
        q = ctx.q_R(a, p).value
        assert np.max(np.abs(lap.value - (rough + q))) < 1e-7


def jeinsum_values(ctx, n2):
    return np.einsum("...ij,...ijJ->...J", ctx.ginv.value, n2.value)


def test_parallel_torus_forms():
    man = flat_torus(3)
    ff = FormField.constant(man, 1, [1.0, 0.0, 0.0], label="dx1")
    x = man.sample(np.random.default_rng(14), 5)
    ctx = JetContext(man, x, 2)
    a = ctx.field(ff)
    assert np.max(np.abs(ctx.nabla(a, 1).value)) < 1e-14
    assert np.max(np.abs(ctx.codiff(a, 1).value)) < 1e-14
    assert np.max(np.abs(ctx.d(a, 1).value)) < 1e-14


def test_field_wrappers_differentiable():
    man = bumpy_metric(3, seed=31)
    ff = random_form(man, 1, seed=32)
    x = man.sample(np.random.default_rng(15), 4)
    da = d_field(ff)
    dsa = codiff_field(ff)
    # d(d(ff)) as a field evaluates to zero
    dd = d_field(da)
    assert np.max(np.abs(dd.values(x))) < 1e-11
    # wrapper values agree with direct context computation
    ctx = JetContext(man, x, 2)
    assert np.allclose(da.values(x), ctx.d(ctx.field(ff), 1).value,
                       atol=1e-12)
    assert np.allclose(dsa.values(x), ctx.codiff(ctx.field(ff), 1).value,
                       atol=1e-12)
