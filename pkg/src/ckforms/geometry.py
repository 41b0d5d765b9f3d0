"""Chart-described Riemannian manifolds.

A manifold is a list of charts; each chart is a smooth metric function on an
open box of R^n.  All curvature data is obtained by jet arithmetic on the
metric: Christoffel symbols, the Riemann tensor, Ricci and scalar curvature,
and the covariant derivative of the curvature.  Geodesics and parallel
transport run on a fixed-step classical Runge-Kutta integrator for
reproducibility.

Curvature conventions used throughout:

    R_up[l, i, j, k] = (R(e_i, e_j) e_k)^l
                     = d_i Gamma^l_jk - d_j Gamma^l_ik
                       + Gamma^l_im Gamma^m_jk - Gamma^l_jm Gamma^m_ik
    R[i, j, k, l]    = g_km R_up[m, i, j, l]
    Ric[i, j]        = R_up[k, k, i, j] (trace over the first pair)

With these signs the round unit n-sphere has R[i,j,k,l] = g_ik g_jl -
g_il g_jk, Ric = (n-1) g and scalar curvature n(n-1).
"""

from dataclasses import dataclass, field

import numpy as np

from . import jets
from .errors import GeometryError, SampleError
from .jets import Jet, jeinsum, jinv


# ---------------------------------------------------------------------------
# charts and manifolds


@dataclass
class Chart:
    """One coordinate chart: a metric function over a box domain.

    metric maps a point array (or Jet) of shape (..., n) to a symmetric
    matrix of shape (..., n, n); it must be written in jet-compatible ops.
    sample_low/high bound the safe sampling sub-domain.  contains is a
    predicate on value arrays; transition maps exiting points into the
    partner chart (same metric formula for all catalog manifolds), and
    switch marks where the integrator should apply it.
    """

    metric: callable
    name: str = "chart"
    sample_low: np.ndarray = None
    sample_high: np.ndarray = None
    contains: callable = None
    transition: callable = None
    transition_target: int = 0
    switch: callable = None


class ChartManifold:
    def __init__(self, dim, charts, name="manifold", volume_orientation=1.0):
        self.dim = dim
        self.charts = list(charts)
        self.name = name
        self.volume_orientation = volume_orientation

    def chart(self, k=0):
        return self.charts[k]

    def sample(self, rng, count, chart=0):
        """Uniform points from the chart's safe box, rejection-filtered."""
        ch = self.charts[chart]
        if ch.sample_low is None:
            raise SampleError(f"chart {ch.name!r} has no sampling box")
        lo = np.broadcast_to(np.asarray(ch.sample_low, float), (self.dim,))
        hi = np.broadcast_to(np.asarray(ch.sample_high, float), (self.dim,))
        out = []
        for _ in range(1000):
            x = rng.uniform(lo, hi, size=(count, self.dim))
            if ch.contains is not None:
                x = x[np.asarray(ch.contains(x), bool)]
            out.append(x)
            if sum(len(a) for a in out) >= count:
                return np.concatenate(out)[:count]
        raise SampleError("rejection sampling failed to fill the request")

    def metric_jet(self, x, order, chart=0):
        """Metric as a jet matrix at points x of shape (..., n)."""
        x = np.asarray(x, float)
        g = self.charts[chart].metric(Jet.seed(x, order))
        if not isinstance(g, Jet):
            g = Jet.constant(np.broadcast_to(
                np.asarray(g, float), x.shape[:-1] + (self.dim, self.dim)),
                self.dim, order)
        return g


# ---------------------------------------------------------------------------
# curvature assembly (all in jets)


def christoffel_jet(g):
    """Christoffel symbols Gamma^k_ij as a jet of order one below g."""
    n = g.shape[-1]
    ginv = jinv(g).truncate(g.order - 1)
    dg = Jet.stack([g.deriv(l) for l in range(n)], axis=-3)  # (l, i, j)
    a = dg                                # d_i g_jl read as (i, j, l)
    b = dg.swapaxes(-3, -2)               # d_j g_il
    c = dg.moveaxis(-3, -1)               # d_l g_ij
    return jeinsum("kl,ijl->kij", ginv, a + b - c) * 0.5


def riemann_up_jet(gamma):
    """R_up[l,i,j,k] from Gamma jets (order drops by one)."""
    n = gamma.shape[-1]
    dgam = Jet.stack([gamma.deriv(i) for i in range(n)], axis=-4)  # (d,l,i,j)
    a = dgam.swapaxes(-4, -3)             # a[l,i,j,k] = d_i Gamma^l_jk
    b = a.swapaxes(-3, -2)                # d_j Gamma^l_ik
    gt = gamma.truncate(gamma.order - 1)
    quad = jeinsum("lim,mjk->lijk", gt, gt)
    return a - b + quad - quad.swapaxes(-3, -2)


def nabla_riemann_jet(riem, gamma):
    """Covariant derivative (nabla_m R)_{ijkl} of the lowered tensor."""
    n = gamma.shape[-1]
    dr = Jet.stack([riem.deriv(m) for m in range(n)], axis=-5)  # (m,i,j,k,l)
    gt = gamma.truncate(riem.order - 1)
    out = dr
    out = out - jeinsum("ami,ajkl->mijkl", gt, riem)
    out = out - jeinsum("amj,iakl->mijkl", gt, riem)
    out = out - jeinsum("amk,ijal->mijkl", gt, riem)
    out = out - jeinsum("aml,ijka->mijkl", gt, riem)
    return out


@dataclass
class GeometryFrame:
    """Pointwise curvature data (value arrays, batched on leading axes)."""

    point: np.ndarray
    depth: int
    g: np.ndarray
    g_inv: np.ndarray
    gamma: np.ndarray = None          # Gamma^k_ij
    dgamma: np.ndarray = None         # d_l Gamma^k_ij, axes (l, k, i, j)
    riemann: np.ndarray = None        # lowered R_ijkl
    riemann_up: np.ndarray = None     # R_up[l, i, j, k]
    ricci: np.ndarray = None
    scalar: np.ndarray = None
    nabla_riemann: np.ndarray = None  # (m, i, j, k, l)

    def orthonormal_frame(self):
        """Rows are orthonormal frame vectors in coordinate components.

        E @ g @ E.T = identity; built from the Cholesky factorization so
        it is the Gram-Schmidt frame of the coordinate basis.
        """
        L = np.linalg.cholesky(self.g)
        return np.linalg.inv(L)


def _check_positive(gval, x):
    w = np.linalg.eigvalsh(gval)
    if np.min(w) <= 1e-10:
        k = np.unravel_index(np.argmin(w[..., 0]), w[..., 0].shape)
        raise GeometryError(
            f"metric not positive definite: eigenvalues {w[k]} at {x[k]}"
            if w.ndim > 1 else f"metric not positive definite: {w} at {x}")


def metric_frame(m, x, depth=2, chart=0):
    """Curvature frame at x; depth 1 fills Gamma, 2 curvature, 3 nabla R."""
    x = np.asarray(x, float)
    g = m.metric_jet(x, depth, chart)
    _check_positive(g.value, x)
    fr = GeometryFrame(point=x, depth=depth, g=g.value,
                       g_inv=np.linalg.inv(g.value))
    gamma = christoffel_jet(g)
    fr.gamma = gamma.value
    if depth >= 2:
        n = m.dim
        dgam = np.stack([gamma.deriv(i).value for i in range(n)], axis=-4)
        fr.dgamma = dgam
        r_up = riemann_up_jet(gamma)
        fr.riemann_up = r_up.value
        riem = jeinsum("km,mijl->ijkl", g.truncate(depth - 2), r_up)
        fr.riemann = riem.value
        fr.ricci = np.einsum("...kkij->...ij", r_up.value)
        fr.scalar = np.einsum("...ij,...ij->...", fr.g_inv, fr.ricci)
        if depth >= 3:
            fr.nabla_riemann = nabla_riemann_jet(riem, gamma).value
    return fr


# ---------------------------------------------------------------------------
# geodesics and parallel transport


@dataclass
class CurveState:
    t: float
    x: np.ndarray
    v: np.ndarray
    chart: np.ndarray = None          # per-curve chart index
    transported: np.ndarray = None


@dataclass
class Curve:
    states: list
    status: str = "ok"

    def __iter__(self):
        return iter(self.states)

    def __len__(self):
        return len(self.states)

    def __getitem__(self, k):
        return self.states[k]


def gamma_values(m, x, chart=0):
    """Christoffel values without carrying full jets (fast path)."""
    g = m.metric_jet(x, 1, chart)
    ginv = np.linalg.inv(g.value)
    dg = np.stack([g.deriv(l).value for l in range(m.dim)], axis=-3)
    term = (np.moveaxis(dg, -3, -3)            # d_i g_jl as (i, j, l)
            + np.swapaxes(dg, -3, -2)
            - np.moveaxis(dg, -3, -1))
    return 0.5 * np.einsum("...kl,...ijl->...kij", ginv, term)


def _transport_rhs(gam, v, T, sig):
    """Right-hand side of the parallel-transport ODE for one (r,s)-tensor.

    sig is a string over the tensor axes, 'u' for contravariant and 'd'
    for covariant; T has shape batch + (n,)*len(sig).
    """
    bdim = T.ndim - len(sig)
    mmat = np.einsum("...kim,...i->...km", gam, v)
    out = np.zeros_like(T)
    for a, s in enumerate(sig):
        Tm = np.moveaxis(T, bdim + a, -1)
        # broadcast the connection matrix past the other tensor axes
        expand = Tm.ndim - mmat.ndim
        mb = mmat.reshape(mmat.shape[:-2] + (1,) * expand + mmat.shape[-2:])
        if s == "u":
            term = -np.einsum("...km,...m->...k", mb, Tm)
        else:
            term = np.einsum("...mk,...m->...k", mb, Tm)
        out += np.moveaxis(term, -1, bdim + a)
    return out


def _apply_jacobian(jac, T, sig):
    """Push tensor components through a coordinate change with Jacobian jac."""
    bdim = T.ndim - len(sig)
    jinv_ = np.linalg.inv(jac)
    out = T
    for a, s in enumerate(sig):
        Tm = np.moveaxis(out, bdim + a, -1)
        mat = jac if s == "u" else np.swapaxes(jinv_, -1, -2)
        expand = Tm.ndim - mat.ndim
        mb = mat.reshape(mat.shape[:-2] + (1,) * expand + mat.shape[-2:])
        term = np.einsum("...km,...m->...k", mb, Tm)
        out = np.moveaxis(term, -1, bdim + a)
    return out


def transition_jacobian(ch, x):
    """Jacobian dy/dx of the chart transition at value points x."""
    j = ch.transition(Jet.seed(x, 1))
    return np.stack([j.deriv(i).value for i in range(x.shape[-1])], axis=-1)


def geodesic_integrate(m, x0, v0, t_end, step, chart=0, tensor0=None,
                       sig=None, record_every=1):
    """Fixed-step RK4 on the geodesic ODE, optionally co-transporting a tensor.

    x0, v0 may carry a leading batch axis (many geodesics at once).  Chart
    switching via Chart.switch/transition keeps coordinates bounded; the
    per-state chart parity records which chart each curve currently uses.
    """
    x = np.atleast_2d(np.asarray(x0, float)).copy()
    v = np.atleast_2d(np.asarray(v0, float)).copy()
    squeeze = np.asarray(x0).ndim == 1
    T = None if tensor0 is None else np.asarray(tensor0, float).copy()
    if T is not None:
        # normalize to curve-batch-leading layout; extra leading axes of the
        # tensor (e.g. several vectors per curve) ride along after the batch
        if squeeze:
            T = T[None]
        elif T.shape[0] != x.shape[0]:
            T = np.broadcast_to(T, (x.shape[0],) + T.shape).copy()
    ch = m.charts[chart]
    cid = np.full(x.shape[0], chart)
    nsteps = max(1, int(round(t_end / step)))
    step = t_end / nsteps  # land on t_end exactly
    states = [_snap(0.0, x, v, cid, T, squeeze)]
    status = "ok"

    def rhs(x, v, T):
        gam = gamma_values(m, x, chart)
        a = -np.einsum("...kij,...i,...j->...k", gam, v, v)
        dT = None if T is None else _transport_rhs(gam, v, T, sig)
        return v, a, dT

    for k in range(nsteps):
        k1x, k1v, k1T = rhs(x, v, T)
        k2x, k2v, k2T = rhs(x + 0.5 * step * k1x, v + 0.5 * step * k1v,
                            None if T is None else T + 0.5 * step * k1T)
        k3x, k3v, k3T = rhs(x + 0.5 * step * k2x, v + 0.5 * step * k2v,
                            None if T is None else T + 0.5 * step * k2T)
        k4x, k4v, k4T = rhs(x + step * k3x, v + step * k3v,
                            None if T is None else T + step * k3T)
        x = x + (step / 6) * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + (step / 6) * (k1v + 2 * k2v + 2 * k3v + k4v)
        if T is not None:
            T = T + (step / 6) * (k1T + 2 * k2T + 2 * k3T + k4T)
        if ch.switch is not None:
            mask = np.asarray(ch.switch(x), bool)
            if np.any(mask):
                jac = transition_jacobian(ch, x[mask])
                x[mask] = ch.transition(x[mask])
                v[mask] = np.einsum("...km,...m->...k", jac, v[mask])
                if T is not None:
                    T[mask] = _apply_jacobian(jac, T[mask], sig)
                cid = cid.copy()
                cid[mask] = np.where(cid[mask] == chart,
                                     ch.transition_target, chart)
        elif ch.contains is not None and not np.all(ch.contains(x)):
            status = "truncated"
            break
        if (k + 1) % record_every == 0 or k == nsteps - 1:
            states.append(_snap((k + 1) * step, x, v, cid, T, squeeze))
    return Curve(states, status)


def _snap(t, x, v, cid, T, squeeze):
    if squeeze:
        return CurveState(t, x[0].copy(), v[0].copy(), cid.copy(),
                          None if T is None else T[0].copy())
    return CurveState(t, x.copy(), v.copy(), cid.copy(),
                      None if T is None else T.copy())


def parallel_transport(m, curve, tensor0, sig, chart=0):
    """Transport a tensor along a stored curve (RK4 on Hermite interpolants).

    Returns the list of transported component arrays, one per curve state.
    """
    T = np.asarray(tensor0, float).copy()
    out = [T.copy()]
    states = list(curve)
    for s0, s1 in zip(states[:-1], states[1:]):
        h = s1.t - s0.t
        xm = 0.5 * (s0.x + s1.x) + (h / 8.0) * (s0.v - s1.v)
        vm = 1.5 * (s1.x - s0.x) / h - 0.25 * (s0.v + s1.v)
        g0 = gamma_values(m, s0.x, chart)
        gm = gamma_values(m, xm, chart)
        g1 = gamma_values(m, s1.x, chart)
        k1 = _transport_rhs(g0, s0.v, T, sig)
        k2 = _transport_rhs(gm, vm, T + 0.5 * h * k1, sig)
        k3 = _transport_rhs(gm, vm, T + 0.5 * h * k2, sig)
        k4 = _transport_rhs(g1, s1.v, T + h * k3, sig)
        T = T + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(T.copy())
    return out
