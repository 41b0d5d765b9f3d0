"""Clifford-algebra machinery on flat euclidean space.

Concrete gamma matrices act on spinors of dimension 2^(n//2); a pair of
affine twistor spinors psi(x) = a + x . b produces, for each degree k,
a form whose components are spinor inner products.  Those forms are
conformal Killing, and their exterior derivative and codifferential have
closed spinorial expressions; both facts are verified numerically here.

Conventions: generators square to -1 and are skew-adjoint for the
standard Hermitian inner product <phi, chi> = chi^H phi, so that
<X . phi, chi> = -<phi, X . chi>.  Forms take the real part of the
inner product; the imaginary part is checked to be irrelevant by the
conformal Killing verification itself.
"""

from functools import lru_cache, reduce

import numpy as np

from . import multilinear as ml
from .errors import DegreeError
from .forms import FormField
from .geometry import Chart, ChartManifold
from .jets import Jet

_S1 = np.array([[0.0, 1.0], [1.0, 0.0]], complex)
_S2 = np.array([[0.0, -1.0j], [1.0j, 0.0]], complex)
_S3 = np.array([[1.0, 0.0], [0.0, -1.0]], complex)
_I2 = np.eye(2, dtype=complex)


def _kron(mats):
    return reduce(np.kron, mats)


@lru_cache(maxsize=None)
def euclidean_space(n):
    """Flat R^n as a single identity-metric chart."""
    chart = Chart(metric=lambda c: np.eye(n), name="euclid",
                  sample_low=-2.0 * np.ones(n),
                  sample_high=2.0 * np.ones(n))
    return ChartManifold(n, [chart], name=f"r{n}")


class CliffordAlgebra:
    """Generators gamma_i with gamma_i gamma_j + gamma_j gamma_i =
    -2 delta_ij, built as i times the Hermitian tensor-product chain of
    Pauli matrices.  Spinor dimension 2^(n//2)."""

    def __init__(self, n):
        self.n = n
        m = n // 2
        self.dim = 2 ** m
        hermitian = []
        for k in range(m):
            head = [_S3] * k
            tail = [_I2] * (m - k - 1)
            hermitian.append(_kron(head + [_S1] + tail))
            hermitian.append(_kron(head + [_S2] + tail))
        if n % 2 == 1:
            hermitian.append(_kron([_S3] * m) if m
                             else np.eye(1, dtype=complex))
        self.gamma = np.stack([1j * h for h in hermitian[:n]])

    def inner(self, phi, chi):
        """Hermitian product, linear in the first slot."""
        return np.einsum("...s,...s->...", phi, np.conj(chi))

    def vector(self, X):
        """Clifford action matrix of a vector."""
        return np.einsum("i,isr->sr", np.asarray(X, complex), self.gamma)

    def form_matrices(self, k):
        """Action matrices of the lexicographic k-form basis: ordered
        gamma products over each strictly increasing index set."""
        if not 0 <= k <= self.n:
            raise DegreeError(f"no {k}-forms in dimension {self.n}")
        out = []
        for J in ml.form_indices(self.n, k):
            M = np.eye(self.dim, dtype=complex)
            for j in J:
                M = M @ self.gamma[j]
            out.append(M)
        return np.stack(out) if out else np.zeros((0, self.dim, self.dim))

    def form_action(self, omega, k):
        """Clifford action matrix of a k-form given by components."""
        mats = self.form_matrices(k)
        return np.einsum("J,Jsr->sr", np.asarray(omega, complex), mats)


class TwistorSpinorField:
    """psi(x) = a + x . b on flat R^n; an exact twistor spinor with
    Dirac image D psi = -n b."""

    def __init__(self, algebra, a, b):
        self.algebra = algebra
        self.a = np.asarray(a, complex)
        self.b = np.asarray(b, complex)

    def value(self, x):
        x = np.asarray(x, float)
        xg = np.einsum("...i,isr,r->...s", x.astype(complex),
                       self.algebra.gamma, self.b)
        return self.a + xg

    def dirac(self):
        """The (constant) Dirac image."""
        return -float(self.algebra.n) * self.b

    def twistor_residual(self, x):
        """Max deviation from the defining equation; exact algebra, so
        this is round-off only."""
        alg = self.algebra
        # the coordinate derivative in direction i is gamma_i b
        grad = np.einsum("isr,r->is", alg.gamma, self.b)
        rhs = -np.einsum("isr,r->is", alg.gamma, self.dirac()) / alg.n
        return float(np.abs(grad - rhs).max())


def spinor_form(algebra, psi1, psi2, k):
    """The degree-k form with components
    Re <(e_j1 ^ ... ^ e_jk) . psi1(x), psi2(x)> on flat R^n.

    The components are quadratic polynomials in x; their coefficients
    are precomputed so the field evaluates with real jets only.
    """
    n = algebra.n
    if not 1 <= k <= n - 1:
        raise DegreeError(f"spinor forms need 1 <= k <= n-1, got {k}")
    mats = algebra.form_matrices(k)
    a1, b1, a2, b2 = psi1.a, psi1.b, psi2.a, psi2.b
    gb1 = np.einsum("isr,r->is", algebra.gamma, b1)
    gb2 = np.einsum("isr,r->is", algebra.gamma, b2)
    # <M phi, chi> = chi^H M phi expanded in the affine parts
    c0 = np.einsum("s,Jsr,r->J", np.conj(a2), mats, a1)
    clin = (np.einsum("s,Jsr,ir->Ji", np.conj(a2), mats, gb1)
            + np.einsum("is,Jsr,r->Ji", np.conj(gb2), mats, a1))
    cquad = np.einsum("is,Jsr,lr->Jil", np.conj(gb2), mats, gb1)
    c0r, clinr, cquadr = c0.real, clin.real, cquad.real

    def fn(c, chart):
        comps = []
        for J in range(len(c0r)):
            s = Jet.constant(np.broadcast_to(
                c0r[J], c.value.shape[:-1]).copy(), n, c.order)
            for i in range(n):
                s = s + c[..., i] * clinr[J, i]
                for l in range(n):
                    s = s + c[..., i] * c[..., l] * cquadr[J, i, l]
            comps.append(s)
        return Jet.stack(comps, axis=-1)

    man = euclidean_space(n)
    return FormField.from_chart_function(man, k, fn, label=f"spinor{k}")


def _paired_bracket(algebra, mats, psi1, psi2, x):
    """Components Re[<M_J . D psi1, psi2> + eps <psi1, M_J . D psi2>]
    for a stack of basis action matrices, with the degree-dependent
    adjoint sign eps of the matrices' degree handled by the caller."""
    v1 = psi1.value(x)
    v2 = psi2.value(x)
    d1 = psi1.dirac()
    d2 = psi2.dirac()
    # <M D psi1, psi2> = psi2^H (M D psi1);  <psi1, M D psi2> is the
    # conjugate pairing with the roles swapped
    t1 = np.einsum("Jsr,r,...s->...J", mats, d1, np.conj(v2))
    t2 = np.einsum("...s,Jsr,r->...J", v1, np.conj(mats), np.conj(d2))
    return t1, t2


def appendix_identities(algebra, psi1, psi2, k, x):
    """Residuals of the closed spinorial formulas for d omega_k and
    d* omega_k against the jet-computed derivatives of the form."""
    from .forms import JetContext

    n = algebra.n
    x = np.asarray(x, float)
    man = euclidean_space(n)
    ff = spinor_form(algebra, psi1, psi2, k)
    ctx = JetContext(man, x, 1)
    a = ctx.field(ff)
    eps = (-1.0) ** (k * (k + 1) // 2)
    out = {}

    mats_up = algebra.form_matrices(k + 1)
    t1, t2 = _paired_bracket(algebra, mats_up, psi1, psi2, x)
    rhs = ((k + 1.0) / n) * (-1.0) ** (k + 1) * (t1 + eps * t2).real
    lhs = ctx.d(a, k).value
    out["d"] = float(np.abs(lhs - rhs).max())

    mats_dn = algebra.form_matrices(k - 1)
    t1, t2 = _paired_bracket(algebra, mats_dn, psi1, psi2, x)
    rhs = ((n - k + 1.0) / n) * (-1.0) ** k * (t1 + eps * t2).real
    lhs = ctx.codiff(a, k).value
    out["dstar"] = float(np.abs(lhs - rhs).max())
    return out
