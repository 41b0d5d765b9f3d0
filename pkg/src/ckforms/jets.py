"""Truncated multivariate Taylor-jet arithmetic.

A jet stores the Taylor coefficients (raw partial derivative divided by the
multi-index factorial) of a smooth function at a base point, truncated at a
fixed total degree <= 3.  All arithmetic is exact truncated polynomial
algebra, so derivatives of arbitrary composite expressions come out exact to
round-off.

Jets are stored densely: ``coeffs[..., k]`` holds the coefficient of the
k-th multi-index in the canonical (degree, lexicographic) enumeration.  The
leading axes of ``coeffs`` form an arbitrary batch shape, so a single Jet
object can represent a whole array of jet values (e.g. a metric tensor at a
batch of points); elementwise operations broadcast on the batch axes exactly
like numpy.
"""

import math
from functools import lru_cache
from dataclasses import dataclass

import numpy as np

from .errors import SingularityError

MAX_ORDER = 3

# |denominator| below this raises SingularityError instead of dividing.
DIV_FLOOR = 1e-13


# ---------------------------------------------------------------------------
# multi-index tables


@lru_cache(maxsize=None)
def multi_indices(dim, order):
    """Multi-indices of total degree <= order, sorted by (degree, lex).

    The order-k enumeration is a prefix of the order-(k+1) enumeration, so
    truncation is a slice.
    """
    out = []
    for deg in range(order + 1):
        out.extend(sorted(_indices_of_degree(dim, deg)))
    return tuple(out)


def _indices_of_degree(dim, deg):
    if dim == 1:
        return [(deg,)]
    out = []
    for first in range(deg + 1):
        for rest in _indices_of_degree(dim - 1, deg - first):
            out.append((first,) + rest)
    return out


@lru_cache(maxsize=None)
def index_position(dim, order):
    return {a: i for i, a in enumerate(multi_indices(dim, order))}


def n_coeffs(dim, order):
    return len(multi_indices(dim, order))


@lru_cache(maxsize=None)
def _mul_table(dim, order):
    """Pairs (i, j) with compatible degrees and a scatter matrix to targets."""
    idx = multi_indices(dim, order)
    pos = index_position(dim, order)
    pi, pj, tgt = [], [], []
    for ia, a in enumerate(idx):
        da = sum(a)
        for ib, b in enumerate(idx):
            if da + sum(b) > order:
                continue
            pi.append(ia)
            pj.append(ib)
            tgt.append(pos[tuple(x + y for x, y in zip(a, b))])
    pi = np.array(pi)
    pj = np.array(pj)
    scatter = np.zeros((len(pi), len(idx)))
    scatter[np.arange(len(pi)), tgt] = 1.0
    return pi, pj, scatter


@lru_cache(maxsize=None)
def _deriv_table(dim, order, i):
    """Gather (src, factor) mapping order-k coeffs to order-(k-1) coeffs of d/dx_i."""
    lower = multi_indices(dim, order - 1)
    pos = index_position(dim, order)
    src = np.empty(len(lower), dtype=int)
    fac = np.empty(len(lower))
    for k, b in enumerate(lower):
        a = list(b)
        a[i] += 1
        src[k] = pos[tuple(a)]
        fac[k] = b[i] + 1
    return src, fac


def _factorial(alpha):
    out = 1
    for a in alpha:
        out *= math.factorial(a)
    return out


# ---------------------------------------------------------------------------
# the Jet class


class Jet:
    __slots__ = ("dim", "order", "coeffs")

    def __init__(self, dim, order, coeffs):
        self.dim = dim
        self.order = order
        self.coeffs = np.asarray(coeffs, dtype=float)
        if self.coeffs.shape[-1] != n_coeffs(dim, order):
            raise ValueError("coefficient axis length does not match (dim, order)")

    # -- construction ------------------------------------------------------

    @staticmethod
    def constant(value, dim, order):
        value = np.asarray(value, dtype=float)
        coeffs = np.zeros(value.shape + (n_coeffs(dim, order),))
        coeffs[..., 0] = value
        return Jet(dim, order, coeffs)

    @staticmethod
    def zeros(dim, order, shape=()):
        return Jet(dim, order, np.zeros(tuple(shape) + (n_coeffs(dim, order),)))

    @staticmethod
    def seed(x, order):
        """Coordinate jets at base point(s) x of shape (..., dim)."""
        x = np.asarray(x, dtype=float)
        dim = x.shape[-1]
        pos = index_position(dim, order)
        coeffs = np.zeros(x.shape + (n_coeffs(dim, order),))
        coeffs[..., 0] = x
        if order >= 1:
            for i in range(dim):
                e = tuple(1 if k == i else 0 for k in range(dim))
                coeffs[..., i, pos[e]] = 1.0
        return Jet(dim, order, coeffs)

    # -- views -------------------------------------------------------------

    @property
    def shape(self):
        return self.coeffs.shape[:-1]

    @property
    def value(self):
        return self.coeffs[..., 0]

    def grad(self):
        """First partials in coordinate order, shape (..., dim).

        Storage is (degree, lex) ordered, which lists the degree-1 terms in
        reversed coordinate order; undo that here.
        """
        if self.order < 1:
            raise ValueError("order-0 jet carries no derivatives")
        return self.coeffs[..., self.dim:0:-1].copy()

    def partial(self, alpha):
        """Raw partial derivative for the given multi-index."""
        pos = index_position(self.dim, self.order)
        return self.coeffs[..., pos[tuple(alpha)]] * _factorial(alpha)

    def truncate(self, order):
        if order >= self.order:
            return self
        return Jet(self.dim, order, self.coeffs[..., : n_coeffs(self.dim, order)])

    def deriv(self, i):
        """Jet of the partial derivative d/dx_i (order drops by one)."""
        if self.order < 1:
            raise ValueError("cannot differentiate an order-0 jet")
        src, fac = _deriv_table(self.dim, self.order, i)
        return Jet(self.dim, self.order - 1, self.coeffs[..., src] * fac)

    def copy(self):
        return Jet(self.dim, self.order, self.coeffs.copy())

    # -- batch-axis manipulation ------------------------------------------

    def __getitem__(self, key):
        """Index the batch axes (the coefficient axis is untouchable)."""
        if not isinstance(key, tuple):
            key = (key,)
        return Jet(self.dim, self.order, self.coeffs[key + (slice(None),)])

    def expand(self, axis):
        """Insert a length-1 batch axis (negative axes count batch positions)."""
        if axis < 0:
            axis -= 1
        return Jet(self.dim, self.order, np.expand_dims(self.coeffs, axis))

    def sum(self, axis):
        axes = (axis,) if np.isscalar(axis) else tuple(axis)
        axes = tuple(a if a >= 0 else a - 1 for a in axes)
        return Jet(self.dim, self.order, self.coeffs.sum(axis=axes))

    def moveaxis(self, src, dst):
        src = src if src >= 0 else src - 1
        dst = dst if dst >= 0 else dst - 1
        return Jet(self.dim, self.order, np.moveaxis(self.coeffs, src, dst))

    def swapaxes(self, a, b):
        a = a if a >= 0 else a - 1
        b = b if b >= 0 else b - 1
        return Jet(self.dim, self.order, np.swapaxes(self.coeffs, a, b))

    def reshape(self, shape):
        return Jet(self.dim, self.order,
                   self.coeffs.reshape(tuple(shape) + (self.coeffs.shape[-1],)))

    @staticmethod
    def stack(jets, axis=0):
        dim, order = jets[0].dim, min(j.order for j in jets)
        ax = axis if axis >= 0 else axis - 1
        return Jet(dim, order,
                   np.stack([j.truncate(order).coeffs for j in jets], axis=ax))

    # -- arithmetic --------------------------------------------------------

    def _coerce(self, other):
        """Return (a, b) as Jets with matching order."""
        if isinstance(other, Jet):
            if other.dim != self.dim:
                raise ValueError("jet dimension mismatch")
            order = min(self.order, other.order)
            return self.truncate(order), other.truncate(order)
        return self, Jet.constant(other, self.dim, self.order)

    def __add__(self, other):
        a, b = self._coerce(other)
        return Jet(a.dim, a.order, a.coeffs + b.coeffs)

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.dim, self.order, -self.coeffs)

    def __sub__(self, other):
        a, b = self._coerce(other)
        return Jet(a.dim, a.order, a.coeffs - b.coeffs)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            other = np.asarray(other, dtype=float)
            return Jet(self.dim, self.order, self.coeffs * other[..., None])
        a, b = self._coerce(other)
        pi, pj, scatter = _mul_table(a.dim, a.order)
        prod = a.coeffs[..., pi] * b.coeffs[..., pj]
        return Jet(a.dim, a.order, prod @ scatter)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return self * (1.0 / np.asarray(other, dtype=float))
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, a):
        if isinstance(a, int) or (isinstance(a, float) and a.is_integer() and a >= 0):
            a = int(a)
            if a == 0:
                return Jet.constant(np.ones(self.shape), self.dim, self.order)
            out = self
            for _ in range(a - 1):
                out = out * self
            return out
        v = self.value
        return self._series([v ** (a - k) * np.prod([a - m for m in range(k)])
                             for k in range(self.order + 1)])

    # -- analytic functions ------------------------------------------------

    def _series(self, derivs):
        """Compose with a scalar function given by its derivatives at value."""
        out = Jet.constant(np.asarray(derivs[0], dtype=float)
                           * np.ones(self.shape), self.dim, self.order)
        if self.order == 0:
            return out
        h = Jet(self.dim, self.order, self.coeffs.copy())
        h.coeffs[..., 0] = 0.0
        hp = h
        fac = 1.0
        for k in range(1, self.order + 1):
            fac *= k
            out = out + hp * (np.asarray(derivs[k], dtype=float) / fac)
            if k < self.order:
                hp = hp * h
        return out

    def reciprocal(self):
        v = self.value
        if np.any(np.abs(v) <= DIV_FLOOR):
            bad = v.flat[np.argmin(np.abs(v))] if v.ndim else v
            raise SingularityError(bad)
        return self._series([(-1.0) ** k * math.factorial(k) / v ** (k + 1)
                             for k in range(self.order + 1)])

    def sqrt(self):
        v = self.value
        d = [np.sqrt(v), 0.5 / np.sqrt(v), -0.25 * v ** -1.5, 0.375 * v ** -2.5]
        return self._series(d[: self.order + 1])

    def exp(self):
        e = np.exp(self.value)
        return self._series([e] * (self.order + 1))

    def log(self):
        v = self.value
        return self._series([np.log(v), 1.0 / v, -1.0 / v ** 2, 2.0 / v ** 3]
                            [: self.order + 1])

    def sin(self):
        s, c = np.sin(self.value), np.cos(self.value)
        return self._series([s, c, -s, -c][: self.order + 1])

    def cos(self):
        s, c = np.sin(self.value), np.cos(self.value)
        return self._series([c, -s, -c, s][: self.order + 1])


# ---------------------------------------------------------------------------
# dispatching math helpers (work on jets and plain arrays alike)


def _dispatch(name):
    def fn(x):
        if isinstance(x, Jet):
            return getattr(x, name)()
        return getattr(np, name)(x)
    fn.__name__ = name
    return fn


sin = _dispatch("sin")
cos = _dispatch("cos")
exp = _dispatch("exp")
log = _dispatch("log")
sqrt = _dispatch("sqrt")


# ---------------------------------------------------------------------------
# jet tensor contraction


def jeinsum(spec, a, b):
    """Einstein contraction of two jets over batch axes.

    spec is an einsum string over the batch axes only, e.g. 'kl,lij->kij';
    an implicit '...' prefix is prepended to every operand.  The truncated
    polynomial product is carried along through the pair table.
    """
    ins, out = spec.split("->")
    sa, sb = ins.split(",")
    order = min(a.order, b.order)
    a, b = a.truncate(order), b.truncate(order)
    pi, pj, scatter = _mul_table(a.dim, order)
    ca = a.coeffs[..., pi]
    cb = b.coeffs[..., pj]
    prod = np.einsum(f"...{sa}P,...{sb}P->...{out}P", ca, cb)
    return Jet(a.dim, order, prod @ scatter)


def jtrace(a, ax1, ax2):
    """Trace over two batch axes (linear, so done directly on coefficients)."""
    ax1 = ax1 if ax1 >= 0 else ax1 - 1
    ax2 = ax2 if ax2 >= 0 else ax2 - 1
    return Jet(a.dim, a.order, np.trace(a.coeffs, axis1=ax1, axis2=ax2))


# ---------------------------------------------------------------------------
# jet linear algebra (small matrices over the jet ring)


def const_matmul(c, j):
    """Numeric matrix times jet matrix: c (...,m,k) @ j (...,k,n)."""
    return Jet(j.dim, j.order, np.einsum("...ik,...kjc->...ijc",
                                         np.asarray(c, float), j.coeffs))


def matmul_const(j, c):
    """Jet matrix times numeric matrix."""
    return Jet(j.dim, j.order, np.einsum("...ikc,...kj->...ijc",
                                         j.coeffs, np.asarray(c, float)))


def jmatmul(a, b):
    """Jet matrix product on the two trailing batch axes."""
    k = a.shape[-1]
    out = None
    for kk in range(k):
        term = a[..., :, kk].expand(-1) * b[..., kk, :].expand(-2)
        out = term if out is None else out + term
    return out


def jinv(a):
    """Inverse of a jet matrix via the truncated Neumann series."""
    a0 = a.value
    a0inv = np.linalg.inv(a0)
    n = a.copy()
    n.coeffs[..., 0] = 0.0
    m = const_matmul(-a0inv, n)
    eye = np.broadcast_to(np.eye(a.shape[-1]), a0.shape)
    acc = Jet.constant(eye, a.dim, a.order) + m
    p = m
    for _ in range(a.order - 1):
        p = jmatmul(p, m)
        acc = acc + p
    return matmul_const(acc, a0inv)


def jdet(a):
    """Determinant of a jet matrix via det(A0) * exp(tr log(I + A0^-1 N))."""
    a0 = a.value
    d0 = np.linalg.det(a0)
    n = a.copy()
    n.coeffs[..., 0] = 0.0
    m = const_matmul(np.linalg.inv(a0), n)
    # log(I+M) truncated; M has zero value part so powers terminate
    acc = m
    p = m
    for k in range(2, a.order + 1):
        p = jmatmul(p, m)
        acc = acc + p * ((-1.0) ** (k + 1) / k)
    tr = Jet(a.dim, a.order,
             np.einsum("...iic->...c", acc.coeffs))
    return tr.exp() * d0


# ---------------------------------------------------------------------------
# embedding jets between coordinate spaces (e.g. base manifold <-> cone)


@lru_cache(maxsize=None)
def _embed_matrix(dim, order, dim2, cmap):
    """0/1 matrix sending dim-dim coefficients to dim2-dim coefficients by
    the coordinate relabeling cmap (new coordinates off cmap are inert)."""
    pos2 = index_position(dim2, order)
    M = np.zeros((n_coeffs(dim, order), n_coeffs(dim2, order)))
    for k, a in enumerate(multi_indices(dim, order)):
        b = [0] * dim2
        for i, ai in enumerate(a):
            b[cmap[i]] = ai
        M[k, pos2[tuple(b)]] = 1.0
    return M


def jet_embed(j, dim2, coord_map):
    """View a jet in dim2 >= dim coordinates: the function is constant in
    the coordinates not named by coord_map."""
    M = _embed_matrix(j.dim, j.order, dim2, tuple(coord_map))
    return Jet(dim2, j.order, j.coeffs @ M)


def jet_restrict(j, dim_small, coord_map):
    """Restrict a jet to the subspace spanned by coord_map coordinates:
    keeps partials purely in those directions, at the base point."""
    M = _embed_matrix(dim_small, j.order, j.dim, tuple(coord_map))
    return Jet(dim_small, j.order, j.coeffs @ M.T)


# ---------------------------------------------------------------------------
# evaluation entry point and finite-difference oracle


def jet_eval(f, x, order):
    """Jet of the coordinate function f at x (x shape (..., dim))."""
    return f(Jet.seed(np.asarray(x, dtype=float), order))


@dataclass
class FdEstimate:
    alpha: tuple
    derivative: float
    step: float
    scheme: int


_STENCILS = {
    2: ((-1, -0.5), (1, 0.5)),
    4: ((-2, 1 / 12), (-1, -8 / 12), (1, 8 / 12), (2, -1 / 12)),
}


def fd_oracle(f, x, alpha, h=1e-4, scheme=4):
    """Nested central-difference estimate of a raw partial derivative.

    Test-only oracle: never used in the main evaluation path.
    """
    if h <= 0:
        raise ValueError("step must be positive")
    if scheme not in _STENCILS:
        raise ValueError("scheme must be 2 or 4")
    x = np.asarray(x, dtype=float)
    alpha = tuple(alpha)
    if sum(alpha) > MAX_ORDER:
        raise ValueError("total degree exceeds supported order")

    def rec(x, alpha):
        for i, a in enumerate(alpha):
            if a > 0:
                lower = tuple(v - 1 if k == i else v for k, v in enumerate(alpha))
                tot = 0.0
                for off, w in _STENCILS[scheme]:
                    xs = x.copy()
                    xs[i] += off * h
                    tot += w * rec(xs, lower)
                return tot / h
        return float(f(x))

    return FdEstimate(alpha, rec(x, alpha), h, scheme)
