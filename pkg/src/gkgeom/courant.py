"""The generalized tangent bundle ``T + T*`` on a chart.

Elements are complex column vectors of length ``2n`` with the vector part on
top.  The bracket is the non-skew Dorfman bracket

    [X+xi, Y+eta] = [X, Y] + L_X eta - i_Y d xi + i_X i_Y H

with ``i_X i_Y H = H(Y, X, .)`` because :func:`~gkgeom.core_tensor.interior`
contracts the first slot.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np

from .core_tensor import (
    RANK_TOL,
    Field,
    FormField,
    JetOrderError,
    PointSubspace,
    as_coords,
    d,
    intersect,
    interior,
    numerical_rank,
    quotient_project,
    subspace_sum,
    _orth,
)


class ChartMismatchError(ValueError):
    pass


class TransversalityError(ValueError):
    pass


class RankJumpError(ValueError):
    def __init__(self, expected, found):
        super().__init__(f"rank jump: declared {expected}, found {found}")
        self.expected = expected
        self.found = found


class NotInvolutiveError(ValueError):
    pass


def pairing_matrix(n: int) -> np.ndarray:
    """Gram matrix of ``<X+xi, Y+eta> = (xi(Y) + eta(X))/2`` on column vectors."""
    z = np.zeros((n, n))
    return 0.5 * np.block([[z, np.eye(n)], [np.eye(n), z]])


# ---------------------------------------------------------------------------
# sections


@dataclass(frozen=True)
class GSection(Field):
    """A section ``X + xi`` of ``(T + T*) (x) C``; ``fn`` returns a length-``2n`` vector."""

    @classmethod
    def from_parts(cls, X: Callable | None, xi: Callable | None, dim: int, **kw) -> "GSection":
        zero = lambda x: jnp.zeros(dim, dtype=complex)
        X = X or zero
        xi = xi or zero

        def fn(x):
            return jnp.concatenate([jnp.asarray(X(x), dtype=complex), jnp.asarray(xi(x), dtype=complex)])

        return cls(fn, dim, **kw)

    @classmethod
    def constant(cls, v, dim: int | None = None) -> "GSection":
        v = jnp.asarray(v, dtype=complex)
        dim = dim or v.shape[0] // 2
        return cls(lambda x: v + 0 * x[0], dim)

    def vector(self, x):
        return self.fn(x)[: self.dim]

    def covector(self, x):
        return self.fn(x)[self.dim:]

    def __add__(self, other: "GSection") -> "GSection":
        _same_chart(self, other)
        return GSection(lambda x: self.fn(x) + other.fn(x), self.dim, min(self.jet_order, other.jet_order), self.chart)

    def __sub__(self, other: "GSection") -> "GSection":
        _same_chart(self, other)
        return GSection(lambda x: self.fn(x) - other.fn(x), self.dim, min(self.jet_order, other.jet_order), self.chart)

    def scale(self, c) -> "GSection":
        if callable(c):
            return GSection(lambda x: c(x) * self.fn(x), self.dim, self.jet_order, self.chart)
        return GSection(lambda x: c * self.fn(x), self.dim, self.jet_order, self.chart)

    def apply(self, M: Callable) -> "GSection":
        """Act pointwise by a ``2n x 2n`` matrix field."""
        return GSection(lambda x: M(x) @ self.fn(x), self.dim, self.jet_order, self.chart)


def _same_chart(a: Field, b: Field):
    if a.dim != b.dim:
        raise ChartMismatchError("sections live on charts of different dimension")
    if a.chart is not None and b.chart is not None and a.chart.name != b.chart.name:
        raise ChartMismatchError(f"charts {a.chart.name!r} and {b.chart.name!r} differ")


def pairing_at(u, v) -> complex:
    u = jnp.asarray(u)
    v = jnp.asarray(v)
    n = u.shape[0] // 2
    return 0.5 * (u[n:] @ v[:n] + v[n:] @ u[:n])


def pairing(e1: GSection, e2: GSection, p) -> complex:
    _same_chart(e1, e2)
    x = as_coords(p, e1.chart)
    return complex(pairing_at(e1.at(x), e2.at(x)))


def pairing_field(e1: GSection, e2: GSection) -> Field:
    return Field(lambda x: pairing_at(e1.fn(x), e2.fn(x)), e1.dim, min(e1.jet_order, e2.jet_order))


# ---------------------------------------------------------------------------
# bracket


def _bracket_value(u, du, v, dv, Hx, n):
    X = u[:n]
    Y, eta = v[:n], v[n:]
    dX, dxi = du[:n], du[n:]
    dY, deta = dv[:n], dv[n:]
    lie = dY @ X - dX @ Y
    lie_eta = deta @ X + dX.T @ eta
    iy_dxi = dxi @ Y - dxi.T @ Y
    cov = lie_eta - iy_dxi
    if Hx is not None:
        cov = cov + interior(X, interior(Y, Hx))
    return jnp.concatenate([lie, cov])


def bracket(e1: GSection, e2: GSection, H: FormField | None = None) -> GSection:
    """Twisted Dorfman bracket as a new section field."""
    _same_chart(e1, e2)
    if e1.jet_order < 1 or e2.jet_order < 1:
        raise JetOrderError("bracket needs first derivatives of both sections")
    n = e1.dim
    j1 = jax.jacfwd(e1.fn, holomorphic=False)
    j2 = jax.jacfwd(e2.fn)

    def fn(x):
        Hx = None if H is None else H.fn(x)
        return _bracket_value(e1.fn(x), j1(x), e2.fn(x), j2(x), Hx, n)

    return GSection(fn, n, min(e1.jet_order, e2.jet_order) - 1, e1.chart or e2.chart)


def courant_bracket(e1: GSection, e2: GSection, H: FormField | None, p) -> np.ndarray:
    """Value of the twisted bracket ``[e1, e2]`` at ``p``."""
    return np.asarray(bracket(e1, e2, H).at(as_coords(p, e1.chart)))


def b_transform(B: FormField, e: GSection) -> GSection:
    """``X + xi -> X + xi + i_X B``."""
    n = e.dim

    def fn(x):
        u = e.fn(x)
        return u.at[n:].add(interior(u[:n], B.fn(x)))

    return GSection(fn, n, min(e.jet_order, B.jet_order), e.chart)


def b_matrix(Bx) -> jnp.ndarray:
    """``e^B`` as a ``2n x 2n`` matrix for a 2-form component array ``Bx``."""
    Bx = jnp.asarray(Bx)
    n = Bx.shape[0]
    return jnp.block([[jnp.eye(n), jnp.zeros((n, n))], [Bx.T, jnp.eye(n)]])


def beta_matrix(betax) -> jnp.ndarray:
    """``e^beta``: ``X + xi -> X + beta(xi, .) + xi`` for a bivector array."""
    betax = jnp.asarray(betax)
    n = betax.shape[0]
    return jnp.block([[jnp.eye(n), betax.T], [jnp.zeros((n, n)), jnp.eye(n)]])


def splitting_section(b: FormField, j: int) -> GSection:
    """``s(d/dx_j) = d/dx_j + i_{d/dx_j} b``."""
    n = b.dim
    ej = jnp.zeros(n).at[j].set(1.0)
    return GSection(lambda x: jnp.concatenate([ej.astype(complex), jnp.asarray(b.fn(x)[j], dtype=complex)]), n, b.jet_order, b.chart)


# Normalization of <s(X), [s(Y), s(Z)]>: for b = 0 it returns -H0/2 under the
# bracket and slot conventions above, so the torsion is -2 times the pairing.
TORSION_NORMALIZATION = -2.0
# Sign of db in the torsion of s(X) = X + i_X b, fixed by the coordinate
# oracle b = x dy^dz (see tests): torsion = H0 + TORSION_DB_SIGN * db.
TORSION_DB_SIGN = -1


def splitting_torsion(b: FormField, H0: FormField | None, p) -> np.ndarray:
    """Torsion 3-form of the splitting ``s(X) = X + i_X b`` evaluated at ``p``.

    Computed directly from ``TORSION_NORMALIZATION * <s(d_i), [s(d_j), s(d_k)]>``
    over coordinate vector fields.
    """
    n = b.dim
    x = jnp.asarray(as_coords(p, b.chart))
    secs = [splitting_section(b, j) for j in range(n)]
    vals = np.array([s.fn(x) for s in secs])
    out = np.zeros((n, n, n), dtype=complex)
    for j in range(n):
        for k in range(n):
            br = np.asarray(bracket(secs[j], secs[k], H0).fn(x))
            for i in range(n):
                out[i, j, k] = TORSION_NORMALIZATION * pairing_at(vals[i], br)
    return out


def torsion_field(b: FormField, H0: FormField | None) -> FormField:
    """Closed-form torsion ``H0 - db`` as a field (matches :func:`splitting_torsion`)."""
    db = d(b)
    if H0 is None:
        return FormField(lambda x: TORSION_DB_SIGN * db.fn(x), b.dim, db.jet_order, b.chart, degree=3)
    return FormField(lambda x: H0.fn(x) + TORSION_DB_SIGN * db.fn(x), b.dim, db.jet_order, b.chart, degree=3)


# ---------------------------------------------------------------------------
# frames


@dataclass(frozen=True)
class DiracFrame:
    """Sections spanning a pointwise isotropic subbundle.

    ``declared_rank`` may be smaller than the number of sections when the
    sections are a spanning set rather than a basis.  ``matrix`` optionally
    gives all sections at once as a traceable ``x -> 2n x k`` map.
    """

    sections: tuple[GSection, ...]
    declared_rank: int | None = None
    twist: FormField | None = None
    name: str = ""
    matrix: Callable | None = None

    def __post_init__(self):
        object.__setattr__(self, "sections", tuple(self.sections))
        if self.declared_rank is None:
            object.__setattr__(self, "declared_rank", len(self.sections))

    @property
    def dim(self) -> int:
        return self.sections[0].dim

    def matrix_fn(self):
        if self.matrix is not None:
            return self.matrix
        secs = self.sections
        return lambda x: jnp.stack([s.fn(x) for s in secs], axis=1)

    def at(self, p) -> np.ndarray:
        x = jnp.asarray(as_coords(p))
        return np.asarray(self.matrix_fn()(x))

    def at_many(self, points) -> np.ndarray:
        pts = jnp.asarray(np.atleast_2d(np.asarray(points, dtype=float)))
        return np.asarray(jax.vmap(self.matrix_fn())(pts))

    def subspace(self, p, tol: float = RANK_TOL) -> PointSubspace:
        return PointSubspace(self.at(p), tol)

    def conj(self) -> "DiracFrame":
        secs = [GSection(lambda x, s=s: jnp.conj(s.fn(x)), s.dim, s.jet_order, s.chart) for s in self.sections]
        mat = None
        if self.matrix is not None:
            m0 = self.matrix
            mat = lambda x: jnp.conj(m0(x))  # noqa: E731
        return DiracFrame(tuple(secs), self.declared_rank, self.twist, self.name + "_bar", mat)

    def with_twist(self, H: FormField | None) -> "DiracFrame":
        return DiracFrame(self.sections, self.declared_rank, H, self.name, self.matrix)

    def __add__(self, other: "DiracFrame") -> "DiracFrame":
        f1, f2 = self.matrix_fn(), other.matrix_fn()
        mat = lambda x: jnp.concatenate([f1(x), f2(x)], axis=1)  # noqa: E731
        return DiracFrame(self.sections + other.sections, self.declared_rank + other.declared_rank, self.twist,
                          f"{self.name}+{other.name}", mat)


def isotropy_residual(F: DiracFrame, samples) -> float:
    M = F.at_many(samples)
    P = pairing_matrix(F.dim)
    gram = np.einsum("sia,ij,sjb->sab", M, P, M)
    return float(np.max(np.abs(gram))) if gram.size else 0.0


def graph_frame(B: FormField, name: str = "graph") -> DiracFrame:
    """``Gamma_B = {X + i_X B}`` spanned by coordinate vector fields."""
    return DiracFrame(tuple(splitting_section(B, j) for j in range(B.dim)), B.dim, name=name)


def tangent_frame(n: int) -> DiracFrame:
    e = np.eye(2 * n)
    return DiracFrame(tuple(GSection.constant(e[:, j]) for j in range(n)), n, name="T")


def cotangent_frame(n: int) -> DiracFrame:
    e = np.eye(2 * n)
    return DiracFrame(tuple(GSection.constant(e[:, n + j]) for j in range(n)), n, name="T*")


def _pair_brackets(F: DiracFrame, H: FormField | None):
    """Traceable map ``x -> array[a, b, 2n]`` of all brackets ``[e_a, e_b]``.

    Uses one Jacobian of the frame matrix; the bracket is the same as
    :func:`courant_bracket` written for all pairs of columns at once.
    """
    n = F.dim
    mf = F.matrix_fn()
    jac = jax.jacfwd(lambda x: mf(x).astype(complex))

    def fn(x):
        M = mf(x).astype(complex)
        dM = jac(x)
        X, xi = M[:n].T, M[n:].T
        dX = jnp.transpose(dM[:n], (1, 0, 2))
        dxi = jnp.transpose(dM[n:], (1, 0, 2))
        lie = jnp.einsum("bci,ai->abc", dX, X) - jnp.einsum("aci,bi->abc", dX, X)
        cov = (jnp.einsum("bci,ai->abc", dxi, X) + jnp.einsum("aic,bi->abc", dX, xi)
               - jnp.einsum("aci,bi->abc", dxi, X) + jnp.einsum("aic,bi->abc", dxi, X))
        if H is not None:
            cov = cov + jnp.einsum("bi,aj,ijk->abk", X, X, H.fn(x))
        return jnp.concatenate([lie, cov], axis=2)

    return fn


def bracket_table(F: DiracFrame, samples, H: FormField | None = None) -> np.ndarray:
    """Brackets ``[e_a, e_b]`` at every sample, shape ``(S, k, k, 2n)``."""
    H = F.twist if H is None else H
    pts = jnp.asarray(np.atleast_2d(np.asarray(samples, dtype=float)))
    return np.asarray(jax.vmap(_pair_brackets(F, H))(pts))


def _membership_residual(M: np.ndarray, vecs: np.ndarray, rank: int | None, tol: float) -> float:
    """Max norm of the part of ``vecs`` (rows) outside the column span of ``M``."""
    u, s, _ = np.linalg.svd(M, full_matrices=False)
    r = numerical_rank(M, tol, check=False) if rank is None else rank
    Q = u[:, :r]
    res = vecs.T - Q @ (Q.conj().T @ vecs.T)
    return float(np.max(np.linalg.norm(res, axis=0))) if res.size else 0.0


def involutivity_residual(F: DiracFrame, samples, H: FormField | None = None, tol: float = RANK_TOL) -> float:
    """Largest least-squares distance of a bracket ``[e_a, e_b]`` from ``span{e_c}``.

    The span is taken with the frame's declared rank, so spanning sets are
    accepted.  Raises when the frame rank at a sample is below the declared rank.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    M = F.at_many(samples)
    T = bracket_table(F, samples, H)
    k = len(F.sections)
    worst = 0.0
    for s in range(len(samples)):
        sv = np.linalg.svd(M[s], compute_uv=False)
        if len(sv) < F.declared_rank or sv[F.declared_rank - 1] <= tol * max(sv[0], 1.0):
            raise RankJumpError(F.declared_rank, numerical_rank(M[s], tol, check=False))
        worst = max(worst, _membership_residual(M[s], T[s].reshape(k * k, -1), F.declared_rank, tol))
    return worst


def involutivity_tensor(F: DiracFrame, samples, H: FormField | None = None) -> float:
    """Max of ``|<[e_a, e_b], e_c>|``; equivalent to involutivity for maximal isotropic frames."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    M = F.at_many(samples)
    T = bracket_table(F, samples, H)
    P = pairing_matrix(F.dim)
    vals = np.einsum("sabi,ij,sjc->sabc", T, P, M)
    return float(np.max(np.abs(vals)))


def structure_functions(F: DiracFrame, p, H: FormField | None = None) -> np.ndarray:
    """Coefficients ``c[a, b, c]`` with ``[e_a, e_b] = sum_c c[a, b, c] e_c`` at ``p``."""
    x = np.asarray(as_coords(p), dtype=float)
    M = F.at(x)
    T = bracket_table(F, x[None], H)[0]
    k = M.shape[1]
    coef, *_ = np.linalg.lstsq(M, T.reshape(k * k, -1).T, rcond=None)
    return coef.T.reshape(k, k, k)


# ---------------------------------------------------------------------------
# Baer sum and reduction


def baer_sum_fiber(M1: np.ndarray, M2: np.ndarray, check_transverse: bool = True, tol: float = RANK_TOL) -> PointSubspace:
    """Fiber of the Baer sum of two Dirac subspaces given by column bases.

    Pairs ``X + xi`` in ``D1`` and ``X + eta`` in ``D2`` with equal vector
    part are combined to ``X + (eta - xi)``.
    """
    n = M1.shape[0] // 2
    if check_transverse:
        inter = intersect(PointSubspace(M1, tol), PointSubspace(M2, tol), tol)
        if inter.basis.shape[1] > 0:
            raise TransversalityError(f"D1 and D2 meet in dimension {inter.basis.shape[1]}")
    A = np.hstack([M1[:n], -M2[:n]])
    u, s, vh = np.linalg.svd(A)
    full = np.zeros(A.shape[1])
    full[: len(s)] = s
    scale = max(full.max(), 1.0)
    ker = vh.conj().T[:, full <= tol * scale]
    k1 = M1.shape[1]
    a, b = ker[:k1], ker[k1:]
    out = np.vstack([M1[:n] @ a, M2[n:] @ b - M1[n:] @ a])
    return PointSubspace(_orth(out, tol) if out.shape[1] else out, tol)


def baer_sum(D1: DiracFrame, D2: DiracFrame, p, check_transverse: bool = True, tol: float = RANK_TOL) -> PointSubspace:
    x = as_coords(p)
    return baer_sum_fiber(D1.at(x), D2.at(x), check_transverse, tol)


def graph_of_bivector(beta) -> np.ndarray:
    """Columns spanning ``Gamma_beta = {beta(xi, .) + xi}``."""
    beta = np.asarray(beta)
    n = beta.shape[0]
    return np.vstack([beta.T, np.eye(n)])


def bivector_of_graph(M: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Recover ``beta`` from a basis of a graph over ``T*`` (raises if not a graph)."""
    n = M.shape[0] // 2
    if numerical_rank(M[n:], tol, check=False) < n:
        raise ValueError("subspace is not a graph over T*")
    return (M[:n] @ np.linalg.pinv(M[n:])).T


def orthogonal_complement(M: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Basis of ``D^perp`` for the (bilinear) pairing."""
    n = M.shape[0] // 2
    if M.shape[1] == 0:
        return np.eye(2 * n, dtype=complex)
    A = M.T @ pairing_matrix(n)
    u, s, vh = np.linalg.svd(A)
    full = np.zeros(A.shape[1])
    full[: len(s)] = s
    return vh.conj().T[:, full <= tol * max(full.max(), 1.0)]


def reduce_fiber(ML: np.ndarray, MD: np.ndarray, rank: int | None = None, complement=None, tol: float = RANK_TOL) -> PointSubspace:
    """Representatives of ``(L cap D^perp + D)/D``."""
    L = PointSubspace(ML, tol)
    D = PointSubspace(MD, tol)
    Dp = PointSubspace(orthogonal_complement(D.basis, tol), tol)
    inner = subspace_sum(intersect(L, Dp, tol), D, tol)
    red = quotient_project(inner, D, complement=complement, tol=tol)
    found = red.basis.shape[1]
    if rank is not None and found != rank:
        raise RankJumpError(rank, found)
    return red


def dirac_reduce(L: DiracFrame, D: DiracFrame, p, rank: int | None = None, complement=None, tol: float = RANK_TOL) -> PointSubspace:
    x = as_coords(p)
    return reduce_fiber(L.at(x), D.at(x), rank, complement, tol)


# ---------------------------------------------------------------------------
# Lie algebroid connections


@dataclass(frozen=True)
class AlgebroidConnection:
    """Connection on a trivialized rank-``r`` module over the algebroid ``frame``.

    ``connection`` maps a point to an array ``alpha[a, i, j]``:
    ``nabla_{e_a} s_j = sum_i alpha[a, i, j] s_i``.
    """

    frame: DiracFrame
    connection: Callable
    rank: int = 1


def algebroid_curvature(conn: AlgebroidConnection, samples, H: FormField | None = None, tol: float = 1e-8) -> float:
    """Max norm of ``F(e_a, e_b)`` over samples (zero iff the module is flat)."""
    F = conn.frame
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    res = involutivity_residual(F, samples, H)
    if res > tol:
        raise NotInvolutiveError(f"frame involutivity residual {res:.3e} exceeds {tol:g}")
    n = F.dim
    jac = jax.jacfwd(conn.connection)
    worst = 0.0
    for x in samples:
        xj = jnp.asarray(x)
        al = np.asarray(conn.connection(xj), dtype=complex)
        dal = np.asarray(jac(xj), dtype=complex)  # (a, i, j, coord)
        M = F.at(x)
        anchors = M[:n]
        c = structure_functions(F, x, H)
        k = M.shape[1]
        for a in range(k):
            for b in range(k):
                ra_b = dal[b] @ anchors[:, a]
                rb_a = dal[a] @ anchors[:, b]
                curv = ra_b - rb_a + al[a] @ al[b] - al[b] @ al[a] - np.einsum("c,cij->ij", c[a, b], al)
                worst = max(worst, float(np.max(np.abs(curv))))
    return worst
