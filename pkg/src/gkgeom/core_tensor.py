"""Jet-evaluated tensor fields on chart domains and pointwise subspace algebra.

Fields are immutable wrappers around JAX-traceable callables ``x -> array``
where ``x`` is a real coordinate vector.  Derivatives are taken with
forward-mode automatic differentiation, so every derivative is exact up to
rounding.  Differential forms are stored as dense alternating arrays in the
determinant convention, ``(dx ^ dy)(d_x, d_y) = 1``.

Linear maps between ``T`` and ``T*`` appear in two guises.  A 2-form or
bivector has a component array ``w[a, b]``; the associated bundle map
``X -> i_X w`` acts on column vectors as the matrix ``w.T``.  The helpers
:func:`form_to_map` and :func:`map_to_form` convert between the two.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import jax
import jax.numpy as jnp
import numpy as np
from scipy.linalg import null_space, orth, subspace_angles

jax.config.update("jax_enable_x64", True)

RANK_TOL = 1e-9


class ChartDomainError(ValueError):
    """A point lies outside the declared domain of its chart."""


class RankAmbiguityError(ValueError):
    """A singular value falls inside the ambiguity band around the rank tolerance."""


class JetOrderError(ValueError):
    """A field was differentiated beyond its declared jet order."""


@dataclass(frozen=True)
class Chart:
    name: str
    dim: int
    domain: Callable[[np.ndarray], bool] | None = None
    coord_names: tuple[str, ...] = ()

    def contains(self, coords) -> bool:
        coords = np.asarray(coords, dtype=float)
        if coords.shape != (self.dim,):
            return False
        return True if self.domain is None else bool(self.domain(coords))


@dataclass(frozen=True)
class Point:
    chart_id: str
    coords: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(float(c) for c in self.coords))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.coords)


def as_coords(p, chart: Chart | None = None) -> np.ndarray:
    """Coordinates of ``p`` (a :class:`Point` or array), checked against ``chart``."""
    x = p.array if isinstance(p, Point) else np.asarray(p, dtype=float)
    if chart is not None and not chart.contains(x):
        raise ChartDomainError(f"point {tuple(x)} is outside chart {chart.name!r}")
    return x


# ---------------------------------------------------------------------------
# fields


@dataclass(frozen=True)
class Field:
    """A tensor-valued map on a chart, evaluable to arbitrary jet order.

    Parameters
    ----------
    fn : callable
        Traceable map from a coordinate vector of length ``dim`` to an array.
    dim : int
        Chart dimension.
    jet_order : int
        Number of derivatives the field promises to support.  Every
        derivative taken through :meth:`grad` lowers it by one.
    chart : Chart, optional
        Domain used to validate evaluation points.
    """

    fn: Callable
    dim: int
    jet_order: int = 8
    chart: Chart | None = field(default=None, compare=False)

    def __call__(self, x):
        return self.fn(x)

    def _derived(self, fn, **kw):
        kw.setdefault("jet_order", self.jet_order)
        return type(self)(fn=fn, dim=self.dim, chart=self.chart, **kw)

    def grad(self) -> "Field":
        """Field of first derivatives; the derivative index is last."""
        if self.jet_order < 1:
            raise JetOrderError("jet order exhausted")
        return Field(jax.jacfwd(self.fn), self.dim, self.jet_order - 1, self.chart)

    def at(self, points) -> np.ndarray:
        """Evaluate at one point or a stack of points (leading axis)."""
        pts = points
        if isinstance(points, Point):
            pts = points.array
        elif isinstance(points, (list, tuple)) and points and isinstance(points[0], Point):
            pts = np.stack([q.array for q in points])
        pts = np.asarray(pts, dtype=float)
        if self.chart is not None:
            for q in np.atleast_2d(pts):
                as_coords(q, self.chart)
        if pts.ndim == 1:
            return np.asarray(self.fn(jnp.asarray(pts)))
        return np.asarray(jax.vmap(self.fn)(jnp.asarray(pts)))


@dataclass(frozen=True)
class ScalarField(Field):
    pass


@dataclass(frozen=True)
class VectorField(Field):
    pass


@dataclass(frozen=True)
class EndoField(Field):
    """Pointwise ``m x m`` matrix acting on column vectors of some bundle."""

    def compose(self, other: "EndoField") -> "EndoField":
        return EndoField(lambda x: self.fn(x) @ other.fn(x), self.dim, min(self.jet_order, other.jet_order), self.chart)


@dataclass(frozen=True)
class FormField(Field):
    """A differential form of fixed degree, stored as a dense alternating array."""

    degree: int = 0

    def _derived(self, fn, **kw):
        kw.setdefault("degree", self.degree)
        return super()._derived(fn, **kw)

    @classmethod
    def from_components(cls, degree: int, fn: Callable, dim: int, **kw) -> "FormField":
        """Build a form from its components on strictly increasing multi-indices.

        ``fn`` returns a ``(dim,)*degree`` array; only entries with strictly
        increasing indices are read, so either an upper-triangular or a full
        alternating array may be supplied.
        """
        if degree > dim:
            raise ValueError("form degree exceeds chart dimension")
        mask = jnp.asarray(increasing_mask(dim, degree))
        c = math.factorial(degree)
        return cls(fn=lambda x: c * alt(mask * fn(x)), dim=dim, degree=degree, **kw)

    def __add__(self, other: "FormField") -> "FormField":
        _check_same(self, other)
        return self._derived(lambda x: self.fn(x) + other.fn(x))

    def __sub__(self, other: "FormField") -> "FormField":
        _check_same(self, other)
        return self._derived(lambda x: self.fn(x) - other.fn(x))

    def __neg__(self) -> "FormField":
        return self._derived(lambda x: -self.fn(x))

    def scale(self, c) -> "FormField":
        """Multiply by a constant or by a scalar field."""
        if callable(c):
            return self._derived(lambda x: c(x) * self.fn(x))
        return self._derived(lambda x: c * self.fn(x))

    def conj(self) -> "FormField":
        return self._derived(lambda x: jnp.conj(self.fn(x)))


def increasing_mask(dim: int, degree: int) -> np.ndarray:
    m = np.zeros((dim,) * degree)
    for idx in itertools.combinations(range(dim), degree):
        m[idx] = 1.0
    return m


def _check_same(a: FormField, b: FormField):
    if a.degree != b.degree or a.dim != b.dim:
        raise ValueError("forms of different degree or dimension")


def zero_form(degree: int, dim: int) -> FormField:
    return FormField(lambda x: jnp.zeros((dim,) * degree, dtype=complex), dim, degree=degree)


def constant_form(arr) -> FormField:
    arr = jnp.asarray(arr, dtype=complex)
    dim = arr.shape[0] if arr.ndim else 0
    return FormField(lambda x: arr + 0 * x[0], dim, degree=arr.ndim)


# ---------------------------------------------------------------------------
# pointwise multilinear algebra


def _perm_sign(perm) -> int:
    perm = list(perm)
    sign = 1
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign


def alt(t):
    """Antisymmetrize over all axes (projection onto alternating tensors)."""
    k = t.ndim
    if k < 2:
        return t
    acc = 0
    for perm in itertools.permutations(range(k)):
        acc = acc + _perm_sign(perm) * jnp.transpose(t, perm)
    return acc / math.factorial(k)


def wedge(a, b):
    """Wedge product of alternating arrays in the determinant convention."""
    k, l = a.ndim, b.ndim
    if k == 0 or l == 0:
        return a * b
    c = math.factorial(k + l) / (math.factorial(k) * math.factorial(l))
    return c * alt(jnp.tensordot(a, b, axes=0))


def interior(v, a):
    """``i_v a``: contract the vector ``v`` into the first slot of ``a``."""
    return jnp.tensordot(v, a, axes=(0, 0))


def form_to_map(w):
    """Bundle map ``X -> i_X w`` of a 2-form (or ``xi -> w(xi, .)`` of a bivector)."""
    return jnp.swapaxes(w, -1, -2)


def map_to_form(m):
    return jnp.swapaxes(m, -1, -2)


def evaluate(a, *vectors):
    """Evaluate a k-covector on k vectors."""
    out = a
    for v in vectors:
        out = interior(v, out)
    return out


# ---------------------------------------------------------------------------
# exterior calculus


def d(omega: FormField) -> FormField:
    """Exterior derivative as a new form field (exact, via forward-mode AD)."""
    k = omega.degree
    if k >= omega.dim:
        raise ValueError("exterior derivative of a top-degree form is not supported")
    if omega.jet_order < 1:
        raise JetOrderError("jet order of the form is insufficient")
    jac = jax.jacfwd(omega.fn)

    def fn(x):
        grad = jnp.moveaxis(jac(x), -1, 0)
        return (k + 1) * alt(grad)

    return FormField(fn, omega.dim, omega.jet_order - 1, omega.chart, degree=k + 1)


def ext_deriv(omega: FormField, p) -> np.ndarray:
    """Value of ``d omega`` at ``p`` as a dense alternating array."""
    return d(omega).at(as_coords(p, omega.chart))


def pullback(omega: FormField, phi: Callable, dim: int | None = None) -> FormField:
    """Pull ``omega`` back along the coordinate map ``phi``."""
    dim = omega.dim if dim is None else dim
    jac = jax.jacfwd(phi)

    def fn(x):
        a = omega.fn(phi(x))
        dphi = jac(x).astype(a.dtype) if jnp.iscomplexobj(a) else jac(x)
        for _ in range(omega.degree):
            a = jnp.tensordot(a, dphi, axes=(0, 0))
        return a

    return FormField(fn, dim, omega.jet_order, None, degree=omega.degree)


# ---------------------------------------------------------------------------
# complex types


def covector_projector(I, holomorphic: bool = True):
    """Projector ``(1 - i I*)/2`` onto (1,0)-covectors (or its conjugate)."""
    n = I.shape[0]
    s = -1j if holomorphic else 1j
    return 0.5 * (jnp.eye(n) + s * I.T)


def vector_projector(I, holomorphic: bool = True):
    """Projector ``(1 - i I)/2`` onto (1,0)-vectors (or its conjugate)."""
    n = I.shape[0]
    s = -1j if holomorphic else 1j
    return 0.5 * (jnp.eye(n) + s * I)


def _apply_slot(a, P, slot):
    moved = jnp.moveaxis(a, slot, 0)
    out = jnp.tensordot(P, moved, axes=(1, 0))
    return jnp.moveaxis(out, 0, slot)


def type_component(alpha, I, p: int, q: int):
    """The (p, q) part of a k-covector with respect to the complex structure ``I``.

    Per-slot projectors onto (1,0) and (0,1) covectors are distributed over
    all choices of ``p`` slots; since the two projectors sum to the identity
    the components over ``p + q = k`` add back up to ``alpha``.
    """
    k = alpha.ndim
    if p + q != k or p < 0 or q < 0:
        raise ValueError(f"type ({p},{q}) does not match degree {k}")
    P = covector_projector(I, True)
    Pb = covector_projector(I, False)
    acc = jnp.zeros_like(alpha, dtype=complex)
    for S in itertools.combinations(range(k), p):
        t = alpha.astype(complex)
        for slot in range(k):
            t = _apply_slot(t, P if slot in S else Pb, slot)
        acc = acc + t
    return acc


def type_project(alpha, I, p: int, q: int, tol: float = 1e-8) -> np.ndarray:
    """Checked pointwise (p, q) projection of a k-covector."""
    I = np.asarray(I)
    n = I.shape[0]
    if np.max(np.abs(I @ I + np.eye(n))) > tol:
        raise ValueError("I does not square to -1 at this point")
    return np.asarray(type_component(jnp.asarray(alpha), jnp.asarray(I), p, q))


def type_part(omega: FormField, I: EndoField, p: int, q: int) -> FormField:
    return FormField(lambda x: type_component(omega.fn(x), I.fn(x), p, q), omega.dim,
                     min(omega.jet_order, I.jet_order), omega.chart, degree=omega.degree)


def dc(omega: FormField, I: EndoField) -> FormField:
    """``d^c = i(dbar - del)`` with respect to ``I``.

    Each (p, q) piece of ``omega`` is differentiated and split into its
    (p+1, q) and (p, q+1) parts; for integrable ``I`` these are the
    ``del`` and ``dbar`` derivatives.
    """
    k = omega.degree
    pieces = [(p, k - p, d(type_part(omega, I, p, k - p))) for p in range(k + 1)]

    def fn(x):
        Ix = I.fn(x)
        out = 0
        for p, q, dp in pieces:
            val = dp.fn(x)
            out = out + 1j * (type_component(val, Ix, p, q + 1) - type_component(val, Ix, p + 1, q))
        return out

    return FormField(fn, omega.dim, omega.jet_order - 1, omega.chart, degree=k + 1)


def dc_at(omega: FormField, I: EndoField, p) -> np.ndarray:
    return dc(omega, I).at(as_coords(p, omega.chart))


def dbar(omega: FormField, I: EndoField) -> FormField:
    """Anti-holomorphic derivative, summed over the type pieces of ``omega``."""
    k = omega.degree
    pieces = [(p, k - p, d(type_part(omega, I, p, k - p))) for p in range(k + 1)]

    def fn(x):
        Ix = I.fn(x)
        return sum(type_component(dp.fn(x), Ix, p, q + 1) for p, q, dp in pieces)

    return FormField(fn, omega.dim, omega.jet_order - 1, omega.chart, degree=k + 1)


def nijenhuis(I: EndoField) -> Field:
    """Nijenhuis tensor ``N[k, i, j]`` of an almost complex structure field."""
    jac = jax.jacfwd(I.fn)

    def fn(x):
        A = I.fn(x)
        dA = jac(x)  # dA[k, j, l] = d_l A^k_j
        t1 = jnp.einsum("li,klj->kij", A, dA)
        t2 = jnp.einsum("kl,lji->kij", A, dA)
        n = t1 - jnp.swapaxes(t1, 1, 2) - (t2 - jnp.swapaxes(t2, 1, 2))
        return n

    return Field(fn, I.dim, I.jet_order - 1, I.chart)


# ---------------------------------------------------------------------------
# complex coordinates on R^{2m}


def complex_coframe(m: int):
    """Real-coordinate components of ``dz_j`` and ``dzbar_j`` on ``C^m = R^{2m}``.

    Coordinates are ordered ``(u_1, v_1, ..., u_m, v_m)`` with ``z_j = u_j + i v_j``.
    """
    dz = np.zeros((m, 2 * m), dtype=complex)
    for j in range(m):
        dz[j, 2 * j] = 1
        dz[j, 2 * j + 1] = 1j
    return dz, dz.conj()


def complex_frame(m: int):
    """Components of ``d/dz_j`` and ``d/dzbar_j`` (dual to :func:`complex_coframe`)."""
    dz, _ = complex_coframe(m)
    vz = dz.conj() / 2
    return vz, vz.conj()


def standard_complex_structure(m: int) -> np.ndarray:
    """``I d/du = d/dv`` on each complex factor of ``C^m``."""
    I = np.zeros((2 * m, 2 * m))
    for j in range(m):
        I[2 * j + 1, 2 * j] = 1.0
        I[2 * j, 2 * j + 1] = -1.0
    return I


def structure_from_coframe(theta):
    """Real almost complex structure whose (1,0)-covectors are the rows of ``theta``.

    ``theta`` is an ``(m, 2m)`` complex array; ``I*`` acts by ``+i`` on its
    rows and by ``-i`` on their conjugates.
    """
    C = jnp.concatenate([theta, jnp.conj(theta)], axis=0).T
    m = theta.shape[0]
    D = jnp.concatenate([1j * jnp.ones(m), -1j * jnp.ones(m)])
    Istar = C @ jnp.diag(D) @ jnp.linalg.inv(C)
    return jnp.real(Istar).T


def complex_coords(x):
    """Complex coordinates ``z_j = u_j + i v_j`` of a real coordinate vector."""
    return x[0::2] + 1j * x[1::2]


# ---------------------------------------------------------------------------
# subspaces


@dataclass(frozen=True)
class PointSubspace:
    """Column span of ``basis`` inside ``C^ambient_dim`` at one point."""

    basis: np.ndarray
    tol: float = RANK_TOL

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=complex)
        if b.ndim == 1:
            b = b[:, None]
        object.__setattr__(self, "basis", b)

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def rank(self) -> int:
        return numerical_rank(self.basis, self.tol)

    def orthonormal(self) -> np.ndarray:
        if self.basis.shape[1] == 0:
            return self.basis
        r = self.rank
        u, s, _ = np.linalg.svd(self.basis, full_matrices=False)
        return u[:, :r]

    def conj(self) -> "PointSubspace":
        return PointSubspace(self.basis.conj(), self.tol)


def numerical_rank(a, tol: float = RANK_TOL, check: bool = True) -> int:
    """Rank with an ambiguity check on singular values near ``tol``.

    Singular values are measured relative to the largest one.  A value in
    ``(tol/10, 10 tol)`` raises :class:`RankAmbiguityError` when ``check``.
    """
    a = np.asarray(a)
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] == 0:
        return 0
    rel = s / s[0]
    if check:
        bad = rel[(rel > tol / 10) & (rel < tol * 10)]
        if bad.size:
            raise RankAmbiguityError(f"singular value ratio {bad[0]:.3e} is within the ambiguity band of {tol:g}")
    return int(np.sum(rel > tol))


def _orth(a, tol):
    a = np.asarray(a, dtype=complex)
    if a.shape[1] == 0:
        return a
    r = numerical_rank(a, tol)
    u, _, _ = np.linalg.svd(a, full_matrices=False)
    return u[:, :r]


def intersect(a: PointSubspace, b: PointSubspace, tol: float = RANK_TOL) -> PointSubspace:
    qa, qb = _orth(a.basis, tol), _orth(b.basis, tol)
    m = np.hstack([qa, -qb])
    if m.shape[1] == 0:
        return PointSubspace(np.zeros((a.ambient_dim, 0)), tol)
    u, s, vh = np.linalg.svd(m)
    full = np.zeros(m.shape[1])
    full[: len(s)] = s
    bad = full[(full > tol / 10) & (full < tol * 10)]
    if bad.size:
        raise RankAmbiguityError(f"intersection singular value {bad[0]:.3e} is ambiguous at tolerance {tol:g}")
    kernel = vh.conj().T[:, full <= tol]
    vecs = qa @ kernel[: qa.shape[1]]
    return PointSubspace(_orth(vecs, tol) if vecs.shape[1] else vecs, tol)


def subspace_sum(a: PointSubspace, b: PointSubspace, tol: float = RANK_TOL) -> PointSubspace:
    return PointSubspace(_orth(np.hstack([a.basis, b.basis]), tol), tol)


def quotient_project(a: PointSubspace, b: PointSubspace, complement=None, tol: float = RANK_TOL) -> PointSubspace:
    """Representatives of ``a`` modulo ``b``.

    Without ``complement`` the representatives are Hermitian-orthogonal to
    ``b``.  With ``complement`` (columns spanning a complement of ``b``),
    each vector of ``a`` is written in the basis ``[complement | b]`` and only
    the complement coordinates are kept, expressed back in the ambient space.
    """
    qb = _orth(b.basis, tol)
    if complement is None:
        reps = a.basis - qb @ (qb.conj().T @ a.basis)
        return PointSubspace(_orth(reps, tol), tol)
    comp = np.asarray(complement, dtype=complex)
    full = np.hstack([comp, b.basis])
    coeff, *_ = np.linalg.lstsq(full, a.basis, rcond=None)
    reps = comp @ coeff[: comp.shape[1]]
    return PointSubspace(_orth(reps, tol), tol)


def subspace_ops(a: PointSubspace, b: PointSubspace, op: str, tol: float = RANK_TOL) -> PointSubspace:
    if a.ambient_dim != b.ambient_dim:
        raise ValueError("ambient dimensions differ")
    ops = {"intersect": intersect, "sum": subspace_sum, "quotient-project": quotient_project}
    if op not in ops:
        raise ValueError(f"unknown subspace operation {op!r}")
    return ops[op](a, b, tol=tol)


def subspace_distance(a, b, tol: float = RANK_TOL) -> float:
    """Gap between two equal-rank spans: sine of the largest principal angle."""
    A = a.basis if isinstance(a, PointSubspace) else np.asarray(a, dtype=complex)
    B = b.basis if isinstance(b, PointSubspace) else np.asarray(b, dtype=complex)
    if A.ndim == 1:
        A = A[:, None]
    if B.ndim == 1:
        B = B[:, None]
    if A.shape[0] != B.shape[0]:
        raise ValueError("ambient dimensions differ")
    qa, qb = _orth(A, tol), _orth(B, tol)
    if qa.shape[1] != qb.shape[1]:
        raise ValueError(f"rank mismatch: {qa.shape[1]} vs {qb.shape[1]}")
    if qa.shape[1] == 0:
        return 0.0
    return float(np.sin(np.max(subspace_angles(qa, qb))))


def span_distance_to_basis(frame, basis, tol: float = RANK_TOL) -> float:
    return subspace_distance(PointSubspace(frame, tol), PointSubspace(basis, tol), tol)


def kernel(a, tol: float = RANK_TOL) -> np.ndarray:
    return null_space(np.asarray(a, dtype=complex), rcond=tol)


def orthonormal_span(a, tol: float = RANK_TOL) -> np.ndarray:
    return orth(np.asarray(a, dtype=complex), rcond=tol)


def stack_points(points: Sequence) -> np.ndarray:
    return np.stack([as_coords(p) for p in points])


# ---------------------------------------------------------------------------
# verification reports


@dataclass
class CheckResult:
    id: str
    residual: float
    tolerance: float
    samples: int = 0
    anchor: str = ""
    passed: bool | None = None
    note: str = ""

    def __post_init__(self):
        self.residual = float(self.residual)
        if self.passed is None:
            self.passed = bool(np.isfinite(self.residual) and self.residual < self.tolerance)


@dataclass
class Report:
    """Ordered list of residual checks; passes iff every check passes."""

    name: str = ""
    checks: list = field(default_factory=list)

    def add(self, id: str, residual: float, tolerance: float, samples: int = 0, anchor: str = "", passed: bool | None = None, note: str = "") -> CheckResult:
        c = CheckResult(id, residual, tolerance, samples, anchor, passed, note)
        self.checks.append(c)
        return c

    def extend(self, other: "Report", prefix: str = ""):
        for c in other.checks:
            self.checks.append(CheckResult(prefix + c.id, c.residual, c.tolerance, c.samples, c.anchor, c.passed, c.note))

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, id: str) -> CheckResult:
        for c in self.checks:
            if c.id == id:
                return c
        raise KeyError(id)

    def __repr__(self):
        lines = [f"Report({self.name!r}, passed={self.passed})"]
        lines += [f"  {'ok ' if c.passed else 'FAIL'} {c.id}: {c.residual:.3e} (tol {c.tolerance:.1e})" for c in self.checks]
        return "\n".join(lines)
