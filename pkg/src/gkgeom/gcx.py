"""Generalized complex structures on ``T + T*``.

``J`` is an :class:`~gkgeom.core_tensor.EndoField` returning ``2n x 2n``
matrices acting on column vectors ``(X, xi)``.  A 2-form ``w`` enters a block
as its map matrix ``w.T`` (see :func:`~gkgeom.core_tensor.form_to_map`).
"""
from __future__ import annotations

from dataclasses import dataclass

import jax
import jax.numpy as jnp
import numpy as np

from .core_tensor import (
    RANK_TOL,
    EndoField,
    Field,
    FormField,
    PointSubspace,
    RankAmbiguityError,
    Report,
    as_coords,
    vector_projector,
)
from .courant import DiracFrame, GSection, bracket_table, pairing_matrix


class EigenvalueClusterError(ValueError):
    pass


class NotHolomorphicPoissonError(ValueError):
    pass


@dataclass(frozen=True)
class GCStructure:
    J: EndoField
    twist: FormField | None = None
    name: str = ""

    @property
    def n(self) -> int:
        return self.J.dim


# ---------------------------------------------------------------------------
# constructors


def complex_type(I: EndoField) -> EndoField:
    """``diag(I, -I*)``."""
    return EndoField(lambda x: jax.scipy.linalg.block_diag(I.fn(x), -I.fn(x).T), I.dim, I.jet_order, I.chart)


def symplectic_matrix(omega_arr):
    """``[[0, -w^-1], [w, 0]]`` with ``w`` the map matrix of ``omega``; squares to -1."""
    w = jnp.swapaxes(omega_arr, -1, -2)
    n = w.shape[0]
    return jnp.block([[jnp.zeros((n, n)), -jnp.linalg.inv(w)], [w, jnp.zeros((n, n))]])


def symplectic_type(omega: FormField) -> EndoField:
    return EndoField(lambda x: symplectic_matrix(omega.fn(x)), omega.dim, omega.jet_order, omega.chart)


def jsigma_matrix(Ix, sigma_arr):
    """``[[I, Q], [0, -I*]]`` with ``Q`` the map of ``Im sigma``."""
    Q = jnp.imag(sigma_arr).T
    n = Ix.shape[0]
    return jnp.block([[Ix, Q], [jnp.zeros((n, n)), -Ix.T]])


def bivector_type_component(beta, I, p: int, q: int):
    """(p, q) part of a bivector array with respect to ``I`` (vector projectors per slot)."""
    P = vector_projector(I, True)
    Pb = vector_projector(I, False)
    A = P if p >= 1 else Pb
    B = P if p == 2 else Pb
    out = A @ beta @ B.T
    if p == 1:
        out = out + Pb @ beta @ P.T
    return out


def schouten_field(pi: Field) -> Field:
    """Cyclic sum ``pi^{il} d_l pi^{jk} + c.p.``; vanishes iff ``pi`` is Poisson."""
    jac = jax.jacfwd(pi.fn)

    def fn(x):
        P = pi.fn(x)
        dP = jac(x)  # dP[j, k, l] = d_l P^{jk}
        t = jnp.einsum("il,jkl->ijk", P, dP)
        return t + jnp.transpose(t, (1, 2, 0)) + jnp.transpose(t, (2, 0, 1))

    return Field(fn, pi.dim, pi.jet_order - 1, pi.chart)


def schouten_residual(pi: Field, samples) -> float:
    vals = schouten_field(pi).at(np.atleast_2d(samples))
    return float(np.max(np.abs(vals)))


def _default_samples(n: int, count: int = 8, seed: int = 0) -> np.ndarray:
    return np.random.default_rng(seed).uniform(0.5, 1.5, size=(count, n)) * np.where(np.arange(n) % 2, 1, -1)


def jsigma(I: EndoField, sigma: Field, samples=None, tol: float = 1e-8) -> EndoField:
    """``J_sigma`` for a holomorphic Poisson bivector ``sigma`` of type (2,0).

    Type and Schouten conditions are checked at ``samples``.
    """
    n = I.dim
    pts = _default_samples(n) if samples is None else np.atleast_2d(samples)
    s_vals = sigma.at(pts)
    I_vals = I.at(pts)
    bad = max(float(np.max(np.abs(s - bivector_type_component(jnp.asarray(s), jnp.asarray(Ix), 2, 0)))) for s, Ix in zip(s_vals, I_vals))
    if bad > tol:
        raise NotHolomorphicPoissonError(f"sigma is not of type (2,0): residual {bad:.3e}")
    sch = schouten_residual(sigma, pts)
    if sch > tol:
        raise NotHolomorphicPoissonError(f"Schouten residual {sch:.3e} exceeds {tol:g}")
    return EndoField(lambda x: jsigma_matrix(I.fn(x), sigma.fn(x)), n, min(I.jet_order, sigma.jet_order), I.chart)


def conjugate_by_b(J: EndoField, B: Field) -> EndoField:
    """``e^B J e^{-B}``."""
    n = J.dim

    def fn(x):
        Bm = B.fn(x).T
        z = jnp.zeros((n, n))
        E = jnp.block([[jnp.eye(n), z], [Bm, jnp.eye(n)]])
        Einv = jnp.block([[jnp.eye(n), z], [-Bm, jnp.eye(n)]])
        return E @ J.fn(x) @ Einv

    return EndoField(fn, n, J.jet_order, J.chart)


# ---------------------------------------------------------------------------
# eigenbundles


def eigen_projector(Jx, sign: int = 1):
    """Projector onto the ``sign * i`` eigenspace: ``(1 - sign i J)/2``."""
    m = Jx.shape[-1]
    return 0.5 * (jnp.eye(m) - sign * 1j * Jx)


def eigen_dirac_frame(J: EndoField, sign: int = 1, twist: FormField | None = None, name: str = "") -> DiracFrame:
    """Columns of the eigenprojector as a spanning set of rank ``n``."""
    n = J.dim
    secs = tuple(
        GSection(lambda x, c=c: eigen_projector(J.fn(x), sign)[:, c], n, J.jet_order, J.chart)
        for c in range(2 * n)
    )
    return DiracFrame(secs, n, twist, name or ("L" if sign == 1 else "Lbar"))


def eigenframe(J: EndoField, p, sign: int = 1, tol: float = 1e-8) -> PointSubspace:
    """Basis of the ``sign * i`` eigenspace of ``J`` at ``p``."""
    Jx = np.asarray(J.at(as_coords(p, J.chart)), dtype=complex)
    ev = np.linalg.eigvals(Jx)
    gap = np.min(np.abs(np.stack([ev - 1j, ev + 1j])), axis=0)
    if np.max(gap) > tol ** 0.5:
        raise EigenvalueClusterError(f"eigenvalue {ev[np.argmax(gap)]:.3e} is not separated onto +-i")
    P = np.asarray(eigen_projector(Jx, sign))
    u, s, _ = np.linalg.svd(P)
    n = Jx.shape[0] // 2
    return PointSubspace(u[:, :n])


def projector_involutivity(J: EndoField, H: FormField | None, samples, sign: int = 1) -> float:
    """Max norm of the ``-sign i`` component of brackets of ``sign i`` eigenframe columns."""
    F = eigen_dirac_frame(J, sign)
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    T = bracket_table(F, samples, H)
    Jv = J.at(samples)
    comp = np.asarray(jax.vmap(lambda Jx: eigen_projector(Jx, -sign))(jnp.asarray(Jv)))
    vals = np.einsum("sij,sabj->sabi", comp, T)
    return float(np.max(np.abs(vals)))


# ---------------------------------------------------------------------------
# validation and invariants


def square_residual(J: EndoField, samples) -> float:
    Jv = J.at(np.atleast_2d(samples))
    m = Jv.shape[-1]
    return float(np.max(np.abs(Jv @ Jv + np.eye(m))))


def orthogonality_residual(J: EndoField, samples) -> float:
    Jv = J.at(np.atleast_2d(samples))
    P = pairing_matrix(J.dim)
    return float(np.max(np.abs(np.einsum("sji,jk,skl->sil", Jv, P, Jv) - P)))


def validate_gc(J: EndoField, H: FormField | None, samples, tol: float = 1e-8) -> Report:
    """Square, orthogonality and involutivity residuals of ``J``."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    rep = Report("gc")
    ns = len(samples)
    rep.add("square", square_residual(J, samples), tol, ns, "J^2 = -1")
    rep.add("orthogonal", orthogonality_residual(J, samples), tol, ns, "<Jx, Jy> = <x, y>")
    rep.add("involutive", projector_involutivity(J, H, samples), tol, ns, "+i eigenbundle closed under the twisted bracket")
    return rep


def real_poisson(J: EndoField, p) -> np.ndarray:
    """Component array of ``Q = pi o J|_{T*}``."""
    Jx = np.asarray(J.at(as_coords(p, J.chart)))
    n = Jx.shape[0] // 2
    return np.real_if_close(Jx[:n, n:].T)


def real_poisson_field(J: EndoField) -> Field:
    n = J.dim
    return Field(lambda x: jnp.real(J.fn(x)[:n, n:].T), n, J.jet_order, J.chart)


def gc_type(J: EndoField, p, tol: float = RANK_TOL) -> int:
    """Half the corank of ``Q`` at ``p``.

    Singular values of ``Q`` are measured against the norm of ``J`` at ``p``,
    so an identically vanishing ``Q`` (up to rounding) has full corank.
    """
    return type_of_matrix(np.asarray(J.at(as_coords(p, J.chart))), tol)


def gc_types(J: EndoField, points, tol: float = RANK_TOL) -> list[int]:
    """:func:`gc_type` at a stack of points, with one batched evaluation of ``J``."""
    Js = np.asarray(J.at(np.atleast_2d(np.asarray(points, dtype=float))))
    return [type_of_matrix(Jx, tol) for Jx in Js]


def type_of_matrix(Jx, tol: float = RANK_TOL) -> int:
    """Type of a generalized complex structure given as a ``2n x 2n`` matrix."""
    Jx = np.asarray(Jx)
    n = Jx.shape[0] // 2
    s = np.linalg.svd(Jx[:n, n:], compute_uv=False) / np.linalg.norm(Jx, 2)
    bad = s[(s > tol / 10) & (s < tol * 10)]
    if bad.size:
        raise RankAmbiguityError(f"singular value ratio {bad[0]:.3e} is within the ambiguity band of {tol:g}")
    return (n - int(np.sum(s > tol))) // 2
