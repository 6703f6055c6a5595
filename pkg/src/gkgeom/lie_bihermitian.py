"""Bi-invariant generalized Kähler structures on Lie algebras.

Left-invariant forms are alternating arrays on the Lie algebra; structure
constants are ``c[i, j, k]`` with ``[e_i, e_j] = sum_k c[i, j, k] e_k``.
Arrays may hold :class:`fractions.Fraction` objects, in which case every
identity is checked exactly.  Right-invariant fields have structure
constants ``-c``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core_tensor import Report, type_component


class JacobiError(ValueError):
    pass


class NotIntegrableError(ValueError):
    pass


@dataclass(frozen=True)
class LieAlgebraData:
    c: np.ndarray
    b: np.ndarray
    JL: np.ndarray
    JR: np.ndarray
    name: str = ""

    @property
    def dim(self) -> int:
        return self.c.shape[0]


def frac_array(a) -> np.ndarray:
    """Object array of :class:`Fraction` entries."""
    a = np.asarray(a)
    out = np.empty(a.shape, dtype=object)
    for idx in np.ndindex(a.shape):
        out[idx] = Fraction(a[idx]).limit_denominator() if isinstance(a[idx], float) else Fraction(a[idx])
    return out


def lie_bracket(c, X, Y):
    return np.einsum("i,j,ijk->k", X, Y, c) if c.dtype != object else _obj_einsum_bracket(c, X, Y)


def _obj_einsum_bracket(c, X, Y):
    n = c.shape[0]
    out = np.array([Fraction(0)] * n, dtype=object)
    for i in range(n):
        for j in range(n):
            if X[i] == 0 or Y[j] == 0:
                continue
            out = out + X[i] * Y[j] * c[i, j]
    return out


def jacobi_residual(c) -> float:
    n = c.shape[0]
    e = np.eye(n, dtype=int)
    worst = 0
    for i, j, k in itertools.combinations(range(n), 3):
        t = (lie_bracket(c, e[i], lie_bracket(c, e[j], e[k])) + lie_bracket(c, e[j], lie_bracket(c, e[k], e[i]))
             + lie_bracket(c, e[k], lie_bracket(c, e[i], e[j])))
        worst = max(worst, max(abs(v) for v in t))
    return float(worst)


def evaluate_form(omega, vectors):
    out = omega
    for v in vectors:
        out = np.tensordot(v, out, axes=(0, 0))
    return out


def ce_differential(omega, c) -> np.ndarray:
    """Chevalley-Eilenberg differential of an alternating array ``omega``.

    ``d omega(X_0..X_k) = sum_{i<j} (-1)^{i+j} omega([X_i, X_j], X_0, .. ^i .. ^j .., X_k)``.
    """
    omega = np.asarray(omega)
    k = omega.ndim
    n = c.shape[0]
    out = np.zeros((n,) * (k + 1), dtype=omega.dtype)
    if omega.dtype == object:
        out[...] = Fraction(0)
    for idx in itertools.product(range(n), repeat=k + 1):
        acc = 0
        for i, j in itertools.combinations(range(k + 1), 2):
            br = c[idx[i], idx[j]]
            rest = [idx[m] for m in range(k + 1) if m not in (i, j)]
            sub = omega[(slice(None),) + tuple(rest)] if rest else omega
            acc = acc + (-1) ** (i + j) * np.dot(br, sub)
        out[idx] = acc
    return out


def substitute(alpha, J):
    """``alpha(J., J., ...)``."""
    out = alpha
    for slot in range(alpha.ndim):
        out = np.moveaxis(np.tensordot(J, np.moveaxis(out, slot, 0), axes=(0, 0)), 0, slot)
    return out


def fundamental_form(b, J):
    """``omega(X, Y) = b(JX, Y)``."""
    return J.T @ b


def cartan_form(b, c):
    """``H(X, Y, Z) = b([X, Y], Z)``."""
    return np.einsum("ijk,kl->ijl", c, b) if c.dtype != object else _obj_cartan(b, c)


def _obj_cartan(b, c):
    n = c.shape[0]
    out = np.empty((n, n, n), dtype=object)
    for i, j, l in itertools.product(range(n), repeat=3):
        out[i, j, l] = sum((c[i, j, k] * b[k, l] for k in range(n)), Fraction(0))
    return out


def dc_substituted(b, J, c):
    """``A(X, Y, Z) = d omega_J (JX, JY, JZ)``."""
    return substitute(ce_differential(fundamental_form(b, J), c), J)


def dc_dolbeault(b, J, c):
    """``i (dbar - del) omega_J`` by type projection of ``d omega_J`` with respect to ``J``."""
    J = np.asarray(J, dtype=float)
    dw = np.asarray(ce_differential(fundamental_form(b, J).astype(float), np.asarray(c, dtype=float)), dtype=complex)
    return 1j * (np.asarray(type_component(dw, J, 1, 2)) - np.asarray(type_component(dw, J, 2, 1)))


def _max_abs(a) -> float:
    return float(max(abs(v) for v in np.asarray(a).ravel())) if np.asarray(a).size else 0.0


def eigenspace_closure(data: LieAlgebraData, J, c=None) -> float:
    """Largest ``-i`` component of ``[v, w]`` for ``v, w`` in the ``+i`` eigenspace of ``J``."""
    c = np.asarray(data.c if c is None else c, dtype=float)
    J = np.asarray(J, dtype=float)
    n = J.shape[0]
    P = 0.5 * (np.eye(n) - 1j * J)
    Pbar = 0.5 * (np.eye(n) + 1j * J)
    worst = 0.0
    for a in range(n):
        for bb in range(n):
            br = np.einsum("i,j,ijk->k", P[:, a], P[:, bb], c)
            worst = max(worst, float(np.max(np.abs(Pbar @ br))))
    return worst


def data_invariants(data: LieAlgebraData) -> Report:
    rep = Report("lie_data")
    c, b = data.c, data.b
    n = data.dim
    rep.add("antisymmetric", _max_abs(c + np.transpose(c, (1, 0, 2))), 1e-12)
    rep.add("jacobi", jacobi_residual(c), 1e-12)
    H = cartan_form(b, c)
    rep.add("ad_invariance", _max_abs(H + np.transpose(H, (0, 2, 1))), 1e-12)
    eye = frac_array(np.eye(n, dtype=int)) if b.dtype == object else np.eye(n)
    for tag, J in (("JL", data.JL), ("JR", data.JR)):
        rep.add(f"{tag}_square", _max_abs(J @ J + eye), 1e-12)
        rep.add(f"{tag}_orthogonal", _max_abs(J.T @ b @ J - b), 1e-12)
    return rep


# Measured relation between the substituted form used here and i(dbar - del):
# d omega(JX, JY, JZ) = DC_CROSS_CONVENTION * i(dbar - del) omega.
DC_CROSS_CONVENTION = -1


def verify_group_gk(data: LieAlgebraData, tol: float = 1e-12) -> Report:
    """Exact (or floating) check of the bi-invariant generalized Kähler identities.

    For the left structure ``A_L = d omega_L(J_L., J_L., J_L.)`` on left-invariant
    fields, and ``A_R`` likewise on right-invariant fields (constants ``-c``):
    ``A = -2A - 3H`` for ``A_L`` and ``-A_L = A_R = H``.
    """
    rep = Report(f"group_gk:{data.name}")
    inv = data_invariants(data)
    if inv["jacobi"].residual > tol:
        raise JacobiError(f"Jacobi residual {inv['jacobi'].residual:.3e}")
    rep.extend(inv)
    cl = eigenspace_closure(data, data.JL, data.c)
    cr = eigenspace_closure(data, data.JR, -np.asarray(data.c, dtype=float))
    if cl > tol or cr > tol:
        raise NotIntegrableError(f"eigenspace closure residuals {cl:.3e} (left), {cr:.3e} (right)")
    rep.add("JL_closure", cl, tol)
    rep.add("JR_closure", cr, tol)
    c, b = data.c, data.b
    H = cartan_form(b, c)
    AL = dc_substituted(b, data.JL, c)
    AR = dc_substituted(b, data.JR, -c)
    # intermediate identity: term-by-term expansion of A_L
    JL = data.JL
    JXJY = np.einsum("ai,bj,abk->ijk", JL, JL, c) if c.dtype != object else _obj_jj(c, JL)
    two_term = 2 * np.einsum("ijk,kl->ijl", JXJY, b) if c.dtype != object else 2 * _obj_contract(JXJY, b)
    cyc = two_term + np.transpose(two_term, (1, 2, 0)) + np.transpose(two_term, (2, 0, 1))
    rep.add("A_expansion", _max_abs(AL - (cyc - 3 * H)), tol, note="A = (2 b([JX, JY], Z) + c.p.) - 3H")
    rep.add("A_identity", _max_abs(AL - (-2 * AL - 3 * H)), tol, note="A = -2A - 3H")
    rep.add("left_identity", _max_abs(-AL - H), tol, note="-A_L = H")
    rep.add("right_identity", _max_abs(AR - H), tol, note="A_R = H")
    rep.add("H_closed", _max_abs(ce_differential(H, c)), tol)
    dcl = dc_dolbeault(b, data.JL, c)
    rep.add("cross_convention", float(np.max(np.abs(np.asarray(AL, dtype=float) - DC_CROSS_CONVENTION * dcl))), 1e-12,
            note="d omega(J., J., J.) = DC_CROSS_CONVENTION * i(dbar - del) omega")
    return rep


def _obj_jj(c, J):
    n = c.shape[0]
    out = np.empty((n, n, n), dtype=object)
    for i, j, k in itertools.product(range(n), repeat=3):
        out[i, j, k] = sum((J[a, i] * J[bb, j] * c[a, bb, k] for a in range(n) for bb in range(n)), Fraction(0))
    return out


def _obj_contract(t, b):
    n = b.shape[0]
    out = np.empty(t.shape, dtype=object)
    for i, j, l in itertools.product(range(n), repeat=3):
        out[i, j, l] = sum((t[i, j, k] * b[k, l] for k in range(n)), Fraction(0))
    return out


# ---------------------------------------------------------------------------
# standard algebras


def su2_u1_constants(exact: bool = True) -> np.ndarray:
    """``[e_1, e_2] = e_3`` and cyclic, ``e_4`` central."""
    c = np.zeros((4, 4, 4), dtype=int)
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        c[i, j, k] = 1
        c[j, i, k] = -1
    return frac_array(c) if exact else c.astype(float)


def su2_u1(scale=1, exact: bool = True) -> LieAlgebraData:
    """``su(2) + u(1)`` with ``b = 2 scale id`` and ``J: e_1 -> e_2, e_3 -> e_4``."""
    J = np.zeros((4, 4), dtype=int)
    J[1, 0] = 1
    J[0, 1] = -1
    J[3, 2] = 1
    J[2, 3] = -1
    b = 2 * np.eye(4, dtype=int)
    if exact:
        s = Fraction(scale)
        return LieAlgebraData(su2_u1_constants(True), frac_array(b) * s, frac_array(J), frac_array(J), "su2xu1")
    return LieAlgebraData(su2_u1_constants(False), b * float(scale), J.astype(float), J.astype(float), "su2xu1")


def abelian(dim: int = 4, J=None, exact: bool = True) -> LieAlgebraData:
    if J is None:
        J = np.zeros((dim, dim), dtype=int)
        for k in range(0, dim, 2):
            J[k + 1, k] = 1
            J[k, k + 1] = -1
    c = np.zeros((dim,) * 3, dtype=int)
    b = np.eye(dim, dtype=int)
    if exact:
        return LieAlgebraData(frac_array(c), frac_array(b), frac_array(J), frac_array(J), "abelian")
    return LieAlgebraData(c.astype(float), b.astype(float), np.asarray(J, float), np.asarray(J, float), "abelian")
