"""Generalized Kähler structures and their bi-Hermitian description.

Metrics ``g`` are symmetric component arrays, so ``g`` is also its own map
matrix ``T -> T*``.  The fundamental forms are ``omega_pm = g I_pm`` as maps,
i.e. component arrays ``I_pm^T g``.  Projectors ``P = (1 - i I)/2`` act on
vectors and ``(1 - i I^T)/2`` on covectors.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np

from .core_tensor import (
    RANK_TOL,
    EndoField,
    Field,
    FormField,
    Report,
    as_coords,
    d,
    dc,
    nijenhuis,
    numerical_rank,
    subspace_distance,
    type_component,
    type_part,
    _orth,
)
from .courant import (
    DiracFrame,
    GSection,
    TORSION_DB_SIGN,
    bracket_table,
    involutivity_residual,
    pairing_matrix,
    reduce_fiber,
    torsion_field,
)
from .gcx import bivector_type_component, eigen_projector, validate_gc


class IntegrabilityError(ValueError):
    pass


class DataInvariantError(ValueError):
    pass


@dataclass(frozen=True)
class GKInstance:
    """Bi-Hermitian data ``(g, I_+, I_-, b, H)`` on a chart.

    ``H`` is the torsion of the splitting ``s(X) = X + i_X b``; the ambient
    ``T + T*`` carries the twist ``H_E`` with ``H = H_E - db``.
    ``sampler(count, seed)`` returns named sample sets.
    """

    g: Field
    Iplus: EndoField
    Iminus: EndoField
    H: FormField | None = None
    b: FormField | None = None
    name: str = ""
    sampler: Callable | None = field(default=None, compare=False)
    deck: Callable | None = field(default=None, compare=False)
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n(self) -> int:
        return self.g.dim

    def I(self, side: int) -> EndoField:
        return self.Iplus if side > 0 else self.Iminus

    def omega(self, side: int) -> FormField:
        I = self.I(side)
        return FormField(lambda x: (I.fn(x).T @ self.g.fn(x)).astype(complex), self.n, min(I.jet_order, self.g.jet_order), degree=2)

    def bmap(self, x):
        if self.b is None:
            return jnp.zeros((self.n, self.n))
        return self.b.fn(x).T

    @property
    def twist(self) -> FormField | None:
        """Twist ``H_E`` of the ambient bracket."""
        if self.b is None:
            return self.H
        db = d(self.b)
        H = self.H
        if H is None:
            return FormField(lambda x: -TORSION_DB_SIGN * db.fn(x), self.n, db.jet_order, degree=3)
        return FormField(lambda x: H.fn(x) - TORSION_DB_SIGN * db.fn(x), self.n, db.jet_order, degree=3)

    def samples(self, count: int = 64, seed: int = 0) -> dict:
        if self.sampler is None:
            rng = np.random.default_rng(seed)
            return {"generic": rng.uniform(-1, 1, size=(count, self.n))}
        return self.sampler(count, seed)

    def all_samples(self, count: int = 64, seed: int = 0) -> np.ndarray:
        return np.vstack(list(self.samples(count, seed).values()))


@dataclass(frozen=True)
class GKPair:
    Jplus: EndoField
    Jminus: EndoField
    twist: FormField | None = None


# ---------------------------------------------------------------------------
# invariants


def data_invariants(data: GKInstance, samples, tol: float = 1e-8) -> Report:
    """Symmetry and positivity of ``g``, ``I^2 = -1``, Hermitian compatibility."""
    samples = np.atleast_2d(samples)
    rep = Report("data")
    gv = data.g.at(samples)
    n = data.n
    rep.add("g_symmetric", np.max(np.abs(gv - np.swapaxes(gv, 1, 2))), tol, len(samples))
    rep.add("g_positive", -np.min(np.linalg.eigvalsh(0.5 * (gv + np.swapaxes(gv, 1, 2)))), 0.0, len(samples))
    for side, tag in ((1, "plus"), (-1, "minus")):
        Iv = data.I(side).at(samples)
        rep.add(f"I_{tag}_square", np.max(np.abs(Iv @ Iv + np.eye(n))), tol, len(samples))
        rep.add(f"I_{tag}_hermitian", np.max(np.abs(np.swapaxes(Iv, 1, 2) @ gv @ Iv - gv)), tol, len(samples))
    return rep


# ---------------------------------------------------------------------------
# bi-Hermitian <-> generalized Kähler


def gk_matrices(gx, Ip, Im, bmap=None):
    """``(J_+, J_-)`` at a point from ``(g, I_+, I_-)`` and the map of ``b``."""
    n = gx.shape[0]
    wp = gx @ Ip
    wm = gx @ Im
    wpi = jnp.linalg.inv(wp)
    wmi = jnp.linalg.inv(wm)
    out = []
    for s in (1, -1):
        J = 0.5 * jnp.block([[Ip + s * Im, -(wpi - s * wmi)], [wp - s * wm, -(Ip.T + s * Im.T)]])
        if bmap is not None:
            z = jnp.zeros((n, n))
            E = jnp.block([[jnp.eye(n), z], [bmap, jnp.eye(n)]])
            Ei = jnp.block([[jnp.eye(n), z], [-bmap, jnp.eye(n)]])
            J = E @ J @ Ei
        out.append(J)
    return tuple(out)


def reconstruct(data: GKInstance, check_samples=None, tol: float = 1e-8) -> GKPair:
    """Generalized complex pair ``J_pm = s_+ I_+ s_+^{-1} pm s_- I_- s_-^{-1}``."""
    if check_samples is not None:
        rep = data_invariants(data, check_samples, tol)
        if not rep.passed:
            raise DataInvariantError(repr(rep))
    n = data.n

    def J(sign):
        def fn(x):
            return gk_matrices(data.g.fn(x), data.Iplus.fn(x), data.Iminus.fn(x), data.bmap(x) if data.b is not None else None)[0 if sign > 0 else 1]

        return EndoField(fn, n, min(data.g.jet_order, data.Iplus.jet_order, data.Iminus.jet_order))

    return GKPair(J(1), J(-1), data.twist)


def metric_endomorphism(pair: GKPair) -> EndoField:
    return EndoField(lambda x: -pair.Jplus.fn(x) @ pair.Jminus.fn(x), pair.Jplus.dim, pair.Jplus.jet_order)


def validate_gk(pair: GKPair, samples, tol: float = 1e-8) -> Report:
    """Commutator, positivity of ``G`` and both generalized complex sub-reports."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    rep = Report("gk")
    Jp = pair.Jplus.at(samples)
    Jm = pair.Jminus.at(samples)
    ns = len(samples)
    rep.add("commute", np.max(np.abs(Jp @ Jm - Jm @ Jp)), tol, ns, "[J_+, J_-] = 0")
    G = -Jp @ Jm
    P = pairing_matrix(pair.Jplus.dim)
    S = np.einsum("sji,jk->sik", G, P)
    S = 0.5 * (S + np.swapaxes(S, 1, 2))
    min_eig = float(np.min(np.linalg.eigvalsh(np.real(S))))
    rep.add("G_positive", -min_eig, 0.0, ns, "G positive-definite", note=f"min eigenvalue {min_eig:.6g}")
    rep.extend(validate_gc(pair.Jplus, pair.twist, samples, tol), "Jplus.")
    rep.extend(validate_gc(pair.Jminus, pair.twist, samples, tol), "Jminus.")
    return rep


def extract_matrices(Jp, Jm):
    """``(g, I_+, I_-, b map)`` at a point from a generalized Kähler pair."""
    n = Jp.shape[0] // 2
    G = -Jp @ Jm
    g = jnp.linalg.inv(G[:n, n:])
    g = 0.5 * (g + g.T)
    bm = -g @ G[:n, :n]
    Ip = Jp[:n, :n] + Jp[:n, n:] @ (bm + g)
    Im = Jp[:n, :n] + Jp[:n, n:] @ (bm - g)
    return g, Ip, Im, bm


def extract_bihermitian(pair: GKPair, check_samples=None, name: str = "extracted") -> GKInstance:
    """Inverse of :func:`reconstruct`: ``C_pm = {s(X) pm gX}`` are the eigenbundles of ``G``."""
    n = pair.Jplus.dim
    if check_samples is not None:
        G = metric_endomorphism(pair).at(np.atleast_2d(check_samples))
        P = pairing_matrix(n)
        S = np.einsum("sji,jk->sik", G, P)
        if np.min(np.linalg.eigvalsh(0.5 * (S + np.swapaxes(S, 1, 2)).real)) <= 0:
            raise DataInvariantError("G is not positive-definite")
    jo = pair.Jplus.jet_order

    def part(k):
        return lambda x: extract_matrices(pair.Jplus.fn(x), pair.Jminus.fn(x))[k]

    g = Field(part(0), n, jo)
    Ip = EndoField(part(1), n, jo)
    Im = EndoField(part(2), n, jo)
    b = FormField(lambda x: part(3)(x).T, n, jo, degree=2)
    H = torsion_field(b, pair.twist)
    return GKInstance(g, Ip, Im, H, b, name)


# ---------------------------------------------------------------------------
# integrability


def check_gk_integrability(data: GKInstance, samples, tol: float = 1e-8) -> Report:
    """Nijenhuis tensors of ``I_pm`` and the constraint ``pm d^c_pm omega_pm = H``."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    ns = len(samples)
    rep = Report("integrability")
    for side, tag in ((1, "plus"), (-1, "minus")):
        N = nijenhuis(data.I(side)).at(samples)
        rep.add(f"nijenhuis_{tag}", np.max(np.abs(N)), tol, ns, f"I_{tag} integrable")
    Hv = 0 if data.H is None else data.H.at(samples)
    for side, tag in ((1, "plus"), (-1, "minus")):
        dcw = dc(data.omega(side), data.I(side)).at(samples)
        rep.add(f"dc_{tag}", np.max(np.abs(side * dcw - Hv)), tol, ns, f"{'+' if side > 0 else '-'}d^c omega_{tag} = H")
    return rep


def require_integrable(data: GKInstance, samples, tol: float = 1e-8):
    rep = check_gk_integrability(data, samples, tol)
    if not rep.passed:
        raise IntegrabilityError(repr(rep))


# ---------------------------------------------------------------------------
# eigenbundle frames


def _t10(data: GKInstance, side: int, holomorphic: bool = True):
    """Traceable ``x -> n x k`` spanning set of ``T^{1,0}`` (or ``T^{0,1}``) of ``I_side``."""
    key = ("t10_plus" if side > 0 else "t10_minus")
    custom = data.meta.get(key)
    if custom is not None:
        return custom if holomorphic else (lambda x: jnp.conj(custom(x)))
    I = data.I(side)
    s = -1j if holomorphic else 1j
    return lambda x: 0.5 * (jnp.eye(data.n) + s * I.fn(x))


def _frame_from_matrix(fn, n: int, rank: int, twist, name: str, cols: int) -> DiracFrame:
    secs = tuple(GSection(lambda x, c=c: fn(x)[:, c], n) for c in range(cols))
    return DiracFrame(secs, rank, twist, name, fn)


def ell_matrix(data: GKInstance, side: int, conj: bool = False):
    """Traceable ``x -> 2n x k`` spanning set of ``ell_side`` (or its conjugate)."""
    V = _t10(data, side, not conj)

    def fn(x):
        X = V(x)
        return jnp.concatenate([X, (data.bmap(x) + side * data.g.fn(x)) @ X], axis=0)

    return fn


def _cols(data: GKInstance, fn) -> int:
    x0 = data.all_samples(1)[0]
    return int(np.asarray(fn(jnp.asarray(x0))).shape[1])


def ell_frames(data: GKInstance, conj: bool = False) -> tuple[DiracFrame, DiracFrame]:
    """``ell_pm = {(s pm g) X : X in T^{1,0}_pm}``."""
    out = []
    for side in (1, -1):
        fn = ell_matrix(data, side, conj)
        tag = ("ellbar" if conj else "ell") + ("_plus" if side > 0 else "_minus")
        out.append(_frame_from_matrix(fn, data.n, data.n // 2, data.twist, tag, _cols(data, fn)))
    return tuple(out)


def decomposition_report(data: GKInstance, samples, tol: float = 1e-8) -> Report:
    """Ranks, pairwise intersections and total span of the four ``ell`` frames."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    n = data.n
    rep = Report("kahldeco")
    fns = [ell_matrix(data, 1), ell_matrix(data, -1), ell_matrix(data, 1, True), ell_matrix(data, -1, True)]
    worst_rank = 0
    worst_span = 0
    worst_pair = 0
    iso = 0.0
    P = pairing_matrix(n)
    stacks = [np.asarray(jax.vmap(f)(jnp.asarray(samples))) for f in fns]
    for k in range(len(samples)):
        mats = [m[k] for m in stacks]
        ranks = [numerical_rank(m, RANK_TOL) for m in mats]
        worst_rank = max(worst_rank, max(abs(r - n // 2) for r in ranks))
        bases = [_orth(m, RANK_TOL) for m in mats]
        for i in range(4):
            iso = max(iso, float(np.max(np.abs(mats[i].T @ P @ mats[i]))))
            for j in range(i + 1, 4):
                worst_pair = max(worst_pair, (ranks[i] + ranks[j]) - numerical_rank(np.hstack([bases[i], bases[j]]), RANK_TOL))
        worst_span = max(worst_span, 2 * n - numerical_rank(np.hstack(bases), RANK_TOL))
    ns = len(samples)
    rep.add("rank_defect", worst_rank, 0.5, ns, "each ell frame has half the real dimension as rank")
    rep.add("pairwise_intersection", worst_pair, 0.5, ns, "pairwise intersections are zero")
    rep.add("span_defect", worst_span, 0.5, ns, "the four frames span the complexified fiber")
    rep.add("isotropy", iso, tol, ns, "ell frames isotropic")
    return rep


def ell_involutivity(data: GKInstance, samples) -> dict:
    lp, lm = ell_frames(data)
    lbp, lbm = ell_frames(data, conj=True)
    return {f.name: involutivity_residual(f, samples) for f in (lp, lm, lbp, lbm)}


# ---------------------------------------------------------------------------
# Poisson structures


def covector_proj(I, holomorphic=True):
    n = I.shape[0]
    return 0.5 * (jnp.eye(n) + (-1j if holomorphic else 1j) * I.T)


def sigma_map(gx, Ip, Im, side: int):
    """``sigma_side = -side g^{-1} Pbar_side Pbar_{-side} P_side`` as a map ``T* -> T``."""
    Ia, Ib = (Ip, Im) if side > 0 else (Im, Ip)
    return -side * jnp.linalg.inv(gx) @ covector_proj(Ia, False) @ covector_proj(Ib, False) @ covector_proj(Ia, True)


# Constant relating the projector formula for sigma to the normalization of the
# even Hopf example: SIGMA_EXAMPLE_SCALE * sigma_- = -x1 x2 d/dx1 ^ d/dx2 there.
SIGMA_EXAMPLE_SCALE = 1.0 / (4.0 * np.pi)


def sigma_field(data: GKInstance, side: int) -> Field:
    """Component array of ``sigma_side``."""
    return Field(lambda x: sigma_map(data.g.fn(x), data.Iplus.fn(x), data.Iminus.fn(x), side).T, data.n, data.g.jet_order)


def q_maps(gx, Ip, Im, side: int):
    """Both expressions for ``Q_side`` as maps: ``-(w_+^-1 -+ w_-^-1)/2`` and ``(I_+ -+ I_-) g^-1 / 2``."""
    q1 = -0.5 * (jnp.linalg.inv(gx @ Ip) - side * jnp.linalg.inv(gx @ Im))
    q2 = 0.5 * (Ip - side * Im) @ jnp.linalg.inv(gx)
    return q1, q2


def gk_poisson(data: GKInstance, p) -> dict:
    """``Q_pm`` and ``sigma_pm`` (component arrays) at ``p`` with consistency residuals."""
    x = jnp.asarray(as_coords(p))
    gx, Ip, Im = data.g.fn(x), data.Iplus.fn(x), data.Iminus.fn(x)
    out = {}
    for side, tag in ((1, "plus"), (-1, "minus")):
        q1, q2 = q_maps(gx, Ip, Im, side)
        sig = sigma_map(gx, Ip, Im, side)
        I = Ip if side > 0 else Im
        comm = Ip.T @ Im.T - Im.T @ Ip.T
        re_expected = 0.125 * jnp.linalg.inv(gx) @ comm
        sig_arr = sig.T
        out[f"Q_{tag}"] = np.asarray(q1.T)
        out[f"sigma_{tag}"] = np.asarray(sig_arr)
        out[f"Q_{tag}_formula_residual"] = float(jnp.max(jnp.abs(q1 - q2)))
        out[f"sigma_{tag}_real_residual"] = float(jnp.max(jnp.abs(jnp.real(sig) - re_expected)))
        out[f"sigma_{tag}_type_residual"] = float(jnp.max(jnp.abs(sig_arr - bivector_type_component(sig_arr, I, 2, 0))))
    return out


# ---------------------------------------------------------------------------
# holomorphic Courant operator


def hol_courant_operator(data: GKInstance, side: int, p) -> dict:
    """``T = 2 H^{(2,1)}`` with respect to ``I_side`` and its flatness residuals at ``p``."""
    x = as_coords(p)
    n = data.n
    I = data.I(side)
    if data.H is None:
        z3 = np.zeros((n,) * 3, dtype=complex)
        return {"T": z3, "flatness": 0.0, "closedness": 0.0, "H30": z3}
    T = type_part(data.H, I, 2, 1).scale(2.0)
    H30 = type_part(data.H, I, 3, 0)
    dT = d(T).at(x)
    Ix = I.at(x)
    flat = type_component(jnp.asarray(dT), jnp.asarray(Ix), 2, 2)
    closed = d(T + H30).at(x)
    return {
        "T": T.at(x),
        "H30": H30.at(x),
        "flatness": float(np.max(np.abs(flat))),
        "closedness": float(np.max(np.abs(closed))),
    }


# ---------------------------------------------------------------------------
# holomorphic Dirac structures A, B in the reduced algebroids


def vector_proj(I, holomorphic=True):
    n = I.shape[0]
    return 0.5 * (jnp.eye(n) + (-1j if holomorphic else 1j) * I)


def ab_matrix(data: GKInstance, side: int, which: str):
    """Traceable ``x -> 2n x k`` spanning set of ``A_side`` or ``B_side`` as ``Y + xi``.

    The isomorphism is ``X -> P_side X - side 2 g Pbar_side X`` applied to
    ``T^{0,1}`` (for ``A``) or ``T^{1,0}`` (for ``B``) of ``I_{-side}``.
    """
    V = _t10(data, -side, holomorphic=(which == "B"))

    def fn(x):
        X = V(x)
        I = data.I(side).fn(x)
        Y = vector_proj(I, True) @ X
        xi = -side * 2.0 * data.g.fn(x) @ (vector_proj(I, False) @ X)
        return jnp.concatenate([Y, xi], axis=0)

    return fn


def lift_matrix(data: GKInstance, side: int, M, x):
    """Representatives in ``T + T*``: ``Y + xi -> s(Y) - side g Y + xi``."""
    n = data.n
    Y, xi = M[:n], M[n:]
    return jnp.concatenate([Y, (data.bmap(x) - side * data.g.fn(x)) @ Y + xi], axis=0)


def ab_frames(data: GKInstance, side: int) -> tuple[DiracFrame, DiracFrame]:
    """Frames of ``A_side`` and ``B_side`` in reduced coordinates ``Y + xi``."""
    out = []
    for which in ("A", "B"):
        fn = ab_matrix(data, side, which)
        out.append(_frame_from_matrix(fn, data.n, data.n // 2, None, f"{which}_{'plus' if side > 0 else 'minus'}", _cols(data, fn)))
    return tuple(out)


def lifted_frame(data: GKInstance, side: int, which: str) -> DiracFrame:
    """``lift(A or B) + ellbar_side`` as a spanning set of rank ``2n`` in ``T + T*``."""
    fn_ab = ab_matrix(data, side, which)
    fn_d = ell_matrix(data, side, conj=True)

    def fn(x):
        return jnp.concatenate([lift_matrix(data, side, fn_ab(x), x), fn_d(x)], axis=1)

    return _frame_from_matrix(fn, data.n, data.n, data.twist, f"lift_{which}", _cols(data, fn))


def reduced_representatives(data: GKInstance, side: int, which: str, p, tol: float = RANK_TOL) -> tuple[np.ndarray, float]:
    """``A`` or ``B`` computed by Dirac reduction, written in ``Y + xi`` coordinates.

    ``A_side`` reduces ``Lbar_+`` and ``B_side`` reduces ``Lbar_-`` (side +)
    or ``L_-`` (side -), each by ``D = ellbar_side``.  Each reduced vector
    ``v`` is decomposed as ``lift(Y + xi) + d`` with ``d`` in ``D``, ``Y`` a
    ``(1,0)`` vector and ``xi`` a ``(1,0)`` covector of ``I_side``; the second
    return value is the largest residual of that decomposition.
    """
    x = jnp.asarray(as_coords(p))
    n = data.n
    pair = reconstruct(data)
    if which == "A":
        Lm = eigen_projector(pair.Jplus.fn(x), -1)
    elif side > 0:
        Lm = eigen_projector(pair.Jminus.fn(x), -1)
    else:
        Lm = eigen_projector(pair.Jminus.fn(x), 1)
    D = np.asarray(ell_matrix(data, side, conj=True)(x))
    red = reduce_fiber(np.asarray(Lm), D, rank=n // 2, tol=tol).basis
    I = np.asarray(data.I(side).fn(x))
    V = _orth(np.asarray(vector_proj(I, True)), tol)
    W = _orth(np.asarray(covector_proj(I, True)), tol)
    C = np.block([[V, np.zeros((n, W.shape[1]))], [np.zeros((n, V.shape[1])), W]])
    lift = np.asarray(lift_matrix(data, side, jnp.asarray(C), x))
    system = np.hstack([lift, _orth(D, tol)])
    coef, *_ = np.linalg.lstsq(system, red, rcond=None)
    resid = float(np.max(np.abs(system @ coef - red)))
    return C @ coef[: C.shape[1]], resid


def anchor_rank(data: GKInstance, side: int, which: str, p, tol: float = 1e-9) -> int:
    M = np.asarray(ab_matrix(data, side, which)(jnp.asarray(as_coords(p))))
    Y = M[: data.n]
    s = np.linalg.svd(Y, compute_uv=False)
    scale = np.linalg.svd(M, compute_uv=False)[0]
    return int(np.sum(s > tol * scale))


def morita_residual(data: GKInstance, samples, tol: float = 1e-8, check: bool = True) -> float:
    """Largest subspace distance among the Morita frame identities at the samples.

    ``lift(A_pm) + ellbar_pm`` must both equal ``Lbar_+``; ``lift(B_+) + ellbar_+``
    must equal ``Lbar_-`` and the conjugate of ``lift(B_-) + ellbar_-``.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if check:
        require_integrable(data, samples, tol)
    pair = reconstruct(data)
    fns = {(s, w): lifted_frame(data, s, w).matrix_fn() for s in (1, -1) for w in ("A", "B")}
    worst = 0.0
    for x in samples:
        xj = jnp.asarray(x)
        Lbp = np.asarray(eigen_projector(pair.Jplus.fn(xj), -1))
        Lbm = np.asarray(eigen_projector(pair.Jminus.fn(xj), -1))
        Ap, Am = (np.asarray(fns[(s, "A")](xj)) for s in (1, -1))
        Bp, Bm = (np.asarray(fns[(s, "B")](xj)) for s in (1, -1))
        dists = [
            subspace_distance(Ap, Lbp),
            subspace_distance(Am, Lbp),
            subspace_distance(Ap, Am),
            subspace_distance(Bp, Lbm),
            subspace_distance(Bm.conj(), Lbm),
            subspace_distance(Bp, Bm.conj()),
        ]
        worst = max(worst, max(dists))
    return worst


# ---------------------------------------------------------------------------
# Maurer-Cartan


@dataclass(frozen=True)
class TransversePair:
    """Transverse Dirac structures given by bases ``a_i`` of ``A`` and ``b_j`` of ``B``.

    ``B`` is identified with ``A*`` through ``K[l, j] = 2 <a_l, b_j>``.
    A 2-form on ``A`` is passed as a traceable ``x -> E`` with ``E[i, j] = eps(a_i, a_j)``.
    """

    A: DiracFrame
    B: DiracFrame
    twist: FormField | None = None

    @property
    def k(self) -> int:
        return len(self.A.sections)

    def K(self, x):
        P2 = jnp.asarray(2.0 * pairing_matrix(self.A.dim))
        return self.A.matrix_fn()(x).T @ P2 @ self.B.matrix_fn()(x)


def graph_matrix(pair: TransversePair, eps: Callable):
    """Traceable ``x -> [a_i + eps^#(a_i)]`` where ``2 <eps^# a, a'> = eps(a, a')``."""
    Afn = pair.A.matrix_fn()
    Bfn = pair.B.matrix_fn()

    P2 = jnp.asarray(2.0 * pairing_matrix(pair.A.dim))

    def fn(x):
        A, B = Afn(x), Bfn(x)
        Kinv = jnp.linalg.inv(A.T @ P2 @ B)
        return A + B @ (Kinv @ eps(x).T)

    return fn


def graph_frame_eps(pair: TransversePair, eps: Callable, name: str = "graph_eps") -> DiracFrame:
    return _frame_from_matrix(graph_matrix(pair, eps), pair.A.dim, pair.k, pair.twist, name, pair.k)


def graph_involutivity_residual(pair: TransversePair, eps: Callable, samples) -> float:
    """First route: least-squares membership residual of brackets of the graph of ``eps``."""
    return involutivity_residual(graph_frame_eps(pair, eps), samples, pair.twist)


def eps_of_subspace(pair: TransversePair, transform: Callable):
    """``E`` such that the graph of ``eps`` is the span of ``transform(x) @ A(x)``.

    Used to turn a known Dirac deformation of ``A`` (for instance ``e^F A``
    with ``dF = 0``) into its Maurer-Cartan element.
    """
    Afn = pair.A.matrix_fn()
    Bfn = pair.B.matrix_fn()
    k = pair.k

    P2 = jnp.asarray(2.0 * pairing_matrix(pair.A.dim))

    def fn(x):
        A, B = Afn(x), Bfn(x)
        G = transform(x) @ A
        coef = jnp.linalg.solve(jnp.concatenate([A, B], axis=1), G)
        X, Y = coef[:k], coef[k:]
        c = (Y @ jnp.linalg.inv(X)).T
        return c @ (A.T @ P2 @ B).T

    return fn


# Relative sign of the quadratic term, measured on exact deformations e^F A.
MC_SCHOUTEN_SIGN = 1.0


def pair_tables(pair: TransversePair, samples) -> tuple[np.ndarray, np.ndarray]:
    """Frames ``[A | B]`` and their bracket table at ``samples``; independent of ``eps``."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    AB = (pair.A + pair.B).with_twist(pair.twist)
    return AB.at_many(samples), bracket_table(AB, samples, pair.twist)


def mc_terms(pair: TransversePair, eps: Callable, samples, tables=None) -> list[tuple[np.ndarray, np.ndarray]]:
    """Second route: ``(d_A eps, 1/2 [eps, eps]_B)`` on all frame triples of ``A``.

    ``d_A`` is the Lie algebroid differential of ``A`` (anchor plus structure
    functions of the bracket on ``A``).  ``[eps, eps]_B`` is the Schouten
    bracket on the Lie algebroid ``B`` of the bivector ``P = C E C^T`` with
    ``C = K^-1``, evaluated back on ``a_i`` through ``K``.  ``tables`` reuses
    the output of :func:`pair_tables` for the same samples.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    k = pair.k
    n = pair.A.dim
    M, T = tables if tables is not None else pair_tables(pair, samples)
    eps_c = lambda x: eps(x).astype(complex)
    jac_eps = jax.jacfwd(eps_c)
    Kc = lambda x: pair.K(x).astype(complex)
    jac_K = jax.jacfwd(Kc)
    out = []
    for s, x in enumerate(samples):
        xj = jnp.asarray(x)
        Ms = M[s]
        anchorA, anchorB = Ms[:n, :k], Ms[:n, k:]
        f = np.linalg.solve(Ms, T[s].reshape(4 * k * k, -1).T).T.reshape(2 * k, 2 * k, 2 * k)
        fA = f[:k, :k, :k]
        fB = f[k:, k:, k:]
        E = np.asarray(eps_c(xj))
        dE = np.asarray(jac_eps(xj))
        rhoE = np.einsum("ijc,ca->aij", dE, anchorA)
        fE = np.einsum("ijc,cl->ijl", fA, E)
        dA = (rhoE - np.transpose(rhoE, (1, 0, 2)) + np.transpose(rhoE, (1, 2, 0))
              - fE + np.transpose(fE, (0, 2, 1)) - np.transpose(fE, (2, 0, 1)))
        K = np.asarray(Kc(xj))
        C = np.linalg.inv(K)
        dC = -np.einsum("ij,jkc,kl->ilc", C, np.asarray(jac_K(xj)), C)
        P = C @ E @ C.T
        dP = (np.einsum("ri,ijc,sj->rsc", C, dE, C) + np.einsum("ric,ij,sj->rsc", dC, E, C)
              + np.einsum("ri,ij,sjc->rsc", C, E, dC))
        rhoP = np.einsum("jkc,cr->rjk", dP, anchorB)
        t = np.einsum("ir,rjk->ijk", P, rhoP) + np.einsum("ir,sk,rsj->ijk", P, P, fB)
        jac = t + np.transpose(t, (1, 2, 0)) + np.transpose(t, (2, 0, 1))
        half = np.einsum("ia,jb,lc,abc->ijl", K, K, K, jac)
        out.append((dA, half))
    return out


def maurer_cartan_residual(pair: TransversePair, eps: Callable, samples, tables=None) -> float:
    """Max over samples and triples of ``|d_A eps + 1/2 [eps, eps]_B|``."""
    terms = mc_terms(pair, eps, samples, tables)
    return max(float(np.max(np.abs(dA + MC_SCHOUTEN_SIGN * half))) for dA, half in terms)
