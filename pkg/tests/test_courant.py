import jax.numpy as jnp
import numpy as np
import pytest

from gkgeom.core_tensor import FormField, PointSubspace, d, ext_deriv, subspace_distance
from gkgeom.courant import (
    TORSION_DB_SIGN,
    AlgebroidConnection,
    ChartMismatchError,
    DiracFrame,
    GSection,
    NotInvolutiveError,
    RankJumpError,
    TransversalityError,
    algebroid_curvature,
    b_transform,
    baer_sum,
    baer_sum_fiber,
    bivector_of_graph,
    courant_bracket,
    cotangent_frame,
    dirac_reduce,
    graph_frame,
    graph_of_bivector,
    involutivity_residual,
    involutivity_tensor,
    isotropy_residual,
    pairing,
    pairing_matrix,
    splitting_torsion,
    tangent_frame,
    torsion_field,
)
from gkgeom.gcx import real_poisson, symplectic_type


def const(v):
    return GSection.constant(np.asarray(v, dtype=complex))


def section(fn, n):
    return GSection(lambda x: jnp.asarray(fn(x), dtype=complex), n)


def form3(fn, n=3):
    return FormField.from_components(3, fn, n)


def volume3():
    def fn(x):
        return jnp.zeros((3, 3, 3)).at[0, 1, 2].set(1.0) + 0 * x[0]

    return form3(fn)


def x_dy_dz():
    return FormField.from_components(2, lambda x: jnp.zeros((3, 3)).at[1, 2].set(x[0]), 3)


P0 = np.array([0.3, -0.7, 1.1])


def test_pairing_examples():
    p = [0.4, 0.2]
    assert pairing(const([1, 0, 1, 0]), const([1, 0, 1, 0]), p) == 1
    assert pairing(const([1, 0, 0, 0]), const([0, 0, 0, 1]), p) == 0
    assert pairing(const([1, 0, 0, 1]), const([0, 1, 1, 0]), p) == 1
    assert np.allclose(pairing_matrix(1), 0.5 * np.array([[0, 1], [1, 0]]))


def test_pairing_signature():
    ev = np.linalg.eigvalsh(pairing_matrix(3))
    assert np.sum(ev > 0) == 3 and np.sum(ev < 0) == 3


def test_pairing_chart_mismatch():
    with pytest.raises(ChartMismatchError):
        pairing(const([1, 0, 0, 0]), const([1, 0, 0, 0, 0, 0]), [0.0, 0.0])


def test_bracket_lie_part():
    e1 = const([1, 0, 0, 0])
    e2 = section(lambda x: [0, x[0], 0, 0], 2)
    assert np.allclose(courant_bracket(e1, e2, None, [0.5, 0.5]), [0, 1, 0, 0])


def test_bracket_skew_failure_example():
    e = section(lambda x: [1, 0, x[1], 0], 2)
    assert np.allclose(courant_bracket(e, e, None, [0.2, 0.9]), [0, 0, 0, 1])


def test_bracket_twist_slot_convention():
    v = courant_bracket(const([1, 0, 0, 0, 0, 0]), const([0, 1, 0, 0, 0, 0]), volume3(), P0)
    assert np.allclose(v, [0, 0, 0, 0, 0, -1])


def test_b_transform_examples():
    B = FormField.from_components(2, lambda x: jnp.zeros((2, 2)).at[0, 1].set(1.0) + 0 * x[0], 2)
    p = [0.1, 0.2]
    assert np.allclose(b_transform(B, const([1, 0, 0, 0])).fn(jnp.asarray(p)), [1, 0, 0, 1])
    assert np.allclose(b_transform(B, const([0, 0, 1, 0])).fn(jnp.asarray(p)), [0, 0, 1, 0])
    assert np.allclose(b_transform(B, const([0, 1, 0, 0])).fn(jnp.asarray(p)), [0, 1, -1, 0])


def test_splitting_torsion_trivial_cases():
    zero = FormField.from_components(2, lambda x: jnp.zeros((3, 3)) + 0 * x[0], 3)
    assert np.allclose(splitting_torsion(zero, None, P0), 0)
    closed = FormField.from_components(2, lambda x: jnp.zeros((3, 3)).at[0, 1].set(2.0) + 0 * x[0], 3)
    H0 = form3(lambda x: jnp.zeros((3, 3, 3)).at[0, 1, 2].set(jnp.sin(x[0])))
    for p in (P0, -P0):
        assert np.max(np.abs(splitting_torsion(closed, H0, p) - H0.at(p))) < 1e-12


def test_splitting_torsion_sign_regression():
    # coordinate-field oracle for b = x dy^dz, H0 = 0: the torsion is -dx^dy^dz
    t = splitting_torsion(x_dy_dz(), None, P0)
    assert np.isclose(t[0, 1, 2], -1.0)
    assert TORSION_DB_SIGN == -1
    assert np.max(np.abs(t - torsion_field(x_dy_dz(), None).at(P0))) < 1e-12


def test_involutivity_closed_graph():
    B = FormField.from_components(2, lambda x: jnp.zeros((3, 3)).at[0, 1].set(x[2] * 0 + 1.0).at[1, 2].set(x[1] ** 0 * 3.0), 3)
    pts = np.random.default_rng(0).normal(size=(4, 3))
    assert involutivity_residual(graph_frame(B), pts) < 1e-10
    assert involutivity_tensor(graph_frame(B), pts) < 1e-10
    exact = FormField.from_components(1, lambda x: jnp.stack([x[1] * x[2], jnp.sin(x[0]), x[0] ** 2]), 3)
    F = graph_frame(d(exact))
    assert involutivity_residual(F, pts) < 1e-10
    assert involutivity_tensor(F, pts) < 1e-10


def test_involutivity_detects_db():
    F = graph_frame(x_dy_dz())
    pts = np.random.default_rng(1).normal(size=(4, 3))
    dB = np.stack([ext_deriv(x_dy_dz(), p) for p in pts])
    defect = np.max(np.linalg.norm(dB, axis=-1))
    assert np.isclose(involutivity_residual(F, pts), defect, rtol=1e-10)
    assert involutivity_tensor(F, pts) > 0.1


def test_isotropy_of_standard_frames():
    pts = np.zeros((2, 2))
    assert isotropy_residual(tangent_frame(2), pts) == 0
    assert isotropy_residual(cotangent_frame(2), pts) == 0


def test_baer_same_graph_gives_tangent():
    B = FormField.from_components(2, lambda x: jnp.zeros((2, 2)).at[0, 1].set(x[0]), 2)
    G = graph_frame(B)
    out = baer_sum(G, G, [0.3, 0.4], check_transverse=False)
    assert subspace_distance(out, tangent_frame(2).at([0, 0])) < 1e-12


def test_baer_tangent_cotangent():
    out = baer_sum(tangent_frame(2), cotangent_frame(2), [0.3, 0.4])
    assert subspace_distance(out, graph_of_bivector(np.zeros((2, 2)))) < 1e-12
    assert np.allclose(bivector_of_graph(out.basis), 0)


def test_baer_requires_transversality():
    with pytest.raises(TransversalityError):
        baer_sum(tangent_frame(2), tangent_frame(2), [0.0, 0.0])


def test_baer_symplectic_relation():
    w = FormField.from_components(2, lambda x: jnp.zeros((4, 4)).at[0, 1].set(1.0).at[2, 3].set(2.0) + 0 * x[0], 4)
    J = symplectic_type(w)
    p = np.array([0.1, 0.2, 0.3, 0.4])
    Jx = np.asarray(J.at(p))
    ev, V = np.linalg.eig(Jx)
    L = V[:, np.isclose(ev, 1j)]
    out = baer_sum_fiber(L, L.conj())
    Q = real_poisson(J, p)
    assert subspace_distance(out, graph_of_bivector(0.5j * Q)) < 1e-12
    beta = bivector_of_graph(out.basis)
    assert np.max(np.abs(beta + beta.T)) < 1e-12


def test_dirac_reduce_by_subspace():
    L = tangent_frame(2)
    D = DiracFrame((const([1, 0, 0, 0]),), 1)
    red = dirac_reduce(L, D, [0.0, 0.0], rank=1)
    assert red.rank == 1
    assert subspace_distance(red, np.array([0, 1, 0, 0])) < 1e-12
    with pytest.raises(RankJumpError):
        dirac_reduce(L, D, [0.0, 0.0], rank=2)


def test_reduction_rank_on_hopf():
    from gkgeom.examples import get_example
    from gkgeom.gk import ell_frames

    data = get_example("hopf_even")
    lbp, lbm = ell_frames(data, conj=True)
    Lbar = lbp + lbm
    for p in data.samples(4, 0)["generic"]:
        assert dirac_reduce(Lbar, lbp, p).rank == 2


def line_module(alpha):
    return AlgebroidConnection(tangent_frame(2), lambda x: jnp.asarray(alpha(x), dtype=complex).reshape(2, 1, 1))


def test_algebroid_curvature_examples():
    pts = np.random.default_rng(2).normal(size=(3, 2))
    assert algebroid_curvature(line_module(lambda x: [0 * x[0], 0 * x[0]]), pts) == 0
    assert np.isclose(algebroid_curvature(line_module(lambda x: [0 * x[0], x[0]]), pts), 1.0)
    assert algebroid_curvature(line_module(lambda x: [x[1], x[0]]), pts) < 1e-12


def test_curvature_requires_involutive_frame():
    frame = graph_frame(x_dy_dz())
    conn = AlgebroidConnection(frame, lambda x: jnp.zeros((3, 1, 1), dtype=complex) + 0 * x[0])
    with pytest.raises(NotInvolutiveError):
        algebroid_curvature(conn, P0[None])


def test_point_subspace_from_frame():
    assert isinstance(tangent_frame(2).subspace([0.0, 0.0]), PointSubspace)
