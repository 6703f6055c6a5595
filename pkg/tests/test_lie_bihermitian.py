import itertools
from fractions import Fraction

import numpy as np
import pytest

from gkgeom.lie_bihermitian import (
    DC_CROSS_CONVENTION,
    JacobiError,
    LieAlgebraData,
    NotIntegrableError,
    abelian,
    cartan_form,
    ce_differential,
    data_invariants,
    eigenspace_closure,
    evaluate_form,
    frac_array,
    fundamental_form,
    su2_u1,
    verify_group_gk,
)


def random_alternating(rng, n, k):
    t = rng.integers(-3, 4, size=(n,) * k)
    out = np.zeros_like(t)
    for perm in itertools.permutations(range(k)):
        sign = np.linalg.det(np.eye(k)[list(perm)])
        out = out + int(round(sign)) * np.transpose(t, perm)
    return frac_array(out)


def test_abelian_differential_vanishes():
    data = abelian()
    rng = np.random.default_rng(0)
    for k in (1, 2, 3):
        w = random_alternating(rng, 4, k)
        assert all(v == 0 for v in ce_differential(w, data.c).ravel())


def test_cartan_form_closed():
    data = su2_u1()
    H = cartan_form(data.b, data.c)
    assert all(v == 0 for v in ce_differential(H, data.c).ravel())


def test_differential_of_fundamental_form_expansion():
    data = su2_u1()
    w = fundamental_form(data.b, data.JL)
    dw = ce_differential(w, data.c)
    e = np.eye(4, dtype=int)
    br = lambda i, j: data.c[i, j]
    for i, j, k in itertools.product(range(4), repeat=3):
        hand = (-evaluate_form(w, [br(i, j), e[k]]) + evaluate_form(w, [br(i, k), e[j]])
                - evaluate_form(w, [br(j, k), e[i]]))
        assert dw[i, j, k] == hand


def test_d_squared_exact():
    data = su2_u1()
    rng = np.random.default_rng(1)
    for k in (1, 2):
        w = random_alternating(rng, 4, k)
        assert all(v == 0 for v in ce_differential(ce_differential(w, data.c), data.c).ravel())


def test_su2_u1_identities_exact():
    rep = verify_group_gk(su2_u1())
    assert rep.passed
    for key in ("A_identity", "left_identity", "right_identity", "A_expansion"):
        assert rep[key].residual == 0


def test_su2_u1_floating():
    rep = verify_group_gk(su2_u1(exact=False))
    assert rep.passed
    assert rep["A_identity"].residual < 1e-12


def test_cross_convention_constant():
    assert DC_CROSS_CONVENTION == -1
    assert verify_group_gk(su2_u1(exact=False))["cross_convention"].passed


def test_abelian_kahler_case():
    rep = verify_group_gk(abelian())
    assert rep.passed
    assert all(v == 0 for v in cartan_form(abelian().b, abelian().c).ravel())


@pytest.mark.parametrize("scale", [Fraction(1, 3), 2, 7])
def test_scaling_of_b(scale):
    base = su2_u1()
    scaled = su2_u1(scale)
    H0, H1 = cartan_form(base.b, base.c), cartan_form(scaled.b, scaled.c)
    assert all(h1 == scale * h0 for h0, h1 in zip(H0.ravel(), H1.ravel()))
    assert verify_group_gk(scaled).passed


def skewed_structure(J):
    """Conjugate of ``J`` by a shear mixing e1 into e3; not orthogonal, not integrable."""
    P = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [1, 0, 1, 0], [0, 0, 0, 1]])
    Pinv = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [-1, 0, 1, 0], [0, 0, 0, 1]])
    return P @ np.asarray(J, dtype=float) @ Pinv


def test_orthogonal_structures_on_su2_u1_close():
    from scipy.linalg import expm

    data = su2_u1(exact=False)
    rng = np.random.default_rng(5)
    for _ in range(3):
        A = rng.normal(size=(4, 4))
        R = expm(A - A.T)
        assert eigenspace_closure(data, R @ data.JL @ R.T) < 1e-12


def test_eigenspace_closure():
    assert eigenspace_closure(abelian(exact=False), abelian(exact=False).JL) == 0
    data = su2_u1(exact=False)
    assert eigenspace_closure(data, data.JL) < 1e-15
    assert eigenspace_closure(data, skewed_structure(data.JL)) > 0.1


def test_data_invariants_detect_bad_metric():
    data = su2_u1()
    bad = LieAlgebraData(data.c, frac_array(np.diag([1, 2, 3, 4])), data.JL, data.JR)
    rep = data_invariants(bad)
    assert not rep["ad_invariance"].passed


def test_jacobi_violation_raises():
    c = np.zeros((4, 4, 4), dtype=int)
    c[0, 1, 2], c[1, 0, 2] = 1, -1
    c[0, 2, 3], c[2, 0, 3] = 1, -1
    c[1, 3, 0], c[3, 1, 0] = 1, -1
    data = LieAlgebraData(frac_array(c), abelian().b, abelian().JL, abelian().JR)
    with pytest.raises(JacobiError):
        verify_group_gk(data)


def test_non_integrable_structure_raises():
    data = su2_u1()
    J = frac_array(skewed_structure(data.JL).astype(int))
    with pytest.raises(NotIntegrableError):
        verify_group_gk(LieAlgebraData(data.c, data.b, J, data.JR))
