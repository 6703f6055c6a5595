import math

import jax.numpy as jnp
import numpy as np
import pytest

from gkgeom.core_tensor import (
    Chart,
    ChartDomainError,
    EndoField,
    FormField,
    JetOrderError,
    Point,
    PointSubspace,
    RankAmbiguityError,
    d,
    dc,
    dc_at,
    evaluate,
    ext_deriv,
    increasing_mask,
    interior,
    nijenhuis,
    numerical_rank,
    standard_complex_structure,
    subspace_distance,
    subspace_ops,
    type_project,
    wedge,
)

E = np.eye(2)


def one_form(fn, dim=2):
    return FormField.from_components(1, lambda x: jnp.asarray(fn(x)), dim)


def two_form(entries, dim):
    """Form from ``{(i, j): callable}`` on increasing index pairs."""
    def fn(x):
        a = jnp.zeros((dim, dim)) + 0 * x[0]
        for (i, j), f in entries.items():
            a = a.at[i, j].set(f(x))
        return a

    return FormField.from_components(2, fn, dim)


def complex_basis():
    """Covectors dx1, dbar x1, dx2, dbar x2 on C^2 with coordinates (u1, v1, u2, v2)."""
    dx1 = np.array([1, 1j, 0, 0])
    dx2 = np.array([0, 0, 1, 1j])
    return dx1, dx1.conj(), dx2, dx2.conj()


def test_ext_deriv_x_dy():
    w = one_form(lambda x: [0.0 * x[0], x[0]])
    for p in ([0.3, -1.2], [2.0, 5.0]):
        assert np.isclose(evaluate(ext_deriv(w, p), E[0], E[1]), 1.0, atol=1e-14)


def test_ext_deriv_constant_and_exact():
    w = one_form(lambda x: [1.0 + 0 * x[0], 0 * x[0]])
    assert np.allclose(ext_deriv(w, [0.1, 0.2]), 0)
    w = one_form(lambda x: [x[1], x[0]])
    for p in np.random.default_rng(0).normal(size=(5, 2)):
        assert np.max(np.abs(ext_deriv(w, p))) < 1e-14


def test_d_squared_vanishes():
    rng = np.random.default_rng(1)
    w = two_form({(0, 1): lambda x: jnp.sin(x[0] * x[2]), (1, 3): lambda x: x[0] ** 3 * jnp.exp(x[1]),
                  (0, 2): lambda x: jnp.cos(x[3]) * x[1]}, 4)
    dd = d(d(w))
    assert dd.degree == 4
    for p in rng.normal(size=(5, 4)):
        assert np.max(np.abs(dd.at(p))) < 1e-12


def test_forms_are_alternating():
    w = two_form({(0, 1): lambda x: x[0]}, 3)
    a = w.at([2.0, 0.0, 0.0])
    assert np.allclose(a, -a.T)
    assert a[0, 1] == 2.0
    assert increasing_mask(3, 2).sum() == 3


def test_wedge_and_interior():
    dx, dy = np.eye(2)
    a = wedge(jnp.asarray(dx), jnp.asarray(dy))
    assert np.isclose(evaluate(a, E[0], E[1]), 1.0)
    assert np.isclose(evaluate(a, E[1], E[0]), -1.0)
    assert np.allclose(interior(jnp.asarray(E[0]), a), dy)


def test_jet_order_exhausted():
    w = FormField.from_components(1, lambda x: x, 3, jet_order=1)
    d(w)
    with pytest.raises(JetOrderError):
        d(d(w))


def test_chart_domain_enforced():
    chart = Chart("punctured", 2, lambda x: x @ x > 0)
    w = FormField.from_components(1, lambda x: x / (x @ x), 2, chart=chart)
    ext_deriv(w, Point("punctured", (1.0, 0.0)))
    with pytest.raises(ChartDomainError):
        ext_deriv(w, [0.0, 0.0])


def test_type_project_examples():
    I = standard_complex_structure(2)
    dx1, dbx1, dx2, dbx2 = complex_basis()
    a = np.asarray(wedge(jnp.asarray(dx1), jnp.asarray(dbx1)))
    assert np.max(np.abs(type_project(a, I, 1, 1) - a)) < 1e-14
    assert np.max(np.abs(type_project(a, I, 2, 0))) < 1e-14
    b = np.asarray(wedge(jnp.asarray(dx1), jnp.asarray(dx2)))
    c = np.asarray(wedge(jnp.asarray(dx1), jnp.asarray(dbx2)))
    assert np.max(np.abs(type_project(b + c, I, 2, 0) - b)) < 1e-14


def test_type_projection_resolves_identity():
    rng = np.random.default_rng(2)
    I = standard_complex_structure(2)
    for k in (1, 2, 3):
        t = rng.normal(size=(4,) * k) + 1j * rng.normal(size=(4,) * k)
        mask = increasing_mask(4, k)
        a = math.factorial(k) * np.asarray(FormField.from_components(k, lambda x: jnp.asarray(t * mask), 4).fn(jnp.zeros(4)))
        total = sum(type_project(a, I, p, k - p) for p in range(k + 1))
        assert np.max(np.abs(total - a)) < 1e-12


def test_type_project_rejects_non_complex_structure():
    with pytest.raises(ValueError):
        type_project(np.zeros(4), np.eye(4), 1, 0)


def kahler_form():
    dx1, dbx1, dx2, dbx2 = (jnp.asarray(v) for v in complex_basis())
    w = 0.5j * (wedge(dx1, dbx1) + wedge(dx2, dbx2))
    return FormField(lambda x: w + 0 * x[0], 4, degree=2)


def test_flat_kahler_dc_vanishes():
    I = EndoField(lambda x: jnp.asarray(standard_complex_structure(2)) + 0 * x[0], 4)
    w = kahler_form()
    assert np.allclose(w.at(np.zeros(4)).imag, 0)
    for p in np.random.default_rng(3).normal(size=(4, 4)):
        assert np.max(np.abs(dc_at(w, I, p))) < 1e-14


def test_dc_of_real_11_form_is_real():
    I = EndoField(lambda x: jnp.asarray(standard_complex_structure(2)) + 0 * x[0], 4)
    w = kahler_form().scale(lambda x: 1.0 + x[0] ** 2 + jnp.sin(x[3]))
    for p in np.random.default_rng(4).normal(size=(4, 4)):
        v = dc_at(w, I, p)
        assert np.max(np.abs(v)) > 1e-3
        assert np.max(np.abs(v.imag)) < 1e-14


def test_dd_c_anticommutes():
    I = EndoField(lambda x: jnp.asarray(standard_complex_structure(2)) + 0 * x[0], 4)
    w = two_form({(0, 2): lambda x: x[1] * jnp.cos(x[0]), (1, 3): lambda x: x[0] * x[2] ** 2}, 4)
    lhs, rhs = d(dc(w, I)), dc(d(w), I)
    for p in np.random.default_rng(5).normal(size=(4, 4)):
        assert np.max(np.abs(lhs.at(p) + rhs.at(p))) < 1e-8


def test_standard_structure_integrable():
    I = EndoField(lambda x: jnp.asarray(standard_complex_structure(2)) + 0 * x[0], 4)
    assert np.max(np.abs(nijenhuis(I).at(np.ones(4)))) == 0


def span(*cols):
    return PointSubspace(np.array(cols, dtype=complex).T)


def test_subspace_ops_examples():
    e = np.eye(4)
    a, b = span(e[0], e[1]), span(e[1], e[2])
    assert subspace_distance(subspace_ops(a, b, "intersect"), span(e[1])) < 1e-14
    c = span(e[0], e[1], e[2])
    assert subspace_distance(subspace_ops(a, c, "sum"), c) < 1e-14
    q = subspace_ops(span(e[0] + e[1]), span(e[1]), "quotient-project")
    assert subspace_distance(q, span(e[0])) < 1e-14


def test_subspace_dimension_law():
    rng = np.random.default_rng(6)
    for _ in range(5):
        common = rng.normal(size=(6, 1))
        a = PointSubspace(np.hstack([common, rng.normal(size=(6, 2))]))
        b = PointSubspace(np.hstack([common, rng.normal(size=(6, 1))]))
        i, s = subspace_ops(a, b, "intersect"), subspace_ops(a, b, "sum")
        assert i.rank + s.rank == a.rank + b.rank
        assert i.rank == 1


def test_subspace_distance_examples():
    e = np.eye(2)
    assert subspace_distance(span(e[0]), span(e[0])) == 0
    assert np.isclose(subspace_distance(span(e[0]), span(e[1])), 1.0)
    for eps in (1e-3, 0.1, 0.7):
        assert np.isclose(subspace_distance(span(e[0]), span(e[0] + eps * e[1])), eps / math.sqrt(1 + eps ** 2), rtol=1e-10)
    with pytest.raises(ValueError):
        subspace_distance(span(e[0]), np.eye(2))


def test_rank_ambiguity_reported():
    assert numerical_rank(np.diag([1.0, 1e-3])) == 2
    assert numerical_rank(np.diag([1.0, 1e-13])) == 1
    with pytest.raises(RankAmbiguityError):
        numerical_rank(np.diag([1.0, 2e-9]))
