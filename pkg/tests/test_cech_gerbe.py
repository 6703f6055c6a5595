import dataclasses
import math

import jax.numpy as jnp
import numpy as np
import pytest

from gkgeom.cech_gerbe import (
    Cycle,
    DocumentError,
    LiftingError,
    QuadratureError,
    anticanonical_cocycle,
    check_connection,
    cocycle_residuals,
    cover_report,
    dump_document,
    gauge_transform,
    holomorphic_cocycle,
    lifting_check,
    load_gerbe,
    pairing_curving_residual,
    parse_document,
    parse_expression,
    period_integral,
    sphere3_cycle,
    torus_cycle,
)
from gkgeom.core_tensor import FormField, standard_complex_structure
from gkgeom.examples import (
    example_document,
    gauge_forms,
    get_example,
    holomorphic_cocycle_reference,
    list_examples,
)


def hopf():
    return get_example("hopf_gerbe")


def test_caret_is_power_with_usual_precedence():
    env = {"x": 3.0}
    assert parse_expression("2*x^2", ["x"])(env) == 18.0
    assert parse_expression("-x^2", ["x"])(env) == -9.0
    assert parse_expression("2^x^2", ["x"])(env) == 2.0 ** 9
    assert parse_expression("x**2 + 1/2", ["x"])(env) == 9.5


def test_expression_constants_and_functions():
    z = 1.0 + 2.0j
    assert parse_expression("conj(z)*i", ["z"])({"z": z}) == np.conj(z) * 1j
    assert np.isclose(parse_expression("log(z) - pi", ["z"])({"z": z}), np.log(z) - math.pi)


def test_expression_error_positions():
    with pytest.raises(DocumentError) as e:
        parse_expression("x + foo", ["x"], line=3, col=5)
    assert (e.value.line, e.value.col) == (3, 9)
    with pytest.raises(DocumentError) as e:
        parse_expression("x^2 + sin(x)", ["x"], line=1, col=1)
    assert e.value.col == 7


def test_document_errors_report_line_and_column():
    with pytest.raises(DocumentError) as e:
        parse_document("[meta]\nname = a\n  [widget]\n")
    assert (e.value.line, e.value.col) == (3, 4)
    with pytest.raises(DocumentError) as e:
        parse_document("key = 1\n")
    assert e.value.line == 1
    with pytest.raises(DocumentError) as e:
        parse_document("[meta]\njust words\n")
    assert e.value.line == 2


@pytest.mark.parametrize("name", list_examples())
def test_document_round_trip(name):
    doc = example_document(name)
    assert parse_document(dump_document(doc)) == doc
    assert dump_document(parse_document(dump_document(doc))) == dump_document(doc)


FLAT_TWO_CHART = """
[meta]
kind = gerbe
name = trivial

[chart P]
coords = x y s t
[chart Q]
coords = u v p q
[overlap P Q]
map = x, y, s, t
[overlap Q P]
map = u, v, p, q
"""


def test_trivial_gerbe_connection():
    data = load_gerbe(FLAT_TWO_CHART)
    rep = check_connection(data, 8)
    assert rep.passed
    assert all(c.residual == 0 for c in rep.checks)
    assert cover_report(data.cover, 8).passed


def test_hopf_cover_and_connection():
    data = hopf()
    assert cover_report(data.cover, 16).passed
    rep = check_connection(data, 16)
    assert rep.passed
    assert max(c.residual for c in rep.checks) < 1e-8


def constant_form(value, i, j, dim=4):
    return FormField.from_components(2, lambda x: jnp.zeros((dim, dim)).at[i, j].set(value) + 0 * x[0], dim)


def test_perturbed_curving_detected():
    data = hopf()
    B = dict(data.B)
    B[0] = B[0] + constant_form(0.5, 0, 2)
    rep = check_connection(dataclasses.replace(data, B=B), 8)
    assert not rep.passed
    assert np.isclose(rep["curving_01"].residual, 0.5)
    assert rep["dH_0"].passed


def test_hopf_lifting():
    rep = lifting_check(hopf(), 16)
    assert rep.passed
    with pytest.raises(LiftingError):
        lifting_check(dataclasses.replace(hopf(), theta=None))


def test_perturbed_lifting_detected():
    data = hopf()
    theta = dict(data.theta)
    theta[1] = theta[1] + constant_form(0.25, 1, 3)
    assert not lifting_check(dataclasses.replace(data, theta=theta), 8)["gluing_01"].passed


def test_gauge_transform_zero_and_invariance():
    data = hopf()
    same = gauge_transform(data, {})
    pts = data.cover.sample((0, 1), 6)
    for i in (0, 1):
        for p in data.cover.sample((i,), 4):
            assert np.max(np.abs(same.B[i].at(p) - data.B[i].at(p))) == 0
    gauge = gauge_forms(example_document("hopf_gerbe"), data.cover)
    gauged = gauge_transform(data, gauge)
    assert check_connection(gauged, 8).passed
    assert lifting_check(gauged, 8).passed
    for p in pts:
        assert np.max(np.abs(gauged.H(0).at(p) - data.H(0).at(p))) < 1e-10


def test_pairing_curving_on_hopf():
    out = pairing_curving_residual(hopf(), 6)
    assert max(out.values()) < 1e-8


def test_holomorphic_cocycle_of_hopf_gerbe():
    data = hopf()
    gauge = gauge_forms(example_document("hopf_gerbe"), data.cover)
    hc = holomorphic_cocycle(data, gauge, 8)[(0, 1)]
    pts = data.cover.sample((0, 1), 8)
    res = cocycle_residuals(hc, standard_complex_structure(2), pts)
    assert res["closed"] < 1e-8 and res["type20"] < 1e-10
    for p in pts:
        assert np.max(np.abs(hc.at(p) - holomorphic_cocycle_reference(p))) < 1e-10


def test_anticanonical_cocycle_is_closed_holomorphic():
    pts = np.random.default_rng(0).uniform(0.3, 1.5, size=(6, 4))
    for c in (1.0, 1j, 2 - 0.5j):
        res = cocycle_residuals(anticanonical_cocycle(c), standard_complex_structure(2), pts)
        assert res["closed"] < 1e-10 and res["type20"] < 1e-12


def angular(x, k):
    u, v = x[2 * k], x[2 * k + 1]
    return jnp.zeros(4).at[2 * k].set(-v).at[2 * k + 1].set(u)


def test_torus_period_of_angular_product():
    # (u1 dv1 - v1 du1) ^ (u2 dv2 - v2 du2) over |z_j| = r_j gives (2 pi r1^2)(2 pi r2^2)
    form = FormField(lambda x: jnp.outer(angular(x, 0), angular(x, 1)) - jnp.outer(angular(x, 1), angular(x, 0)), 4, degree=2)
    r = period_integral(form, torus_cycle((0.5, 2.0)))
    assert abs(r.value - (2 * math.pi * 0.25) * (2 * math.pi * 4.0)) < 1e-10


def test_sphere_period_matches_ball_volume():
    # Stokes: the S^3 integral of x1 dx2^dx3^dx4 is the volume pi^2 / 2 of the unit ball
    def fn(x):
        return x[0] * jnp.zeros((4, 4, 4)).at[1, 2, 3].set(1.0)

    form = FormField.from_components(3, fn, 4)
    r = period_integral(form, sphere3_cycle(1.0), {"n": 12})
    assert abs(r.value - math.pi ** 2 / 2) < 1e-10


def test_hopf_fibre_period():
    r = period_integral(hopf().F(0, 1), torus_cycle((0.7, 1.3)))
    assert abs(r.value - 2 * math.pi) < 1e-6


def test_period_argument_errors():
    form = FormField.from_components(3, lambda x: jnp.zeros((4, 4, 4)) + 0 * x[0], 4)
    with pytest.raises(ValueError):
        period_integral(form, torus_cycle())
    wiggly = Cycle(lambda t: jnp.array([jnp.cos(40 * t[0]), jnp.sin(40 * t[0])]), ((0.0, 1.0),))
    one = FormField.from_components(1, lambda x: jnp.exp(x[0]) * jnp.stack([-x[1], x[0]]), 2)
    with pytest.raises(QuadratureError):
        period_integral(one, wiggly, {"n": 2, "tol": 1e-6})
