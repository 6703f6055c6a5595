import numpy as np
import pytest

from gkgeom.cech_gerbe import parse_document
from gkgeom.examples import (
    UnknownExampleError,
    deck_residual,
    example_entry,
    export_example,
    get_example,
    list_checks,
    list_examples,
    list_suites,
    load_document,
    make_context,
    mc_draws,
    sample_sets,
)
from gkgeom.gk import GKInstance
from gkgeom.lie_bihermitian import verify_group_gk

EXPECTED = {"hopf_odd", "hopf_even", "flat_kahler", "hyperkahler_torus", "flat_symplectic", "su2xu1", "hopf_gerbe"}


def test_registry_contents():
    assert set(list_examples()) == EXPECTED
    for name in list_examples():
        assert example_entry(name).checks


def test_unknown_example():
    with pytest.raises(UnknownExampleError):
        get_example("klein_bottle")
    with pytest.raises(KeyError):
        list_checks("klein_bottle")


@pytest.mark.parametrize("name, check", [("hopf_even", "sigma_minus_value"), ("su2xu1", "group_gk_identity"),
                                         ("hopf_gerbe", "period_F01"), ("hopf_odd", "period_H")])
def test_list_checks_entries(name, check):
    table = {cid: (expected, prov) for cid, expected, prov in list_checks(name)}
    assert check in table
    assert table[check][1] in ("reference", "identity", "elementary")


def test_check_ids_unique_and_suites_ordered():
    for name in list_examples():
        ids = [c[0] for c in list_checks(name)]
        assert len(ids) == len(set(ids))
        assert list_suites(name)[0] == "invariants"


@pytest.mark.parametrize("name", list_examples())
def test_export_round_trip(name):
    text = export_example(name)
    obj = load_document(parse_document(text))
    assert type(obj) is type(get_example(name))
    assert export_example(name) == text


@pytest.mark.parametrize("name", ["hopf_odd", "hopf_even"])
def test_deck_invariance(name):
    data = get_example(name)
    s = data.samples(16, 3)
    pts = np.vstack(list(s.values()))
    assert deck_residual(data, pts) < 1e-10


def test_deck_residual_detects_non_invariant_metric():
    import dataclasses

    import jax.numpy as jnp

    from gkgeom.core_tensor import Field

    data = get_example("hopf_odd")
    flat = dataclasses.replace(data, g=Field(lambda x: jnp.eye(4) + 0 * x[0], 4))
    assert deck_residual(flat, data.samples(4, 0)["generic"]) > 1


def test_samples_deterministic_and_on_loci():
    data = get_example("hopf_even")
    a, b = data.samples(32, 7), data.samples(32, 7)
    for k in a:
        assert np.array_equal(a[k], b[k])
    c = data.samples(32, 8)
    assert not np.array_equal(a["generic"], c["generic"])
    assert np.max(np.abs(a["locus_E1"][:, :2])) == 0
    assert np.max(np.abs(a["locus_E2"][:, 2:])) == 0
    R2 = np.sum(a["generic"] ** 2, axis=1)
    assert np.all(R2 > 0)


def test_sample_sets_by_kind():
    assert set(sample_sets(get_example("flat_symplectic"), 4, 0)) == {"generic"}
    assert isinstance(get_example("flat_kahler"), GKInstance)


def test_su2xu1_loaded_from_file_is_exact():
    rep = verify_group_gk(get_example("su2xu1"))
    assert rep.passed
    assert rep["A_identity"].residual == 0


def test_gerbe_context_carries_gauge():
    ctx = make_context(get_example("hopf_gerbe"), 4, 0, parse_document(export_example("hopf_gerbe")))
    assert set(ctx.gauge) == {0, 1}


def test_mc_draws_agree_and_alternate():
    data = get_example("flat_kahler")
    pts = data.samples(2, 0)["generic"][:2]
    rec = mc_draws(data, 4, 0, pts)
    assert [r["kind"] for r in rec] == ["closed", "random", "closed", "random"]
    assert all(r["agree"] for r in rec)
    assert all(r["graph"] < 1e-8 for r in rec if r["kind"] == "closed")
    assert all(r["graph"] > 1e-8 for r in rec if r["kind"] == "random")
