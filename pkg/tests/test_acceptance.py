"""The twelve acceptance criteria, each reported on one pass/fail line."""
import time

import numpy as np

from gkgeom.cech_gerbe import parse_document
from gkgeom.examples import (
    example_entry,
    export_example,
    get_example,
    make_context,
    mc_draws,
    sigma_minus_reference,
)
from gkgeom.gcx import gc_types
from gkgeom.gk import (
    SIGMA_EXAMPLE_SCALE,
    check_gk_integrability,
    decomposition_report,
    ell_frames,
    ell_involutivity,
    extract_bihermitian,
    morita_residual,
    reconstruct,
    sigma_field,
    validate_gk,
)
from gkgeom.lie_bihermitian import su2_u1, verify_group_gk
from props import PROPERTIES, SEEDS

GK = ("hopf_odd", "hopf_even", "flat_kahler", "hyperkahler_torus")


def lt(label, value, tol):
    return (label, float(value), f"< {tol:g}", bool(value < tol))


def eq(label, got, want):
    return (label, got, want, got == want)


def registered(name, check_id, samples=32, seed=0):
    """Run a check bound to a registered example on a seeded context."""
    check = next(c for c in example_entry(name).checks if c.id == check_id)
    doc = parse_document(export_example(name))
    out = check.run(make_context(get_example(name), samples, seed, doc))
    ok = out.passed is not False and out.residual < check.tolerance
    return (f"{name}:{check_id}", float(out.residual), f"< {check.tolerance:g}", ok)


def test_criterion_01_hopf_odd_integrability(acceptance):
    data = get_example("hopf_odd")
    t0 = time.perf_counter()
    s = data.samples(1000, 0)
    pts = np.vstack([s[k] for k in s])
    rep = check_gk_integrability(data, pts)
    elapsed = time.perf_counter() - t0
    items = [eq("samples >= 1000", len(pts) >= 1000, True),
             lt("dc_plus", rep["dc_plus"].residual, 1e-8), lt("dc_minus", rep["dc_minus"].residual, 1e-8),
             lt("runtime_s", elapsed, 30.0)]
    assert acceptance(1, "hopf_odd integrability", items)


def test_criterion_02_even_hopf(acceptance):
    data = get_example("hopf_even")
    pair = reconstruct(data)
    s = data.samples(64, 0)
    items = [eq("validate_gk", validate_gk(pair, np.vstack(list(s.values()))).passed, True)]
    for J, tag, want in ((pair.Jplus, "type J+", {"generic": {0}, "locus_E1": {0}, "locus_E2": {2}}),
                         (pair.Jminus, "type J-", {"generic": {0}, "locus_E1": {2}, "locus_E2": {0}})):
        for name, w in want.items():
            items.append(eq(f"{tag} on {name}", set(gc_types(J, s[name])), w))
    pts = s["generic"][:32]
    sig = SIGMA_EXAMPLE_SCALE * np.asarray(sigma_field(data, -1).at(pts))
    ref = np.stack([sigma_minus_reference(p) for p in pts])
    items.append(lt("sigma_minus vs -x1 x2 d1^d2", np.max(np.abs(sig - ref)), 1e-8))
    assert acceptance(2, "even Hopf types and sigma", items)


def test_criterion_03_round_trip(acceptance):
    items = []
    for name in GK:
        data = get_example(name)
        back = extract_bihermitian(reconstruct(data))
        s = data.samples(32, 0)
        x = np.vstack(list(s.values()))
        worst = max(float(np.max(np.abs(a.at(x) - b.at(x)))) for a, b in
                    ((data.g, back.g), (data.Iplus, back.Iplus), (data.Iminus, back.Iminus)))
        items.append(lt(f"{name} round trip", worst, 1e-10))
    items.append(registered("flat_kahler", "kahler_matrices"))
    items.append(registered("hyperkahler_torus", "hk_matrices"))
    assert acceptance(3, "bi-Hermitian round trip", items)


def test_criterion_04_eigenbundle_decomposition(acceptance):
    items = []
    for name in ("hopf_odd", "hopf_even"):
        data = get_example(name)
        s = data.samples(16, 0)
        pts = np.vstack([s[k][:8] for k in s])
        rep = decomposition_report(data, pts)
        items.append(eq(f"{name} ranks/intersections/span", rep.passed, True))
        frames = ell_frames(data) + ell_frames(data, conj=True)
        ranks = {int(np.linalg.matrix_rank(f.at(p), tol=1e-8)) for f in frames for p in pts[:4]}
        items.append(eq(f"{name} frame ranks", ranks, {2}))
        inv = ell_involutivity(data, pts)
        items.append(lt(f"{name} involutivity", max(inv.values()), 1e-8))
    assert acceptance(4, "eigenbundle decomposition", items)


def test_criterion_05_baer_law(acceptance):
    items = [registered("hopf_even", "baer_sum_law", 32), registered("flat_symplectic", "baer_sum_law", 32)]
    assert acceptance(5, "Baer-sum law", items)


def test_criterion_06_dirac_reduction(acceptance):
    items = [registered("hopf_even", cid, 32) for cid in ("a_minus_basis", "b_minus_basis", "a_minus_anchor_locus")]
    assert acceptance(6, "Dirac reduction bases and anchor locus", items)


def test_criterion_07_holomorphic_courant(acceptance):
    items = [registered(name, f"hol_courant_{s}", 16) for name in ("hopf_odd", "hopf_even", "flat_kahler")
             for s in ("plus", "minus")]
    assert acceptance(7, "holomorphic Courant operator", items)


def test_criterion_08_gerbe_pipeline(acceptance):
    ids = ("connection", "lifting", "gauged_curvature_type", "holomorphic_cocycle", "period_F01",
           "period_hopf2_c_1", "period_hopf2_c_i", "period_hopf2_c_1_plus_i")
    items = [registered("hopf_gerbe", cid, 32) for cid in ids]
    items.append(registered("hopf_odd", "period_H"))
    assert acceptance(8, "gerbe pipeline and periods", items)


def test_criterion_09_lie_identity(acceptance):
    exact = verify_group_gk(su2_u1())
    flt = verify_group_gk(su2_u1(exact=False))
    items = [eq("A = -2A - 3H exact residual", exact["A_identity"].residual, 0),
             eq("-dc_L w_L = H exact residual", exact["left_identity"].residual, 0),
             eq("dc_R w_R = H exact residual", exact["right_identity"].residual, 0),
             lt("A identity in floating point", flt["A_identity"].residual, 1e-12)]
    assert acceptance(9, "su(2)+u(1) identities", items)


def test_criterion_10_maurer_cartan(acceptance):
    records = []
    for k, name in enumerate(("flat_kahler", "hopf_even")):
        data = get_example(name)
        pts = data.samples(2, 0)["generic"][:2]
        records += mc_draws(data, 50, k, pts, 1e-8)
    bad = sum(not r["agree"] for r in records)
    involutive = sum(r["graph"] < 1e-8 for r in records)
    items = [eq("draws", len(records) >= 100, True), eq("disagreements", bad, 0),
             eq("both outcomes exercised", 0 < involutive < len(records), True)]
    assert acceptance(10, "Maurer-Cartan equivalence", items)


def test_criterion_11_morita(acceptance):
    items = []
    for name in GK:
        data = get_example(name)
        s = data.samples(8, 0)
        pts = np.vstack([s[k][:3] for k in s])
        items.append(lt(name, morita_residual(data, pts), 1e-8))
    assert acceptance(11, "Morita identities", items)


def test_criterion_12_property_suites(acceptance):
    items = []
    for name, fn in PROPERTIES.items():
        worst, tol = max((fn(seed) for seed in SEEDS), key=lambda r: r[0] / r[1])
        items.append(lt(f"{name} over {len(SEEDS)} seeds", worst, tol))
    assert acceptance(12, "property suites", items)
