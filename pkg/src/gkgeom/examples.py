"""Built-in example instances, their sample sets and the checks bound to them.

Instances are stored as declarative documents under ``gkgeom/data``.  Each
registered example carries an ordered list of :class:`CheckSpec` entries; the
``invariants`` suite always runs first and gates every other check.
"""
from __future__ import annotations

import dataclasses
import functools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np
from scipy.stats import qmc

from .cech_gerbe import (
    Document,
    DocumentError,
    Entry,
    GerbeCech,
    Section,
    anticanonical_cocycle,
    chart_from_section,
    check_connection,
    cocycle_residuals,
    cover_report,
    dump_document,
    form_from_section,
    gauge_transform,
    holomorphic_cocycle,
    lifting_check,
    load_gerbe,
    metric_from_section,
    pairing_curving_residual,
    parse_document,
    period_integral,
    real_representative,
    sphere3_cycle,
    structure_from_section,
    torus_cycle,
    _index_key,
)
from .core_tensor import (
    EndoField,
    FormField,
    Report,
    complex_coframe,
    complex_frame,
    standard_complex_structure,
    subspace_distance,
    type_component,
)
from .courant import b_matrix, baer_sum_fiber, graph_of_bivector
from .gcx import (
    GCStructure,
    complex_type,
    eigenframe,
    gc_type,
    gc_types,
    real_poisson,
    schouten_residual,
    symplectic_type,
    validate_gc,
)
from .gk import (
    SIGMA_EXAMPLE_SCALE,
    GKInstance,
    TransversePair,
    ab_matrix,
    anchor_rank,
    check_gk_integrability,
    data_invariants,
    decomposition_report,
    ell_frames,
    ell_involutivity,
    eps_of_subspace,
    extract_bihermitian,
    gk_matrices,
    gk_poisson,
    graph_involutivity_residual,
    hol_courant_operator,
    maurer_cartan_residual,
    pair_tables,
    morita_residual,
    reconstruct,
    reduced_representatives,
    sigma_field,
    validate_gk,
)
from .lie_bihermitian import LieAlgebraData, frac_array, verify_group_gk


class UnknownExampleError(KeyError):
    pass


# ---------------------------------------------------------------------------
# documents


def read_data(filename: str) -> str:
    return (resources.files("gkgeom") / "data" / filename).read_text()


def _single_chart(doc: Document):
    secs = doc.find("chart")
    if len(secs) != 1:
        raise DocumentError("expected exactly one chart", secs[1].line if len(secs) > 1 else 1, 1)
    return chart_from_section(secs[0])


def _one(doc: Document, kind: str, *args, required: bool = True) -> Section | None:
    secs = doc.find(kind, *args)
    if not secs:
        if required:
            raise DocumentError(f"missing section [{' '.join((kind,) + args)}]", 1, 1)
        return None
    return secs[0]


def load_gk(doc: Document | str) -> GKInstance:
    """Bi-Hermitian data from ``metric g``, ``structure Iplus/Iminus`` and optional ``form H``/``form b`` sections."""
    if isinstance(doc, str):
        doc = parse_document(doc)
    chart = _single_chart(doc)
    n = chart.dim
    g = metric_from_section(_one(doc, "metric", "g", chart.name), chart)
    ip, t10p = structure_from_section(_one(doc, "structure", "Iplus", chart.name), chart)
    im, t10m = structure_from_section(_one(doc, "structure", "Iminus", chart.name), chart)
    hs = _one(doc, "form", "H", chart.name, required=False)
    bs = _one(doc, "form", "b", chart.name, required=False)
    H = form_from_section(hs, chart) if hs is not None else None
    b = form_from_section(bs, chart) if bs is not None else None
    meta = {"t10_plus": t10p, "t10_minus": t10m, "document": doc, "chart": chart}
    return GKInstance(g, EndoField(ip, n), EndoField(im, n), H, b, doc.meta("name", "") or "", box_sampler(chart), None, meta)


def load_gc(doc: Document | str) -> GCStructure:
    """Generalized complex structure from ``form omega`` (symplectic type) or ``structure I`` (complex type)."""
    if isinstance(doc, str):
        doc = parse_document(doc)
    chart = _single_chart(doc)
    om = _one(doc, "form", "omega", chart.name, required=False)
    name = doc.meta("name", "") or ""
    if om is not None:
        return GCStructure(symplectic_type(form_from_section(om, chart)), None, name)
    st = _one(doc, "structure", "I", chart.name)
    fn, _ = structure_from_section(st, chart)
    return GCStructure(complex_type(EndoField(fn, chart.dim)), None, name)


def _fraction(e: Entry) -> Fraction:
    try:
        return Fraction(e.value)
    except (ValueError, ZeroDivisionError):
        raise DocumentError(f"expected a rational number, got {e.value!r}", e.line, e.col) from None


def load_lie(doc: Document | str) -> LieAlgebraData:
    """Exact Lie algebra data from an ``algebra`` section.

    Keys: ``dim``, ``c[i,j,k]`` (the entry for ``j, i`` is implied),
    ``b[i,j]``, ``JL[i,j]``, ``JR[i,j]``; values are rationals.
    """
    if isinstance(doc, str):
        doc = parse_document(doc)
    sec = _one(doc, "algebra")
    de = sec.get("dim")
    if de is None:
        raise DocumentError("algebra section needs 'dim'", sec.line, 1)
    n = int(_fraction(de))
    arrs = {"c": frac_array(np.zeros((n,) * 3, dtype=int))}
    for k in ("b", "JL", "JR"):
        arrs[k] = frac_array(np.zeros((n, n), dtype=int))
    for e in sec.entries:
        if e.key == "dim":
            continue
        name = e.key.split("[", 1)[0]
        if name not in arrs:
            raise DocumentError(f"unknown algebra key {e.key!r}", e.line, 1)
        idx = _index_key(e, name, 3 if name == "c" else 2)
        if any(not 0 <= i < n for i in idx):
            raise DocumentError(f"index out of range in {e.key!r}", e.line, 1)
        v = _fraction(e)
        arrs[name][idx] = v
        if name == "c":
            arrs[name][idx[1], idx[0], idx[2]] = -v
    name = doc.meta("name", "") or (sec.args[0] if sec.args else "")
    return LieAlgebraData(arrs["c"], arrs["b"], arrs["JL"], arrs["JR"], name)


def load_document(doc: Document | str):
    """Dispatch on ``meta kind``: ``gk``, ``gc``, ``lie`` or ``gerbe``."""
    if isinstance(doc, str):
        doc = parse_document(doc)
    kind = doc.meta("kind", "gk")
    loaders = {"gk": load_gk, "gc": load_gc, "lie": load_lie, "gerbe": load_gerbe}
    if kind not in loaders:
        raise DocumentError(f"unknown document kind {kind!r}", 1, 1)
    return loaders[kind](doc)


def export_lie(data: LieAlgebraData) -> str:
    """Canonical document text for exact Lie algebra data."""
    n = data.dim
    ents = [Entry("dim", str(n))]
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(n):
                if data.c[i, j, k] != 0:
                    ents.append(Entry(f"c[{i},{j},{k}]", str(Fraction(data.c[i, j, k]))))
    for name in ("b", "JL", "JR"):
        M = getattr(data, name)
        for i in range(n):
            for j in range(n):
                if M[i, j] != 0:
                    ents.append(Entry(f"{name}[{i},{j}]", str(Fraction(M[i, j]))))
    meta = Section("meta", (), (Entry("name", data.name), Entry("kind", "lie")))
    return dump_document(Document((meta, Section("algebra", (data.name or "g",), tuple(ents)))))


# ---------------------------------------------------------------------------
# sampling


def halton(dim: int, count: int, seed: int) -> np.ndarray:
    """Scrambled Halton points in ``[0, 1)^dim``, fully determined by ``seed``."""
    return qmc.Halton(d=dim, scramble=True, seed=seed).random(count)


def box_sampler(chart, margin: float = 0.2):
    """Halton points in the chart box that satisfy the chart's nonzero conditions."""
    lo, hi = chart.box

    def sampler(count: int, seed: int) -> dict:
        out, m = [], 0
        while len(out) < count:
            m = max(2 * count, 2 * m)
            pts = lo + (hi - lo) * halton(chart.dim, m, seed)
            out = [p for p in pts if chart.in_domain(p, margin)]
            if m > 64 * count:
                break
        return {"generic": np.asarray(out[:count])}

    return sampler


def annulus_samples(count: int, seed: int) -> dict:
    """Points of ``1 <= |x| < 2`` in ``C^2`` plus the loci ``x1 = 0`` and ``x2 = 0``.

    Generic points keep ``|x1|^2 / |x|^2`` in ``[0.05, 0.95]`` so that they
    stay away from both type-change curves.
    """
    u = halton(4, count, seed)
    R = 1.0 + u[:, 0]
    t = 0.05 + 0.9 * u[:, 1]
    a, b = 2 * np.pi * u[:, 2], 2 * np.pi * u[:, 3]
    r1, r2 = R * np.sqrt(t), R * np.sqrt(1 - t)
    generic = np.stack([r1 * np.cos(a), r1 * np.sin(a), r2 * np.cos(b), r2 * np.sin(b)], 1)
    k = max(4, count // 8)
    v = halton(2, k, seed + 1)
    Rl, ang = 1.0 + v[:, 0], 2 * np.pi * v[:, 1]
    z = np.zeros(k)
    e1 = np.stack([z, z, Rl * np.cos(ang), Rl * np.sin(ang)], 1)
    e2 = np.stack([Rl * np.cos(ang), Rl * np.sin(ang), z, z], 1)
    return {"generic": generic, "locus_E1": e1, "locus_E2": e2}


def torus_samples(count: int, seed: int) -> dict:
    """Halton points of the fundamental domain ``[0, 1)^4`` of ``R^4 / Z^4``."""
    return {"generic": halton(4, count, seed)}


# ---------------------------------------------------------------------------
# deck transformation x -> 2x


def deck_residual(data: GKInstance, samples) -> float:
    """Largest componentwise defect of ``phi^* field = field`` for ``phi(x) = 2x``.

    Pullback by a linear map ``2 id`` scales a covariant ``k``-tensor by
    ``2^k`` and leaves endomorphisms unchanged.
    """
    pts = np.atleast_2d(samples)
    worst = 0.0
    fields = [(data.g, 2), (data.Iplus, 0), (data.Iminus, 0)]
    if data.H is not None:
        fields.append((data.H, 3))
    if data.b is not None:
        fields.append((data.b, 2))
    for f, k in fields:
        worst = max(worst, float(np.max(np.abs(2.0 ** k * f.at(2 * pts) - f.at(pts)))))
    return worst


# ---------------------------------------------------------------------------
# check machinery


@dataclass
class Outcome:
    residual: float
    samples: int = 0
    note: str = ""
    passed: bool | None = None


@dataclass
class Context:
    """What a check sees: the instance, named sample sets and a per-run cache."""

    obj: object
    sets: dict
    cache: dict = field(default_factory=dict)
    gauge: dict = field(default_factory=dict)

    def points(self, cap: int | None = None, sets=None) -> np.ndarray:
        names = sets or list(self.sets)
        return np.vstack([self.sets[k][:cap] if cap else self.sets[k] for k in names if len(self.sets[k])])

    def memo(self, key, fn):
        if key not in self.cache:
            self.cache[key] = fn()
        return self.cache[key]


@dataclass(frozen=True)
class CheckSpec:
    """A check bound to an example.

    ``provenance`` is ``"reference"`` for expected values taken from worked
    examples of the theory, ``"identity"`` for general identities and
    ``"elementary"`` for values that follow directly from the construction.
    """

    id: str
    suite: str
    expected: str
    provenance: str
    anchor: str
    tolerance: float
    run: Callable[[Context], Outcome] = field(compare=False, repr=False)
    acceptance: bool = True


def _rep_outcome(rep: Report, ids=None) -> Outcome:
    cs = [c for c in rep.checks if ids is None or c.id in ids]
    worst = max(cs, key=lambda c: c.residual)
    return Outcome(worst.residual, max(c.samples for c in cs), f"worst: {worst.id}", all(c.passed for c in cs))


# ---------------------------------------------------------------------------
# generalized Kähler checks


def _gk_invariant_checks() -> list[CheckSpec]:
    def inv(ctx):
        rep = data_invariants(ctx.obj, ctx.points(), 1e-10)
        return _rep_outcome(rep, [c.id for c in rep.checks if c.id != "g_positive"])

    def pos(ctx):
        rep = data_invariants(ctx.obj, ctx.points(), 1e-10)
        c = rep["g_positive"]
        return Outcome(c.residual, c.samples, "negative of the smallest metric eigenvalue")

    return [
        CheckSpec("data_invariants", "invariants", "< 1e-10", "elementary", "bi-Hermitian data: g symmetric, I^2 = -1, g(I., I.) = g", 1e-10, inv),
        CheckSpec("metric_positive", "invariants", "< 0", "elementary", "bi-Hermitian data: g positive-definite", 0.0, pos),
    ]


def _integrability(ctx, tol=1e-8):
    return ctx.memo("integrability", lambda: check_gk_integrability(ctx.obj, ctx.points(), tol))


def _gk_core_checks() -> list[CheckSpec]:
    def integ(cid):
        return lambda ctx: _rep_outcome(_integrability(ctx), [cid])

    def vgk(ctx):
        rep = ctx.memo("validate_gk", lambda: validate_gk(reconstruct(ctx.obj), ctx.points(6), 1e-8))
        return _rep_outcome(rep, [c.id for c in rep.checks if c.id != "G_positive"])

    def gpos(ctx):
        rep = ctx.memo("validate_gk", lambda: validate_gk(reconstruct(ctx.obj), ctx.points(6), 1e-8))
        c = rep["G_positive"]
        return Outcome(c.residual, c.samples, c.note)

    def round_trip(ctx):
        data = ctx.obj
        back = extract_bihermitian(reconstruct(data))
        pts = ctx.points()
        pairs = [(back.g, data.g), (back.Iplus, data.Iplus), (back.Iminus, data.Iminus)]
        worst = max(float(np.max(np.abs(a.at(pts) - b.at(pts)))) for a, b in pairs)
        bv = back.b.at(pts)
        b0 = data.b.at(pts) if data.b is not None else 0.0
        worst = max(worst, float(np.max(np.abs(bv - b0))))
        return Outcome(worst, len(pts))

    return [
        CheckSpec("nijenhuis_plus", "integrability", "< 1e-8", "identity", "integrability of I_+", 1e-8, integ("nijenhuis_plus")),
        CheckSpec("nijenhuis_minus", "integrability", "< 1e-8", "identity", "integrability of I_-", 1e-8, integ("nijenhuis_minus")),
        CheckSpec("dc_plus", "integrability", "< 1e-8", "identity", "torsion constraint d^c_+ omega_+ = H", 1e-8, integ("dc_plus")),
        CheckSpec("dc_minus", "integrability", "< 1e-8", "identity", "torsion constraint -d^c_- omega_- = H", 1e-8, integ("dc_minus")),
        CheckSpec("validate_gk", "gk", "< 1e-8", "identity", "generalized Kähler pair: commuting, orthogonal, integrable", 1e-8, vgk),
        CheckSpec("G_positive", "gk", "< 0", "identity", "generalized Kähler metric G = -J_+ J_- positive", 0.0, gpos),
        CheckSpec("round_trip", "gk", "< 1e-10", "identity", "bi-Hermitian data recovered from (J_+, J_-)", 1e-10, round_trip),
    ]


def _pfaffian4(w) -> np.ndarray:
    return w[..., 0, 1] * w[..., 2, 3] - w[..., 0, 2] * w[..., 1, 3] + w[..., 0, 3] * w[..., 1, 2]


def _type_checks(expected: dict) -> list[CheckSpec]:
    """``expected[set] = (type J_+, type J_-)``."""

    def types(side):
        def run(ctx):
            pair = ctx.memo("pair", lambda: reconstruct(ctx.obj))
            J = pair.Jplus if side > 0 else pair.Jminus
            bad, total, found = 0, 0, {}
            for name, want in expected.items():
                pts = ctx.sets.get(name, ())
                for t in (gc_types(J, pts) if len(pts) else ()):
                    found.setdefault(name, set()).add(t)
                    bad += int(t != want[0 if side > 0 else 1])
                    total += 1
            note = "; ".join(f"{k}: {sorted(v)}" for k, v in found.items())
            return Outcome(bad, total, note)

        return run

    def parity(ctx):
        data = ctx.obj
        pair = ctx.memo("pair", lambda: reconstruct(data))
        pts = ctx.points()
        pf = _pfaffian4(data.omega(1).at(pts).real) * _pfaffian4(data.omega(-1).at(pts).real)
        bad = 0
        for tp, tm, s in zip(gc_types(pair.Jplus, pts), gc_types(pair.Jminus, pts), pf):
            bad += int((tp % 2) != (tm % 2)) + int((tp % 2 == 1) != (s < 0))
        return Outcome(bad, len(pts), "mismatches of type parity and orientation")

    desc = ", ".join(f"{k}: {v}" for k, v in expected.items())
    return [
        CheckSpec("type_plus", "types", desc, "reference", "types of J_+ on each sample set", 0.5, types(1)),
        CheckSpec("type_minus", "types", desc, "reference", "types of J_- on each sample set", 0.5, types(-1)),
        CheckSpec("orientation_parity", "types", "0 mismatches", "identity", "equal type parity; odd iff I_+ and I_- induce opposite orientations", 0.5, parity),
    ]


def _decomposition_checks() -> list[CheckSpec]:
    def deco(ctx):
        rep = decomposition_report(ctx.obj, ctx.points())
        return _rep_outcome(rep)

    def invol(ctx):
        res = ell_involutivity(ctx.obj, ctx.points(4))
        k = max(res, key=res.get)
        return Outcome(res[k], len(ctx.points(4)), f"worst frame {k}")

    return [
        CheckSpec("ell_decomposition", "decomposition", "ranks n/2, trivial intersections, full span", "identity",
                  "eigenbundle decomposition into ell_+, ell_-, conjugates", 1e-8, deco),
        CheckSpec("ell_involutivity", "decomposition", "< 1e-8", "identity", "ell_pm and conjugates are involutive", 1e-8, invol),
    ]


def _holomorphic_checks(kahler: bool = False) -> list[CheckSpec]:
    def flat(side):
        def run(ctx):
            pts = ctx.points(6)
            worst, tnorm = 0.0, 0.0
            for p in pts:
                r = hol_courant_operator(ctx.obj, side, p)
                worst = max(worst, r["flatness"])
                tnorm = max(tnorm, float(np.max(np.abs(r["T"]))))
            if kahler:
                return Outcome(tnorm, len(pts), "max |T|")
            return Outcome(worst, len(pts), f"max |T| = {tnorm:.3e}")

        return run

    tag = "T = 0" if kahler else "dbar T = 0"
    return [CheckSpec(f"hol_courant_{s}", "holomorphic", "< 1e-8", "elementary" if kahler else "identity",
                      f"holomorphic Courant operator on the {s} side: {tag}", 1e-8, flat(side))
            for side, s in ((1, "plus"), (-1, "minus"))]


def _morita_check(count: int = 4) -> CheckSpec:
    return CheckSpec("morita", "morita", "< 1e-8", "identity", "A_pm + T_{0,1} both equal the conjugate eigenbundle of J_+", 1e-8,
                     lambda ctx: Outcome(morita_residual(ctx.obj, ctx.points(count), check=False), len(ctx.points(count))))


def _poisson_checks() -> list[CheckSpec]:
    def formulas(ctx):
        pts = ctx.points(16)
        worst, which = 0.0, ""
        for p in pts:
            r = gk_poisson(ctx.obj, p)
            for k, v in r.items():
                if k.endswith("_residual") and v > worst:
                    worst, which = v, k
        return Outcome(worst, len(pts), f"worst: {which}" if which else "")

    def schouten(ctx):
        pts = ctx.points(6)
        r = max(schouten_residual(sigma_field(ctx.obj, s), pts) for s in (1, -1))
        return Outcome(r, len(pts))

    return [
        CheckSpec("poisson_formulas", "poisson", "< 1e-8", "identity", "Q_pm formulas, Re sigma = g^-1 [I_+*, I_-*] / 8, sigma of type (2,0)", 1e-8, formulas),
        CheckSpec("sigma_schouten", "poisson", "< 1e-8", "identity", "[sigma_pm, sigma_pm] = 0", 1e-8, schouten),
    ]


def _reduction_cross_check(count: int = 3) -> CheckSpec:
    def run(ctx):
        pts = ctx.points(count)
        worst = 0.0
        for p in pts:
            for side in (1, -1):
                for w in ("A", "B"):
                    coef, resid = reduced_representatives(ctx.obj, side, w, p)
                    direct = np.asarray(ab_matrix(ctx.obj, side, w)(jnp.asarray(p)))
                    worst = max(worst, subspace_distance(coef, direct), resid)
        return Outcome(worst, len(pts))

    return CheckSpec("reduction_cross_check", "reduction", "< 1e-8", "identity",
                     "A_pm, B_pm by Dirac reduction agree with the explicit isomorphism", 1e-8, run)


def _baer_gk_check(count: int = 8) -> CheckSpec:
    def run(ctx):
        pair = ctx.memo("pair", lambda: reconstruct(ctx.obj))
        pts = ctx.points(count, ["generic"])
        return Outcome(max(_baer_distance(pair.Jplus, p) for p in pts), len(pts))

    return CheckSpec("baer_sum_law", "baer", "< 1e-8", "identity", "Baer sum of L_+ and its conjugate is the graph of iQ_+/2", 1e-8, run)


def _baer_distance(J: EndoField, p) -> float:
    L = eigenframe(J, p, 1).basis
    Lb = eigenframe(J, p, -1).basis
    Q = real_poisson(J, p)
    return subspace_distance(baer_sum_fiber(L, Lb).basis, graph_of_bivector(0.5j * Q))


# ---------------------------------------------------------------------------
# Hopf-specific checks


R2 = lambda x: float(np.sum(np.asarray(x) ** 2))  # noqa: E731


def sigma_minus_reference(x) -> np.ndarray:
    """Component array of ``-x1 x2 d/dx1 ^ d/dx2``."""
    vz, _ = complex_frame(2)
    z1, z2 = x[0] + 1j * x[1], x[2] + 1j * x[3]
    return -z1 * z2 * (np.outer(vz[0], vz[1]) - np.outer(vz[1], vz[0]))


def a_minus_reference(x) -> np.ndarray:
    """Columns ``x2 d/dx2 + c conj(x1) dx1`` and ``-x2 d/dx1 + c conj(x1) dx2`` with ``c = 1/(2 pi R^2)``."""
    vz, _ = complex_frame(2)
    dz, _ = complex_coframe(2)
    z1, z2 = x[0] + 1j * x[1], x[2] + 1j * x[3]
    c = 1 / (2 * np.pi * R2(x))
    return np.stack([np.concatenate([z2 * vz[1], c * np.conj(z1) * dz[0]]),
                     np.concatenate([-z2 * vz[0], c * np.conj(z1) * dz[1]])], 1)


def b_minus_reference(x) -> np.ndarray:
    """Columns ``x1 d/dx1 + c conj(x2) dx2`` and ``x1 d/dx2 - c conj(x2) dx1``."""
    vz, _ = complex_frame(2)
    dz, _ = complex_coframe(2)
    z1, z2 = x[0] + 1j * x[1], x[2] + 1j * x[3]
    c = 1 / (2 * np.pi * R2(x))
    return np.stack([np.concatenate([z1 * vz[0], c * np.conj(z2) * dz[1]]),
                     np.concatenate([z1 * vz[1], -c * np.conj(z2) * dz[0]])], 1)


def _deck_check() -> CheckSpec:
    return CheckSpec("deck_invariance", "invariants", "< 1e-10", "elementary", "fields invariant under x -> 2x", 1e-10,
                     lambda ctx: Outcome(deck_residual(ctx.obj, ctx.points()), len(ctx.points())))


def _even_hopf_checks() -> list[CheckSpec]:
    def sigma_value(ctx):
        pts = ctx.points()
        sig = sigma_field(ctx.obj, -1).at(pts)
        ref = np.stack([sigma_minus_reference(p) for p in pts])
        return Outcome(float(np.max(np.abs(SIGMA_EXAMPLE_SCALE * sig - ref))), len(pts),
                       f"sigma_- scaled by {SIGMA_EXAMPLE_SCALE:.6g}")

    def basis(which, ref):
        def run(ctx):
            pts = ctx.points(None, ["generic"])
            fn = ab_matrix(ctx.obj, -1, which)
            return Outcome(max(subspace_distance(np.asarray(fn(jnp.asarray(p))), ref(p)) for p in pts), len(pts))

        return run

    def anchor(ctx):
        bad, total = 0, 0
        for name, want in (("generic", 2), ("locus_E2", 0)):
            for p in ctx.sets[name]:
                bad += int(anchor_rank(ctx.obj, -1, "A", p) != want)
                total += 1
        return Outcome(bad, total, "anchor rank of A_- is 2 generically and 0 on x2 = 0")

    return [
        CheckSpec("sigma_minus_value", "poisson", "-x1 x2 d/dx1 ^ d/dx2", "reference", "holomorphic Poisson structure of the even Hopf surface", 1e-8, sigma_value),
        CheckSpec("a_minus_basis", "reduction", "span of x2 d/dx2 + conj(x1) dx1/(2 pi R^2), -x2 d/dx1 + conj(x1) dx2/(2 pi R^2)",
                  "reference", "holomorphic Dirac structure A_- of the even Hopf surface", 1e-8, basis("A", a_minus_reference)),
        CheckSpec("b_minus_basis", "reduction", "span of x1 d/dx1 + conj(x2) dx2/(2 pi R^2), x1 d/dx2 - conj(x2) dx1/(2 pi R^2)",
                  "reference", "holomorphic Dirac structure B_- of the even Hopf surface", 1e-8, basis("B", b_minus_reference)),
        CheckSpec("a_minus_anchor_locus", "reduction", "rank 0 exactly on x2 = 0", "reference", "degeneracy locus of the anchor of A_-", 0.5, anchor),
    ]


def _period_h_check() -> CheckSpec:
    def run(ctx):
        r = period_integral(ctx.obj.H, sphere3_cycle(1.5), {"n": (8, 16, 8), "tol": 1e-6})
        return Outcome(abs(r.value - 1.0), r.nodes, f"integral of H over S^3 = {r.value.real:.10f} (2 pi = {2 * math.pi:.10f})")

    return CheckSpec("period_H", "periods", "1", "reference", "H generates the integral cohomology of the Hopf surface", 1e-2, run)


# ---------------------------------------------------------------------------
# Maurer-Cartan equivalence


def mc_pair(data: GKInstance) -> TransversePair:
    """``A = Lbar_+ = ellbar_+ + ellbar_-`` and ``B = L_+ = ell_+ + ell_-``."""
    lp, lm = ell_frames(data)
    lbp, lbm = ell_frames(data, conj=True)
    return TransversePair(lbp + lbm, lp + lm, data.twist)


def _closed_transform(rng, scale: float = 0.3):
    """``x -> e^F`` for ``F = F0 + da`` with ``a_j = sum_k c_jk sin(2 pi x_k)``."""
    F0 = rng.normal(size=(4, 4))
    F0 = scale * (F0 - F0.T)
    c = scale * rng.normal(size=(4, 4)) / (2 * np.pi)

    def a(x):
        return jnp.asarray(c) @ jnp.sin(2 * jnp.pi * x)

    da = jax.jacfwd(a)

    def F(x):
        J = da(x)  # J[j, i] = d_i a_j
        return jnp.asarray(F0) + J - J.T

    return lambda x: b_matrix(F(x))


def _random_eps(rng, k: int, scale: float = 0.3):
    E0 = rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k))
    E1 = rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k))
    E0, E1 = scale * (E0 - E0.T), scale * (E1 - E1.T)
    v = rng.normal(size=4)
    return lambda x: jnp.asarray(E0) + jnp.sin(jnp.dot(jnp.asarray(v), x)) * jnp.asarray(E1)


def mc_draws(data: GKInstance, count: int, seed: int, points, tol: float = 1e-8) -> list[dict]:
    """Alternating draws of exact deformations ``e^F A`` (``dF = 0``) and random ``eps``.

    Each record holds both residuals and whether the two routes agree at ``tol``.
    """
    pair = mc_pair(data)
    tables = pair_tables(pair, points)
    rng = np.random.default_rng(seed)
    out = []
    for t in range(count):
        if t % 2 == 0:
            kind, eps = "closed", eps_of_subspace(pair, _closed_transform(rng))
        else:
            kind, eps = "random", _random_eps(rng, pair.k)
        r1 = graph_involutivity_residual(pair, eps, points)
        r2 = maurer_cartan_residual(pair, eps, points, tables)
        out.append({"kind": kind, "graph": r1, "mc": r2, "agree": (r1 < tol) == (r2 < tol)})
    return out


def _mc_check(draws: int = 4, points: int = 2) -> CheckSpec:
    def run(ctx):
        pts = ctx.points(points, ["generic"])
        rec = mc_draws(ctx.obj, draws, 0, pts)
        bad = sum(not r["agree"] for r in rec)
        passes = sum(r["graph"] < 1e-8 for r in rec)
        return Outcome(bad, len(pts), f"{len(rec)} draws, {passes} involutive, {bad} disagreements")

    return CheckSpec("mc_equivalence", "mc", "0 disagreements", "identity",
                     "graph of eps involutive iff d_A eps + [eps, eps]_B / 2 = 0", 0.5, run)


# ---------------------------------------------------------------------------
# hyper-Kähler and Kähler matrix checks


def _hk_parts(data: GKInstance, x):
    g = np.asarray(data.g.fn(jnp.asarray(x)))
    I = np.asarray(data.Iplus.fn(jnp.asarray(x)))
    J = np.asarray(data.Iminus.fn(jnp.asarray(x)))
    K = I @ J
    return g, I, J, K, g @ I, g @ J, g @ K


def _e(B):
    n = B.shape[0]
    return np.block([[np.eye(n), np.zeros((n, n))], [B, np.eye(n)]])


def _hk_checks() -> list[CheckSpec]:
    def matrices(ctx):
        worst = 0.0
        for x in ctx.points(8):
            g, I, J, K, wI, wJ, wK = _hk_parts(ctx.obj, x)
            Jp, Jm = (np.asarray(m) for m in gk_matrices(jnp.asarray(g), jnp.asarray(I), jnp.asarray(J)))
            for s, Jx in ((1, Jp), (-1, Jm)):
                ref = 0.5 * np.block([[I + s * J, -(np.linalg.inv(wI) - s * np.linalg.inv(wJ))], [wI - s * wJ, -(I.T + s * J.T)]])
                worst = max(worst, float(np.max(np.abs(Jx - ref))))
        return Outcome(worst, len(ctx.points(8)))

    def factor(ctx):
        worst = 0.0
        for x in ctx.points(8):
            g, I, J, K, wI, wJ, wK = _hk_parts(ctx.obj, x)
            Jp, Jm = (np.asarray(m) for m in gk_matrices(jnp.asarray(g), jnp.asarray(I), jnp.asarray(J)))
            n = g.shape[0]
            for s, Jx in ((1, Jp), (-1, Jm)):
                mid = np.block([[np.zeros((n, n)), -0.5 * (np.linalg.inv(wI) - s * np.linalg.inv(wJ))], [wI - s * wJ, np.zeros((n, n))]])
                worst = max(worst, float(np.max(np.abs(_e(s * wK) @ mid @ _e(-s * wK) - Jx))))
        return Outcome(worst, len(ctx.points(8)))

    def bfield(ctx):
        worst = 0.0
        for x in ctx.points(8):
            g, I, J, K, wI, wJ, wK = _hk_parts(ctx.obj, x)
            n = g.shape[0]
            z = np.zeros((n, n))
            JsI = np.block([[I, np.linalg.inv(wK)], [z, -I.T]])
            JsJ = np.block([[J, np.linalg.inv(wK)], [z, -J.T]])
            F = wI + wJ
            worst = max(worst, float(np.max(np.abs(_e(F) @ JsI @ _e(-F) - JsJ))))
        return Outcome(worst, len(ctx.points(8)))

    def metric(ctx):
        worst = 0.0
        for x in ctx.points(8):
            g, I, J, K, wI, wJ, wK = _hk_parts(ctx.obj, x)
            worst = max(worst, float(np.max(np.abs(-0.5 * (wI + wJ) @ (I + J) - g))))
        return Outcome(worst, len(ctx.points(8)))

    return [
        CheckSpec("hk_matrices", "hyperkahler", "< 1e-10", "reference", "J_pm = (1/2)[[I +- J, -(w_I^-1 -+ w_J^-1)], [w_I -+ w_J, -(I* +- J*)]]", 1e-10, matrices),
        CheckSpec("hk_factorization", "hyperkahler", "< 1e-10", "reference", "J_pm = e^{+-w_K} (symplectic block) e^{-+w_K}", 1e-10, factor),
        CheckSpec("hk_bfield", "hyperkahler", "< 1e-10", "reference", "e^F J_{sigma_I} e^{-F} = J_{sigma_J} for F = w_I + w_J", 1e-10, bfield),
        CheckSpec("hk_metric", "hyperkahler", "< 1e-10", "reference", "g = -(1/2) F (I + J)", 1e-10, metric),
    ]


def _kahler_matrix_check() -> CheckSpec:
    def run(ctx):
        worst = 0.0
        for x in ctx.points(8):
            xj = jnp.asarray(x)
            g = np.asarray(ctx.obj.g.fn(xj))
            I = np.asarray(ctx.obj.Iplus.fn(xj))
            w = g @ I
            n = g.shape[0]
            z = np.zeros((n, n))
            Jp, Jm = (np.asarray(m) for m in gk_matrices(jnp.asarray(g), jnp.asarray(I), jnp.asarray(I)))
            worst = max(worst, float(np.max(np.abs(Jp - np.block([[I, z], [z, -I.T]])))),
                        float(np.max(np.abs(Jm - np.block([[z, -np.linalg.inv(w)], [w, z]])))))
        return Outcome(worst, len(ctx.points(8)), "J_+ complex type, J_- symplectic type with -w^-1")

    return CheckSpec("kahler_matrices", "gk", "< 1e-10", "reference", "Kähler specialization of the generalized Kähler pair", 1e-10, run)


# ---------------------------------------------------------------------------
# generalized complex, Lie algebra and gerbe checks


def _gc_checks() -> list[CheckSpec]:
    def valid(ctx):
        return _rep_outcome(validate_gc(ctx.obj.J, ctx.obj.twist, ctx.points(8)))

    def types(ctx):
        pts = ctx.points()
        bad = sum(gc_type(ctx.obj.J, p) != 0 for p in pts)
        return Outcome(bad, len(pts))

    def baer(ctx):
        pts = ctx.points(16)
        return Outcome(max(_baer_distance(ctx.obj.J, p) for p in pts), len(pts))

    return [
        CheckSpec("validate_gc", "invariants", "< 1e-8", "elementary", "J^2 = -1, orthogonal, involutive", 1e-8, valid),
        CheckSpec("type", "types", "0", "elementary", "symplectic type", 0.5, types),
        CheckSpec("baer_sum_law", "baer", "< 1e-8", "identity", "Baer sum of L and its conjugate is the graph of iQ/2", 1e-8, baer),
    ]


def _lie_checks() -> list[CheckSpec]:
    def exact(ids):
        return lambda ctx: _rep_outcome(ctx.memo("group", lambda: verify_group_gk(ctx.obj, 1e-12)), ids)

    def inv(ctx):
        from .lie_bihermitian import data_invariants as lie_inv

        return _rep_outcome(lie_inv(ctx.obj))

    return [
        CheckSpec("lie_invariants", "invariants", "0 (exact)", "elementary", "Jacobi, ad-invariance, J orthogonal", 1e-12, inv),
        CheckSpec("group_gk_identity", "lie", "pass", "reference", "bi-invariant generalized Kähler structure on a Lie group", 1e-12, exact(None)),
        CheckSpec("a_identity", "lie", "0 (exact)", "reference", "A = -2A - 3H", 1e-12, exact(["A_identity"])),
        CheckSpec("dc_left_right", "lie", "0 (exact)", "reference", "-d^c_{J_L} w_{J_L} = d^c_{J_R} w_{J_R} = H", 1e-12, exact(["left_identity", "right_identity"])),
    ]


def gauge_forms(doc: Document, cover) -> dict:
    """Gauge potentials from ``form a <chart>`` sections."""
    charts = {c.name: (k, c) for k, c in enumerate(cover.charts)}
    out = {}
    for s in doc.find("form", "a"):
        k, c = charts[s.args[1]]
        out[k] = form_from_section(s, c)
    return out


def _pts_form(form: FormField, pts) -> np.ndarray:
    return np.asarray(jax.vmap(form.fn)(jnp.asarray(pts)))


def gauged_curvature_reference(x):
    """``(dz ^ dbarw / (z conj(w)) + conj) / 4 pi`` in chart ``U0``."""
    dz, dzb = complex_coframe(2)
    z, w = x[0] + 1j * x[1], x[2] + 1j * x[3]
    t = (np.outer(dz[0], dzb[1]) - np.outer(dzb[1], dz[0])) / (z * np.conj(w))
    return (t + np.conj(t)) / (4 * np.pi)


def gauged_lifting_reference(x):
    """``-(dbar K ^ d log w) / 2 pi`` with ``K = log(1 + |z|^2)`` in chart ``U0``."""
    dz, dzb = complex_coframe(2)
    z, w = x[0] + 1j * x[1], x[2] + 1j * x[3]
    dbK = z / (1 + z * np.conj(z)) * dzb[0]
    dlw = dz[1] / w
    return -(np.outer(dbK, dlw) - np.outer(dlw, dbK)) / (2 * np.pi)


def holomorphic_cocycle_reference(x):
    """``(-1/2 pi) (z w)^-1 dz ^ dw`` in chart ``U0``."""
    dz, _ = complex_coframe(2)
    z, w = x[0] + 1j * x[1], x[2] + 1j * x[3]
    return -(np.outer(dz[0], dz[1]) - np.outer(dz[1], dz[0])) / (2 * np.pi * z * w)


def _gerbe_checks() -> list[CheckSpec]:
    def n(ctx):
        return min(len(ctx.sets["generic"]), 32)

    def cover(ctx):
        return _rep_outcome(cover_report(ctx.obj.cover, n(ctx), 0))

    def conn(ctx):
        return _rep_outcome(check_connection(ctx.obj, n(ctx), 0))

    def lift(ctx):
        return _rep_outcome(lifting_check(ctx.obj, n(ctx), 0))

    def pairing(ctx):
        r = pairing_curving_residual(ctx.obj, min(n(ctx), 8), 0)
        k = max(r, key=r.get)
        return Outcome(r[k], min(n(ctx), 8), f"worst: {k}; B^D_i - B^D_j = -F_ij on D")

    def gauged(ctx):
        return ctx.memo("gauged", lambda: gauge_transform(ctx.obj, ctx.gauge))

    def pts01(ctx):
        return ctx.obj.cover.sample((0, 1), n(ctx), 0)

    def fa_type(ctx):
        pts = pts01(ctx)
        I = jnp.asarray(standard_complex_structure(2))
        v = _pts_form(gauged(ctx).F(0, 1), pts)
        r = max(float(np.max(np.abs(type_component(jnp.asarray(q), I, 2, 0) + type_component(jnp.asarray(q), I, 0, 2)))) for q in v)
        return Outcome(r, len(pts))

    def fa_value(ctx):
        pts = pts01(ctx)
        v = _pts_form(gauged(ctx).F(0, 1), pts)
        return Outcome(float(np.max(np.abs(v - np.stack([gauged_curvature_reference(p) for p in pts])))), len(pts))

    def theta_value(ctx):
        pts = ctx.obj.cover.sample((0,), n(ctx), 0)
        v = _pts_form(gauged(ctx).theta[0], pts)
        return Outcome(float(np.max(np.abs(v - np.stack([gauged_lifting_reference(p) for p in pts])))), len(pts))

    def cocycle(ctx):
        pts = pts01(ctx)
        hc = holomorphic_cocycle(ctx.obj, ctx.gauge)[(0, 1)]
        v = _pts_form(hc, pts)
        r = float(np.max(np.abs(v - np.stack([holomorphic_cocycle_reference(p) for p in pts]))))
        res = cocycle_residuals(hc, standard_complex_structure(2), pts)
        return Outcome(max(r, res["closed"], res["type20"]), len(pts))

    def period_f(ctx):
        r = period_integral(ctx.obj.F(0, 1), torus_cycle((0.7, 1.3)), {"n": 24, "tol": 1e-6})
        return Outcome(abs(r.value - 2 * math.pi), r.nodes, f"period = {r.value.real:.12f}")

    def period_rep(c):
        def run(ctx):
            r = period_integral(real_representative(anticanonical_cocycle(c)), sphere3_cycle(1.0), {"n": (4, 64, 4), "tol": 1e-2})
            want = -4 * math.pi ** 2 * complex(c).real
            return Outcome(abs(r.value - want), r.nodes, f"period = {r.value.real:.8f}, quadrature error {r.error:.1e}")

        return run

    checks = [
        CheckSpec("cover", "invariants", "< 1e-10", "elementary", "transition maps are mutually inverse", 1e-10, cover),
        CheckSpec("connection", "gerbe", "< 1e-8", "reference", "gerbe connection cocycle conditions on the Hopf surface", 1e-8, conn),
        CheckSpec("lifting", "gerbe", "< 1e-8", "reference", "lifting forms theta_i glue and are involutive", 1e-8, lift),
        CheckSpec("pairing_curving", "gerbe", "< 1e-8", "identity", "antisymmetric pairing on liftings gives a 1-connection", 1e-8, pairing),
        CheckSpec("gauged_curvature_type", "gerbe", "< 1e-10", "reference", "gauged curvature F^a_01 has no (2,0)+(0,2) part", 1e-10, fa_type),
        CheckSpec("gauged_curvature_value", "gerbe", "(dz0^dbarw0/(z0 conj(w0)) + c.c.)/4pi", "reference", "gauged curvature F^a_01", 1e-10, fa_value),
        CheckSpec("gauged_lifting_value", "gerbe", "-(dbar K ^ d log w0)/2pi", "reference", "gauged lifting theta^a_0", 1e-10, theta_value),
        CheckSpec("holomorphic_cocycle", "gerbe", "(-1/2pi)(z0 w0)^-1 dz0^dw0", "reference", "holomorphic Courant cocycle of the Hopf gerbe", 1e-8, cocycle),
        CheckSpec("period_F01", "periods", "2 pi", "reference", "integral class of F_01 over a fibre torus", 1e-3, period_f),
    ]
    for tag, c in (("1", 1), ("i", 1j), ("1_plus_i", 1 + 1j)):
        checks.append(CheckSpec(f"period_hopf2_c_{tag}", "periods", f"-4 pi^2 Re({c})", "reference",
                                "S^3 period of the real representative of c (x1 x2)^-1 dx1^dx2", 1e-2, period_rep(c)))
    return checks


# ---------------------------------------------------------------------------
# registry


@dataclass(frozen=True)
class Example:
    name: str
    kind: str
    filename: str
    checks: tuple = ()
    description: str = ""


def _gk_standard(count_morita: int = 4) -> list[CheckSpec]:
    return (_gk_invariant_checks() + _gk_core_checks() + _decomposition_checks()
            + _holomorphic_checks() + [_morita_check(count_morita)])


_REGISTRY = {
    "hopf_odd": Example("hopf_odd", "gk", "hopf_odd.gk", tuple(
        _gk_invariant_checks() + [_deck_check()] + _gk_core_checks()
        + _type_checks({"generic": (1, 1), "locus_E1": (1, 1), "locus_E2": (1, 1)})
        + _decomposition_checks() + _poisson_checks() + _holomorphic_checks() + [_morita_check(), _period_h_check()]),
        "odd-type generalized Kähler structure on the Hopf surface"),
    "hopf_even": Example("hopf_even", "gk", "hopf_even.gk", tuple(
        _gk_invariant_checks() + [_deck_check()] + _gk_core_checks()
        + _type_checks({"generic": (0, 0), "locus_E1": (0, 2), "locus_E2": (2, 0)})
        + _decomposition_checks() + _poisson_checks() + _even_hopf_checks() + [_baer_gk_check(), _reduction_cross_check()]
        + _holomorphic_checks() + [_morita_check(), _mc_check()]),
        "even-type generalized Kähler structure on the Hopf surface with type change along x1 = 0 and x2 = 0"),
    "flat_kahler": Example("flat_kahler", "gk", "flat_kahler.gk", tuple(
        _gk_invariant_checks() + _gk_core_checks() + [_kahler_matrix_check()] + _type_checks({"generic": (2, 0)})
        + _decomposition_checks() + [_reduction_cross_check()] + _holomorphic_checks(kahler=True) + [_morita_check(), _mc_check()]),
        "flat Kähler torus"),
    "hyperkahler_torus": Example("hyperkahler_torus", "gk", "hyperkahler_torus.gk", tuple(
        _gk_invariant_checks() + _gk_core_checks() + _type_checks({"generic": (0, 0)}) + _hk_checks()
        + _decomposition_checks() + _holomorphic_checks(kahler=True) + [_morita_check()]),
        "flat hyper-Kähler torus with I_+ = I, I_- = J"),
    "flat_symplectic": Example("flat_symplectic", "gc", "flat_symplectic.gc", tuple(_gc_checks()), "symplectic structure on the flat torus"),
    "su2xu1": Example("su2xu1", "lie", "su2xu1.lie", tuple(_lie_checks()), "bi-invariant structure on su(2) + u(1)"),
    "hopf_gerbe": Example("hopf_gerbe", "gerbe", "hopf.gerbe", tuple(_gerbe_checks()), "Hermitian gerbe on the Hopf surface"),
}

SUITE_ORDER = ("invariants", "integrability", "gk", "types", "decomposition", "poisson", "baer", "reduction",
               "holomorphic", "morita", "hyperkahler", "lie", "gerbe", "periods", "mc")


def list_examples() -> list[str]:
    return list(_REGISTRY)


def example_entry(name: str) -> Example:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise UnknownExampleError(f"unknown example {name!r}; known: {', '.join(_REGISTRY)}") from None


def list_checks(name: str) -> list[tuple[str, str, str]]:
    """``(check id, expected value, provenance)`` for every check bound to ``name``."""
    return [(c.id, c.expected, c.provenance) for c in example_entry(name).checks]


def list_suites(name: str | None = None) -> list[str]:
    names = [name] if name else list(_REGISTRY)
    found = {c.suite for n in names for c in example_entry(n).checks}
    return [s for s in SUITE_ORDER if s in found]


def example_document(name: str) -> Document:
    return parse_document(read_data(example_entry(name).filename))


def export_example(name: str) -> str:
    """Canonical declarative text of a registered example."""
    return dump_document(example_document(name))


@functools.lru_cache(maxsize=None)
def get_example(name: str):
    """Fully constructed instance of a registered example.

    Generalized Kähler instances carry their sample sets (``sampler``) and,
    for the Hopf surfaces, the deck transformation ``x -> 2x``.
    """
    ex = example_entry(name)
    doc = example_document(name)
    obj = load_document(doc)
    if ex.kind == "gk":
        if name.startswith("hopf"):
            obj = dataclasses.replace(obj, sampler=annulus_samples, deck=lambda x: 2 * x)
        else:
            obj = dataclasses.replace(obj, sampler=torus_samples)
    return obj


def sample_sets(obj, count: int, seed: int) -> dict:
    """Named sample sets for an instance; deterministic in ``seed``."""
    if isinstance(obj, GKInstance):
        return obj.samples(count, seed)
    if isinstance(obj, GCStructure):
        return torus_samples(count, seed)
    if isinstance(obj, GerbeCech):
        return {"generic": np.zeros((count, 0))}
    return {}


def make_context(obj, count: int, seed: int, doc: Document | None = None) -> Context:
    """Sample sets plus, for gerbes, the gauge potentials declared in ``doc``."""
    ctx = Context(obj, sample_sets(obj, count, seed))
    if isinstance(obj, GerbeCech) and doc is not None:
        ctx.gauge = gauge_forms(doc, obj.cover)
    return ctx


def generic_checks(obj) -> tuple:
    """Checks applicable to an instance loaded from a file (no expected example values)."""
    if isinstance(obj, GKInstance):
        return tuple(_gk_standard())
    if isinstance(obj, GCStructure):
        return tuple(c for c in _gc_checks() if c.id != "type")
    if isinstance(obj, LieAlgebraData):
        return tuple(c for c in _lie_checks() if c.id in ("lie_invariants", "group_gk_identity"))
    if isinstance(obj, GerbeCech):
        return tuple(c for c in _gerbe_checks() if c.id in ("cover", "connection", "lifting", "pairing_curving"))
    raise TypeError(f"no checks for {type(obj).__name__}")
