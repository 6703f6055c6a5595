"""Čech calculus for gerbes with connection on finite covers.

Each chart carries real coordinates, optionally grouped in pairs into complex
coordinates ``z = u + i v`` (the complex structure is then the standard one).
Local data live in the coordinates of their first chart index: ``A[i, j]``
and ``F[i, j] = dA[i, j]`` on ``U_i``, ``g[i, j, k]`` on ``U_i``.  Overlap
comparisons pull every term to the chart of the lowest index before
subtracting.

Conventions fixed here:

* ``B_j - B_i = dA_ij`` and ``H = dB_i``;
* ``A_ij + A_jk - A_ik = KAPPA * d log g_ijk`` with ``KAPPA = -i``, so real
  connection forms go with unitary ``g``;
* a lifting of ``T_{0,1}`` is ``D_i = {X + i_X theta_i : X in T_{0,1}}`` and the
  gluing ``e^{F_ij} D_i = D_j`` reads ``theta_j - theta_i = F_ij^{(1,1)+(0,2)}``.

The module also contains the declarative text format used to store covers,
gerbe data and the other built-in instances (see :func:`parse_document`).
"""
from __future__ import annotations

import ast
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.stats import qmc

from .core_tensor import (
    Field,
    FormField,
    Report,
    complex_coframe,
    complex_frame,
    d,
    pullback,
    standard_complex_structure,
    type_component,
)
from .courant import DiracFrame, GSection, involutivity_residual, isotropy_residual

KAPPA = -1j


class DocumentError(ValueError):
    """Malformed declarative input; carries 1-based line and column."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(f"line {line}, column {col}: {message}")
        self.message = message
        self.line = line
        self.col = col


class CoverError(ValueError):
    pass


class LiftingError(ValueError):
    pass


class QuadratureError(ValueError):
    pass


# ---------------------------------------------------------------------------
# expression grammar


_FUNCS = {"log": jnp.log, "conj": jnp.conj}
_CONSTS = {"pi": math.pi, "i": 1j}
_BINOPS = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.Div: lambda a, b: a / b,
    ast.Pow: lambda a, b: a ** b,
}


@dataclass(frozen=True)
class Expr:
    """A parsed coordinate expression; ``fn(env)`` evaluates it on a dict of named values."""

    text: str
    fn: Callable = field(compare=False, repr=False)
    names: frozenset = frozenset()

    def __call__(self, env):
        return self.fn(env)


def parse_expression(text: str, names, line: int = 0, col: int = 0) -> Expr:
    """Compile ``text`` in the grammar: rationals, names, ``+ - * / ^ **``, ``log``, ``conj``, ``pi``, ``i``.

    ``col`` is the 1-based column where ``text`` starts; errors report the
    column of the offending token.
    """
    names = set(names)
    body = text.strip()
    # '^' is a power with the usual precedence; map columns back to the original text
    carets = [k for k, ch in enumerate(body) if ch == "^"]
    src = body.replace("^", "**")

    def orig(c):
        return c - sum(1 for k in carets if k + (carets.index(k)) < c)

    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as e:
        raise DocumentError(f"syntax error in expression {body!r}", line, col + orig(max((e.offset or 1) - 1, 0))) from None
    lead = len(text) - len(text.lstrip())

    def err(node, msg):
        raise DocumentError(msg, line, col + lead + orig(getattr(node, "col_offset", 0)))

    used = set()

    def build(node):
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                err(node, f"unsupported literal {node.value!r}")
            v = node.value
            return lambda env: v
        if isinstance(node, ast.Name):
            if node.id in names:
                used.add(node.id)
                key = node.id
                return lambda env: env[key]
            if node.id in _CONSTS:
                v = _CONSTS[node.id]
                return lambda env: v
            err(node, f"unknown name {node.id!r}")
        if isinstance(node, ast.BinOp):
            op = _BINOPS.get(type(node.op))
            if op is None:
                err(node, f"unsupported operator {type(node.op).__name__}")
            a, b = build(node.left), build(node.right)
            return lambda env: op(a(env), b(env))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            a = build(node.operand)
            s = -1 if isinstance(node.op, ast.USub) else 1
            return lambda env: s * a(env)
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS or len(node.args) != 1 or node.keywords:
                err(node, "only log(x) and conj(x) calls are allowed")
            f = _FUNCS[node.func.id]
            a = build(node.args[0])
            return lambda env: f(a(env) + 0j) if f is jnp.log else f(a(env))
        err(node, f"unsupported syntax {type(node).__name__}")

    fn = build(tree)
    return Expr(text.strip(), fn, frozenset(used))


# ---------------------------------------------------------------------------
# declarative documents


@dataclass(frozen=True)
class Entry:
    key: str
    value: str
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Section:
    kind: str
    args: tuple[str, ...]
    entries: tuple[Entry, ...]
    line: int = field(default=0, compare=False)

    def get(self, key: str, default=None):
        for e in self.entries:
            if e.key == key:
                return e
        return default


@dataclass(frozen=True)
class Document:
    sections: tuple[Section, ...]

    def find(self, kind: str, *args) -> list[Section]:
        return [s for s in self.sections if s.kind == kind and s.args[: len(args)] == tuple(args)]

    def meta(self, key: str, default: str | None = None) -> str | None:
        for s in self.find("meta"):
            e = s.get(key)
            if e is not None:
                return e.value
        return default


SECTION_KINDS = ("meta", "chart", "overlap", "form", "metric", "structure", "scalar", "algebra")


def parse_document(text: str) -> Document:
    """Parse the sectioned text format.

    Lines are ``[kind arg ...]`` section headers or ``key = value`` entries;
    ``#`` starts a comment.  Section kinds: ``meta``, ``chart``, ``overlap``,
    ``form``, ``metric``, ``structure``, ``scalar``, ``algebra``.
    """
    sections = []
    cur = None
    for ln, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].rstrip()
        if not body.strip():
            continue
        stripped = body.lstrip()
        c0 = len(body) - len(stripped) + 1
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise DocumentError("unterminated section header", ln, c0 + len(stripped))
            parts = stripped[1:-1].split()
            if not parts:
                raise DocumentError("empty section header", ln, c0)
            if parts[0] not in SECTION_KINDS:
                raise DocumentError(f"unknown section kind {parts[0]!r}", ln, c0 + 1)
            cur = [parts[0], tuple(parts[1:]), [], ln]
            sections.append(cur)
            continue
        if cur is None:
            raise DocumentError("entry outside of any section", ln, c0)
        if "=" not in stripped:
            raise DocumentError("expected 'key = value'", ln, c0)
        key, value = stripped.split("=", 1)
        if not key.strip():
            raise DocumentError("empty key", ln, c0)
        vcol = c0 + len(key) + 1 + (len(value) - len(value.lstrip()))
        cur[2].append(Entry(key.strip(), value.strip(), ln, vcol))
    return Document(tuple(Section(k, a, tuple(e), ln) for k, a, e, ln in sections))


def dump_document(doc: Document) -> str:
    """Canonical text of ``doc``; ``parse_document(dump_document(doc)) == doc``."""
    out = []
    for s in doc.sections:
        if out:
            out.append("")
        out.append("[" + " ".join((s.kind,) + s.args) + "]")
        out.extend(f"{e.key} = {e.value}" for e in s.entries)
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# charts and covers


@dataclass(frozen=True)
class ChartSpec:
    """Chart with real coordinate names, optional complex pairs and a sampling box."""

    name: str
    coords: tuple[str, ...]
    complex: tuple[str, ...] = ()
    nonzero: tuple[Expr, ...] = ()
    box: tuple[float, float] = (-2.0, 2.0)

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def names(self) -> tuple[str, ...]:
        return self.coords + self.complex

    def env(self, x) -> dict:
        env = {c: x[k] for k, c in enumerate(self.coords)}
        for j, z in enumerate(self.complex):
            env[z] = x[2 * j] + 1j * x[2 * j + 1]
        return env

    def I(self) -> np.ndarray:
        if not self.complex:
            raise LiftingError(f"chart {self.name!r} declares no complex coordinates")
        return standard_complex_structure(len(self.complex))

    def in_domain(self, x, margin: float = 0.0) -> bool:
        env = self.env(np.asarray(x, dtype=float))
        return all(abs(complex(e(env))) > margin for e in self.nonzero)

    def basis_1form(self, label: str) -> np.ndarray:
        """Components of ``d<name>`` or ``dbar<name>``."""
        dz, dzb = complex_coframe(len(self.complex)) if self.complex else (None, None)
        if label.startswith("dbar") and label[4:] in self.complex:
            return dzb[self.complex.index(label[4:])]
        if label.startswith("d") and label[1:] in self.complex:
            return dz[self.complex.index(label[1:])]
        if label.startswith("d") and label[1:] in self.coords:
            return np.eye(self.dim)[self.coords.index(label[1:])].astype(complex)
        raise KeyError(label)


@dataclass(frozen=True)
class CechCover:
    """Charts and transition maps ``phi[i, j]`` from ``U_i`` coordinates to ``U_j`` coordinates."""

    charts: tuple[ChartSpec, ...]
    transitions: dict = field(default_factory=dict)
    overlap_nonzero: dict = field(default_factory=dict)

    def index(self, name) -> int:
        if isinstance(name, int):
            return name
        for k, c in enumerate(self.charts):
            if c.name == name:
                return k
        raise CoverError(f"unknown chart {name!r}")

    def phi(self, i: int, j: int) -> Callable:
        if i == j:
            return lambda x: x
        if (i, j) not in self.transitions:
            raise CoverError(f"no transition from chart {i} to chart {j}")
        return self.transitions[(i, j)]

    def pairs(self) -> list[tuple[int, int]]:
        return sorted(p for p in self.transitions if p[0] < p[1])

    def triples(self) -> list[tuple[int, int, int]]:
        n = len(self.charts)
        return [t for t in itertools.combinations(range(n), 3)
                if all(p in self.transitions for p in itertools.combinations(t, 2))]

    def quadruples(self) -> list[tuple[int, ...]]:
        n = len(self.charts)
        return [q for q in itertools.combinations(range(n), 4)
                if all(p in self.transitions for p in itertools.combinations(q, 2))]

    def in_overlap(self, idx, x, margin: float = 0.0) -> bool:
        i = idx[0]
        if not self.charts[i].in_domain(x, margin):
            return False
        for j in idx[1:]:
            env = self.charts[i].env(np.asarray(x, dtype=float))
            if any(abs(complex(e(env))) <= margin for e in self.overlap_nonzero.get((i, j), ())):
                return False
            y = np.asarray(self.phi(i, j)(jnp.asarray(x)))
            if not np.all(np.isfinite(y)) or not self.charts[j].in_domain(y, margin):
                return False
        return True

    def sample(self, idx, count: int, seed: int = 0, margin: float = 0.2) -> np.ndarray:
        """Seeded Halton points of ``U_i`` inside the overlap with the other charts in ``idx``."""
        idx = tuple(idx) if isinstance(idx, (tuple, list)) else (idx,)
        chart = self.charts[idx[0]]
        lo, hi = chart.box
        eng = qmc.Halton(chart.dim, seed=seed)
        out = []
        for _ in range(50):
            pts = lo + (hi - lo) * eng.random(max(4 * count, 64))
            out.extend(p for p in pts if self.in_overlap(idx, p, margin))
            if len(out) >= count:
                return np.asarray(out[:count])
        raise CoverError(f"could not sample {count} points in overlap {idx}")


def cover_report(cover: CechCover, samples: int = 16, seed: int = 0, tol: float = 1e-10) -> Report:
    """Mutual inverse and triple cocycle residuals of the transition maps."""
    rep = Report("cover")
    for i, j in cover.pairs():
        if (j, i) not in cover.transitions:
            rep.add(f"inverse_{i}{j}", np.inf, tol, note="missing reverse transition")
            continue
        pts = cover.sample((i, j), samples, seed)
        fwd, bwd = cover.phi(i, j), cover.phi(j, i)
        res = max(float(np.max(np.abs(np.asarray(bwd(fwd(jnp.asarray(p)))) - p))) for p in pts)
        rep.add(f"inverse_{i}{j}", res, tol, len(pts))
    for i, j, k in cover.triples():
        pts = cover.sample((i, j, k), samples, seed)
        res = max(float(np.max(np.abs(np.asarray(cover.phi(j, k)(cover.phi(i, j)(jnp.asarray(p)))) - np.asarray(cover.phi(i, k)(jnp.asarray(p))))))
                  for p in pts)
        rep.add(f"cocycle_{i}{j}{k}", res, tol, len(pts))
    return rep


# ---------------------------------------------------------------------------
# gerbe data


@dataclass(frozen=True)
class GerbeCech:
    """``{g_ijk, A_ij, B_i}`` with optional lifting forms ``theta_i``.

    ``g`` maps index triples to complex scalar fields on ``U_i``; ``A`` maps
    pairs to 1-forms on ``U_i``; ``B`` and ``theta`` map chart indices to
    2-forms.  Missing ``g`` entries are 1 and missing ``A`` entries are 0.
    """

    cover: CechCover
    B: dict
    A: dict = field(default_factory=dict)
    g: dict = field(default_factory=dict)
    theta: dict | None = None
    hermitian: bool = True
    name: str = ""

    def dim(self) -> int:
        return self.cover.charts[0].dim

    def A_form(self, i: int, j: int) -> FormField:
        if (i, j) in self.A:
            return self.A[(i, j)]
        if (j, i) in self.A:
            # A_ji lives on U_j; A_ij = -A_ji pulled to U_i
            return pullback(self.A[(j, i)], self.cover.phi(i, j), self.dim()).scale(-1.0)
        return _zero(1, self.dim())

    def g_field(self, i: int, j: int, k: int) -> Field:
        return self.g.get((i, j, k), Field(lambda x: jnp.ones((), dtype=complex), self.dim()))

    def F(self, i: int, j: int) -> FormField:
        return d(self.A_form(i, j))

    def H(self, i: int) -> FormField:
        return d(self.B[i])


def _zero(degree: int, dim: int) -> FormField:
    return FormField(lambda x: jnp.zeros((dim,) * degree, dtype=complex) + 0 * x[0], dim, degree=degree)


def _pull(form: FormField, cover: CechCover, src: int, dst: int) -> FormField:
    """Express a form living on ``U_src`` in the coordinates of ``U_dst``."""
    return form if src == dst else pullback(form, cover.phi(dst, src), form.dim)


def _max_diff(f1: FormField, f2: FormField, pts) -> float:
    a = np.asarray(jax.vmap(f1.fn)(jnp.asarray(pts)))
    b = np.asarray(jax.vmap(f2.fn)(jnp.asarray(pts)))
    return float(np.max(np.abs(a - b)))


def dlog(gf: Field) -> FormField:
    """``d log g`` of a complex scalar field."""
    jac = jax.jacfwd(lambda x: gf.fn(x).astype(complex))
    return FormField(lambda x: jac(x) / gf.fn(x), gf.dim, gf.jet_order - 1, degree=1)


def _skip(rep: Report, id: str, note: str):
    rep.add(id, 0.0, 0.0, 0, passed=True, note="skipped: " + note)


def check_connection(data: GerbeCech, samples: int = 32, seed: int = 0, tol: float = 1e-8) -> Report:
    """Residuals of the Čech compatibilities of ``{g, A, B}``.

    ``samples`` points are drawn in every overlap (seeded Halton).
    """
    cov = data.cover
    rep = Report(f"connection:{data.name}")
    quads = cov.quadruples()
    if not quads:
        _skip(rep, "delta_g", "no quadruple overlaps")
    for i, j, k, l in quads:
        pts = cov.sample((i, j, k, l), samples, seed)

        def prod(x, i=i, j=j, k=k, l=l):
            gjkl = data.g_field(j, k, l).fn(cov.phi(i, j)(x))
            return gjkl / data.g_field(i, k, l).fn(x) * data.g_field(i, j, l).fn(x) / data.g_field(i, j, k).fn(x)

        vals = np.asarray(jax.vmap(prod)(jnp.asarray(pts)))
        rep.add(f"delta_g_{i}{j}{k}{l}", float(np.max(np.abs(vals - 1))), tol, len(pts))
    triples = cov.triples()
    if not triples:
        _skip(rep, "A_cocycle", "no triple overlaps")
    for i, j, k in triples:
        pts = cov.sample((i, j, k), samples, seed)
        lhs = data.A_form(i, j) + _pull(data.A_form(j, k), cov, j, i) - data.A_form(i, k)
        rhs = dlog(data.g_field(i, j, k)).scale(KAPPA)
        rep.add(f"A_cocycle_{i}{j}{k}", _max_diff(lhs, rhs, pts), tol, len(pts), note="A_ij + A_jk - A_ik = kappa dlog g_ijk")
        if data.hermitian:
            mod = np.abs(np.asarray(jax.vmap(data.g_field(i, j, k).fn)(jnp.asarray(pts))))
            rep.add(f"unitary_{i}{j}{k}", float(np.max(np.abs(mod - 1))), tol, len(pts))
    for i, j in cov.pairs():
        pts = cov.sample((i, j), samples, seed)
        diff = _pull(data.B[j], cov, j, i) - data.B[i]
        rep.add(f"curving_{i}{j}", _max_diff(diff, data.F(i, j), pts), tol, len(pts), note="B_j - B_i = dA_ij")
        rep.add(f"H_global_{i}{j}", _max_diff(_pull(data.H(j), cov, j, i), data.H(i), pts), tol, len(pts))
        if data.hermitian:
            Fv = np.asarray(jax.vmap(data.F(i, j).fn)(jnp.asarray(pts)))
            rep.add(f"F_real_{i}{j}", float(np.max(np.abs(np.imag(Fv)))), tol, len(pts))
    for i in range(len(cov.charts)):
        pts = cov.sample((i,), samples, seed)
        dH = np.asarray(jax.vmap(d(data.H(i)).fn)(jnp.asarray(pts)))
        rep.add(f"dH_{i}", float(np.max(np.abs(dH))), tol, len(pts))
    return rep


def lift_part(form: FormField, I) -> FormField:
    """``(1,1) + (0,2)`` part of a 2-form for a constant complex structure ``I``."""
    I = jnp.asarray(I)
    return FormField(lambda x: type_component(form.fn(x), I, 1, 1) + type_component(form.fn(x), I, 0, 2), form.dim,
                     form.jet_order, degree=2)


def lifting_check(data: GerbeCech, samples: int = 32, seed: int = 0, tol: float = 1e-8) -> Report:
    """Gluing and involutivity residuals of the lifting forms ``theta_i``."""
    if not data.theta:
        raise LiftingError("gerbe data carries no lifting forms")
    cov = data.cover
    rep = Report(f"lifting:{data.name}")
    for i, j in cov.pairs():
        pts = cov.sample((i, j), samples, seed)
        I = cov.charts[i].I()
        diff = _pull(data.theta[j], cov, j, i) - data.theta[i]
        rep.add(f"gluing_{i}{j}", _max_diff(diff, lift_part(data.F(i, j), I), pts), tol, len(pts),
                note="theta_j - theta_i = F_ij^{(1,1)+(0,2)}")
    for i in range(len(cov.charts)):
        pts = cov.sample((i,), samples, seed)
        I = jnp.asarray(cov.charts[i].I())
        dth = d(data.theta[i])
        vals = jax.vmap(lambda x: type_component(dth.fn(x), I, 1, 2) + type_component(dth.fn(x), I, 0, 3))(jnp.asarray(pts))
        rep.add(f"involutive_{i}", float(np.max(np.abs(np.asarray(vals)))), tol, len(pts), note="(d theta_i)^{(1,2)+(0,3)} = 0")
    return rep


def gauge_transform(data: GerbeCech, alpha: dict) -> GerbeCech:
    """``A_ij + alpha_i - alpha_j``, ``B_i - d alpha_i`` and ``theta_i - (d alpha_i)^{(1,1)+(0,2)}``."""
    cov = data.cover
    n = data.dim()
    al = {i: alpha.get(i, _zero(1, n)) for i in range(len(cov.charts))}
    A = {(i, j): data.A_form(i, j) + al[i] - _pull(al[j], cov, j, i) for i, j in cov.pairs()}
    B = {i: data.B[i] - d(al[i]) for i in data.B}
    theta = None
    if data.theta:
        theta = {i: data.theta[i] - lift_part(d(al[i]), cov.charts[i].I()) for i in data.theta}
    return GerbeCech(cov, B, A, dict(data.g), theta, data.hermitian, data.name + "^a")


def _type20_part(form: FormField, I) -> FormField:
    I = jnp.asarray(I)
    return FormField(lambda x: type_component(form.fn(x), I, 2, 0), form.dim, form.jet_order, degree=2)


def _type10_part(form: FormField, I) -> FormField:
    I = jnp.asarray(I)
    return FormField(lambda x: type_component(form.fn(x), I, 1, 0), form.dim, form.jet_order, degree=1)


def holomorphic_cocycle(data: GerbeCech, a: dict, samples: int = 16, seed: int = 0, tol: float = 1e-8) -> dict:
    """Holomorphic (2,0) gluing forms of the reduced holomorphic Courant algebroid.

    For each overlap ``(i, j)`` returns, on ``U_i``,
    ``(B_j^{2,0} + del a_j^{1,0}) - (B_i^{2,0} + del a_i^{1,0})`` built from
    the curvings of ``data`` and the gauge potentials ``a``.  The gauged
    lifting must pass :func:`lifting_check`.
    """
    gauged = gauge_transform(data, a)
    rep = lifting_check(gauged, samples, seed, tol)
    if not rep.passed:
        raise LiftingError(f"gauged lifting fails:\n{rep!r}")
    cov = data.cover
    n = data.dim()
    out = {}
    for i, j in cov.pairs():
        I = cov.charts[i].I()
        Ij = cov.charts[j].I()

        def piece(k, Ik):
            ak = a.get(k, _zero(1, n))
            return _type20_part(data.B[k], Ik) + _type20_part(d(_type10_part(ak, Ik)), Ik)

        out[(i, j)] = _pull(piece(j, Ij), cov, j, i) - piece(i, I)
    return out


def cocycle_residuals(form: FormField, I, pts) -> dict:
    """``d``-closedness and non-(2,0) content of a 2-form at ``pts``."""
    I = jnp.asarray(I)
    pts = jnp.asarray(np.atleast_2d(pts))
    dv = np.asarray(jax.vmap(d(form).fn)(pts))
    other = np.asarray(jax.vmap(lambda x: form.fn(x) - type_component(form.fn(x), I, 2, 0))(pts))
    return {"closed": float(np.max(np.abs(dv))), "type20": float(np.max(np.abs(other)))}


# ---------------------------------------------------------------------------
# antisymmetric pairing on liftings


def lifting_frame(theta: FormField, m: int) -> DiracFrame:
    """Frame ``X + i_X theta`` over the ``d/dzbar`` basis of ``T_{0,1}``."""
    _, vzb = complex_frame(m)
    n = 2 * m

    def col(c):
        X = jnp.asarray(vzb[c])
        return GSection(lambda x: jnp.concatenate([X.astype(complex), theta.fn(x).T @ X]), n)

    return DiracFrame(tuple(col(c) for c in range(m)), m, None, "lifting")


def antisymmetric_pairing(M) -> np.ndarray:
    """``<u_a, u_b>_- = (xi_a(Y_b) - eta_b(X_a)) / 2`` for columns ``u = (X, xi)``."""
    M = np.asarray(M)
    n = M.shape[0] // 2
    V, C = M[:n], M[n:]
    t = C.T @ V
    return 0.5 * (t - t.T)


def pairing_curving_residual(data: GerbeCech, samples: int = 16, seed: int = 0) -> dict:
    """Residuals of ``B^D_i - B^D_j + F_ij|_D`` for the antisymmetric-pairing curving.

    Also returns isotropy and involutivity residuals of the local lifting
    frames in the untwisted ``T + T*`` of each chart.
    """
    if not data.theta:
        raise LiftingError("gerbe data carries no lifting forms")
    cov = data.cover
    m = len(cov.charts[0].complex)
    _, vzb = complex_frame(m)
    Xb = np.asarray(vzb).T
    out = {"pairing": 0.0, "isotropy": 0.0, "involutive": 0.0}
    for i, j in cov.pairs():
        pts = cov.sample((i, j), samples, seed)
        Fi = lifting_frame(data.theta[i], m)
        Fj = lifting_frame(_pull(data.theta[j], cov, j, i), m)
        Fv = np.asarray(jax.vmap(data.F(i, j).fn)(jnp.asarray(pts)))
        for s, p in enumerate(pts):
            Bi = antisymmetric_pairing(Fi.at(p))
            Bj = antisymmetric_pairing(Fj.at(p))
            FD = Xb.T @ Fv[s] @ Xb
            out["pairing"] = max(out["pairing"], float(np.max(np.abs(Bi - Bj + FD))))
    for i in range(len(cov.charts)):
        pts = cov.sample((i,), samples, seed)
        F = lifting_frame(data.theta[i], m)
        out["isotropy"] = max(out["isotropy"], isotropy_residual(F, pts))
        out["involutive"] = max(out["involutive"], involutivity_residual(F, pts))
    return out


# ---------------------------------------------------------------------------
# periods


@dataclass(frozen=True)
class Cycle:
    """Parametrized cycle ``param -> chart coordinates`` over a box, with orientation sign."""

    map: Callable
    bounds: tuple[tuple[float, float], ...]
    orientation: int = 1
    name: str = ""

    @property
    def dim(self) -> int:
        return len(self.bounds)


def torus_cycle(radii=(1.0, 1.0), m: int = 2) -> Cycle:
    """``|z_j| = r_j`` in ``C^m`` oriented by the angles."""
    def fmap(t):
        return jnp.concatenate([jnp.array([r * jnp.cos(t[j]), r * jnp.sin(t[j])]) for j, r in enumerate(radii)])
    return Cycle(fmap, tuple((0.0, 2 * math.pi) for _ in range(m)), 1, "torus")


def sphere3_cycle(radius: float = 1.0) -> Cycle:
    """``S^3`` of given radius in ``C^2``, oriented as the boundary of the ball.

    Parameters ``(a, e, b)`` give ``(r cos e e^{ia}, r sin e e^{ib})``.
    """
    def fmap(t):
        a, e, b = t[0], t[1], t[2]
        return radius * jnp.array([jnp.cos(e) * jnp.cos(a), jnp.cos(e) * jnp.sin(a), jnp.sin(e) * jnp.cos(b), jnp.sin(e) * jnp.sin(b)])
    return Cycle(fmap, ((0.0, 2 * math.pi), (0.0, math.pi / 2), (0.0, 2 * math.pi)), 1, "S3")


def _integrand(omega: FormField, cycle: Cycle):
    jac = jax.jacfwd(cycle.map)

    def fn(t):
        a = omega.fn(cycle.map(t))
        J = jac(t)
        for k in range(omega.degree):
            a = jnp.tensordot(J[:, k], a, axes=(0, 0))
        return a

    return fn


def _gauss(fn, bounds, n):
    grids, weights = [], []
    for (lo, hi), nk in zip(bounds, n):
        x, w = leggauss(nk)
        grids.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
        weights.append(0.5 * (hi - lo) * w)
    T = np.stack(np.meshgrid(*grids, indexing="ij"), -1).reshape(-1, len(bounds))
    W = np.prod(np.stack(np.meshgrid(*weights, indexing="ij"), -1).reshape(-1, len(bounds)), axis=1)
    vals = np.asarray(jax.vmap(fn)(jnp.asarray(T)))
    return complex(np.sum(W * vals))


@dataclass(frozen=True)
class PeriodResult:
    value: complex
    error: float
    method: str
    nodes: int


def period_integral(omega: FormField, cycle: Cycle, quadrature: dict | None = None) -> PeriodResult:
    """Integral of a ``k``-form over a parametrized ``k``-cycle.

    ``quadrature`` keys: ``method`` (``"gauss"`` or ``"mc"``), ``n`` (points
    per axis for Gauss-Legendre, an int or one int per axis; total samples
    for Monte Carlo), ``tol``
    (maximum accepted error estimate), ``seed`` (Monte Carlo).  The Gauss
    error estimate is ``|I_2n - I_n|`` and the value returned is ``I_2n``;
    the Monte Carlo estimate is three standard errors.
    """
    q = {"method": "gauss", "n": 24, "tol": 1e-6, "seed": 0}
    q.update(quadrature or {})
    if omega.degree != cycle.dim:
        raise ValueError(f"form of degree {omega.degree} on a {cycle.dim}-cycle")
    fn = _integrand(omega, cycle)
    if q["method"] == "gauss":
        n = (q["n"],) * cycle.dim if np.isscalar(q["n"]) else tuple(q["n"])
        coarse = _gauss(fn, cycle.bounds, n)
        fine = _gauss(fn, cycle.bounds, tuple(2 * k for k in n))
        val, err, nodes = fine, abs(fine - coarse), int(np.prod([2 * k for k in n]))
    elif q["method"] == "mc":
        rng = np.random.default_rng(q["seed"])
        lo = np.array([b[0] for b in cycle.bounds])
        hi = np.array([b[1] for b in cycle.bounds])
        T = lo + (hi - lo) * rng.random((q["n"], cycle.dim))
        vals = np.asarray(jax.vmap(fn)(jnp.asarray(T))) * np.prod(hi - lo)
        val, err, nodes = complex(vals.mean()), float(3 * vals.std() / np.sqrt(len(vals))), q["n"]
    else:
        raise ValueError(f"unknown quadrature method {q['method']!r}")
    if err > q["tol"]:
        raise QuadratureError(f"quadrature error estimate {err:.3e} exceeds {q['tol']:g}")
    return PeriodResult(cycle.orientation * val, float(err), q["method"], nodes)


# ---------------------------------------------------------------------------
# two-chart cover of C^2 \ 0 and its meromorphic cocycles


def smoothstep(t, lo: float = 0.25, hi: float = 0.75):
    """Smooth step, 0 below ``lo`` and 1 above ``hi`` (ratio of ``exp(-1/s)`` bumps)."""
    s = jnp.clip((t - lo) / (hi - lo), 0.0, 1.0)

    def f(u):
        safe = jnp.where(u > 0, u, 1.0)
        return jnp.where(u > 0, jnp.exp(-1.0 / safe), 0.0)

    return f(s) / (f(s) + f(1.0 - s))


def anticanonical_cocycle(c: complex) -> FormField:
    """``c (x_1 x_2)^{-1} dx_1 ^ dx_2`` on ``{x_1 x_2 != 0}``."""
    dz, _ = complex_coframe(2)
    w = np.outer(dz[0], dz[1]) - np.outer(dz[1], dz[0])
    W = jnp.asarray(w)

    def fn(x):
        z1, z2 = x[0] + 1j * x[1], x[2] + 1j * x[3]
        return c / (z1 * z2) * W

    return FormField(fn, 4, degree=2)


def real_representative(cocycle: FormField, step: Callable | None = None) -> FormField:
    """Global closed 3-form ``d(rho_0 beta)`` with ``beta = (B + conj B)/2``.

    ``rho_0 + rho_1 = 1`` is a partition of unity for the cover
    ``U_0 = {x_1 != 0}``, ``U_1 = {x_2 != 0}`` with ``rho_0`` a function of
    ``|x_1|^2 / R^2``; the curvings ``B_0 = -rho_1 beta``, ``B_1 = rho_0 beta``
    satisfy ``B_1 - B_0 = beta``.
    """
    step = step or smoothstep

    def rho0(x):
        return step((x[0] ** 2 + x[1] ** 2) / jnp.sum(x ** 2))

    B1 = FormField(lambda x: rho0(x) * jnp.real(cocycle.fn(x)), 4, degree=2)
    return d(B1)


# ---------------------------------------------------------------------------
# loading documents


def _truthy(entry: Entry | None) -> bool:
    return entry is not None and entry.value.lower() in ("1", "true", "yes")


def _split_list(entry: Entry) -> list[tuple[str, int]]:
    """Comma separated items with their 1-based columns."""
    out, col = [], entry.col
    for part in entry.value.split(","):
        lead = len(part) - len(part.lstrip())
        out.append((part.strip(), col + lead))
        col += len(part) + 1
    return out


def chart_from_section(sec: Section) -> ChartSpec:
    if len(sec.args) != 1:
        raise DocumentError("chart section takes one name", sec.line, 1)
    e = sec.get("coords")
    if e is None:
        raise DocumentError(f"chart {sec.args[0]!r} has no coords", sec.line, 1)
    coords = tuple(e.value.split())
    cx = tuple(sec.get("complex").value.split()) if sec.get("complex") else ()
    if cx and 2 * len(cx) != len(coords):
        ce = sec.get("complex")
        raise DocumentError("complex coordinates must pair up the real coordinates", ce.line, ce.col)
    names = coords + cx
    nz = ()
    if sec.get("nonzero"):
        nz = tuple(parse_expression(t, names, sec.get("nonzero").line, c) for t, c in _split_list(sec.get("nonzero")))
    box = (-2.0, 2.0)
    if sec.get("box"):
        b = sec.get("box")
        try:
            lo, hi = (float(v) for v in b.value.split())
        except ValueError:
            raise DocumentError("box expects two numbers", b.line, b.col) from None
        box = (lo, hi)
    return ChartSpec(sec.args[0], coords, cx, nz, box)


def _coords_fn(exprs, chart: ChartSpec, complex_out: bool):
    def fn(x):
        env = chart.env(x)
        vals = [e(env) for e in exprs]
        if complex_out:
            return jnp.stack([p for v in vals for p in (jnp.real(v + 0j), jnp.imag(v + 0j))])
        return jnp.stack([jnp.real(v + 0j) for v in vals])
    return fn


def cover_from_document(doc: Document) -> CechCover:
    charts = tuple(chart_from_section(s) for s in doc.find("chart"))
    if not charts:
        raise DocumentError("document declares no charts", 1, 1)
    names = [c.name for c in charts]
    trans, nonzero = {}, {}
    for s in doc.find("overlap"):
        if len(s.args) != 2 or any(a not in names for a in s.args):
            raise DocumentError(f"overlap needs two declared charts, got {' '.join(s.args)!r}", s.line, 1)
        i, j = names.index(s.args[0]), names.index(s.args[1])
        src, dst = charts[i], charts[j]
        if s.get("complex_map"):
            e = s.get("complex_map")
            items = _split_list(e)
            if len(items) != len(dst.complex):
                raise DocumentError("complex_map length differs from target complex dimension", e.line, e.col)
            exprs = [parse_expression(t, src.names, e.line, c) for t, c in items]
            trans[(i, j)] = _coords_fn(exprs, src, True)
        elif s.get("map"):
            e = s.get("map")
            items = _split_list(e)
            if len(items) != dst.dim:
                raise DocumentError("map length differs from target dimension", e.line, e.col)
            exprs = [parse_expression(t, src.names, e.line, c) for t, c in items]
            trans[(i, j)] = _coords_fn(exprs, src, False)
        else:
            raise DocumentError("overlap needs map or complex_map", s.line, 1)
        if s.get("nonzero"):
            e = s.get("nonzero")
            nonzero[(i, j)] = tuple(parse_expression(t, src.names, e.line, c) for t, c in _split_list(e))
    return CechCover(charts, trans, nonzero)


def _basis_tensor(chart: ChartSpec, key: Entry, sep: str) -> np.ndarray:
    labels = [t.strip() for t in key.key.split(sep)]
    vecs = []
    for lab in labels:
        try:
            vecs.append(chart.basis_1form(lab))
        except KeyError:
            raise DocumentError(f"unknown basis 1-form {lab!r}", key.line, 1) from None
    t = vecs[0]
    for v in vecs[1:]:
        t = np.multiply.outer(t, v)
    k = len(vecs)
    if sep == "^":
        out = np.zeros_like(t)
        for perm in itertools.permutations(range(k)):
            sign = np.linalg.det(np.eye(k)[list(perm)])
            out = out + sign * np.transpose(t, perm)
        return out
    return 0.5 * (t + t.T) if k == 2 else t


def _chart_for(doc_charts: dict, sec: Section, pos: int) -> ChartSpec:
    if len(sec.args) <= pos or sec.args[pos] not in doc_charts:
        raise DocumentError(f"section [{sec.kind} {' '.join(sec.args)}] names no declared chart", sec.line, 1)
    return doc_charts[sec.args[pos]]


_RESERVED = ("real", "kind", "degree")


def form_from_section(sec: Section, chart: ChartSpec) -> FormField:
    """Sum of ``expr * d<a> ^ d<b> ^ ...`` entries; ``real = true`` keeps the real part."""
    terms = []
    degree = None
    for e in sec.entries:
        if e.key in _RESERVED:
            continue
        k = len(e.key.split("^"))
        if degree is not None and k != degree:
            raise DocumentError("mixed form degrees in one section", e.line, 1)
        degree = k
        terms.append((jnp.asarray(_basis_tensor(chart, e, "^")), parse_expression(e.value, chart.names, e.line, e.col)))
    if sec.get("degree"):
        declared = int(sec.get("degree").value)
        if degree is not None and declared != degree:
            raise DocumentError("declared degree differs from the basis monomials", sec.get("degree").line, sec.get("degree").col)
        degree = declared
    if degree is None:
        raise DocumentError("form section has no terms and no degree", sec.line, 1)
    real = _truthy(sec.get("real"))
    n = chart.dim

    def fn(x):
        env = chart.env(x)
        acc = jnp.zeros((n,) * degree, dtype=complex) + 0 * x[0]
        for T, ex in terms:
            acc = acc + ex(env) * T
        return jnp.real(acc) if real else acc

    return FormField(fn, n, degree=degree)


def metric_from_section(sec: Section, chart: ChartSpec) -> Field:
    """Real symmetric tensor from ``expr * a*b`` entries (symmetric products)."""
    terms = [(jnp.asarray(_basis_tensor(chart, e, "*")), parse_expression(e.value, chart.names, e.line, e.col))
             for e in sec.entries if e.key not in _RESERVED]
    n = chart.dim

    def fn(x):
        env = chart.env(x)
        acc = jnp.zeros((n, n), dtype=complex) + 0 * x[0]
        for T, ex in terms:
            acc = acc + ex(env) * T
        return jnp.real(acc)

    return Field(fn, n)


def _index_key(e: Entry, name: str, arity: int) -> tuple[int, ...]:
    k = e.key
    if not (k.startswith(name + "[") and k.endswith("]")):
        raise DocumentError(f"expected key {name}[...]", e.line, 1)
    try:
        idx = tuple(int(v) for v in k[len(name) + 1:-1].split(","))
    except ValueError:
        raise DocumentError(f"bad index in {k!r}", e.line, 1) from None
    if len(idx) != arity:
        raise DocumentError(f"{name} takes {arity} indices", e.line, 1)
    return idx


def structure_from_section(sec: Section, chart: ChartSpec):
    """Complex structure from ``kind = standard | coframe | matrix``.

    Returns ``(fn, t10)`` where ``t10(x)`` is a basis of ``T^{1,0}`` as columns.
    """
    from .core_tensor import structure_from_coframe

    kind = sec.get("kind").value if sec.get("kind") else "standard"
    n = chart.dim
    m = n // 2
    if kind == "standard":
        I = jnp.asarray(standard_complex_structure(m))
        vz, _ = complex_frame(m)
        V = jnp.asarray(vz).T
        return (lambda x: I + 0 * x[0]), (lambda x: V + 0 * x[0])
    if kind == "coframe":
        rows: dict[str, list] = {}
        for e in sec.entries:
            if e.key in _RESERVED:
                continue
            if "." not in e.key:
                raise DocumentError("coframe entries are 'row.basis = expr'", e.line, 1)
            r, lab = e.key.split(".", 1)
            try:
                vec = jnp.asarray(chart.basis_1form(lab))
            except KeyError:
                raise DocumentError(f"unknown basis 1-form {lab!r}", e.line, 1) from None
            rows.setdefault(r, []).append((vec, parse_expression(e.value, chart.names, e.line, e.col)))
        if len(rows) != m:
            raise DocumentError(f"coframe needs {m} rows, found {len(rows)}", sec.line, 1)
        order = sorted(rows)

        def theta(x):
            env = chart.env(x)
            return jnp.stack([sum(ex(env) * v for v, ex in rows[r]) for r in order])

        def t10(x):
            th = theta(x)
            C = jnp.concatenate([th, jnp.conj(th)], axis=0)
            return jnp.linalg.inv(C)[:, :m]

        return (lambda x: structure_from_coframe(theta(x))), t10
    if kind == "matrix":
        ents = [(_index_key(e, "I", 2), parse_expression(e.value, chart.names, e.line, e.col))
                for e in sec.entries if e.key not in _RESERVED]

        def fn(x):
            env = chart.env(x)
            M = jnp.zeros((n, n)) + 0 * x[0]
            for (a, b), ex in ents:
                M = M.at[a, b].set(jnp.real(ex(env) + 0j))
            return M

        def t10(x):
            return 0.5 * (jnp.eye(n) - 1j * fn(x))

        return fn, t10
    e = sec.get("kind")
    raise DocumentError(f"unknown structure kind {kind!r}", e.line, e.col)


def scalar_from_section(sec: Section, chart: ChartSpec) -> Field:
    e = sec.get("value")
    if e is None:
        raise DocumentError("scalar section needs 'value'", sec.line, 1)
    ex = parse_expression(e.value, chart.names, e.line, e.col)
    return Field(lambda x: jnp.asarray(ex(chart.env(x)) + 0j), chart.dim)


def load_gerbe(doc: Document | str) -> GerbeCech:
    """Gerbe data from a document with ``form B``, ``form A``, ``form theta`` and ``scalar g`` sections."""
    if isinstance(doc, str):
        doc = parse_document(doc)
    cover = cover_from_document(doc)
    charts = {c.name: c for c in cover.charts}
    idx = {c.name: k for k, c in enumerate(cover.charts)}
    B, A, g, theta = {}, {}, {}, {}
    for s in doc.find("form"):
        if not s.args:
            raise DocumentError("form section needs a name", s.line, 1)
        name = s.args[0]
        chart = _chart_for(charts, s, 1)
        f = form_from_section(s, chart)
        if name == "B":
            B[idx[s.args[1]]] = f
        elif name == "theta":
            theta[idx[s.args[1]]] = f
        elif name == "A":
            _chart_for(charts, s, 2)
            A[(idx[s.args[1]], idx[s.args[2]])] = f
    for s in doc.find("scalar", "g"):
        if len(s.args) != 4:
            raise DocumentError("scalar g takes three chart names", s.line, 1)
        chart = _chart_for(charts, s, 1)
        g[tuple(idx[_chart_for(charts, s, k).name] for k in (1, 2, 3))] = scalar_from_section(s, chart)
    n = len(cover.charts)
    for k in range(n):
        if k not in B:
            B[k] = _zero(2, cover.charts[k].dim)
    hermitian = (doc.meta("hermitian", "true") or "true").lower() in ("1", "true", "yes")
    return GerbeCech(cover, B, A, g, theta or None, hermitian, doc.meta("name", "") or "")
