"""Command-line runner for the verification suites.

Subcommands: ``verify``, ``type-locus``, ``list`` and ``export``.  Exit status
is 0 when every selected check passes, 1 when any fails and 2 on a
configuration error (unknown example, malformed input, bad flags).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .cech_gerbe import DocumentError, parse_document
from .core_tensor import RankAmbiguityError
from .examples import (
    SUITE_ORDER,
    CheckSpec,
    UnknownExampleError,
    example_document,
    example_entry,
    export_example,
    generic_checks,
    get_example,
    list_examples,
    load_document,
    make_context,
)
from .gcx import gc_type
from .gk import GKInstance, reconstruct

SCHEMA_VERSION = 1
STAGE_SUITE = "invariants"


class ConfigError(ValueError):
    """Invalid run configuration; maps to exit status 2."""


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    example: str | None = None
    input: str | None = None
    suites: tuple[str, ...] = ()
    samples: int = 500
    seed: int = 0
    tol: float | None = None
    tol_overrides: dict = field(default_factory=dict)
    unsafe: bool = False
    workers: int = 1
    timings: bool = False


def parse_tolerances(values) -> tuple[float | None, dict]:
    """``--tol`` values: either a global ``T`` or ``CHECK_ID=T`` entries."""
    glob, per = None, {}
    for v in values or ():
        key, sep, num = v.rpartition("=")
        try:
            t = float(num)
        except ValueError:
            raise ConfigError(f"--tol: cannot parse {v!r}") from None
        if not t > 0 or not math.isfinite(t):
            raise ConfigError(f"--tol: tolerance must be positive and finite, got {num!r}")
        if sep:
            per[key] = t
        else:
            glob = t
    return glob, per


def effective_tolerance(check: CheckSpec, cfg: RunConfig) -> float:
    """Tolerance used for ``check``; refuses to loosen acceptance checks unless ``unsafe``.

    A global override leaves the invariant stage and sign checks (declared
    tolerance <= 0) untouched; per-check overrides apply to any check.
    """
    if check.id in cfg.tol_overrides:
        t = cfg.tol_overrides[check.id]
    elif cfg.tol is not None and check.tolerance > 0 and check.suite != STAGE_SUITE:
        t = cfg.tol
    else:
        return check.tolerance
    if t > check.tolerance and check.acceptance and not cfg.unsafe:
        raise ConfigError(f"--tol {t:g} loosens acceptance check {check.id!r} (declared {check.tolerance:g}); pass --unsafe to allow")
    return t


def load_target(cfg: RunConfig):
    """``(label, instance, checks, document)`` for the configured example or input file."""
    if cfg.input:
        try:
            with open(cfg.input, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as e:
            raise ConfigError(f"cannot read {cfg.input}: {e.strerror}") from None
        try:
            doc = parse_document(text)
            obj = load_document(doc)
        except DocumentError as e:
            raise ConfigError(f"{cfg.input}:{e.line}:{e.col}: {e.message}") from None
        try:
            checks = generic_checks(obj)
        except TypeError as e:
            raise ConfigError(str(e)) from None
        return os.path.basename(cfg.input), obj, checks, doc
    try:
        entry = example_entry(cfg.example)
    except UnknownExampleError as e:
        raise ConfigError(e.args[0]) from None
    return entry.name, get_example(entry.name), entry.checks, example_document(entry.name)


def select_checks(checks, suites) -> list[CheckSpec]:
    if not suites:
        return list(checks)
    known = {c.suite for c in checks}
    bad = [s for s in suites if s not in known]
    if bad:
        raise ConfigError(f"unknown suite {bad[0]!r}; available: {', '.join(s for s in SUITE_ORDER if s in known)}")
    return [c for c in checks if c.suite in suites or c.suite == STAGE_SUITE]


# ---------------------------------------------------------------------------
# verification


def _number(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else repr(v)


def _record(check: CheckSpec, tol: float, residual, samples: int, passed: bool, note: str) -> dict:
    return {"id": check.id, "suite": check.suite, "anchor": check.anchor, "samples": int(samples),
            "residual": _number(residual), "tolerance": tol, "passed": bool(passed), "note": note}


def _run_one(check: CheckSpec, tol: float, ctx) -> tuple[dict, float]:
    t0 = time.perf_counter()
    try:
        out = check.run(ctx)
    except Exception as e:  # reported as a failed entry, never swallowed
        rec = _record(check, tol, None, 0, False, f"error: {type(e).__name__}: {e}")
        return rec, time.perf_counter() - t0
    r = float(out.residual)
    ok = (out.passed is not False) and r < tol
    return _record(check, tol, r, out.samples, ok, out.note), time.perf_counter() - t0


def _run_many(checks, tols, ctx, workers: int) -> list[tuple[dict, float]]:
    if workers <= 1 or len(checks) <= 1:
        return [_run_one(c, t, ctx) for c, t in zip(checks, tols)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_one, c, t, ctx) for c, t in zip(checks, tols)]
        return [f.result() for f in futures]


def run_verify(cfg: RunConfig) -> dict:
    """Structured report ``{meta, checks}``; raises :class:`ConfigError` on bad configuration.

    Invariant checks run first; if any fails the remaining checks are listed
    as skipped (``passed`` false) rather than executed.
    """
    if cfg.samples < 1:
        raise ConfigError("--samples must be positive")
    label, obj, checks, doc = load_target(cfg)
    selected = select_checks(checks, cfg.suites)
    tols = [effective_tolerance(c, cfg) for c in selected]
    ctx = make_context(obj, cfg.samples, cfg.seed, doc)

    stage = [i for i, c in enumerate(selected) if c.suite == STAGE_SUITE]
    rest = [i for i, c in enumerate(selected) if c.suite != STAGE_SUITE]
    results: dict[int, tuple[dict, float]] = {}
    for i, res in zip(stage, _run_many([selected[i] for i in stage], [tols[i] for i in stage], ctx, cfg.workers)):
        results[i] = res
    if all(results[i][0]["passed"] for i in stage):
        for i, res in zip(rest, _run_many([selected[i] for i in rest], [tols[i] for i in rest], ctx, cfg.workers)):
            results[i] = res
    else:
        for i in rest:
            results[i] = (_record(selected[i], tols[i], None, 0, False, "skipped: invariant stage failed"), 0.0)

    records = [results[i][0] for i in range(len(selected))]
    meta = {"schema_version": SCHEMA_VERSION, "version": __version__, "target": label,
            "samples": cfg.samples, "seed": cfg.seed, "suites": list(cfg.suites),
            "passed": all(r["passed"] for r in records)}
    if cfg.timings:
        meta["timings"] = {selected[i].id: round(results[i][1], 6) for i in range(len(selected))}
    return {"meta": meta, "checks": records}


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


CSV_FIELDS = ("id", "suite", "anchor", "samples", "residual", "tolerance", "passed", "note")


def report_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in report["checks"]:
        w.writerow({k: r[k] for k in CSV_FIELDS})
    return buf.getvalue()


def report_human(report: dict) -> str:
    m = report["meta"]
    lines = [f"{m['target']}: {len(report['checks'])} checks, samples={m['samples']}, seed={m['seed']}"]
    width = max((len(r["id"]) for r in report["checks"]), default=0)
    for r in report["checks"]:
        res = "-" if r["residual"] is None else (f"{r['residual']:.3e}" if isinstance(r["residual"], float) else r["residual"])
        status = "PASS" if r["passed"] else "FAIL"
        lines.append(f"{status}  {r['id']:<{width}}  residual {res:>10}  tol {r['tolerance']:.0e}  n={r['samples']:<5} {r['note']}".rstrip())
    if "timings" in m:
        lines.append("timings (s): " + ", ".join(f"{k}={v:.2f}" for k, v in m["timings"].items()))
    lines.append("overall: " + ("PASS" if m["passed"] else "FAIL"))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# type-change tables


@dataclass
class SliceSpec:
    plane: tuple[str, str]
    fixed: dict
    lo: float
    hi: float
    grid: int


def parse_slice(chart, plane: str | None, fix: str | None, rng: str | None, grid: int) -> SliceSpec:
    coords = chart.coords
    axes = tuple(plane.split(",")) if plane else coords[:2]
    if len(axes) != 2 or len(set(axes)) != 2 or any(a not in coords for a in axes):
        raise ConfigError(f"--plane needs two distinct coordinates from {', '.join(coords)}")
    lo, hi = chart.box
    if rng:
        try:
            lo, hi = (float(v) for v in rng.split(":"))
        except ValueError:
            raise ConfigError(f"--range expects LO:HI, got {rng!r}") from None
    if not lo < hi:
        raise ConfigError("--range needs LO < HI")
    mid = 0.5 * (chart.box[0] + chart.box[1])
    fixed = {c: mid for c in coords if c not in axes}
    for item in filter(None, (fix or "").split(",")):
        k, sep, v = item.partition("=")
        if not sep or k not in fixed:
            raise ConfigError(f"--fix: {item!r} does not name a coordinate outside the plane")
        try:
            fixed[k] = float(v)
        except ValueError:
            raise ConfigError(f"--fix: cannot parse {v!r}") from None
    b0, b1 = chart.box
    if lo < b0 or hi > b1 or any(not b0 <= v <= b1 for v in fixed.values()):
        raise ConfigError(f"slice leaves the chart domain [{b0:g}, {b1:g}] of {chart.name!r}")
    if grid < 2:
        raise ConfigError("--grid must be at least 2")
    return SliceSpec(axes, fixed, lo, hi, grid)


def type_locus(data: GKInstance, spec: SliceSpec) -> list[dict]:
    """Rows ``{coords, type_plus, type_minus, rank_Q_plus, rank_Q_minus}`` on a grid in a coordinate 2-plane.

    Grid points excluded from the chart (zero loci of its ``nonzero``
    expressions) are kept as rows with ``None`` values.
    """
    chart = data.meta["chart"]
    pair = reconstruct(data)
    ticks = np.linspace(spec.lo, spec.hi, spec.grid)
    idx = {c: k for k, c in enumerate(chart.coords)}
    rows = []
    for a in ticks:
        for b in ticks:
            x = np.zeros(chart.dim)
            for c, v in spec.fixed.items():
                x[idx[c]] = v
            x[idx[spec.plane[0]]], x[idx[spec.plane[1]]] = a, b
            row = {"coords": [float(v) for v in x], "type_plus": None, "type_minus": None,
                   "rank_Q_plus": None, "rank_Q_minus": None}
            if chart.in_domain(x):
                try:
                    tp, tm = gc_type(pair.Jplus, x), gc_type(pair.Jminus, x)
                except RankAmbiguityError:
                    pass
                else:
                    row.update(type_plus=tp, type_minus=tm, rank_Q_plus=data.n - 2 * tp, rank_Q_minus=data.n - 2 * tm)
            rows.append(row)
    return rows


LOCUS_FIELDS = ("type_plus", "type_minus", "rank_Q_plus", "rank_Q_minus")


def locus_csv(rows, names) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(names) + list(LOCUS_FIELDS))
    for r in rows:
        w.writerow([repr(v) for v in r["coords"]] + ["" if r[k] is None else r[k] for k in LOCUS_FIELDS])
    return buf.getvalue()


def locus_human(rows, names) -> str:
    head = [f"{n:>8}" for n in names] + ["  type+", "  type-", "  rkQ+", "  rkQ-"]
    lines = ["".join(head)]
    for r in rows:
        vals = ["      --" if r[k] is None else f"{r[k]:>7}" for k in LOCUS_FIELDS]
        lines.append("".join(f"{v:8.3f}" for v in r["coords"]) + "".join(vals))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# argument handling


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gkgeom", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def target(sp):
        sp.add_argument("example", nargs="?", help="registered example name")
        sp.add_argument("--input", metavar="FILE", help="declarative instance file instead of an example")

    def fmt(sp):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--json", action="store_true", help="structured JSON output")
        g.add_argument("--csv", action="store_true", help="CSV output")

    v = sub.add_parser("verify", help="run verification suites")
    target(v)
    v.add_argument("--suite", action="append", default=[], metavar="NAME", help="restrict to a suite (repeatable)")
    v.add_argument("--samples", type=int, default=500, metavar="N")
    v.add_argument("--seed", type=int, default=0, metavar="S")
    v.add_argument("--tol", action="append", default=[], metavar="T|ID=T", help="tolerance override (repeatable)")
    v.add_argument("--unsafe", action="store_true", help="allow overrides that loosen acceptance checks")
    v.add_argument("--workers", type=int, default=min(4, os.cpu_count() or 1), metavar="K")
    v.add_argument("--timings", action="store_true", help="include per-check wall times")
    fmt(v)

    t = sub.add_parser("type-locus", help="types of J_+ and J_- on a coordinate 2-plane")
    target(t)
    t.add_argument("--plane", metavar="A,B", help="the two coordinates that vary (default: first two)")
    t.add_argument("--fix", metavar="C=V,...", help="values of the remaining coordinates (default: box midpoint)")
    t.add_argument("--range", metavar="LO:HI", help="range of both varying coordinates (default: chart box)")
    t.add_argument("--grid", type=int, default=9, metavar="N", help="points per axis")
    fmt(t)

    ls = sub.add_parser("list", help="list examples, or the checks and suites of one example")
    ls.add_argument("example", nargs="?")
    ls.add_argument("--json", action="store_true")

    e = sub.add_parser("export", help="print the declarative text of an example")
    e.add_argument("example")
    e.add_argument("-o", "--output", metavar="FILE")
    return p


def _need_target(args):
    if bool(args.example) == bool(args.input):
        raise ConfigError("give exactly one of an example name or --input FILE")


def _cmd_verify(args, out) -> int:
    _need_target(args)
    glob, per = parse_tolerances(args.tol)
    cfg = RunConfig(args.example, args.input, tuple(args.suite), args.samples, args.seed, glob, per,
                    args.unsafe, max(1, args.workers), args.timings)
    report = run_verify(cfg)
    out.write(report_json(report) if args.json else report_csv(report) if args.csv else report_human(report))
    return 0 if report["meta"]["passed"] else 1


def _cmd_type_locus(args, out) -> int:
    _need_target(args)
    _, obj, _, _ = load_target(RunConfig(args.example, args.input))
    if not isinstance(obj, GKInstance):
        raise ConfigError("type-locus needs a generalized Kähler instance")
    chart = obj.meta["chart"]
    spec = parse_slice(chart, args.plane, args.fix, args.range, args.grid)
    rows = type_locus(obj, spec)
    if args.json:
        body = {"meta": {"schema_version": SCHEMA_VERSION, "version": __version__, "coords": list(chart.coords),
                         "plane": list(spec.plane), "fixed": spec.fixed, "range": [spec.lo, spec.hi], "grid": spec.grid},
                "rows": rows}
        out.write(json.dumps(body, indent=2, sort_keys=True) + "\n")
    else:
        out.write(locus_csv(rows, chart.coords) if args.csv else locus_human(rows, chart.coords))
    return 0


def _cmd_list(args, out) -> int:
    if args.example is None:
        items = [{"name": n, "kind": example_entry(n).kind, "description": example_entry(n).description} for n in list_examples()]
        if args.json:
            out.write(json.dumps(items, indent=2) + "\n")
        else:
            out.writelines(f"{i['name']:<18} {i['kind']:<6} {i['description']}\n" for i in items)
        return 0
    try:
        entry = example_entry(args.example)
    except UnknownExampleError as e:
        raise ConfigError(e.args[0]) from None
    items = [{"id": c.id, "suite": c.suite, "expected": c.expected, "provenance": c.provenance,
              "tolerance": c.tolerance, "anchor": c.anchor} for c in entry.checks]
    if args.json:
        out.write(json.dumps(items, indent=2) + "\n")
    else:
        suites = [s for s in SUITE_ORDER if any(c["suite"] == s for c in items)]
        out.write(f"suites: {', '.join(suites)}\n")
        out.writelines(f"{c['suite']:<14} {c['id']:<26} {c['provenance']:<10} {c['expected']}\n" for c in items)
    return 0


def _cmd_export(args, out) -> int:
    try:
        text = export_example(args.example)
    except UnknownExampleError as e:
        raise ConfigError(e.args[0]) from None
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        out.write(text)
    return 0


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 2
    handlers = {"verify": _cmd_verify, "type-locus": _cmd_type_locus, "list": _cmd_list, "export": _cmd_export}
    try:
        return handlers[args.command](args, out)
    except ConfigError as e:
        print(f"gkgeom: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
