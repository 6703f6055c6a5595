import io
import json
import subprocess
import sys

import pytest

from gkgeom.cli import ConfigError, RunConfig, main, parse_slice, parse_tolerances, run_verify
from gkgeom.examples import export_example, get_example


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out)
    return code, out.getvalue()


def test_verify_pass_exit_zero():
    code, text = run("verify", "flat_symplectic", "--samples", "8")
    assert code == 0
    assert text.rstrip().endswith("overall: PASS")


def test_verify_json_schema_and_determinism():
    a = run("verify", "flat_symplectic", "--samples", "8", "--seed", "3", "--json", "--workers", "1")
    b = run("verify", "flat_symplectic", "--samples", "8", "--seed", "3", "--json", "--workers", "3")
    assert a == b
    rep = json.loads(a[1])
    assert rep["meta"]["schema_version"] == 1
    assert rep["meta"]["passed"] is True
    for c in rep["checks"]:
        assert set(c) == {"id", "suite", "anchor", "samples", "residual", "tolerance", "passed", "note"}


def test_tightened_tolerance_fails():
    code, text = run("verify", "flat_symplectic", "--samples", "8", "--tol", "1e-30", "--json")
    assert code == 1
    rep = json.loads(text)
    failed = [c["id"] for c in rep["checks"] if not c["passed"]]
    assert failed == ["baer_sum_law"]
    stage = [c for c in rep["checks"] if c["suite"] == "invariants"]
    assert all(c["tolerance"] == 1e-8 for c in stage)


def test_loosening_needs_unsafe(capsys):
    code, _ = run("verify", "flat_symplectic", "--tol", "1")
    assert code == 2
    assert "--unsafe" in capsys.readouterr().err
    code, _ = run("verify", "flat_symplectic", "--samples", "4", "--tol", "1", "--unsafe")
    assert code == 0


def test_per_check_tolerance():
    glob, per = parse_tolerances(["1e-9", "baer_sum_law=1e-20"])
    assert glob == 1e-9 and per == {"baer_sum_law": 1e-20}
    for bad in (["abc"], ["-1"], ["x=nan"]):
        with pytest.raises(ConfigError):
            parse_tolerances(bad)


def test_suite_selection_keeps_invariants():
    rep = run_verify(RunConfig("flat_symplectic", samples=4, suites=("baer",)))
    assert [c["suite"] for c in rep["checks"]] == ["invariants", "baer"]
    with pytest.raises(ConfigError):
        run_verify(RunConfig("flat_symplectic", samples=4, suites=("gerbe",)))


def test_failed_invariants_skip_the_rest(tmp_path):
    text = export_example("flat_kahler").replace("[metric", "[metric", 1)
    lines = text.splitlines()
    # scale one metric entry so that I_+ is no longer orthogonal
    idx = next(i for i, l in enumerate(lines) if l.startswith("[metric"))
    key, _, value = lines[idx + 1].partition(" = ")
    lines[idx + 1] = f"{key} = 3*({value})"
    path = tmp_path / "bad.gk"
    path.write_text("\n".join(lines) + "\n")
    code, out = run("verify", "--input", str(path), "--samples", "4", "--json")
    assert code == 1
    rep = json.loads(out)
    skipped = [c for c in rep["checks"] if c["note"].startswith("skipped")]
    assert skipped and all(not c["passed"] and c["residual"] is None for c in skipped)


def test_unknown_example_and_bad_flags(capsys):
    assert run("verify", "nowhere")[0] == 2
    assert "unknown example" in capsys.readouterr().err
    assert run("verify")[0] == 2
    assert run("verify", "flat_symplectic", "--samples", "0")[0] == 2
    assert run("frobnicate")[0] == 2


def test_bad_input_reports_position(tmp_path, capsys):
    path = tmp_path / "broken.gk"
    path.write_text(export_example("flat_kahler").replace("du1*du1 = 1", "du1*du1 = 1 + nosuch"))
    line = export_example("flat_kahler").splitlines().index("du1*du1 = 1") + 1
    assert run("verify", "--input", str(path))[0] == 2
    assert f"broken.gk:{line}:15: unknown name 'nosuch'" in capsys.readouterr().err
    assert run("verify", "--input", str(tmp_path / "missing.gk"))[0] == 2


def test_input_file_matches_example(tmp_path):
    path = tmp_path / "su2.lie"
    path.write_text(export_example("su2xu1"))
    code, out = run("verify", "--input", str(path), "--json")
    assert code == 0
    assert json.loads(out)["meta"]["target"] == "su2.lie"


def test_type_locus_even_hopf():
    code, out = run("type-locus", "hopf_even", "--plane", "u1,v1", "--fix", "u2=1,v2=0.5", "--range=-1:1", "--grid", "3", "--json")
    assert code == 0
    body = json.loads(out)
    rows = body["rows"]
    assert len(rows) == 9
    for r in rows:
        x1_zero = r["coords"][0] == 0 and r["coords"][1] == 0
        assert (r["type_plus"], r["type_minus"]) == ((0, 2) if x1_zero else (0, 0))
        assert r["rank_Q_plus"] == 4 - 2 * r["type_plus"]


def test_type_locus_slice_errors(capsys):
    assert run("type-locus", "hopf_even", "--plane", "u1,u1")[0] == 2
    assert run("type-locus", "hopf_even", "--range=-10:10")[0] == 2
    assert run("type-locus", "su2xu1")[0] == 2
    chart = get_example("hopf_even").meta["chart"]
    spec = parse_slice(chart, None, None, None, 5)
    assert spec.plane == chart.coords[:2]


def test_type_locus_csv_marks_excluded_points():
    code, out = run("type-locus", "hopf_even", "--grid", "3", "--range=-1:1", "--fix", "u2=0,v2=0", "--csv")
    assert code == 0
    lines = out.splitlines()
    assert lines[0].endswith("type_plus,type_minus,rank_Q_plus,rank_Q_minus")
    origin = [l for l in lines[1:] if l.startswith("0.0,0.0,0.0,0.0")]
    assert origin and origin[0].endswith(",,,")


def test_list_and_export(tmp_path):
    code, out = run("list", "--json")
    assert code == 0 and len(json.loads(out)) == 7
    code, out = run("list", "hopf_even", "--json")
    ids = {c["id"]: c for c in json.loads(out)}
    assert ids["sigma_minus_value"]["provenance"] == "reference"
    assert run("list", "nowhere")[0] == 2
    target = tmp_path / "flat.gk"
    assert run("export", "flat_kahler", "-o", str(target))[0] == 0
    assert target.read_text() == export_example("flat_kahler")


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "gkgeom.cli", "list"], capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert "hopf_even" in res.stdout
