import subprocess
import sys

import pytest

from kkt2 import cli
from helpers import FIXTURES

CUSP = FIXTURES / "cusp.txt"
PARABOLA = FIXTURES / "parabola.txt"
KINKED = FIXTURES / "kinked.txt"
ALL_FIXTURES = (CUSP, PARABOLA, KINKED)


def results(text, kind):
    out = []
    for line in text.splitlines():
        parts = line.split(" ")
        if parts[:2] == ["RESULT", kind]:
            out.append(dict(kv.split("=", 1) for kv in parts[2:]))
    return out


def test_load_example_fixture():
    pf = cli.load(CUSP)
    assert pf.n == 2 and len(pf.objectives) == 3 and len(pf.constraints) == 1
    assert pf.point == (0.0, 0.0) and pf.seed == 0
    assert pf.problem().p == 3


def test_minimal_file_is_valid():
    pf = cli.parse_problem_text("n = 1\nobjective = x1\npoint = 0\n")
    assert pf.constraints == () and pf.point == (0.0,)


@pytest.mark.parametrize(
    "text, pattern",
    [
        ("n = 2\nobjective = x1\npoint = 0, 0, 0\n", "line 3: point has 3 coordinates"),
        ("objective = x1\npoint = 0\n", "missing field 'n'"),
        ("n = 1\npoint = 0\n", "missing field 'objective'"),
        ("n = 1\nobjective = x1\n", "missing field 'point'"),
        ("n = 1\nobjective = x1 +\npoint = 0\n", r"line 2, objective 'x1 \+'.*offset 4"),
        ("n = 1\nobjective = x1\nconstraint = x2\npoint = 0\n", "line 3, constraint"),
        ("n = 1\nobjective = x1\npoint = 0\ncolour = red\n", "line 4: unknown key 'colour'"),
        ("n = 1\nn = 1\nobjective = x1\npoint = 0\n", "line 2: duplicate key 'n'"),
        ("n = 1\nobjective x1\npoint = 0\n", "line 2: expected"),
    ],
)
def test_load_errors(text, pattern):
    with pytest.raises(cli.ProblemFileError, match=pattern):
        cli.parse_problem_text(text)


def test_digest_tracks_content():
    a = cli.parse_problem_text("n = 1\nobjective = x1\npoint = 0\n")
    b = cli.parse_problem_text("n = 1\nobjective = x1\npoint = 0\n# comment\n")
    assert a.digest != b.digest and len(a.digest) == 64


def test_derivs_on_parabola():
    text, code = cli.run("derivs", cli.load(PARABOLA), cli.Overrides(u=(1.0, 0.0)))
    assert code == cli.EXIT_OK
    vals = {r["fn"]: float(r["value"]) for r in results(text, "deriv")}
    assert vals == {"f1": 1.0, "f2": -1.0, "g1": 1.0, "g2": -1.0}


def test_cq_on_cusp():
    text, code = cli.run("cq", cli.load(CUSP))
    verdicts = {r["kind"]: r["verdict"] for r in results(text, "cq")}
    assert verdicts["ZCQ"] == "ViolatedWithWitness"
    assert verdicts["WARC"] == "HoldsEmpirically"
    assert results(text, "audit")[0]["consistent"] == "true"


def test_certify_on_kinked_example():
    text, code = cli.run("certify", cli.load(KINKED))
    assert code == cli.EXIT_OK
    assert all(r["found"] == "false" for r in results(text, "certificate"))
    assert len(results(text, "certificate")) == 4


def test_certify_exit_code_when_a_certificate_exists(tmp_path):
    f = tmp_path / "descent.txt"
    f.write_text("n = 2\nobjective = x1\nconstraint = x2\npoint = 0, 0\n")
    text, code = cli.run("certify", cli.load(f))
    recs = results(text, "certificate")
    assert code == cli.EXIT_CERTIFICATE
    assert len(recs) == 1 and recs[0]["kind"] == "FirstOrder" and recs[0]["found"] == "true"
    text, code = cli.run("certify", cli.load(f), cli.Overrides(exhaustive=True))
    assert len(results(text, "certificate")) == 4


def test_indexsets_are_one_based():
    text, _ = cli.run("indexsets", cli.load(CUSP), cli.Overrides(u=(0.0, -1.0)))
    rec = results(text, "indexsets")[0]
    assert rec["I_dir"] == "2,3" and rec["J_dir"] == "1"
    assert results(text, "active")[0]["J"] == "1"


@pytest.mark.parametrize("command", cli.COMMANDS)
def test_reports_validate_against_schema(command):
    text, _ = cli.run(command, cli.load(PARABOLA), cli.Overrides(budget=64))
    assert cli.validate_report(text) == []
    assert text.splitlines()[-1].startswith("WALLTIME ")


def test_schema_rejects_unknown_fields():
    text, _ = cli.run("derivs", cli.load(PARABOLA))
    assert cli.validate_report(text + "RESULT deriv fn=f1 colour=red\n")
    assert cli.validate_report(text + "EXTRA x=1\n")
    assert cli.validate_report(text + "RESULT mystery a=1\n")


@pytest.mark.parametrize("path", ALL_FIXTURES, ids=lambda p: p.stem)
def test_result_sections_are_reproducible(path):
    ov = cli.Overrides(budget=64)
    a, _ = cli.run("all", cli.load(path), ov)
    b, _ = cli.run("all", cli.load(path), ov)
    assert cli.result_section(a) == cli.result_section(b)


def test_main_writes_out_file_and_reports_errors(tmp_path, capsys):
    out = tmp_path / "r.txt"
    assert cli.main(["derivs", str(PARABOLA), "--u", "1,0", "--out", str(out)]) == 0
    assert out.read_text().startswith("SCHEMA ")
    assert cli.main(["derivs", str(tmp_path / "missing.txt")]) == 1
    bad = tmp_path / "bad.txt"
    bad.write_text("n = 2\nobjective = x1 $ 2\npoint = 0, 0\n")
    assert cli.main(["derivs", str(bad)]) == 1
    assert "line 2" in capsys.readouterr().err
    assert cli.main(["derivs", str(PARABOLA), "--u", "1,0,0"]) == 1


def test_usage_errors_exit_with_one():
    r = subprocess.run([sys.executable, "-m", "kkt2.cli", "nope", str(PARABOLA)], capture_output=True)
    assert r.returncode == 1


def test_infeasible_point_is_an_error(tmp_path, capsys):
    f = tmp_path / "infeasible.txt"
    f.write_text("n = 2\nobjective = x1\nconstraint = x2\npoint = 0, 1\n")
    assert cli.main(["derivs", str(f)]) == 1
    assert "infeasible" in capsys.readouterr().err
