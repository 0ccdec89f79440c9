import pandas as pd
import pytest

from qd_model.main import main
from qd_model.report_generator import load_sidecar, render_text


@pytest.fixture
def problem(problems_dir):
    def path(name):
        return str(problems_dir / name)
    return path


def test_qd_prints_every_function(problem, capsys):
    assert main(["qd", problem("sin_system.ini")]) == 0
    out = capsys.readouterr().out
    assert "f1 = max(2*x1, x1) - abs(sin(p*x2))" in out
    assert "f2 = min(x2, 2*x2) + sin(p*(x1 + x2))" in out
    assert "super: co{(0, 1), (0, 2)}" in out


def test_mfcq_text_is_rebuilt_from_sidecar(problem, tmp_path, capsys):
    sidecar = tmp_path / "mfcq.json"
    assert main(["mfcq", problem("sin_system.ini"), "--json", str(sidecar)]) == 0
    out = capsys.readouterr().out
    assert "verdict: true" in out
    assert "rank.det_range: (1, 7)" in out
    assert out == render_text(load_sidecar(sidecar))


def test_mfcq_flip(problem, tmp_path, capsys):
    sidecar = tmp_path / "flip.json"
    assert main(["mfcq", problem("sin_system.ini"), "--flip", "p", "1", "2", "--json", str(sidecar)]) == 0
    flip = load_sidecar(sidecar)["result"]["flip"]
    assert flip["param"] == "p"
    assert flip["value"] == pytest.approx((1 + 5 ** 0.5) / 2, abs=1e-6)


def test_mfcq_default_lower_flip(problem, tmp_path, capsys):
    sidecar = tmp_path / "flip.json"
    assert main(["mfcq", problem("sin_system.ini"), "--flip", "p", "-1", "0", "--json", str(sidecar)]) == 0
    assert load_sidecar(sidecar)["result"]["flip"]["value"] == pytest.approx(1 - 2 ** 0.5, abs=1e-6)


def test_mfcq_exact_lower_flip(problem, tmp_path, capsys):
    sidecar = tmp_path / "flip.json"
    argv = ["mfcq", problem("sin_system.ini"), "--flip", "p", "-1", "0", "--rank-method", "det-range",
            "--json", str(sidecar)]
    assert main(argv) == 0
    assert load_sidecar(sidecar)["result"]["flip"]["value"] == pytest.approx((1 - 5 ** 0.5) / 2, abs=1e-6)


def test_mfcq_sweep_table(problem, tmp_path, capsys):
    book = tmp_path / "sweep.xlsx"
    assert main(["mfcq", problem("sin_system.ini"), "--sweep", "p", "-1", "2", "7", "--xlsx", str(book)]) == 0
    sheets = pd.read_excel(book, sheet_name=None)
    assert len(sheets["sweep"]) == 7
    assert "sweep:" in capsys.readouterr().out


def test_optcheck_reports_failure(problem, capsys):
    assert main(["optcheck", problem("example6.ini")]) == 0
    out = capsys.readouterr().out
    assert "conditions fail - point not optimal" in out
    assert "infeasible selection" in out


def test_optcheck_given_selection(problem, capsys):
    assert main(["optcheck", problem("example6.ini"), "--select", '{"v": [[1,0]], "w": [[0,1]]}']) == 0
    assert "feasible false" in capsys.readouterr().out


def test_slope_is_reproducible(problem, capsys):
    main(["slope", problem("remark2.ini")])
    first = capsys.readouterr().out
    main(["slope", problem("remark2.ini")])
    assert capsys.readouterr().out == first


def test_unbound_parameter_exits_with_input_code(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text("[problem]\nn = 1\nequalities = p*x1\n", encoding="utf-8")
    assert main(["qd", str(path)]) == 2
    assert "parameter 'p' is not bound" in capsys.readouterr().err


def test_wrong_point_dimension(problem, capsys):
    assert main(["qd", problem("sin_system.ini"), "--at", "0,0,0"]) == 2
    assert "dimension mismatch" in capsys.readouterr().err


def test_budget_exits_with_code_one(problem, capsys):
    assert main(["regcheck", problem("identity.ini"), "--grid", "1001"]) == 1
    assert "budget exceeded" in capsys.readouterr().err


def test_regcheck_identity_worst_ratio(problem, tmp_path, capsys):
    sidecar = tmp_path / "grid.json"
    assert main(["regcheck", problem("identity.ini"), "--json", str(sidecar)]) == 0
    grid = load_sidecar(sidecar)["result"]["grid"]
    assert grid["certified"]
    assert grid["worst_ratio"] == pytest.approx(1.0, abs=1e-6)


def test_undecodable_problem_file_exits_with_input_code(tmp_path, capsys):
    path = tmp_path / "broken.ini"
    path.write_bytes(b"\xff\xfe\x00[problem]\nn = \xe9\n")
    assert main(["qd", str(path)]) == 2
    assert "not valid UTF-8" in capsys.readouterr().err
