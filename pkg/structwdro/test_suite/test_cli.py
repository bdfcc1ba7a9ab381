import json
import math

import pytest

from .utils_for_tests import solver_approx
from structwdro.cases.benchmarks import (
    outer_dro_instance,
    piecewise_linear_instance,
    piecewise_linear_true,
)
from structwdro.core.errors import PreconditionError
from structwdro.core.oracles import reference_records
from structwdro.core.program import UQInstance, build_relaxation, solve_program
from structwdro.scripts.structwdro_cli import main, parse_M_range


def write_json(path, data):
    path.write_text(json.dumps(data))
    return str(path)


@pytest.fixture
def uq_file(tmp_path):
    return write_json(tmp_path / "uq.json", piecewise_linear_instance().to_dict())


@pytest.fixture
def dro_file(tmp_path):
    ploss, nominal, rho, cost = outer_dro_instance()
    return write_json(
        tmp_path / "dro.json", UQInstance(nominal, rho, cost, ploss).to_dict()
    )


def parse_assignments(text):
    """
    {'key': 'value'} from lines of space separated key=value pairs
    """
    result = {}
    for line in text.splitlines():
        for item in line.split():
            key, _, value = item.partition("=")
            result[key] = value
    return result


class TestParseMRange:
    def test_forms(self):
        assert parse_M_range("2..5") == [2, 3, 4, 5]
        assert parse_M_range("2,4, 8") == [2, 4, 8]

    @pytest.mark.parametrize("text", ["", "a..b", "5..2", "2,x"])
    def test_bad(self, text):
        with pytest.raises(PreconditionError):
            parse_M_range(text)


class TestUQ:
    def test_solve(self, uq_file, tmp_path, capsys):
        out = tmp_path / "result.json"
        assert main(["uq", "--instance", uq_file, "--M", "3", "--out", str(out)]) == 0
        printed = parse_assignments(capsys.readouterr().out)
        assert printed["M"] == "3"
        assert printed["status"] == "Optimal"

        expected = solve_program(build_relaxation(piecewise_linear_instance(), 3)).value
        assert float(printed["value"]) == solver_approx(expected)

        result = json.loads(out.read_text())
        # floats are written in round-trip form
        assert result["value"] == float(printed["value"])
        assert result["n_vars"] == int(printed["n_vars"])
        assert "structwdro_version" in result["provenance"]
        again = UQInstance.from_dict(result["instance"])
        assert again.nominal == piecewise_linear_instance().nominal

    def test_overrides(self, uq_file, capsys):
        assert main(["uq", "--instance", uq_file, "--rho", "0", "--norm", "l1"]) == 0
        printed = parse_assignments(capsys.readouterr().out)
        assert printed["M"] == "2"
        assert float(printed["value"]) == solver_approx(-2.875)

    def test_check(self, uq_file, capsys):
        assert main(["uq", "--instance", uq_file, "--check", "--seed", "1"]) == 0
        printed = parse_assignments(capsys.readouterr().out)
        value = float(printed["value"])
        assert float(printed["semi_infinite_dual"]) == pytest.approx(value, abs=1.0e-5)
        assert float(printed["grid_lower_bound"]) <= value + 1.0e-7

    def test_malformed_json(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text('{"nominal": {\n  "atoms": [1, 2,]\n}}')
        assert main(["uq", "--instance", str(path)]) == 2
        assert "line 2, column" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["uq", "--instance", str(tmp_path / "missing.json")]) == 2

    def test_level_below_N(self, uq_file):
        assert main(["uq", "--instance", uq_file, "--M", "1"]) == 2

    def test_cap(self, uq_file, capsys):
        assert main(["uq", "--instance", uq_file, "--M", "6", "--cap", "50"]) == 3
        assert "exceeds the cap 50" in capsys.readouterr().err

    def test_cap_from_environment(self, uq_file, monkeypatch):
        monkeypatch.setenv("STRUCT_WDRO_CAP", "50")
        assert main(["uq", "--instance", uq_file, "--M", "6"]) == 3
        monkeypatch.setenv("STRUCT_WDRO_CAP", "lots")
        assert main(["uq", "--instance", uq_file]) == 2

    def test_bad_tolerance(self, uq_file):
        assert main(["uq", "--instance", uq_file, "--tol", "0.5"]) == 2

    def test_usage_error(self):
        assert main([]) == 2
        assert main(["uq"]) == 2


class TestSweep:
    def test_csv(self, uq_file, capsys):
        args = ["sweep", "--instance", uq_file, "--M-range", "2..4", "--no-timing"]
        assert main(args) == 0
        first = capsys.readouterr().out
        assert main(args) == 0
        assert capsys.readouterr().out == first

        lines = first.splitlines()
        assert lines[0] == "M,value,status,n_vars,n_rows,solve_ms"
        assert [line.split(",")[0] for line in lines[1:]] == [
            "2",
            "3",
            "4",
            "unstructured",
        ]
        values = [float(line.split(",")[1]) for line in lines[1:]]
        assert values[1] <= values[0] + 1.0e-7
        assert values[2] <= values[1] + 1.0e-7
        assert values[3] >= values[0] - 1.0e-7

    def test_options_file(self, uq_file, tmp_path):
        options = tmp_path / "options.yml"
        options.write_text("M_range: '2,3'\ntiming: false\n")
        out = tmp_path / "curve.csv"
        assert (
            main(
                ["sweep", "--instance", uq_file, "--options", str(options)]
                + ["--out", str(out)]
            )
            == 0
        )
        lines = out.read_text().splitlines()
        assert len(lines) == 4
        assert all(line.endswith(",0") for line in lines[1:])

    def test_unknown_option(self, uq_file, tmp_path, capsys):
        options = tmp_path / "options.yml"
        options.write_text("M_range: '2,3'\nlifting: 4\n")
        assert main(["sweep", "--instance", uq_file, "--options", str(options)]) == 2
        assert "lifting" in capsys.readouterr().err

    def test_print_options(self, uq_file, capsys):
        assert (
            main(
                ["sweep", "--instance", uq_file, "--M-range", "2", "--print-options"]
            )
            == 0
        )
        assert "M_range" in capsys.readouterr().out


class TestDRO:
    def test_curve(self, dro_file, capsys):
        args = ["dro", "--instance", dro_file, "--M-range", "2..4", "--no-timing"]
        assert main(args) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "M,theta,value,proxy,status,n_vars,n_rows,solve_ms"
        assert len(lines) == 5
        assert lines[-1].startswith("# M_star=")
        assert int(lines[-1].split("=")[1]) in (2, 3, 4)
        for line in lines[1:-1]:
            theta = float(line.split(",")[1])
            assert -3.0 <= theta <= 3.0

    def test_needs_decision(self, uq_file):
        assert main(["dro", "--instance", uq_file]) == 2

    def test_empty_box(self, tmp_path):
        ploss, nominal, rho, cost = outer_dro_instance()
        data = UQInstance(nominal, rho, cost, ploss).to_dict()
        data["loss"]["theta_box"] = [[1.0, -1.0]]
        path = write_json(tmp_path / "empty.json", data)
        assert main(["dro", "--instance", path]) == 2


class TestWasserstein:
    def test_distance(self, tmp_path, capsys):
        first = write_json(tmp_path / "true.json", piecewise_linear_true)
        second = write_json(
            tmp_path / "nominal.json",
            piecewise_linear_instance().nominal.to_dict(),
        )
        assert main(["wasserstein", first, second, "--plan"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert float(lines[0].split("=")[1]) == pytest.approx(0.19, abs=1.0e-9)
        plan = [[float(x) for x in line.split()] for line in lines[1:]]
        assert sum(map(sum, plan)) == pytest.approx(1.0, abs=1.0e-9)

    def test_identical(self, tmp_path, capsys):
        first = write_json(tmp_path / "true.json", piecewise_linear_true)
        assert main(["wasserstein", first, first, "--norm", "linf"]) == 0
        assert capsys.readouterr().out == "W=0.0\n"

    def test_dimension_mismatch(self, tmp_path):
        first = write_json(tmp_path / "true.json", piecewise_linear_true)
        second = write_json(
            tmp_path / "plane.json", {"atoms": [[0.0, 1.0]], "weights": [1.0]}
        )
        assert main(["wasserstein", first, second]) == 2

    def test_bad_weights(self, tmp_path):
        first = write_json(tmp_path / "true.json", piecewise_linear_true)
        second = write_json(
            tmp_path / "bad.json", {"atoms": [[0.0], [1.0]], "weights": [0.5, 0.6]}
        )
        assert main(["wasserstein", first, second]) == 2


class TestOracle:
    def test_lifted(self, capsys):
        assert main(["oracle", "lifted", "--rho", "1", "--M", "2"]) == 0
        printed = parse_assignments(capsys.readouterr().out)
        assert set(printed) == {"S", "U_M_sym", "bound"}
        assert float(printed["U_M_sym"]) == pytest.approx(
            1.5 * math.sqrt(3.0), abs=1.0e-8
        )
        assert float(printed["bound"]) == 4.0

    def test_variance(self, capsys, tmp_path):
        out = tmp_path / "oracle.json"
        args = ["oracle", "variance", "--rho", "0.3", "--quantity", "U"]
        assert main(args + ["--out", str(out)]) == 0
        assert capsys.readouterr().out == "U=0.6\n"
        result = json.loads(out.read_text())
        assert result["values"] == {"U": 0.6}
        assert "provenance_note" in result

    def test_errors(self):
        assert main(["oracle", "quartic", "--rho", "1"]) == 2
        assert main(["oracle", "lifted"]) == 2
        assert main(["oracle", "lifted", "--rho", "1", "--M", "1"]) == 2


class TestCompare:
    def test_values(self, uq_file, capsys):
        assert main(["compare", "--instance", uq_file, "--M", "4"]) == 0
        printed = capsys.readouterr().out.splitlines()
        values = {
            line.split("=")[0]: float(line.split()[0].split("=")[1]) for line in printed
        }
        assert set(values) == {"unstructured", "lifted", "multitransport"}
        assert values["lifted"] <= values["unstructured"] + 1.0e-7
        assert values["multitransport"] <= values["unstructured"] + 1.0e-7


class TestFixtures:
    def test_regenerate(self, tmp_path):
        out = tmp_path / "reference_values.json"
        assert main(["fixtures", "--out", str(out)]) == 0
        written = json.loads(out.read_text())
        assert "provenance" in written
        for name, rows in reference_records().items():
            assert [row["value"] for row in written["cases"][name]] == pytest.approx(
                [row["value"] for row in rows], abs=1.0e-12
            )

    def test_curves(self, tmp_path):
        out = tmp_path / "golden_curves.json"
        assert main(["fixtures", "--curves", "--out", str(out)]) == 0
        written = json.loads(out.read_text())
        assert "provenance" in written
        relaxation = written["relaxation"]["points"]
        assert [point["M"] for point in relaxation] == list(range(2, 17))
        assert all("solve_ms" not in point for point in relaxation)
        outer = written["outer_dro"]
        assert outer["M_max"] == 8
        assert outer["M_star"] in [point["M"] for point in outer["points"]]
        assert outer["points"][0]["theta"] == pytest.approx([3.0], abs=1.0e-6)
