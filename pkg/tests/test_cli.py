import csv
import json
import subprocess
import sys

import pytest

from forgetlab.cli import (
    SWEEP_HEADER,
    main,
    parse_grid,
    parse_int_list,
    recorded_command,
)


def data_rows(text):
    body = [line for line in text.splitlines() if not line.startswith("#")]
    return list(csv.DictReader(body))


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestGridParsing:
    def test_int_list(self):
        assert parse_int_list("2,10:100:10") == [2] + list(range(10, 101, 10))

    def test_grid(self):
        g = parse_grid("0:1:5")
        assert [float(v) for v in g] == [0, 0.25, 0.5, 0.75, 1]
        assert [float(v) for v in parse_grid("0.1,0.2")] == [0.1, 0.2]

    def test_recorded_command_drops_execution_flags(self):
        cmd = recorded_command(["mc-forgetting", "--threads", "8", "--p", "10",
                                "--out=x.csv"])
        assert cmd == "forgetlab mc-forgetting --p 10"


class TestTheorySweep:
    def test_full_grid(self, capsys):
        code, out, _ = run(capsys, "theory-sweep")
        assert code == 0
        assert out.startswith("# forgetlab ")
        assert "seed: 42" in out.splitlines()[0]
        assert len(data_rows(out)) == 101 * 101

    def test_slices(self, capsys):
        code, out, _ = run(capsys, "theory-sweep", "--alpha-grid", "0:1:11",
                           "--beta-grid", "0,1")
        rows = data_rows(out)
        for r in rows:
            a, v = float(r["alpha"]), float(r["asymptotic"])
            if float(r["beta"]) == 0:
                assert v == 2 * a
            else:
                assert v == pytest.approx(a**2 * (1 - a) ** 2, abs=1e-15)

    def test_exact_mode(self, capsys):
        code, out, _ = run(capsys, "theory-sweep", "--p", "10", "--d", "4",
                           "--m", "3")
        (row,) = data_rows(out)
        assert float(row["exact"]) == 43 / 495

    def test_exact_mode_needs_all_dims(self, capsys):
        code, _, err = run(capsys, "theory-sweep", "--p", "10")
        assert code == 2 and "--d" in err

    def test_json(self, capsys):
        code, out, _ = run(capsys, "theory-sweep", "--alpha-grid", "0.5",
                           "--beta-grid", "1", "--format", "json")
        doc = json.loads(out)
        assert doc["rows"] == [{"alpha": 0.5, "beta": 1.0, "asymptotic": 0.0625}]
        assert doc["metadata"]["seed"] == 42

    def test_unwritable_output(self, capsys, tmp_path):
        bad = tmp_path / "missing" / "out.csv"
        code, _, err = run(capsys, "theory-sweep", "--out", str(bad))
        assert code == 3 and "I/O" in err


class TestMcForgetting:
    def test_schema(self, capsys):
        code, out, _ = run(capsys, "mc-forgetting", "--p", "12", "--d", "3",
                           "--m", "2,12", "--trials", "50", "--threads", "1")
        assert code == 0
        header = [line for line in out.splitlines() if not line.startswith("#")][0]
        assert header == ",".join(SWEEP_HEADER)
        rows = data_rows(out)
        assert [int(r["m"]) for r in rows] == [2, 12]
        for r in rows:
            assert float(r["alpha"]) == int(r["m"]) / 12
            assert float(r["beta"]) == 1 - 3 / 12
            assert float(r["mc_stderr"]) >= 0

    def test_single_trial_flags_missing_stderr(self, capsys):
        code, out, err = run(capsys, "mc-forgetting", "--p", "8", "--d", "2",
                             "--m", "4", "--trials", "1")
        assert code == 0
        assert "mc_stderr" in err
        assert any(line.startswith("# warning") for line in out.splitlines())
        assert data_rows(out)[0]["mc_stderr"] == ""

    def test_json_missing_is_null(self, capsys):
        code, out, _ = run(capsys, "mc-forgetting", "--p", "8", "--d", "2",
                           "--m", "4", "--trials", "1", "--format", "json")
        assert json.loads(out)["rows"][0]["mc_stderr"] is None

    def test_thread_count_invariant(self, capsys, tmp_path):
        outs = []
        for threads in ("1", "3"):
            path = tmp_path / f"t{threads}.csv"
            run(capsys, "mc-forgetting", "--p", "10", "--d", "4", "--m", "3,10",
                "--trials", "40", "--threads", threads, "--out", str(path))
            outs.append(path.read_bytes())
        assert outs[0] == outs[1]

    def test_missing_args(self, capsys):
        code, _, _ = run(capsys, "mc-forgetting", "--p", "10")
        assert code == 2

    def test_invalid_cell(self, capsys):
        code, _, err = run(capsys, "mc-forgetting", "--p", "5", "--d", "6",
                           "--m", "2", "--trials", "5")
        assert code == 1 and "p=5 d=6 m=2" in err


class TestMoments:
    def test_single_power(self, capsys):
        code, out, _ = run(capsys, "moments", "4", "--p", "4")
        assert code == 0 and out.splitlines()[0] == "1/8"

    def test_vanishing(self, capsys):
        code, out, _ = run(capsys, "moments", "1,0;4,6", "--p", "10")
        assert out.splitlines()[0] == "0"

    def test_parse_error(self, capsys):
        code, _, err = run(capsys, "moments", "1,,2", "--p", "4")
        assert code == 2 and "offset 2" in err

    def test_budget_error(self, capsys):
        code, _, err = run(capsys, "moments", "10,8", "--p", "10")
        assert code == 1 and "budget" in err

    def test_with_monte_carlo(self, capsys):
        code, out, _ = run(capsys, "moments", "2", "--p", "5", "--mc", "1000")
        assert out.splitlines()[2].startswith("mc: mean=")


class TestValidate:
    @pytest.mark.parametrize("suite", ["tables", "assembly"])
    def test_exact_suites(self, capsys, suite):
        code, out, _ = run(capsys, "validate", suite)
        report = json.loads(out)
        assert code == 0 and report["passed"] and report["n_checks"] > 50

    def test_lemmas(self, capsys):
        code, out, _ = run(capsys, "validate", "lemmas", "--trials", "20000")
        assert code == 0 and json.loads(out)["passed"]

    def test_saturation(self, capsys):
        code, out, _ = run(capsys, "validate", "saturation", "--trials", "1000")
        report = json.loads(out)
        assert code == 0, report["failures"]

    def test_unknown_suite(self, capsys):
        code, _, _ = run(capsys, "validate", "nope")
        assert code == 2


def test_avgcase_command(capsys):
    code, out, _ = run(capsys, "avgcase", "--p", "12", "--d", "4", "--n", "4",
                       "--alpha-grid", "0,1", "--trials", "5")
    assert code == 0
    assert "placeholders" in out
    assert len(data_rows(out)) == 2 * 3 * 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "forgetlab", "moments", "2,2",
                          "--p", "6"], capture_output=True, text=True)
    assert res.returncode == 0
    assert res.stdout.splitlines()[0] == "1/48"


def test_usage_error_exit_code(capsys):
    assert main(["theory-sweep", "--bogus"]) == 2
