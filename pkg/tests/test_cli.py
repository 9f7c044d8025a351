import json

import pytest

from omegacert.cli import COLUMNS, EXIT_MODEL, EXIT_OK, EXIT_SOLVER, EXIT_USAGE, run_cli

from conftest import example_path

RE2 = ["--program", example_path("re2.pp")]
FAST = ["--degree", "1", "--k", "1", "--samples", "2000"]


def run(capsys, *argv):
    code = run_cli(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_verify_json_schema(capsys):
    code, out, _ = run(capsys, "verify", *RE2, "--dra", example_path("re2_c2.dra"), "--degree", "3", "--k", "2",
                       "--samples", "5000")
    assert code == EXIT_OK
    doc = json.loads(out)
    assert set(COLUMNS) <= set(doc)
    assert 0 <= doc["L.B."] <= doc["U.B."] <= 1
    assert doc["E.d."] == doc["F.d."] == 3 and doc["k"] == 2
    assert doc["status"] == "ok"


def test_table_column_order(capsys):
    code, out, _ = run(capsys, "verify", *RE2, "--dra", example_path("re2_c2.dra"), *FAST, "--output", "table")
    assert code == EXIT_OK
    header = out.splitlines()[0].split()
    assert header == list(COLUMNS)


def test_csv_output(capsys):
    code, out, _ = run(capsys, "verify", *RE2, "--dra", example_path("re2_c2.dra"), *FAST, "--output", "csv")
    assert code == EXIT_OK
    assert out.splitlines()[0] == ",".join(COLUMNS)


def test_tpi_without_psi_is_usage_error(capsys):
    code, _, err = run(capsys, "tpi", *RE2, "--dra", example_path("re2_c2.dra"))
    assert code == EXIT_USAGE and "dra-psi" in err


def test_tpi_with_conjunction(capsys):
    code, out, _ = run(capsys, "tpi", *RE2, "--dra", example_path("universal.dra"),
                       "--dra-psi", example_path("re2_c2.dra"), *FAST)
    assert code == EXIT_OK
    doc = json.loads(out)
    assert len(doc["rows"]) == 2
    post = doc["posterior"]
    assert post["L.B."] is not None and 0 <= post["L.B."] <= post["U.B."] <= 1


def test_model_error_exit_code(capsys, tmp_path):
    bad = tmp_path / "bad.pp"
    bad.write_text("vars: x\nprogram:\nwhile do x := 1 od")
    code, _, err = run(capsys, "verify", "--program", str(bad), "--dra", example_path("universal.dra"))
    assert code == EXIT_MODEL and "model error" in err


def test_no_certificate_exit_code(capsys):
    code, out, _ = run(capsys, "verify", *RE2, "--dra", example_path("re2_c2.dra"), "--degree", "2",
                       "--relaxation-degree", "1", "--k", "1", "--samples", "0")
    assert code == EXIT_SOLVER
    doc = json.loads(out)
    assert doc["status"] == "no certificate found" and (doc["L.B."], doc["U.B."]) == (0, 1)


def test_unknown_backend(capsys, monkeypatch):
    monkeypatch.setenv("TPI_SOLVER", "gurobi")
    code, _, err = run(capsys, "oracle", *RE2, "--dra", example_path("re2_c2.dra"))
    assert code == EXIT_USAGE and "TPI_SOLVER" in err


def test_oracle_exact_value(capsys, tmp_path):
    export = tmp_path / "chain.txt"
    code, out, _ = run(capsys, "oracle", "--program", example_path("re2_bounded.pp"),
                       "--dra", example_path("re2_c3.dra"), "--export", str(export))
    assert code == EXIT_OK
    assert json.loads(out)["exact"] == "15/16"
    assert export.read_text().strip()


def test_oracle_counter_event(capsys):
    code, out, _ = run(capsys, "oracle", "--program", example_path("re2_bounded.pp"),
                       "--dra", example_path("re2_c2.dra"), "--event", "counter", "--mode", "IOV",
                       "--set", "1", "--k", "1")
    assert code == EXIT_OK
    assert json.loads(out)["exact"] == "1/2"


def test_simulate_formula(capsys):
    code, out, _ = run(capsys, "simulate", "--program", example_path("re1.pp"), "--event", "formula",
                       "--formula", "y >= 1", "--samples", "20000", "--seed", "3")
    assert code == EXIT_OK
    doc = json.loads(out)
    assert abs(doc["estimate"] - 57 / 160) < 3 * doc["stderr"]


def test_dump_and_check_certificate(capsys, tmp_path):
    code, _, _ = run(capsys, "verify", *RE2, "--dra", example_path("re2_c2.dra"), *FAST,
                     "--dump-cert", str(tmp_path / "certs"), "--dump-lp", str(tmp_path / "lps"))
    assert code == EXIT_OK
    certs = sorted((tmp_path / "certs").glob("*.json"))
    assert len(certs) == 4 and len(list((tmp_path / "lps").glob("*.lp"))) == 4
    for cert in certs:
        code, out, _ = run(capsys, "check-cert", *RE2, "--dra", example_path("re2_c2.dra"), "--cert", str(cert),
                           "--states", "300")
        assert code == EXIT_OK, out
    doc = json.loads(certs[0].read_text())
    key = next(iter(doc["pieces"]))
    doc["pieces"] = {k: v for k, v in doc["pieces"].items() if k != key}
    broken = tmp_path / "broken.json"
    broken.write_text(json.dumps(doc))
    code, _, _ = run(capsys, "check-cert", *RE2, "--dra", example_path("re2_c2.dra"), "--cert", str(broken))
    assert code == EXIT_USAGE


def test_missing_file_is_usage_error(capsys, tmp_path):
    code, _, _ = run(capsys, "oracle", "--program", str(tmp_path / "nope.pp"), "--dra", example_path("re2_c2.dra"))
    assert code == EXIT_USAGE
