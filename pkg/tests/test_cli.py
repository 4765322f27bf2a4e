import csv
import io
import json

import numpy as np
import pytest

from blockcov import cli
from published_tables import TABLES


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def parse_csv(text):
    body = [ln for ln in text.splitlines() if not ln.startswith("#")]
    rows = list(csv.reader(io.StringIO("\n".join(body))))
    return rows[0], rows[1:]


def test_coeffs_matches_printed_block(capsys):
    code, out, _ = run(capsys, "coeffs", "--p", "3", "--m", "1", "--n", "10")
    assert code == 0
    assert "# seed: 0" in out and "# version: " in out
    header, rows = parse_csv(out)
    assert header == ["row", "U", "SDS", "KG", "MA1", "MA2"]
    got = np.array([[float(v) for v in r[1:]] for r in rows[:3]])
    np.testing.assert_allclose(got, TABLES[(3, 1, 10)]["c"], atol=5e-5)
    assert [r[0] for r in rows[3:]] == ["Asy.Risk1", "R.R.R.1", "Asy.Risk2", "R.R.R.2"]


def test_coeffs_p2_ma1_equals_sds(capsys):
    code, out, _ = run(capsys, "coeffs", "--p", "2", "--m", "1", "--n", "10", "--format", "json")
    assert code == 0
    doc = json.loads(out)
    cols = doc["columns"]
    for row in doc["rows"][:2]:
        assert row[cols.index("MA1")] == pytest.approx(row[cols.index("SDS")], rel=1e-14)


@pytest.mark.parametrize("argv", [
    ["coeffs", "--p", "3", "--m", "3", "--n", "10"],
    ["coeffs", "--p", "13", "--m", "1", "--n", "20"],
    ["coeffs", "--p", "3", "--m", "1", "--n", "2"],
    ["coeffs", "--p", "3", "--m", "1", "--n", "10", "--reps", "0"],
    ["risk-sweep", "--p", "3", "--m", "1", "--n", "10", "--beta-list", "0,1"],
    ["classify", "--scheme", "kfold:3"],
    ["classify", "--data", "/nonexistent/file.csv"],
    ["moments", "--p", "3", "--m", "1", "--n", "10", "--threads", "0"],
])
def test_config_errors_exit_2(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == 2
    assert out == ""
    assert err.startswith("blockcov: error:")


def test_moments_exact_parity_error_exit_2(capsys):
    # (p - m) = 3 with dof 9: parity (9 - 4) is odd, so no exact path
    code, _, err = run(capsys, "moments", "--p", "4", "--m", "1", "--n", "10", "--exact-only")
    assert code == 2
    assert "blockcov" in err


def test_singular_fold_exit_3(capsys):
    code, out, err = run(capsys, "classify", "--scheme", "kset:5")
    assert code == 3
    assert "numerical failure" in err


def test_moments_exact_only_json(capsys):
    code, out, _ = run(capsys, "moments", "--p", "4", "--m", "1", "--n", "5", "--exact-only", "--format", "json")
    assert code == 0
    doc = json.loads(out)
    method = doc["columns"].index("method")
    assert [r[method] for r in doc["rows"]] == ["exact"] * 4
    assert doc["meta"]["mode"] == "exact"


def test_csv_and_json_encode_same_numbers(capsys):
    argv = ["risk-table", "--p", "3", "--m", "2", "--n-list", "5,9", "--loss", "quadratic"]
    _, text_csv, _ = run(capsys, *argv)
    _, text_json, _ = run(capsys, *argv, "--format", "json")
    header, rows = parse_csv(text_csv)
    doc = json.loads(text_json)
    assert header == doc["columns"]
    assert len(rows) == len(doc["rows"])
    for rc, rj in zip(rows, doc["rows"]):
        assert rc[1] == rj[1]
        for a, b in zip(rc[2:], rj[2:]):
            assert float(a) == pytest.approx(b, rel=5e-6, abs=1e-300)
        # the CSV rounding is 6 significant digits of the JSON value
        assert rc[2:] == [format(b, ".6g") for b in rj[2:]]
    assert not any(r[1].startswith("Asy.Risk1") for r in rows)


def test_converge_byte_identical(capsys):
    argv = ["converge", "--p", "3", "--m", "1", "--n", "10", "--reps", "20000", "--seed", "1",
            "--beta-list", "1,1e-6"]
    _, a, _ = run(capsys, *argv)
    _, b, _ = run(capsys, *argv)
    assert a == b
    header, rows = parse_csv(a)
    assert header == ["row", "1", "1e-06", "Asymp."]
    assert rows[0][0] == "Prob 1a" and rows[10][0] == "Risk 1_U"


def test_threads_do_not_change_output(capsys):
    base = ["risk-sweep", "--p", "3", "--m", "1", "--n", "10", "--reps", "45000", "--beta-list", "0.2",
            "--format", "json"]
    _, a, _ = run(capsys, *base, "--threads", "1")
    _, b, _ = run(capsys, *base, "--threads", "3")
    assert json.loads(a)["rows"] == json.loads(b)["rows"]


def test_risk_sweep_rows(capsys):
    code, out, _ = run(capsys, "risk-sweep", "--p", "3", "--m", "1", "--n", "10", "--reps", "2000",
                       "--beta-list", "0.5")
    assert code == 0
    _, rows = parse_csv(out)
    assert [r[0] for r in rows][:5] == ["Risk 1_U", "Risk 1_SDS", "Risk 1_KG", "Risk 1_MA1", "Risk 1_MA2"]
    assert len(rows) == 10


def test_multiblock_output(capsys):
    code, out, _ = run(capsys, "multiblock", "--cuts", "1,3,4", "--n", "11", "--reps", "20000", "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert doc["meta"]["cuts"] == [0, 1, 3, 4]
    assert doc["all_pass"] is True


def test_classify_loo_and_output_file(tmp_path, capsys):
    target = tmp_path / "out.json"
    code, out, _ = run(capsys, "classify", "--scheme", "loo", "--estimator", "sds", "--format", "json",
                       "--output", str(target))
    assert code == 0 and out == ""
    doc = json.loads(target.read_text())
    assert doc["summary"]["trials"] == 150
    assert doc["summary"]["correct"] == 146


def test_classify_kset_with_skip(capsys):
    code, out, _ = run(capsys, "classify", "--scheme", "kset:5", "--skip-singular")
    assert code == 0
    header, rows = parse_csv(out)
    assert header == ["fold", "trials", "correct", "ccp"]
    assert [r[0] for r in rows] == [str(f) for f in range(2, 11)]
    assert '"skipped_folds": [1]' in out
