import json

import pytest

from mawhf import benchmarks
from mawhf.cli import main
from mawhf.model import dump_model


@pytest.fixture
def files(tmp_path):
    out = {}
    for name in ("scalar_sup", "scalar_inf", "two_state"):
        out[name] = tmp_path / f"{name}.json"
        dump_model(getattr(benchmarks, name)(), out[name])
    broken = json.loads(out["two_state"].read_text())
    broken["embedded"][0] = [0.0, 0.9]
    out["broken"] = tmp_path / "broken.json"
    out["broken"].write_text(json.dumps(broken))
    return out


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_validate_ok(files, capsys):
    code, out, _ = run(capsys, "validate", files["two_state"])
    assert code == 0 and json.loads(out)["valid"]


def test_validate_broken_names_field(files, capsys):
    code, _, err = run(capsys, "validate", files["broken"])
    assert code == 2 and "embedded" in err


def test_missing_and_malformed_inputs(files, capsys, tmp_path):
    assert run(capsys, "validate", tmp_path / "nope.json")[0] == 2
    junk = tmp_path / "junk.json"
    junk.write_text("{not json")
    assert run(capsys, "validate", junk)[0] == 2
    assert run(capsys, "factorize", files["scalar_sup"], "--s", "-1")[0] == 2
    assert run(capsys, "bogus")[0] == 2


def test_factorize_scalar(files, capsys):
    code, out, _ = run(capsys, "factorize", files["scalar_sup"], "--s", "1", "--deterministic")
    rep = json.loads(out)
    assert code == 0
    assert rep["p_plus"][0][0] == pytest.approx(0.70711, abs=1e-5)
    assert max(rep["identity_residuals"].values()) < 1e-6
    assert rep["mawhf_schema"] == 1 and "created" not in rep


def test_deterministic_output_is_byte_identical(files, tmp_path):
    for d in ("a", "b"):
        assert main(["simulate", str(files["two_state"]), "--n", "2000", "--levels=1,-1", "--csv",
                     "--deterministic", "--out", str(tmp_path / d)]) == 0
    for name in ("simulate.json", "empirical_xi.csv", "empirical_sup.csv", "empirical_inf.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_transform_csv(files, capsys):
    code, out, _ = run(capsys, "transform", files["two_state"], "--n-alpha", "3", "--what", "psi")
    lines = out.splitlines()
    assert code == 0 and lines[2] == "re_alpha,im_alpha,k,r,re_value,im_value"
    assert len(lines) == 3 + 3 * 4


def test_extrema_and_ruin(files, capsys):
    code, out, _ = run(capsys, "extrema", files["two_state"], "--law", "xi_bar", "--x=-1,-2")
    assert code == 0 and out.splitlines()[2] == "x,k,r,value"
    code, out, _ = run(capsys, "ruin", files["scalar_inf"], "--x=-1")
    header = json.loads(out.splitlines()[1][2:])
    assert code == 0 and header["R_check"][0][0] == pytest.approx(1.0, abs=1e-4)
    assert float(out.splitlines()[-1].split(",")[-1]) == pytest.approx(0.36788, abs=1e-4)


def test_ruin_without_positive_drift_is_numerical_failure(files, capsys):
    code, _, err = run(capsys, "ruin", files["two_state"])
    assert code == 3 and "m1" in err


def test_wrong_side_points_rejected(files, capsys):
    assert run(capsys, "extrema", files["two_state"], "--law", "sup", "--x=-1")[0] == 2


def test_compare_passes(files, capsys, monkeypatch):
    monkeypatch.setenv("MAWHF_WORKERS", "1")
    code, out, _ = run(capsys, "compare", files["two_state"], "--law", "sup", "--n", "50000", "--deterministic")
    assert code == 0 and json.loads(out)["passed"]


def test_selftest(capsys):
    code, out, err = run(capsys, "selftest", "--n", "50000", "--deterministic")
    assert code == 0 and json.loads(out)["passed"]
    assert "FAIL" not in err
