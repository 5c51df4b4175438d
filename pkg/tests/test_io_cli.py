"""JSON/CSV I/O and the command-line front end."""

import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from linearcredit import __version__
from linearcredit.cli import run
from linearcredit.exceptions import InvalidInputError
from linearcredit.io import (
    CONTRACT_SCHEMA,
    MODEL_SCHEMA,
    dumps,
    load_json,
    model_from_dict,
    model_to_dict,
    validate_document,
)

SAMPLES = Path(__file__).resolve().parents[1] / "samples"


def sample(name):
    return str(SAMPLES / name)


def call(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run([str(a) for a in argv], stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def ok(*argv):
    code, out, err = call(*argv)
    assert code == 0, err
    return json.loads(out)


def write_json(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# ---------------------------------------------------------------- io

def test_schema_rejects_unknown_keys():
    doc = load_json(sample("one_factor.json"))
    doc["colour"] = "blue"
    with pytest.raises(InvalidInputError):
        validate_document(doc, MODEL_SCHEMA)


def test_schema_rejects_wrong_contract_type():
    with pytest.raises(InvalidInputError):
        validate_document({"type": "swap", "t": 0.0, "tM": 1.0}, CONTRACT_SCHEMA)


@pytest.mark.parametrize("name", ["one_factor.json", "bombardier_lhcc2.json"])
def test_model_round_trip(name):
    doc = load_json(sample(name), MODEL_SCHEMA)
    model = model_from_dict(doc)
    again = model_from_dict(model_to_dict(model))
    assert model_to_dict(again) == model_to_dict(model)


def test_dumps_is_deterministic_and_nan_safe():
    obj = {"b": np.float64(np.nan), "a": np.arange(3.0), "c": (1, 2)}
    text = dumps(obj)
    assert text == dumps(dict(reversed(list(obj.items()))))
    back = json.loads(text)
    assert back == {"a": [0.0, 1.0, 2.0], "b": None, "c": [1, 2]}


def test_missing_file_is_invalid_input(tmp_path):
    with pytest.raises(InvalidInputError):
        load_json(str(tmp_path / "absent.json"))


# ---------------------------------------------------------------- top level

def test_help_and_version():
    code, out, _ = call("--help")
    assert code == 0 and "validate" in out
    code, out, _ = call("--version")
    assert code == 0 and __version__ in out


def test_unknown_flag_is_usage_error():
    code, out, err = call("validate", sample("one_factor.json"), "--bogus")
    assert code == 2 and out == ""
    assert json.loads(err)["error"]


def test_missing_file_exit_code(tmp_path):
    code, _, err = call("validate", tmp_path / "nope.json")
    assert code == 2
    msg = json.loads(err)
    assert set(msg) >= {"error", "message"}


def test_console_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "linearcredit", "--version"],
                         capture_output=True, text=True, timeout=120)
    assert res.returncode == 0 and __version__ in res.stdout


# ---------------------------------------------------------------- validate / price

def test_validate_calibrated_two_factor():
    out = ok("validate", sample("bombardier_lhcc2.json"))
    assert out["type"] == "lhcc"
    assert out["valid"] and out["binding"] and out["state_inside"]


def test_validate_rejects_broken_cascade(tmp_path):
    doc = load_json(sample("bombardier_lhcc2.json"))
    doc["gamma1"] = 10.0
    code, out, _ = call("validate", write_json(tmp_path / "bad.json", doc))
    report = json.loads(out)
    assert code == 2
    assert not report["valid"] and not report["cascade_satisfied"]
    assert all(g < 0 for g in report["cascade_gap"])


def test_price_bond_at_maturity_is_one(tmp_path):
    c = write_json(tmp_path / "b.json", {"type": "bond", "bond": "zero", "t": 0.0, "tM": 0.0, "r": 0.0252})
    out = ok("price", sample("bombardier_lhcc2.json"), c)
    assert out["price"] == pytest.approx(1.0, abs=1e-14)


def test_price_bond_sample_below_riskless():
    out = ok("price", sample("bombardier_lhcc2.json"), sample("bond.json"))
    assert 0.0 < out["price"] < np.exp(-0.0252 * 5.0)


def test_price_cds_sample():
    out = ok("price", sample("one_factor.json"), sample("cds.json"))
    assert out["spread_bp"] == pytest.approx(300.0, abs=0.5)
    assert out["protection_bp"] > 0 and out["premium_annuity"] > 0


def test_price_cds_at_par_strike_is_zero(tmp_path):
    base = ok("price", sample("bombardier_lhcc2.json"), sample("cds.json"))
    assert base["spread_bp"] == pytest.approx(base["protection_bp"] / base["premium_annuity"])
    doc = load_json(sample("cds.json"))
    doc["strike_bp"] = base["spread_bp"]
    out = ok("price", sample("bombardier_lhcc2.json"), write_json(tmp_path / "c.json", doc))
    assert out["value_bp"] == pytest.approx(0.0, abs=1e-8)


def test_price_ucva_sample():
    out = ok("price", sample("one_factor.json"), sample("ucva.json"))
    assert 0.0 < out["ucva"] < 0.6
    assert out["ucva_bp"] == pytest.approx(1e4 * out["ucva"])


def test_price_ucva_exposure_dimension_checked():
    code, _, err = call("price", sample("bombardier_lhcc2.json"), sample("ucva.json"))
    assert code == 2 and "exponents" in json.loads(err)["message"]


# ---------------------------------------------------------------- options

def test_option_sample():
    out = ok("option", sample("bombardier_lhcc2.json"), sample("cds_option.json"))
    assert out["order"] == 20
    assert out["price_bp"] > 0 and out["error_bound_bp"] >= 0


def test_convergence_csv(tmp_path):
    path = tmp_path / "conv.csv"
    out = ok("convergence", sample("bombardier_lhcc2.json"), sample("cds_option.json"),
             "--orders", "1-30", "--csv", path)
    rows = read_csv(path)
    assert rows[0] == ["order", "price_bp", "error_bound_bp"]
    orders = [int(r[0]) for r in rows[1:]]
    prices = np.array([float(r[1]) for r in rows[1:]])
    assert orders == list(range(1, 31))
    assert np.allclose(prices, out["price_bp"])
    tail = prices[9:]
    assert tail.max() - tail.min() < 1.0


def test_sensitivity_csvs(tmp_path):
    ok("sensitivity", sample("bombardier_lhcc2.json"), sample("cds_option.json"),
       "--order", "10", "--sigmas", "0.25,0.5", "--x0s", "0.1,0.2", "--out-dir", tmp_path)
    sig = read_csv(tmp_path / "sensitivity_sigma.csv")
    x0 = read_csv(tmp_path / "sensitivity_x0.csv")
    assert sig[0] == ["sigma", "price_bp"] and len(sig) == 3
    assert x0[0] == ["x0", "price_bp"] and len(x0) == 3


def test_cdis_option_capacity(tmp_path):
    doc = load_json(sample("cdis_option.json"))
    doc["order"] = 31
    code, _, err = call("option", sample("one_factor.json"), write_json(tmp_path / "o.json", doc))
    assert code == 3 and json.loads(err)["error"]


# ---------------------------------------------------------------- portfolio

def test_cdis_sample():
    out = ok("cdis", sample("portfolio_mixed.json"), sample("index.json"))
    assert out["n_alive"] == out["n_firms"]
    assert out["spread_bp"] > 0


def test_tranche_sample():
    out = ok("tranche", sample("portfolio_homogeneous.json"), sample("tranche.json"))
    assert 0 < out["protection"] < 1 and out["premium_annuity"] > 0
    assert out["value"] == pytest.approx(out["protection"] - 0.05 * out["premium_annuity"], abs=1e-12)


def test_tranche_capacity(tmp_path):
    doc = load_json(sample("portfolio_homogeneous.json"))
    doc["firms"] = [doc["firms"][0]] * 16
    code, _, err = call("tranche", write_json(tmp_path / "p.json", doc), sample("tranche.json"))
    assert code == 3 and json.loads(err)["error"]


# ---------------------------------------------------------------- simulate

def test_simulate_is_reproducible(tmp_path):
    args = ("simulate", sample("one_factor.json"), "--paths", "500", "--dt", "0.01",
            "--horizon", "1", "--times", "0.5,1", "--seed", "7")
    a, b = call(*args), call(*args)
    assert a[0] == 0 and a[1] == b[1]
    out = json.loads(a[1])
    assert [r["t"] for r in out["records"]] == [0.5, 1.0]
    c = call(*args[:-1], "8")
    assert c[1] != a[1]


def test_simulate_export_paths(tmp_path):
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (p1, p2):
        ok("simulate", sample("one_factor.json"), "--paths", "3", "--dt", "0.1",
           "--horizon", "0.5", "--seed", "1", "--export-paths", p)
    assert p1.read_bytes() == p2.read_bytes()
    rows = read_csv(p1)
    assert rows[0][:3] == ["path", "t", "y"]
    assert len(rows) == 1 + 3 * 6


# ---------------------------------------------------------------- calibrate

def test_calibrate_out_dir(tmp_path):
    out = ok("calibrate", sample("quotes_synthetic.csv"), "--m", "2", "--starts", "1",
             "--seed", "0", "--out-dir", tmp_path)
    for name in ("rmse.csv", "factors.csv", "model.json"):
        assert (tmp_path / name).exists()
    rmse = read_csv(tmp_path / "rmse.csv")
    assert rmse[0][:3] == ["model", "statistic", "all"]
    model = load_json(str(tmp_path / "model.json"), MODEL_SCHEMA)
    assert model["type"] == "lhcc"
    check = ok("validate", tmp_path / "model.json")
    assert check["cascade_satisfied"]
    assert out["n_dates"] == 104 and out["model"] == model
