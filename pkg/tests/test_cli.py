import csv
import json
import math

import numpy as np
import pytest

from parampass.cli import main
from parampass.dataset import FitSplit, load_dataset, rms_error, save_dataset
from parampass.fixtures import first_order_model, linear_theta_model, random_model, sample_model
from parampass.model import ParamModel, eval_transfer, load_model, save_model


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


@pytest.fixture
def in_class(tmp_path):
    gen = random_model(1, ports=1, n_poles=2, n_param=2)
    gen = ParamModel(gen.poles, gen.pbasis, gen.num_coeffs, gen.den_coeffs, 1.0)
    data = sample_model(gen, np.linspace(0.0, 1.0, 50), np.linspace(0, 1, 5))
    return gen, save_dataset(data, tmp_path / "data" / "manifest.json")


def test_fit_writes_model_and_table(tmp_path, in_class):
    gen, manifest = in_class
    out = tmp_path / "fit.json"
    code = main(["fit", str(manifest), "-o", str(out), "--poles", "2", "--basis-count", "2",
                 "--split", "all", "--log", str(tmp_path / "gsk.csv")])
    assert code == 0
    rows = _rows(tmp_path / "fit_fit.csv")
    assert rows[0] == ["entry", "abs_fit", "rel_fit", "abs_validation", "rel_validation"]
    assert rows[-1][0] == "worst"
    assert (tmp_path / "gsk.csv").exists()
    assert load_model(out).den_coeffs[0, 0] == 1.0


def test_fit_in_class_recovers_generator(tmp_path, in_class):
    gen, manifest = in_class
    out = tmp_path / "fit.json"
    # fit with the generator poles through the library, then compare with the CLI report layout
    data = load_dataset(manifest)
    from parampass.gsk import fit

    res = fit(data, FitSplit.alternating(5), gen.poles, gen.pbasis)
    save_model(res.model, out)
    assert rms_error(res.model, data, FitSplit.alternating(5)).worst <= 1e-8
    rows = []
    from parampass.cli import write_fit_report

    write_fit_report(res.model, data, FitSplit.alternating(5), tmp_path / "t.csv")
    rows = _rows(tmp_path / "t.csv")
    assert float(rows[-1][1]) <= 1e-8 and float(rows[-1][3]) <= 1e-8


def test_missing_manifest_exit_2(tmp_path, capsys):
    missing = tmp_path / "nowhere.json"
    assert main(["fit", str(missing), "-o", str(tmp_path / "m.json"), "--poles", "2"]) == 2
    assert str(missing) in capsys.readouterr().err


def test_check_exit_codes(tmp_path):
    save_model(first_order_model(0.5), tmp_path / "p.json")
    assert main(["check", str(tmp_path / "p.json"), "--out-dir", str(tmp_path / "p")]) == 0
    assert _rows(tmp_path / "p" / "violations.csv") == [["theta", "omega_low", "omega_high", "omega_max", "sigma_max"]]
    save_model(linear_theta_model(), tmp_path / "l.json")
    assert main(["check", str(tmp_path / "l.json"), "--out-dir", str(tmp_path / "l")]) == 1
    rows = _rows(tmp_path / "l" / "violations.csv")[1:]
    assert rows and all(float(r[0]) > 1 for r in rows)
    assert main(["check", str(tmp_path / "l.json"), "--out-dir", str(tmp_path / "j"), "--format", "json"]) == 1
    doc = json.loads((tmp_path / "j" / "report.json").read_text())
    assert doc["violations"]


def test_check_frequencies_in_rad_per_s(tmp_path):
    m = first_order_model(2.0)
    m = ParamModel(m.poles, m.pbasis, m.num_coeffs, m.den_coeffs, 1e9)
    save_model(m, tmp_path / "m.json")
    main(["check", str(tmp_path / "m.json"), "--out-dir", str(tmp_path), "--format", "json"])
    doc = json.loads((tmp_path / "report.json").read_text())
    w = doc["samples"][0]["crossings"][0]
    assert w == pytest.approx(math.sqrt(3) * 2 * math.pi * 1e9, rel=1e-6)


def test_check_bad_model_exit_2(tmp_path):
    (tmp_path / "m.json").write_text("{}")
    assert main(["check", str(tmp_path / "m.json")]) == 2


def test_enforce_linear_theta(tmp_path):
    m = linear_theta_model()
    save_model(m, tmp_path / "m.json")
    data = sample_model(m, np.linspace(0, 0.3, 30), np.linspace(0.5, 1.5, 11))
    man = save_dataset(data, tmp_path / "d" / "manifest.json")
    out = tmp_path / "out" / "passive.json"
    assert main(["enforce", str(tmp_path / "m.json"), str(man), "-o", str(out), "--split", "all"]) == 0
    assert (tmp_path / "out" / "passive_enforce.csv").exists()
    assert _rows(tmp_path / "out" / "violations.csv")[1:] == []
    psi = _rows(tmp_path / "out" / "psi.csv")[1:]
    assert all(float(r[1]) > 0 for r in psi)
    assert main(["check", str(out), "--out-dir", str(tmp_path / "c")]) == 0


def test_enforce_passive_model_is_copied_verbatim(tmp_path):
    m = first_order_model(0.5)
    save_model(m, tmp_path / "m.json")
    data = sample_model(m, np.linspace(0, 0.3, 10), [0.0, 1.0])
    man = save_dataset(data, tmp_path / "manifest.json")
    out = tmp_path / "o.json"
    assert main(["enforce", str(tmp_path / "m.json"), str(man), "-o", str(out)]) == 0
    assert out.read_bytes() == (tmp_path / "m.json").read_bytes()


def test_enforce_iteration_limit_exit_1(tmp_path):
    m = linear_theta_model()
    save_model(m, tmp_path / "m.json")
    data = sample_model(m, np.linspace(0, 0.3, 30), np.linspace(0.5, 1.5, 11))
    man = save_dataset(data, tmp_path / "manifest.json")
    # a zero margin leaves first-order residue above one after a single step
    code = main(["enforce", str(tmp_path / "m.json"), str(man), "-o", str(tmp_path / "o.json"),
                 "--margin", "0", "--max-iters", "1", "--split", "all"])
    log = _rows(tmp_path / "o_enforce.csv")
    assert code == (1 if int(log[-1][1]) else 0)


def test_eval_single_point(tmp_path):
    m = random_model(3, ports=2, n_poles=4, n_param=2)
    save_model(m, tmp_path / "m.json")
    f, theta = 0.05, 0.3
    assert main(["eval", str(tmp_path / "m.json"), "-o", str(tmp_path / "e.csv"),
                 "--freqs", str(f), "--thetas", str(theta)]) == 0
    rows = _rows(tmp_path / "e.csv")
    assert rows[0][:5] == ["freq_hz", "theta", "outside_domain", "ReS11", "ImS11"]
    assert len(rows) == 2
    h = eval_transfer(m, m.s_from_hz(f), theta).reshape(-1)
    got = np.array([float(x) for x in rows[1][3:]])
    np.testing.assert_array_equal(got[0::2] + 1j * got[1::2], h)


def test_eval_infinity_row(tmp_path):
    m = random_model(3, ports=1, n_poles=2, n_param=2)
    save_model(m, tmp_path / "m.json")
    main(["eval", str(tmp_path / "m.json"), "-o", str(tmp_path / "e.csv"), "--only-inf", "--thetas", "0.4"])
    row = _rows(tmp_path / "e.csv")[1]
    assert row[0] == "inf"
    assert float(row[3]) == pytest.approx(m.num_at(0.4)[0, 0, 0] / m.den_at(0.4)[0], rel=1e-15)


def test_eval_outside_domain_flagged(tmp_path):
    save_model(first_order_model(1.0), tmp_path / "m.json")
    assert main(["eval", str(tmp_path / "m.json"), "-o", str(tmp_path / "e.csv"), "--freqs", "0.1",
                 "--thetas", "0.5,2.0"]) == 0
    rows = _rows(tmp_path / "e.csv")[1:]
    assert [r[2] for r in rows] == ["0", "1"]


def test_eval_reproduces_rms(tmp_path):
    gen = random_model(4, ports=2, n_poles=4, n_param=2)
    gen = ParamModel(gen.poles, gen.pbasis, gen.num_coeffs, gen.den_coeffs, 1.0)
    data = sample_model(gen, np.linspace(0.0, 1.0, 20), np.linspace(0, 1, 4), noise=1e-2)
    save_model(gen, tmp_path / "m.json")
    main(["eval", str(tmp_path / "m.json"), "-o", str(tmp_path / "e.csv"),
          "--freqs", ",".join(repr(float(f)) for f in data.freqs), "--thetas", ",".join(repr(float(t)) for t in data.params)])
    vals = np.array([[float(x) for x in r[3:]] for r in _rows(tmp_path / "e.csv")[1:]])
    h = (vals[:, 0::2] + 1j * vals[:, 1::2]).reshape(4, 20, 2, 2).transpose(1, 0, 2, 3)
    res = h - data.samples
    rms = np.sqrt(np.mean(np.abs(res) ** 2, axis=(0, 1)))
    np.testing.assert_allclose(rms, rms_error(gen, data, FitSplit.all(4)).per_entry, rtol=1e-12)


def test_eval_empty_grid(tmp_path):
    save_model(first_order_model(1.0), tmp_path / "m.json")
    assert main(["eval", str(tmp_path / "m.json"), "-o", str(tmp_path / "e.csv")]) == 2


def test_validate_agreement(tmp_path, capsys):
    save_model(first_order_model(0.5), tmp_path / "p.json")
    assert main(["validate", str(tmp_path / "p.json"), "--oracle-nf", "256", "--oracle-ntheta", "5"]) == 0
    save_model(linear_theta_model(), tmp_path / "l.json")
    assert main(["validate", str(tmp_path / "l.json"), "--oracle-nf", "256", "--oracle-ntheta", "5"]) == 1
    assert "verdicts agree" in capsys.readouterr().out


def test_validate_against_report(tmp_path, capsys):
    save_model(linear_theta_model(), tmp_path / "l.json")
    main(["check", str(tmp_path / "l.json"), "--out-dir", str(tmp_path), "--format", "json"])
    assert main(["validate", str(tmp_path / "l.json"), "--report", str(tmp_path / "report.json"),
                 "--oracle-nf", "128", "--oracle-ntheta", "5"]) == 1
    # a report claiming passivity contradicts the oracle
    doc = json.loads((tmp_path / "report.json").read_text())
    doc["violations"] = []
    (tmp_path / "fake.json").write_text(json.dumps(doc))
    assert main(["validate", str(tmp_path / "l.json"), "--report", str(tmp_path / "fake.json"),
                 "--oracle-nf", "128", "--oracle-ntheta", "5"]) == 2
    assert "DISAGREE" in capsys.readouterr().out


def test_commands_are_deterministic(tmp_path):
    save_model(linear_theta_model(), tmp_path / "l.json")
    for d in ("a", "b"):
        main(["check", str(tmp_path / "l.json"), "--out-dir", str(tmp_path / d), "--format", "json"])
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()


def test_fixture_command(tmp_path):
    assert main(["fixture", "random", "-o", str(tmp_path / "r.json"), "--seed", "3"]) == 0
    assert main(["fixture", "random", "-o", str(tmp_path / "s.json"), "--seed", "3"]) == 0
    assert (tmp_path / "r.json").read_bytes() == (tmp_path / "s.json").read_bytes()
    assert main(["fixture", "first-order", "-o", str(tmp_path / "t.json"), "--c", "2"]) == 0
    assert load_model(tmp_path / "t.json").num_coeffs[1, 0, 0, 0] == 2.0
