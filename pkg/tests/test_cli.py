import csv
import json

import numpy as np
import pytest

from tsmargin.assess import assess_case
from tsmargin.cases import bundled_case, bundled_case_path, smib_case
from tsmargin.cli import InputError, main, parse_fault, parse_range
from tsmargin.netmodel import FaultScenario, case_to_dict, save_case

NE39 = str(bundled_case_path("ne39"))


def read_csv(path):
    with open(path) as fh:
        first = fh.readline()
        assert first.startswith("# {")
        rows = list(csv.reader(fh))
    return json.loads(first[2:]), rows[0], np.array(rows[1:], dtype=float)


def test_parse_fault():
    f = parse_fault("bus=21,tclear=0.37,trip=16-17")
    assert (f.bus, f.t_clear, f.trip) == (21, 0.37, (16, 17))
    assert parse_fault("bus=19", need_tclear=False).t_clear is None
    for bad, where in [("tclear=0.1", "fault.bus"), ("bus=x,tclear=0.1", "fault.bus"),
                       ("bus=3", "fault.tclear"), ("bus=3,tclear=0.1,trip=4", "fault.trip"),
                       ("bus=3,tclear=-1", "fault.tclear"), ("bus=3,speed=2", "fault")]:
        with pytest.raises(InputError) as err:
            parse_fault(bad)
        assert err.value.field == where


def test_parse_range():
    assert parse_range("0.05:0.60:0.01") == (0.05, 0.6, 0.01)
    for bad in ["0.05:0.6", "a:b:c", "0.6:0.05:0.01", "0.05:0.6:0"]:
        with pytest.raises(InputError):
            parse_range(bad)


def test_simulate_outputs(tmp_path):
    rc = main(["simulate", "--case", NE39, "--fault", "bus=21,tclear=0.37", "--tend", "3.0",
               "--out-dir", str(tmp_path)])
    assert rc == 0
    manifest, header, data = read_csv(tmp_path / "trajectory.csv")
    assert header[0] == "t" and data[0, 0] == 0.0 and data[-1, 0] == pytest.approx(3.0)
    assert manifest["command"] == "simulate" and manifest["fault"] == "bus=21,tclear=0.37"
    assert manifest["params"] == {"dt_sim": 0.001, "t_end": 3.0}
    _, header, coi = read_csv(tmp_path / "coi.csv")
    assert header[:3] == ["t", "delta_coi", "omega_coi"]
    assert coi.shape[0] == data.shape[0]


def test_equilibrium_run_is_flat(tmp_path):
    rc = main(["simulate", "--case", NE39, "--fault", "bus=21,tclear=0", "--tend", "1.0",
               "--out-dir", str(tmp_path)])
    assert rc == 0
    _, header, data = read_csv(tmp_path / "trajectory.csv")
    omega = data[:, [k for k, h in enumerate(header) if h.startswith("omega_")]]
    assert np.max(np.abs(omega)) <= 1e-9


def test_missing_bus_is_input_error(tmp_path, capsys):
    rc = main(["simulate", "--case", NE39, "--fault", "tclear=0.1", "--out-dir", str(tmp_path)])
    assert rc == 2
    assert "fault.bus" in capsys.readouterr().err


def test_bad_case_field_is_input_error(tmp_path, capsys):
    d = case_to_dict(bundled_case("wscc9"))
    del d["generators"][1]["H"]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(d))
    rc = main(["simulate", "--case", str(path), "--fault", "bus=7,tclear=0.1", "--out-dir", str(tmp_path)])
    assert rc == 2
    assert "generators[1].H" in capsys.readouterr().err


def test_blowup_exit_code(tmp_path):
    d = case_to_dict(bundled_case("wscc9"))
    d["generators"][1]["H"] = 1e-305
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(d))
    rc = main(["simulate", "--case", str(path), "--fault", "bus=7,tclear=0.1", "--tend", "1",
               "--out-dir", str(tmp_path)])
    assert rc == 3
    manifest, _, data = read_csv(tmp_path / "trajectory.csv")
    assert manifest["numerical_failure"]["blowup_time_s"] > 0
    assert data.shape[0] >= 1 and np.all(np.isfinite(data))


def test_assess_unstable_report(tmp_path):
    rc = main(["assess", "--case", NE39, "--fault", "bus=16,tclear=0.19", "--out-dir", str(tmp_path)])
    assert rc == 0
    rep = json.loads((tmp_path / "assess_report.json").read_text())
    assert rep["system_verdict"] == "unstable"
    first_dlp = next(e for e in rep["events"] if e["kind"] == "DLP")
    assert rep["verdict_time_s"] == first_dlp["t"] == rep["leading_losp_s"]
    assert rep["lum"] == 33 and rep["mdm"] == 38
    for m in rep["critical"]:
        _, header, data = read_csv(tmp_path / f"kimbark_{m}.csv")
        assert header == ["t", "theta_rad", "f_pu", "omega_pu"]
    # numbers re-parse to the values computed in-process
    a, _, _ = assess_case(bundled_case("ne39"), FaultScenario(16, 0.19, 3.0))
    assert [e["eta"] for e in rep["eta_sys"]] == [eta for _, eta in a.eta_sys]


def test_assess_subset_reports_na(tmp_path):
    rc = main(["assess", "--case", NE39, "--fault", "bus=16,tclear=0.19", "--monitor", "33,34,35,36",
               "--out-dir", str(tmp_path)])
    assert rc == 0
    rep = json.loads((tmp_path / "assess_report.json").read_text())
    assert {e["machine"]: e["eta"] for e in rep["eta_sys"]}[38] == "N/A"
    assert rep["mdm"] == "undetermined"
    assert not (tmp_path / "kimbark_38.csv").exists()


def test_assess_non_critical_subset(tmp_path, capsys):
    rc = main(["assess", "--case", NE39, "--fault", "bus=16,tclear=0.19", "--monitor", "30",
               "--out-dir", str(tmp_path)])
    assert rc == 2
    assert "monitor" in capsys.readouterr().err


def test_assess_stable(tmp_path):
    rc = main(["assess", "--case", NE39, "--fault", "bus=16,tclear=0.08", "--out-dir", str(tmp_path)])
    assert rc == 0
    rep = json.loads((tmp_path / "assess_report.json").read_text())
    assert rep["system_verdict"] == "stable" and rep["lum"] is None
    assert all(e["eta"] >= 0 for e in rep["eta_sys"])


def test_report_deterministic_apart_from_timestamp(tmp_path):
    docs = []
    for k in range(2):
        out = tmp_path / "run"
        assert main(["assess", "--case", NE39, "--fault", "bus=38,tclear=0.1", "--out-dir", str(out)]) == 0
        doc = json.loads((out / "assess_report.json").read_text())
        doc["manifest"].pop("timestamp")
        docs.append(json.dumps(doc, sort_keys=True))
    assert docs[0] == docs[1]


def test_cct_verify_agreement(tmp_path):
    rc = main(["cct", "--case", NE39, "--fault", "bus=31", "--range", "0.05:0.60:0.01", "--verify",
               "--out-dir", str(tmp_path)])
    assert rc == 0
    rep = json.loads((tmp_path / "cct_report.json").read_text())
    assert rep["agreement"] is True
    cct = rep["imeac_mdm"]["cct_s"]
    assert cct == rep["oracle_bisection"]["cct_s"]
    assert round(cct / 0.01) * 0.01 == pytest.approx(cct, abs=1e-12)
    assert rep["manifest"]["params"]["range"] == [0.05, 0.6, 0.01]


def test_cct_malformed_range(tmp_path):
    assert main(["cct", "--case", NE39, "--fault", "bus=31", "--range", "0.05-0.6",
                 "--out-dir", str(tmp_path)]) == 2


def test_cct_no_cct_in_range(tmp_path):
    path = tmp_path / "smib.json"
    save_case(smib_case(), path)
    rc = main(["cct", "--case", str(path), "--fault", "bus=1", "--range", "0.05:0.10:0.01",
               "--tend", "2", "--verify", "--out-dir", str(tmp_path)])
    assert rc == 0
    rep = json.loads((tmp_path / "cct_report.json").read_text())
    assert rep["imeac_mdm"]["cct_s"] is None and rep["imeac_mdm"]["note"] == "no CCT in range"
    assert rep["agreement"] is True


def test_cct_disagreement_exit_code(tmp_path):
    # on this stand-in case the two methods differ by one grid step at bus 19
    rc = main(["cct", "--case", NE39, "--fault", "bus=19", "--range", "0.05:0.60:0.01", "--verify",
               "--out-dir", str(tmp_path)])
    assert rc == 4
    rep = json.loads((tmp_path / "cct_report.json").read_text())
    assert rep["agreement"] is False


def test_help_lists_commands(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    out = capsys.readouterr().out
    assert all(c in out for c in ("simulate", "assess", "cct"))
