import csv
import json
import math

import pytest

from zfsic import cli

K_SWEEP = """
[system]
n_rx = 8
n_tx = 4
snr_db = 10

[scenario:ideal]
sigma_est = 0
kappa = 0

[scenario:mild]
sigma_est = 0.05
kappa = 0.1

[scenario:severe]
sigma_est = 0.15
kappa = 0.3

[sweep]
axis = rician_k_db
start = 0
stop = 14
step = 1
stages = 1
gamma_th_db = 6
outputs = outage
"""


def write(tmp_path, text, name="cfg.ini"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_k_sweep_is_monotone(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["sweep", write(tmp_path, K_SWEEP), "--out", str(out)]) == 0
    for name in ("ideal", "mild", "severe"):
        rows = read_csv(out / f"outage_{name}.csv")
        assert [float(r["axis"]) for r in rows] == [float(k) for k in range(15)]
        vals = [float(r["value"]) for r in rows]
        assert all(0 <= v <= 1 for v in vals)
        assert all(a >= b for a, b in zip(vals, vals[1:])), (name, vals)
    raw = (out / "outage_mild.csv").read_bytes()
    assert raw.startswith(b"axis,stage,provenance,value,std_error\n") and b"\r" not in raw


def test_single_point_sweep_with_capacity_columns(tmp_path):
    text = """
[system]
n_rx = 8
n_tx = 4
rician_k_db = 10
snr_db = 10
sigma_est = 0.1
kappa_r = 0.1

[sweep]
axis = snr_db
start = 5
stop = 5
outputs = capacity, sum_capacity, floor, outage
monte_carlo_trials = 10000
seed = 3
"""
    out = tmp_path / "out"
    assert cli.main(["sweep", write(tmp_path, text), "--out", str(out)]) == 0
    cap = read_csv(out / "capacity_default.csv")
    assert list(cap[0]) == ["axis", "stage", "provenance", "value", "std_error", "value_bps_hz"]
    analytic = [r for r in cap if r["provenance"] == "analytic"]
    assert len(analytic) == 4
    for r in cap:
        assert float(r["value_bps_hz"]) == pytest.approx(float(r["value"]) / math.log(2), rel=1e-14)
    assert all(r["std_error"] for r in cap if r["provenance"] == "monte_carlo")
    total = read_csv(out / "sum_capacity_default.csv")
    assert len(total) == 1 and total[0]["stage"] == "all"
    assert float(total[0]["value"]) == pytest.approx(sum(float(r["value"]) for r in analytic), rel=1e-12)
    assert len(read_csv(out / "floor_default.csv")) == 4


def test_sweep_output_is_reproducible(tmp_path):
    text = K_SWEEP.replace("stop = 14", "stop = 2") + "monte_carlo_trials = 20000\nseed = 5\n"
    cfg = write(tmp_path, text)
    assert cli.main(["sweep", cfg, "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["sweep", cfg, "--out", str(tmp_path / "b"), "--workers", "3"]) == 0
    for name in ("ideal", "mild", "severe"):
        assert (tmp_path / "a" / f"outage_{name}.csv").read_bytes() == (tmp_path / "b" / f"outage_{name}.csv").read_bytes()


@pytest.mark.parametrize("patch,key", [
    (("n_tx = 4", "n_tx = 4\nbogus = 1"), "bogus"),
    (("axis = rician_k_db", "axis = distance"), "axis"),
    (("step = 1", "step = 0"), "step"),
    (("outputs = outage", "outputs = ber"), "outputs"),
    (("stages = 1", "stages = 9"), "stages"),
    (("snr_db = 10", "snr_db = ten"), "snr_db"),
    (("n_rx = 8", "n_rx = 2"), "n_rx"),
])
def test_invalid_config_exits_with_code_2(tmp_path, capsys, patch, key):
    out = tmp_path / "out"
    code = cli.main(["sweep", write(tmp_path, K_SWEEP.replace(*patch)), "--out", str(out)])
    assert code == 2
    assert key in capsys.readouterr().err


def test_missing_config_file_is_a_config_error(tmp_path):
    assert cli.main(["convergence", str(tmp_path / "none.ini"), "--out", str(tmp_path / "t.csv")]) == 2


VALIDATE = """
[system]
n_rx = 8
n_tx = 4
rician_k_db = 7
snr_db = 10
kappa = 0.1

[validate]
stages = 1, 2
gamma_th_db = 6
"""


def test_validate_report_is_byte_identical_for_same_seed(tmp_path):
    cfg = write(tmp_path, VALIDATE)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    code_a = cli.main(["validate", cfg, "--trials", "20000", "--seed", "4", "--out", str(a)])
    code_b = cli.main(["validate", cfg, "--trials", "20000", "--seed", "4", "--out", str(b)])
    assert code_a == code_b
    assert a.read_bytes() == b.read_bytes()
    checks = json.loads(a.read_text())
    assert [c["check_id"] for c in checks] == sorted(c["check_id"] for c in checks)
    for c in checks:
        assert set(c) == {"check_id", "status", "measured", "expected", "tolerance"}
        assert c["status"] in ("pass", "fail")
    ids = {c["check_id"] for c in checks}
    assert {"default.stage1.ks_y_law", "default.stage2.outage_sigma0", "default.wishart_mean"} <= ids
    assert code_a == (0 if all(c["status"] == "pass" for c in checks) else 1)


def test_validate_exit_code_reflects_failures(tmp_path, monkeypatch):
    cfg = write(tmp_path, VALIDATE)
    monkeypatch.setattr(cli, "run_validate", lambda *a, **k: [cli._check("x", 1.0, 0.0, 0.1, False)])
    assert cli.main(["validate", cfg, "--trials", "20000", "--out", str(tmp_path / "r.json")]) == 1
    assert json.loads((tmp_path / "r.json").read_text())[0]["status"] == "fail"


def test_validate_rejects_too_few_trials(tmp_path):
    cfg = write(tmp_path, VALIDATE)
    assert cli.main(["validate", cfg, "--trials", "100", "--out", str(tmp_path / "r.json")]) == 2


def test_convergence_table(tmp_path):
    text = """
[system]
n_rx = 4
n_tx = 4

[convergence]
rows = 4x4, 8x4, 8x8, 16x8
laws = unit, matched
"""
    out = tmp_path / "t.csv"
    assert cli.main(["convergence", write(tmp_path, text), "--out", str(out)]) == 0
    rows = read_csv(out)
    assert [(r["n_rx"], r["n_tx"], r["law"]) for r in rows][:2] == [("4", "4", "unit"), ("8", "4", "unit")]
    assert len(rows) == 8
    for r in rows:
        assert int(r["terms"]) >= 1 and float(r["capacity"]) > 0
    unit = {(int(r["n_rx"]), int(r["n_tx"])): int(r["terms"]) for r in rows if r["law"] == "unit"}
    assert unit[(8, 8)] <= unit[(16, 8)]


def test_convergence_final_lookahead(tmp_path):
    text = "[system]\nn_rx = 16\nn_tx = 8\n[convergence]\nrows = 16x8\nlaws = matched\nlookahead = final\n"
    out = tmp_path / "t.csv"
    assert cli.main(["convergence", write(tmp_path, text), "--out", str(out)]) == 0
    assert int(read_csv(out)[0]["terms"]) > 10
    bad = text.replace("final", "0")
    assert cli.main(["convergence", write(tmp_path, bad, "bad.ini"), "--out", str(out)]) == 2


def test_convergence_rejects_transmit_distortion(tmp_path):
    text = "[system]\nn_rx = 4\nn_tx = 4\nkappa = 0.1\n[convergence]\nrows = 4x4\n"
    assert cli.main(["convergence", write(tmp_path, text), "--out", str(tmp_path / "t.csv")]) == 2


def test_load_config_scenarios(tmp_path):
    scs = cli.load_config(write(tmp_path, K_SWEEP))
    assert [s.name for s in scs] == ["ideal", "mild", "severe"]
    assert scs[2].config.kappa_t == 0.3 and scs[2].config.kappa_r == 0.3
    assert scs[0].config.rician_k == 0.0 and scs[0].mode == "zf_sic"
