import csv
import io
import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from tailnorm.cli import main

GOLDEN = Path(__file__).parent / "golden"


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_conjugate_csv_golden(capsys):
    code, out, err = run(capsys, "conjugate", "--config", str(GOLDEN / "quadratic_conjugate.json"),
                         "--format", "csv")
    assert code == 0
    assert out == (GOLDEN / "quadratic_conjugate.csv").read_text()
    name, value = err.strip().split(",")
    assert name == "fenchel_moreau_deviation" and float(value) <= 1e-6


def test_conjugate_default_grid(capsys):
    code, out, _ = run(capsys, "conjugate", "--phi", '{"family": "quadratic"}', "--format", "csv")
    rows = {float(r["x"]): float(r["f_star"]) for r in csv.DictReader(io.StringIO(out))}
    assert code == 0 and len(rows) == 51 and rows[3.0] == pytest.approx(4.5)


def test_conjugate_log_pole(capsys):
    code, out, _ = run(capsys, "conjugate", "--phi", '{"family": "log-pole", "params": {"b": 3, "gamma": 1}}')
    d = json.loads(out)
    assert code == 0
    assert d["f_star"][d["x"].index(2.0)] == pytest.approx(6 - 1 - math.log(6), rel=1e-10)
    assert d["fenchel_moreau_deviation"] <= 1e-4


def test_malformed_descriptor(capsys):
    code, _, err = run(capsys, "conjugate", "--phi", '{"family": ')
    assert code == 2 and "invalid family descriptor" in err


def test_unknown_family(capsys):
    code, _, err = run(capsys, "gls-norm", "--tail", '{"family": "cauchy"}', "--psi", '{"family": "flat", "params": {"r": 2}}')
    assert code == 2 and "invalid family descriptor" in err


def test_missing_config_file(capsys, tmp_path):
    code, _, err = run(capsys, "moments", "--config", str(tmp_path / "nope.json"))
    assert code == 2 and "cannot read config" in err


def test_gls_norm_exponential(capsys):
    code, out, _ = run(capsys, "norm", "--tail", '{"family": "weibull", "params": {"C": 1, "m": 1}}',
                       "--psi", '{"family": "flat", "params": {"r": 2}}')
    d = json.loads(out)
    assert code == 0 and d["value"] == pytest.approx(math.sqrt(2), rel=1e-8) and not d["diverged"]


def test_gls_norm_grand_diverges(capsys):
    code, out, _ = run(capsys, "gls-norm", "--tail", '{"family": "power-log", "params": {"b": 3, "gamma": 1}}',
                       "--psi", '{"family": "grand", "params": {"b": 3, "gamma": 1}}')
    assert code == 0 and json.loads(out)["diverged"] is True


def test_bphi_two_point(capsys):
    code, out, _ = run(capsys, "bphi-norm", "--tail", '{"family": "constant", "params": {"c": 1}}',
                       "--phi", '{"family": "quadratic"}')
    assert code == 0 and json.loads(out)["value"] == pytest.approx(1.0, rel=1e-4)


def test_norm_needs_one_space(capsys):
    code, _, err = run(capsys, "norm", "--tail", '{"family": "gaussian"}')
    assert code == 2


def test_moments_csv(capsys):
    code, out, _ = run(capsys, "moments", "--tail", '{"family": "weibull", "params": {"C": 1, "m": 1}}',
                       "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and rows[0]["p"] == "1" and float(rows[0]["moment"]) == pytest.approx(1.0)


def test_tail_bound_flat(capsys, tmp_path):
    cfg = tmp_path / "bound.json"
    cfg.write_text(json.dumps({"psi": {"family": "flat", "params": {"r": 2}}, "x": [1, 2, 4]}))
    code, out, _ = run(capsys, "tail-bound", "--config", str(cfg))
    assert code == 0 and json.loads(out)["S"] == pytest.approx([1.0, 0.25, 0.0625])


def test_lorentz(capsys):
    code, out, _ = run(capsys, "lorentz", "--tail", '{"family": "weibull", "params": {"C": 2, "m": 1}}',
                       "--reference", '{"family": "weibull", "params": {"C": 1, "m": 1}}')
    assert code == 0 and json.loads(out)["value"] == pytest.approx(1.0)


def test_counterexample_B_passes(capsys):
    code, out, _ = run(capsys, "counterexample", "--scenario", "B", "--param", "b=3", "--param", "gamma=1")
    assert code == 0 and json.loads(out)["status"] == "pass"


def test_counterexample_A_golden(capsys, tmp_path):
    out = tmp_path / "a.json"
    code, _, _ = run(capsys, "counterexample", "--scenario", "A", "--param", "b=3", "--param", "gamma=1",
                     "--out", str(out))
    assert code == 0
    assert out.read_bytes() == (GOLDEN / "counterexample_A_b3_g1.json").read_bytes()


def test_counterexample_bad_parameter(capsys):
    code, _, err = run(capsys, "counterexample", "--scenario", "A", "--param", "b=0.5")
    assert code == 2 and "'b'" in err


def test_bad_param_syntax(capsys):
    code, _, err = run(capsys, "counterexample", "--scenario", "A", "--param", "b")
    assert code == 2 and "KEY=VALUE" in err


def test_bad_levels(capsys):
    code, _, _ = run(capsys, "moments", "--tail", '{"family": "gaussian"}', "--levels", "0")
    assert code == 2


def test_report_subset_csv(capsys, tmp_path):
    cfg = tmp_path / "suite.json"
    cfg.write_text(json.dumps({"suite": [{"scenario": "B", "params": {"b": 3, "gamma": 1}},
                                         {"scenario": "example3", "params": {"m": 2}}]}))
    code, out, _ = run(capsys, "report", "--config", str(cfg), "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and [r["status"] for r in rows] == ["pass", "pass"]


def test_report_rejects_unknown_scenario(capsys, tmp_path):
    cfg = tmp_path / "suite.json"
    cfg.write_text(json.dumps({"suite": [{"scenario": "Z"}]}))
    assert run(capsys, "report", "--config", str(cfg))[0] == 2


def test_report_parallel_matches_serial(capsys, tmp_path, monkeypatch):
    cfg = tmp_path / "suite.json"
    cfg.write_text(json.dumps({"suite": [{"scenario": "B", "params": {"b": 2, "gamma": 2}},
                                         {"scenario": "example2", "params": {"beta": 1}}]}))
    outs = []
    for threads in ("1", "2"):
        monkeypatch.setenv("TAILNORM_THREADS", threads)
        path = tmp_path / f"r{threads}.json"
        assert run(capsys, "report", "--config", str(cfg), "--out", str(path))[0] == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "tailnorm", "conjugate", "--phi", '{"family": "quadratic"}',
                           "--format", "csv"], capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and proc.stdout.startswith("x,f_star\n")


def test_argparse_rejects_unknown_command(capsys):
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2
