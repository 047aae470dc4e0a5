import csv
import json
import subprocess
import sys
import time

import pytest

from dvfsim import experiments as ex
from dvfsim.expcli import COLUMNS, EXIT_CONFIG, main
from dvfsim.powermodel import default_profile
from dvfsim.simcore import run

P = default_profile()


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_coap_secure_idtx_ratio(tmp_path):
    assert main(["coap", "--mac", "idtx", "--method", "get", "--payload", "16", "--secure",
                 "--levels", "24,80", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "coap.csv")
    assert list(rows[0]) == list(COLUMNS["coap"])
    rel = [float(r["rel_energy"]) for r in rows if float(r["mhz"]) == 24]
    assert rel and all(0.63 <= x <= 0.75 for x in rel)
    assert json.loads((tmp_path / "coap_report.json").read_text())["rows"] == len(rows)


def test_dsme_zero_gts(tmp_path):
    assert main(["dsme", "--gts", "0", "--levels", "24rc,80", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "dsme_relative.csv")
    r24 = next(r for r in rows if float(r["mhz"]) == 24)
    assert float(r24["rel_energy"]) == pytest.approx(0.48, abs=0.05)


def test_trace_of_empty_variant_is_zero(tmp_path):
    assert main(["trace", "--preset", "fft_switch", "--duration", "0", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "trace.csv").read_text().count("\n") == 1
    assert json.loads((tmp_path / "trace_report.json").read_text())["energy_J"] == 0.0


def test_trace_file_matches_run(tmp_path):
    main(["trace", "--preset", "fft_switch", "--out", str(tmp_path)])
    report = json.loads((tmp_path / "trace_report.json").read_text())
    assert report["energy_J"] == run(ex.scenario("fft_switch", P))[1].energy.energy_J


def test_baseline_json(tmp_path):
    assert main(["baseline", "--levels", "8rc,80", "--radio", "off", "--lpm", "on", "--format", "json",
                 "--out", str(tmp_path)]) == 0
    rows = json.loads((tmp_path / "baseline.json").read_text())
    low = next(r for r in rows if r["mhz"] == 8)
    assert 1 - low["rel_current"] == pytest.approx(0.45, abs=0.05)


def test_optimize(tmp_path, capsys):
    assert main(["optimize", "--task", "fft", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "optimize.csv")
    assert len(rows) == len(P.all_configs())
    assert "optimal for edp: 80MHz-pll" in capsys.readouterr().out


def test_optimize_task_file(tmp_path):
    task = tmp_path / "task.json"
    task.write_text(json.dumps({"compute_cycles": 0, "wait_time_s": 0.5, "label": "wait"}))
    assert main(["optimize", "--task-file", str(task), "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "optimize_report.json").read_text())
    assert report["optimal"]["energy"] == "8MHz-rc"


def test_repeat_and_parallel_rows_are_ordered(tmp_path):
    args = ["coap", "--mac", "dsme", "--method", "post", "--payload", "16", "--secure", "false",
            "--levels", "24pll,80", "--repeat", "2"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--jobs", "2", "--out", str(tmp_path / "b")]) == 0
    a, b = (tmp_path / "a" / "coap.csv").read_text(), (tmp_path / "b" / "coap.csv").read_text()
    assert a == b and len(_rows(tmp_path / "a" / "coap.csv")) == 4


@pytest.mark.parametrize("argv", [
    ["trace", "--preset", "nope"],
    ["coap", "--levels", "7"],
    ["dsme", "--gts", "x"],
    ["baseline", "--profile", "/nonexistent.json"],
])
def test_config_errors_exit_2(argv, tmp_path, capsys):
    assert main(argv + ["--out", str(tmp_path)]) == EXIT_CONFIG
    assert "dvfsim" in capsys.readouterr().err


def test_usage_error_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_selftest_reports_failure_with_3(tmp_path):
    prof = P.to_dict()
    prof["mcu_lpm_current_uA"] = 500.0  # sleep current swamps the DVFS saving
    path = tmp_path / "p.json"
    path.write_text(json.dumps(prof))
    code = main(["selftest", "--only", "1", "--profile", str(path), "--out", str(tmp_path)])
    assert code == 3


def test_selftest_subset_passes(tmp_path, capsys):
    assert main(["selftest", "--only", "1,3,10", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 3


def test_every_preset_is_fast():
    for name in ex.preset_names():
        t0 = time.perf_counter()
        run(ex.scenario(name, P))
        assert time.perf_counter() - t0 < 10, name


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "dvfsim.expcli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("dvfsim")
