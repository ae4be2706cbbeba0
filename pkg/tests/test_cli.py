import csv
import hashlib
import json
import subprocess
import sys

import pytest
import yaml

from cpm_auth.cli import main

TABLE_TEXT = """\
System           MIC size  MAC payload  MIC overhead
IEEE 802.15.4           4          113         3.54%
IEEE 802.15.4           8          113         7.08%
IEEE 802.15.4          16          113        14.16%
MC-MTC                  4           40        10.00%
MC-MTC                  8           40        20.00%
MC-MTC                 16           40        40.00%
"""


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_table(capsys):
    assert main(["table"]) == 0
    assert capsys.readouterr().out == TABLE_TEXT


def test_run_writes_outputs_and_manifest(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", "--out", str(out), "--set", "num_packets=300", "--seed", "5"]) == 0
    assert "bob_drop_rate" in capsys.readouterr().out
    packets = rows(out / "packets.csv")
    assert packets[0] == ["k", "truth", "e", "pcc", "verdict", "sync_ok"]
    assert len(packets) == 301
    summary = rows(out / "summary.csv")
    assert summary[0] == ["axis_value", "seed", "bob_drop_rate", "eve_drop_rate", "e_th"]
    assert summary[1][:2] == ["nan", "5"]

    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "run"
    assert manifest["seed"] == 5
    assert manifest["effective_config"]["num_packets"] == 300
    assert manifest["effective_config"]["detector"]["e_th"] == "calibrate-first"
    assert set(manifest["versions"]) == {"cpm_auth", "numpy", "python", "kernel_backend"}
    assert manifest["e_th"] > 0
    ref = manifest["reference"]
    assert 0 < ref["mean_e_ab"] < manifest["e_th"] < ref["mean_e_ae"]
    assert float(summary[1][4]) == manifest["e_th"]
    for name, digest in manifest["outputs"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    assert set(manifest["outputs"]) == {"packets.csv", "summary.csv", "config.yaml"}

    echo = yaml.safe_load((out / "config.yaml").read_text())
    assert echo["seed"] == 5 and echo["num_packets"] == 300


def test_rerun_is_byte_identical(tmp_path):
    args = ["run", "--set", "num_packets=200", "--seed", "3"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "a2")]) == 0
    for name in ("packets.csv", "summary.csv", "config.yaml", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "a2" / name).read_bytes()


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("snr_db: 20\nnum_packets: 100\ndetector:\n  e_th: 0.05\n")
    out = tmp_path / "o"
    assert main(["run", "--config", str(cfg), "--set", "snr_db=10", "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["effective_config"]["snr_db"] == 10.0
    assert manifest["e_th"] == 0.05
    assert "reference" not in manifest


def test_calibrate(tmp_path, capsys):
    out = tmp_path / "cal"
    assert main(["calibrate", "--out", str(out), "--set", "num_packets=150"]) == 0
    assert "e_th" in capsys.readouterr().out
    ref = rows(out / "reference.csv")
    assert ref[0] == ["k", "e_ab_ref", "e_ae_ref"] and len(ref) == 151
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["reference"]["size"] == 150
    assert manifest["e_th"] == pytest.approx(
        0.5 * abs(manifest["reference"]["mean_e_ab"] - manifest["reference"]["mean_e_ae"]))


def test_sweep(tmp_path, capsys):
    out = tmp_path / "sw"
    code = main(["sweep", "--out", str(out), "--set", "num_packets=60", "--axis", "d_BE",
                 "--values", "0,0.1", "--seeds", "0-1"])
    assert code == 0
    summary = rows(out / "summary.csv")
    assert len(summary) == 5
    assert [r[:2] for r in summary[1:]] == [["0.0", "0"], ["0.0", "1"], ["0.1", "0"], ["0.1", "1"]]
    stats = rows(out / "sweep_stats.csv")
    assert stats[0] == ["axis_value", "n", "bob_mean", "bob_std", "eve_mean", "eve_std"]
    assert len(stats) == 3
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seeds"] == [0, 1] and manifest["failed_cells"] == []
    assert "d_BE" in capsys.readouterr().out


def test_sweep_with_failed_cell_exits_nonzero(tmp_path):
    code = main(["sweep", "--out", str(tmp_path), "--set", "num_packets=20",
                 "--axis", "temporal_rho", "--values", "1.0,2.0"])
    assert code == 1
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert len(manifest["failed_cells"]) == 1


def test_demo(capsys):
    assert main(["demo", "--set", "num_packets=200"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2
    assert lines[0].startswith("co-located") and lines[1].startswith("separated")


def test_demo_with_outputs(tmp_path):
    assert main(["demo", "--set", "num_packets=100", "--out", str(tmp_path)]) == 0
    assert len(rows(tmp_path / "summary.csv")) == 3
    assert (tmp_path / "manifest.json").exists()


@pytest.mark.parametrize("argv,needle", [
    (["run", "--set", "temporal_rho=1.2"], "temporal_rho"),
    (["run", "--set", "colour=red"], "colour: unknown key"),
    (["run", "--config", "missing.yaml"], "not found"),
    (["sweep", "--axis", "snr_db", "--values", "a,b"], "cannot parse"),
])
def test_errors_exit_2_with_message(tmp_path, capsys, argv, needle):
    assert main(argv + ["--out", str(tmp_path / "x")]) == 2
    assert needle in capsys.readouterr().err


def test_out_required(capsys):
    with pytest.raises(SystemExit) as info:
        main(["run"])
    assert info.value.code == 2
    assert "--out" in capsys.readouterr().err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "cpm_auth", "table"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert proc.stdout == TABLE_TEXT
