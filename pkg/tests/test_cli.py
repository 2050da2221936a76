import numpy as np

from epiflow.cli import main
from epiflow.output import read_monitor_csv


def test_mesh_info(capsys):
    assert main(["mesh-info", "--nx", "4", "--ny", "4"]) == 0
    out = capsys.readouterr().out
    assert "vertices: 25" in out
    assert "triangles: 32" in out
    assert "boundary_vertices: 16" in out


def test_missing_config(capsys, tmp_path):
    code = main(["run", "--config", str(tmp_path / "missing.cfg")])
    assert code == 1
    assert "config not found" in capsys.readouterr().err


def test_unknown_flag_exits_2():
    assert main(["run", "--frobnicate"]) == 2


def test_unknown_subcommand_exits_2():
    assert main(["explode"]) == 2


def test_config_error_reported(capsys, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[run]\ndt = -1\n")
    assert main(["run", "--config", str(cfg)]) == 1
    assert "dt must be positive" in capsys.readouterr().err


def test_run_small_experiment(capsys, tmp_path):
    cfg = tmp_path / "small.cfg"
    cfg.write_text(
        "[run]\nexperiment = exp1\nnx = 6\nny = 6\nT = 0.1\n"
        "snapshot_cadence = 5\nmonitor_cadence = 1\n"
    )
    out_dir = tmp_path / "out"
    code = main(["run", "--config", str(cfg), "--out", str(out_dir)])
    assert code == 0
    assert (out_dir / "monitor.csv").exists()
    snaps = sorted(out_dir.glob("snapshot_*.vtk"))
    assert [s.name for s in snaps] == [
        "snapshot_000000.vtk", "snapshot_000005.vtk", "snapshot_000010.vtk"]
    cols = read_monitor_csv(out_dir / "monitor.csv")
    assert cols["t"].size == 11
    assert not (out_dir / ".lock").exists()
    assert (out_dir / "config.cfg").exists()


def test_experiment_flag_overrides_config(tmp_path):
    cfg = tmp_path / "small.cfg"
    cfg.write_text("[run]\nexperiment = exp1\nnx = 4\nny = 4\nT = 0.05\n")
    out_dir = tmp_path / "out"
    code = main(["run", "--config", str(cfg), "--experiment", "exp2",
                 "--out", str(out_dir)])
    assert code == 0
    text = (out_dir / "config.cfg").read_text()
    assert "experiment = exp2" in text


def test_lock_file_blocks_concurrent_runs(capsys, tmp_path):
    cfg = tmp_path / "small.cfg"
    cfg.write_text("[run]\nexperiment = exp1\nnx = 4\nny = 4\nT = 0.05\n")
    out_dir = tmp_path / "out"
    out_dir.mkdir()
    (out_dir / ".lock").touch()
    code = main(["run", "--config", str(cfg), "--out", str(out_dir)])
    assert code == 1
    assert "locked" in capsys.readouterr().err


def test_verify_invariants_suite(capsys):
    code = main(["verify", "--suite", "invariants"])
    out = capsys.readouterr().out
    assert "population balance" in out
    assert "PASS" in out
    assert code == 0
