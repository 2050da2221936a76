import numpy as np
import pytest

from epiflow.config import experiment_preset
from epiflow.mesh import build_unit_square_mesh
from epiflow.model import initial_data, initial_state
from epiflow.output import (
    MONITOR_HEADER,
    read_monitor_csv,
    read_vtk_point_data,
    write_monitor_csv,
    write_vtk_snapshot,
)
from epiflow.stepping import Discretization, MonitorConfig, run
from epiflow.verify import MonitorRecord, monitor_row


def zero_record(t=0.0):
    return MonitorRecord(t=t, min_s=0, max_s=0, min_i=0, max_i=0, min_r=0, max_r=0,
                         min_c=0, max_c=0, int_s=0, int_i=0, int_r=0, int_c=0,
                         int_n=0, l2_u=0, h1_u=0, div_res=0, picard_iters=0)


class TestMonitorCsv:
    def test_empty_records_header_only(self, tmp_path):
        path = tmp_path / "monitor.csv"
        write_monitor_csv([], path)
        assert path.read_text() == MONITOR_HEADER + "\n"

    def test_single_zero_record(self, tmp_path):
        path = tmp_path / "monitor.csv"
        write_monitor_csv([zero_record()], path)
        lines = path.read_text().splitlines()
        assert lines[0] == MONITOR_HEADER
        assert lines[1] == ",".join(["0"] * 16)

    def test_header_has_sixteen_columns(self):
        assert len(MONITOR_HEADER.split(",")) == 16

    def test_full_precision_round_trip(self, tmp_path):
        rec = zero_record(t=0.1)
        rec.int_s = 1.0 / 3.0
        rec.l2_u = np.pi
        path = tmp_path / "monitor.csv"
        write_monitor_csv([rec], path)
        cols = read_monitor_csv(path)
        assert cols["int_S"][0] == 1.0 / 3.0
        assert cols["l2_U"][0] == np.pi


class TestVtk:
    def test_zero_state_smallest_mesh(self, tmp_path):
        mesh = build_unit_square_mesh(1, 1)
        state = initial_state(initial_data("zero"), mesh)
        path = tmp_path / "snap.vtk"
        write_vtk_snapshot(state, mesh, path)
        data = read_vtk_point_data(path)
        assert data["points"].shape == (4, 2)
        assert data["cells"].shape == (2, 3)
        for name in ("S", "I", "R", "C", "p"):
            assert np.abs(data[name]).max() == 0.0
        assert np.abs(data["U"]).max() == 0.0

    def test_round_trip_precision(self, tmp_path):
        mesh = build_unit_square_mesh(5, 5)
        state = initial_state(initial_data("localized_outbreak"), mesh)
        path = tmp_path / "snap.vtk"
        write_vtk_snapshot(state, mesh, path)
        data = read_vtk_point_data(path)
        nv = mesh.n_vertices
        stride = nv + mesh.n_triangles
        # nine significant digits: relative error at most 5e-9
        assert np.allclose(data["S"], state.s, rtol=5e-9, atol=1e-12)
        assert np.allclose(data["C"], state.c, rtol=5e-9, atol=1e-12)
        assert np.allclose(data["U"][:, 0], state.u[:nv], rtol=5e-9, atol=1e-12)
        assert np.allclose(data["U"][:, 1], state.u[stride:stride + nv],
                           rtol=5e-9, atol=1e-12)

    def test_outbreak_susceptible_at_center_vertex(self, tmp_path):
        mesh = build_unit_square_mesh(8, 8)
        state = initial_state(initial_data("localized_outbreak"), mesh)
        path = tmp_path / "snap.vtk"
        write_vtk_snapshot(state, mesh, path)
        data = read_vtk_point_data(path)
        d2 = ((data["points"] - [0.5, 0.5]) ** 2).sum(axis=1)
        assert data["S"][np.argmin(d2)] == pytest.approx(0.9, rel=1e-9)

    def test_vtk_structure_tokens(self, tmp_path):
        mesh = build_unit_square_mesh(2, 2)
        state = initial_state(initial_data("zero"), mesh)
        path = tmp_path / "snap.vtk"
        write_vtk_snapshot(state, mesh, path)
        text = path.read_text()
        assert text.startswith("# vtk DataFile Version 2.0")
        assert "DATASET UNSTRUCTURED_GRID" in text
        assert f"POINT_DATA {mesh.n_vertices}" in text
        assert "VECTORS U float" in text
        assert text.count("LOOKUP_TABLE default") == 5


def _small_run(tmp_path, tag):
    cfg = experiment_preset("exp1").with_(nx=8, ny=8, t_final=0.2)
    mesh = build_unit_square_mesh(cfg.nx, cfg.ny)
    disc = Discretization(mesh)
    state = initial_state(initial_data(cfg.initial), mesh, zero_velocity=True)
    traj = run(state, cfg.params, cfg.controls, cfg.t_final,
               MonitorConfig(1, 10), disc)
    csv_path = tmp_path / f"monitor_{tag}.csv"
    write_monitor_csv(traj.monitors, csv_path)
    vtk_path = tmp_path / f"final_{tag}.vtk"
    write_vtk_snapshot(traj.final, mesh, vtk_path)
    return csv_path, vtk_path


class TestDeterminism:
    def test_identical_runs_byte_identical_outputs(self, tmp_path):
        csv1, vtk1 = _small_run(tmp_path, "a")
        csv2, vtk2 = _small_run(tmp_path, "b")
        assert csv1.read_bytes() == csv2.read_bytes()
        assert vtk1.read_bytes() == vtk2.read_bytes()


class TestBalanceFromCsv:
    def test_population_recurrence_recomputed_from_file(self, tmp_path):
        cfg = experiment_preset("exp1").with_(nx=8, ny=8, t_final=0.5)
        mesh = build_unit_square_mesh(cfg.nx, cfg.ny)
        disc = Discretization(mesh)
        state = initial_state(initial_data(cfg.initial), mesh, zero_velocity=True)
        traj = run(state, cfg.params, cfg.controls, cfg.t_final,
                   MonitorConfig(1, 100), disc)
        path = tmp_path / "monitor.csv"
        write_monitor_csv(traj.monitors, path)
        cols = read_monitor_csv(path)
        n = cols["int_N"]
        dt, lam, eta = cfg.controls.dt, cfg.params.Lambda, cfg.params.eta
        defect = np.abs(n[1:] - n[:-1] - dt * (lam * disc.area - eta * n[1:]))
        assert (defect <= 1e-6 * n[:-1]).all()
