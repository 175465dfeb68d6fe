"""Tests for CSV, graymap and manifest outputs."""

import csv
from dataclasses import replace

import cv2
import numpy as np
import pytest

from mmcgel.export import (
    BaseWriter,
    EnergyCSVWriter,
    GraymapWriter,
    ProfileCSVWriter,
    SnapshotCSVWriter,
    WriterError,
    WriterManager,
    atomic_write_text,
    read_manifest,
    read_snapshot,
    write_graymap,
    write_manifest,
    write_series_csv,
    write_snapshot,
)
from mmcgel.export.csv_writer import ENERGY_COLUMNS, LEDGER_COLUMNS
from mmcgel.export.graymap import to_gray
from mmcgel.grid import CellField
from mmcgel.models import InitialCondition, RunConfig, RunManifest, TimeStepPolicy
from mmcgel.params import GridGeometry
from mmcgel.stepper import Snapshot, run


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.reader(f))


def uniform_trajectory(geometry: GridGeometry, mode: str):
    config = RunConfig(
        grid=geometry,
        time=TimeStepPolicy(mode=mode, T=0.3, s_const=0.1),
        initial=InitialCondition(kind="uniform", base=0.3),
    )
    return run(config)


def test_snapshot_round_trip_is_exact(tmp_path, make_state):
    g = GridGeometry(Lx=3.0, Ly=5.0, m=6, n=4)
    phi = make_state(g)
    path = write_snapshot(phi, 0.1 + 0.2, tmp_path / "snap.csv", k=7)
    back, t = read_snapshot(path)
    assert t == 0.1 + 0.2
    assert back.geometry == g
    np.testing.assert_array_equal(back.values, phi.values)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[:6] == ["# t=0.30000000000000004", "# k=7", "# Lx=3.0", "# Ly=5.0", "# m=6", "# n=4"]
    assert len(lines) == 6 + 6


def test_snapshot_missing_header_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("# t=0.5\n0.1,0.2\n0.3,0.4\n", encoding="utf-8")
    with pytest.raises(ValueError, match="Lx"):
        read_snapshot(path)


def test_snapshot_writer_names_files_by_scheduled_time(tmp_path, grid8):
    writer = SnapshotCSVWriter(tmp_path)
    phi = CellField.constant(grid8, 0.4)
    writer.on_snapshot(Snapshot(scheduled=0.5, t=0.5000001, k=5, phi=phi))
    assert [p.name for p in writer.close()] == ["phi_t0.5.csv"]


def test_graymap_constant_field_is_one_gray_level(tmp_path, params, grid8):
    phi = CellField.constant(grid8, 0.5 * params.phi_max)
    path = write_graymap(phi, params.phi_max, tmp_path / "phi.pgm")
    image = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    assert image.dtype == np.uint8
    assert image.shape == (grid8.n, grid8.m)
    assert np.all(image == 128)


def test_graymap_scale_and_orientation(params):
    g = GridGeometry(Lx=4.0, Ly=2.0, m=4, n=2)
    values = np.zeros(g.shape)
    values[0, g.n - 1] = params.phi_max
    values[3, 0] = 2.0  # above the range: clipped
    gray = to_gray(CellField(values, g), params.phi_max)
    assert gray.shape == (2, 4)
    assert gray[0, 0] == 255
    assert gray[1, 3] == 255
    assert gray.sum() == 2 * 255


def test_graymap_writer(tmp_path, params, grid8):
    writer = GraymapWriter(tmp_path / "snapshots", params.phi_max)
    writer.on_snapshot(Snapshot(0.0, 0.0, 0, CellField.constant(grid8, 0.3)))
    (path,) = writer.close()
    assert path.name == "phi_t0.pgm"
    assert cv2.imread(str(path), cv2.IMREAD_UNCHANGED) is not None


def test_energy_csv_adaptive_series(tmp_path, grid8):
    traj = uniform_trajectory(grid8, "adaptive")
    writer = EnergyCSVWriter(tmp_path / "energy.csv", tmp_path / "ledger.csv")
    for record in traj.records:
        writer.on_record(record)
    energy, ledger = writer.close()

    rows = read_rows(energy)
    assert tuple(rows[0]) == ENERGY_COLUMNS
    assert len(rows) == 1 + len(traj.records)
    for row, record in zip(rows[1:], traj.records):
        assert int(row[0]) == record.k
        assert float(row[3]) == record.F
        assert float(row[8]) == record.alpha
    assert tuple(read_rows(ledger)[0]) == LEDGER_COLUMNS


def test_constant_mode_leaves_alpha_empty(tmp_path, grid8):
    traj = uniform_trajectory(grid8, "constant")
    writer = EnergyCSVWriter(tmp_path / "energy.csv")
    for record in traj.records:
        writer.on_record(record)
    (energy,) = writer.close()
    assert all(row[8] == "" for row in read_rows(energy)[1:])


def test_series_keeps_integers(tmp_path):
    path = write_series_csv(tmp_path / "s.csv", ["m", "d"], [16, 32], [0.5, 0.25])
    assert path.read_text(encoding="utf-8") == "m,d\n16,0.5\n32,0.25\n"


def test_profile_columns(tmp_path, grid8):
    writer = ProfileCSVWriter(tmp_path / "midline.csv")
    writer.on_snapshot(Snapshot(0.0, 0.0, 0, CellField.constant(grid8, 0.3)))
    writer.on_snapshot(Snapshot(0.5, 0.5, 5, CellField.constant(grid8, 0.4)))
    (path,) = writer.close()
    rows = read_rows(path)
    assert rows[0] == ["x", "t=0", "t=0.5"]
    assert len(rows) == 1 + grid8.m
    assert rows[1] == ["0.5", "0.3", "0.4"]


def test_atomic_write_leaves_no_temporaries(tmp_path):
    for i in range(5):
        atomic_write_text(tmp_path / "out.txt", f"version {i}\n")
    assert [p.name for p in tmp_path.iterdir()] == ["out.txt"]
    assert (tmp_path / "out.txt").read_text(encoding="utf-8") == "version 4\n"


def test_atomic_write_error_names_the_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x", encoding="utf-8")
    with pytest.raises(OSError, match="out.txt"):
        atomic_write_text(blocker / "out.txt", "data")


class _Recorder(BaseWriter):
    def __init__(self, name: str, fail: bool = False):
        super().__init__(name)
        self.fail = fail
        self.seen: list[int] = []

    def on_record(self, record) -> None:
        if self.fail:
            raise RuntimeError("disk full")
        self.seen.append(record.k)

    def close(self):
        return []


def test_manager_isolates_failing_writer(grid8):
    traj = uniform_trajectory(grid8, "adaptive")
    good, bad = _Recorder("good"), _Recorder("bad", fail=True)
    with WriterManager() as manager:
        manager.add_writer(bad)
        manager.add_writer(good)
        for record in traj.records:
            manager.on_record(record)
    assert good.seen == [r.k for r in traj.records]
    assert not bad.enabled
    assert manager.failures == [("bad", "disk full")]


def test_writer_error_names_first_failure():
    full = "cannot write out/energy.csv: No space left on device"
    error = WriterError([("energy-csv", full), ("graymap", "x")])
    assert isinstance(error, OSError)
    assert str(error) == (
        "writer energy-csv failed: cannot write out/energy.csv: No space left on device (+1 more)"
    )
    assert [name for name, _ in error.failures] == ["energy-csv", "graymap"]


def test_manager_remove_writer(grid8):
    manager = WriterManager()
    writer = _Recorder("w")
    manager.add_writer(writer)
    manager.remove_writer(writer)
    manager.on_record(uniform_trajectory(grid8, "adaptive").records[0])
    assert writer.seen == []


def test_manifest_round_trip(tmp_path):
    manifest = RunManifest(
        command="run",
        config={"model": {"chi": 2.37}},
        code_version="mmcgel 1.0.0",
        rng_identity="numpy Philox",
        started_at="2024-01-01T00:00:00+00:00",
    )
    manifest = replace(manifest, status="completed", outputs={"energy.csv": "csv"})
    path = write_manifest(manifest, tmp_path / "manifest.json")
    data = read_manifest(path)
    assert data["status"] == "completed"
    assert data["outputs"] == {"energy.csv": "csv"}
    assert data["config"]["model"]["chi"] == 2.37
    assert data["error"] is None
