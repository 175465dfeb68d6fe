"""CSV outputs: energy series, solver ledger, snapshots, profiles and summaries."""

import csv
import io
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from mmcgel.export.base import BaseWriter, atomic_write_text, format_float
from mmcgel.grid import CellField, midline_profile
from mmcgel.models import StepRecord
from mmcgel.params import GridGeometry
from mmcgel.stepper import Snapshot

ENERGY_COLUMNS = (
    "k", "t", "s", "F", "Fc", "Fe", "Uprime", "Udoubleprime", "alpha",
    "newton_iters", "gmres_iters",
)
LEDGER_COLUMNS = (
    "k", "t", "s", "newton_iters", "gmres_iters", "damping_events",
    "final_step_norm", "final_residual_norm", "mass", "regime",
)


def _cell(value: object) -> str:
    if value is None or isinstance(value, float):
        return format_float(value)
    return str(value)


def _render(header: Sequence[str], rows: Iterable[Sequence[object]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_records_csv(records: Sequence[StepRecord], path: Path | str, columns: Sequence[str]) -> Path:
    rows = ([row[c] for c in columns] for row in (r.to_dict() for r in records))
    return atomic_write_text(path, _render(columns, rows))


def write_energy_csv(records: Sequence[StepRecord], path: Path | str) -> Path:
    """Energy CSV with the columns of ENERGY_COLUMNS, floats at full precision."""
    return write_records_csv(records, path, ENERGY_COLUMNS)


def write_ledger_csv(records: Sequence[StepRecord], path: Path | str) -> Path:
    return write_records_csv(records, path, LEDGER_COLUMNS)


def write_series_csv(
    path: Path | str, header: Sequence[str], *columns: Sequence[float] | np.ndarray
) -> Path:
    """Write parallel columns, e.g. (t, mean_F) or (x, phi)."""
    return atomic_write_text(path, _render(header, zip(*columns)))


def write_snapshot(phi: CellField, t: float, path: Path | str, k: int | None = None) -> Path:
    """Snapshot CSV: '# key=value' header lines, then m rows of n values.

    Row i holds phi[i, 0..n-1], the cells of the i-th column of the mesh.
    """
    g = phi.geometry
    header = [f"# t={format_float(t)}"]
    if k is not None:
        header.append(f"# k={k}")
    header += [
        f"# Lx={format_float(g.Lx)}",
        f"# Ly={format_float(g.Ly)}",
        f"# m={g.m}",
        f"# n={g.n}",
    ]
    body = "\n".join(",".join(format_float(v) for v in row) for row in phi.values)
    return atomic_write_text(path, "\n".join(header) + "\n" + body + "\n")


def read_snapshot(path: Path | str) -> tuple[CellField, float]:
    """Parse a snapshot CSV back into a CellField.

    Returns:
        (field, t)

    Raises:
        ValueError: If the header or grid is malformed
    """
    meta: dict[str, str] = {}
    rows: list[list[float]] = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
            else:
                rows.append([float(v) for v in line.split(",")])
    try:
        geometry = GridGeometry(
            Lx=float(meta["Lx"]), Ly=float(meta["Ly"]), m=int(meta["m"]), n=int(meta["n"])
        )
        t = float(meta["t"])
    except KeyError as e:
        raise ValueError(f"{path}: snapshot header lacks {e.args[0]!r}") from e
    return CellField(np.array(rows), geometry), t


def snapshot_stem(scheduled: float) -> str:
    return f"phi_t{scheduled:g}"


class EnergyCSVWriter(BaseWriter):
    """Buffers records and writes energy.csv (and optionally ledger.csv) on close."""

    def __init__(self, energy_path: Path | str, ledger_path: Path | str | None = None):
        super().__init__("energy-csv")
        self.energy_path = Path(energy_path)
        self.ledger_path = Path(ledger_path) if ledger_path else None
        self.records: list[StepRecord] = []

    def on_record(self, record: StepRecord) -> None:
        self.records.append(record)

    def close(self) -> list[Path]:
        written = [write_energy_csv(self.records, self.energy_path)]
        if self.ledger_path:
            written.append(write_ledger_csv(self.records, self.ledger_path))
        return written


class SnapshotCSVWriter(BaseWriter):
    """Writes each snapshot as <dir>/phi_t<t>.csv when it arrives."""

    def __init__(self, directory: Path | str):
        super().__init__("snapshot-csv")
        self.directory = Path(directory)
        self._written: list[Path] = []

    def on_snapshot(self, snapshot: Snapshot) -> None:
        path = self.directory / f"{snapshot_stem(snapshot.scheduled)}.csv"
        self._written.append(write_snapshot(snapshot.phi, snapshot.t, path, k=snapshot.k))

    def close(self) -> list[Path]:
        return list(self._written)


class ProfileCSVWriter(BaseWriter):
    """Writes the midline profile of every snapshot to one CSV (x then one column per time)."""

    def __init__(self, path: Path | str):
        super().__init__("profile-csv")
        self.path = Path(path)
        self._x: np.ndarray | None = None
        self._columns: list[tuple[str, np.ndarray]] = []

    def on_snapshot(self, snapshot: Snapshot) -> None:
        x, profile = midline_profile(snapshot.phi)
        self._x = x
        self._columns.append((f"t={snapshot.scheduled:g}", profile))

    def close(self) -> list[Path]:
        if self._x is None:
            return []
        header = ["x"] + [name for name, _ in self._columns]
        return [write_series_csv(self.path, header, self._x, *[c for _, c in self._columns])]
