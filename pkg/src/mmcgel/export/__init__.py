"""Run output writers for mmcgel."""

from mmcgel.export.base import (
    BaseWriter,
    WriterError,
    WriterManager,
    atomic_write_bytes,
    atomic_write_text,
)
from mmcgel.export.csv_writer import (
    EnergyCSVWriter,
    ProfileCSVWriter,
    SnapshotCSVWriter,
    read_snapshot,
    write_energy_csv,
    write_ledger_csv,
    write_series_csv,
    write_snapshot,
)
from mmcgel.export.graymap import GraymapWriter, write_graymap
from mmcgel.export.manifest import read_manifest, write_manifest

__all__ = [
    "BaseWriter",
    "WriterError",
    "WriterManager",
    "atomic_write_bytes",
    "atomic_write_text",
    "EnergyCSVWriter",
    "ProfileCSVWriter",
    "SnapshotCSVWriter",
    "GraymapWriter",
    "read_snapshot",
    "read_manifest",
    "write_energy_csv",
    "write_graymap",
    "write_ledger_csv",
    "write_manifest",
    "write_series_csv",
    "write_snapshot",
]
